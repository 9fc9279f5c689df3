"""INI run configuration with the theory's hypotheses enforced at load time."""
from __future__ import annotations

import configparser
import dataclasses
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    M_KEYS,
    DomainSpec,
    ElasticMedium,
    InvalidParameterError,
    ObservationSpec,
    SourceModel,
    alpha0,
    sym_from6,
    validate_source,
)
from .inversion import InversionSettings
from .gravity import SphereQuadrature

TIERS = {"coarse": 64, "default": 96, "fine": 192}


class ConfigError(ValueError):
    """Config is malformed or violates a hypothesis; ``problems`` lists every violation."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


@dataclass(frozen=True)
class RunConfig:
    medium: ElasticMedium
    domain: DomainSpec
    d0: float
    m0: float
    M0: float
    truth: SourceModel | None
    center: tuple
    r0: float
    n_points: int
    n_times: int
    t0_fraction: float
    t1_fraction: float
    seed: int = 0
    tier: str = "default"
    cfl: float = 0.5
    lmax: int = 4
    sphere_nodes: int = 2562
    deltas: tuple = (1e-3, 3e-3, 1e-2, 3e-2, 1e-1)
    output_dir: str = "out"
    source_text: str = field(default="", repr=False, compare=False)

    @property
    def tau0(self) -> float:
        return alpha0(self.medium) * self.d0 / 2.0

    @property
    def t0(self) -> float:
        return self.t0_fraction * self.tau0

    @property
    def t1(self) -> float:
        return self.t1_fraction * self.t0

    @property
    def times(self) -> np.ndarray:
        base = np.linspace(0.0, self.t0, self.n_times)
        if np.any(np.isclose(base, self.t1, rtol=1e-12, atol=0.0)):
            return base
        return np.sort(np.append(base, self.t1))

    def observation(self) -> ObservationSpec:
        return ObservationSpec.ball(self.center, self.r0, self.n_points, self.times, self.seed)

    def settings(self) -> InversionSettings:
        return InversionSettings(
            t1=self.t1, t0=self.t0, tau0=self.tau0, m0=self.m0, M0=self.M0, R=self.domain.R,
            quad=SphereQuadrature.with_nodes(self.sphere_nodes, self.domain.R), lmax=self.lmax)

    def with_tier(self, tier: str) -> "RunConfig":
        if tier not in TIERS:
            raise ConfigError([f"unknown tier {tier!r}; expected one of {sorted(TIERS)}"])
        dom = DomainSpec(self.domain.R, self.domain.L, TIERS[tier])
        return dataclasses.replace(self, domain=dom, tier=tier)

    def with_truth(self, src: SourceModel | None) -> "RunConfig":
        return dataclasses.replace(self, truth=src)


def _get(cp, section, key, conv=float, default=None, problems=None):
    if not cp.has_option(section, key):
        if default is None:
            problems.append(f"missing [{section}] {key}")
            return None
        return default
    raw = cp.get(section, key)
    try:
        return conv(raw)
    except ValueError:
        problems.append(f"[{section}] {key} = {raw!r} is not a valid {getattr(conv, '__name__', 'value')}")
        return None


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case-sensitive: m0 and M0 differ
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"parse error: {exc}"]) from None
    problems: list[str] = []
    for sec in ("medium", "domain", "source", "observation"):
        if not cp.has_section(sec):
            problems.append(f"missing section [{sec}]")
    if problems:
        raise ConfigError(problems)
    g = lambda s, k, conv=float, d=None: _get(cp, s, k, conv, d, problems)

    lam, mu, rho = g("medium", "lambda0"), g("medium", "mu0"), g("medium", "rho0")
    R, L = g("domain", "R"), g("domain", "L")
    if cp.has_option("run", "tier"):
        tier = cp.get("run", "tier").strip()
        if tier not in TIERS:
            problems.append(f"[run] tier = {tier!r}; expected one of {sorted(TIERS)}")
            tier = "default"
        n = TIERS[tier]
    else:
        n = g("domain", "n", int, TIERS["default"])
        tier = next((k for k, v in TIERS.items() if v == n), "custom")
    d0, m0, M0 = g("source", "d0"), g("source", "m0"), g("source", "M0")
    center = g("observation", "center", _floats)
    r0 = g("observation", "r0")
    n_points = g("observation", "n_points", int, 512)
    n_times = g("observation", "n_times", int, 11)
    t0f = g("observation", "t0_fraction", float, 0.9)
    t1f = g("observation", "t1_fraction", float, 0.5)
    seed = g("run", "seed", int, 0) if cp.has_section("run") else 0
    cfl = g("run", "cfl", float, 0.5) if cp.has_section("run") else 0.5
    lmax = g("run", "lmax", int, 4) if cp.has_section("run") else 4
    nodes = g("run", "sphere_nodes", int, 2562) if cp.has_section("run") else 2562
    out_dir = cp.get("run", "output_dir", fallback="out")
    deltas = tuple(_floats(cp.get("sweep", "deltas"))) if cp.has_option("sweep", "deltas") else \
        (1e-3, 3e-3, 1e-2, 3e-2, 1e-1)
    if problems:
        raise ConfigError(problems)

    try:
        medium = ElasticMedium(lam, mu, rho)
    except InvalidParameterError as exc:
        problems.append(str(exc))
        medium = None
    try:
        domain = DomainSpec(R, L, n)
    except InvalidParameterError as exc:
        problems.append(str(exc))
        domain = None
    if not d0 > 0:
        problems.append("d0 must be positive")
    if not 0 < m0 <= M0:
        problems.append(f"need 0 < m0 <= M0, got m0 = {m0}, M0 = {M0}")
    if len(center) != 3:
        problems.append("[observation] center needs three coordinates")

    truth = None
    has_m = [cp.has_option("source", k) for k in M_KEYS]
    has_p = cp.has_option("source", "P")
    if any(has_m) or has_p:
        if not all(has_m) or not has_p:
            problems.append("[source] needs all of M11..M23 and P when a true source is given")
        else:
            m6 = [g("source", k) for k in M_KEYS]
            P = g("source", "P", _floats)
            if P is not None and len(P) != 3:
                problems.append("[source] P needs three coordinates")
            elif None not in m6 and P is not None:
                truth = SourceModel.create(sym_from6(m6), P, d0)
    if problems:
        raise ConfigError(problems)

    cfg = RunConfig(medium, domain, d0, m0, M0, truth, tuple(center), r0, n_points, n_times, t0f, t1f,
                    seed, tier, cfl, lmax, nodes, deltas, out_dir, text)
    check(cfg)
    return cfg


def check(cfg: RunConfig) -> None:
    """Cross-field hypotheses; raises ConfigError naming every violated one."""
    problems = []
    if not 0 < cfg.t0_fraction < 1:
        problems.append(f"t0 >= tau0 = alpha0*d0/2 (t0_fraction = {cfg.t0_fraction} must lie in (0, 1))")
    if not 0 < cfg.t1_fraction <= 0.5:
        problems.append(f"t1 > t0/2 (t1_fraction = {cfg.t1_fraction} must lie in (0, 0.5])")
    if cfg.n_times < 2:
        problems.append("n_times must be at least 2")
    gap = math.sqrt(sum(c * c for c in cfg.center)) - cfg.r0
    if not gap > cfg.domain.R:
        problems.append(f"observation ball not exterior: |center| - r0 = {gap:.6g} <= R = {cfg.domain.R}")
    if cfg.r0 <= 0:
        problems.append("r0 must be positive")
    if cfg.d0 >= cfg.domain.R:
        problems.append(f"d0 = {cfg.d0} leaves no admissible location inside R = {cfg.domain.R}")
    if cfg.truth is not None:
        found = validate_source(cfg.truth, cfg.domain, (cfg.m0, cfg.M0))
        if cfg.truth.norm == 0.0:
            # M = 0 is accepted as the null experiment; only the location must be admissible
            found = [p for p in found if p.startswith("P not in")]
        problems.extend(found)
    if cfg.lmax < 0 or cfg.lmax > 4:
        problems.append("lmax must lie in [0, 4]")
    if problems:
        raise ConfigError(problems)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


def config_text(cfg: RunConfig) -> str:
    """Canonical INI echo of the resolved configuration."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["medium"] = {"lambda0": repr(cfg.medium.lambda0), "mu0": repr(cfg.medium.mu0),
                    "rho0": repr(cfg.medium.rho0)}
    cp["domain"] = {"R": repr(cfg.domain.R), "L": repr(cfg.domain.L), "n": str(cfg.domain.n)}
    src = {"d0": repr(cfg.d0), "m0": repr(cfg.m0), "M0": repr(cfg.M0)}
    if cfg.truth is not None:
        src.update({k: repr(v) for k, v in zip(M_KEYS, cfg.truth.m6)})
        src["P"] = ", ".join(repr(float(v)) for v in cfg.truth.P)
    cp["source"] = src
    cp["observation"] = {"center": ", ".join(repr(float(c)) for c in cfg.center), "r0": repr(cfg.r0),
                         "n_points": str(cfg.n_points), "n_times": str(cfg.n_times),
                         "t0_fraction": repr(cfg.t0_fraction), "t1_fraction": repr(cfg.t1_fraction)}
    cp["run"] = {"seed": str(cfg.seed), "tier": cfg.tier, "cfl": repr(cfg.cfl), "lmax": str(cfg.lmax),
                 "sphere_nodes": str(cfg.sphere_nodes), "output_dir": cfg.output_dir}
    cp["sweep"] = {"deltas": ", ".join(repr(d) for d in cfg.deltas)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
