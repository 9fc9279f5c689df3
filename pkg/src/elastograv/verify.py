"""Brute-force oracles for the identities the inverse pipeline relies on.

None of these reuse the code path they check: moment integrals of the
mollifier use product quadrature, the functional oracle integrates the source
field directly, and the weak Poisson residual differentiates the potential by
finite differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import DomainSpec, ElasticMedium, SourceModel, mollifier_over_r, source_field
from .gravity import SphereQuadrature, potential_at
from .harmonics import Poly
from .solver import WaveState, integrate


@dataclass
class OracleReport:
    name: str
    value: float
    reference: float
    tol: float
    relative: bool = False
    meta: dict = field(default_factory=dict)
    bound: bool = False  # one-sided: pass iff value <= reference + tol

    @property
    def abs_err(self) -> float:
        return abs(self.value - self.reference)

    @property
    def rel_err(self) -> float:
        return self.abs_err / abs(self.reference) if self.reference != 0 else math.inf if self.abs_err else 0.0

    @property
    def passed(self) -> bool:
        if self.bound:
            return bool(self.value <= self.reference + self.tol)
        err = self.rel_err if self.relative else self.abs_err
        return bool(err <= self.tol)

    def row(self) -> dict:
        return {"name": self.name, "value": self.value, "reference": self.reference,
                "abs_err": self.abs_err, "rel_err": self.rel_err, "pass": self.passed, **self.meta}


def _radial_rule(n: int, a: float, rule: str):
    if rule == "gauss":
        x, w = np.polynomial.legendre.leggauss(n)
        return 0.5 * a * (x + 1.0), 0.5 * a * w
    if rule == "midpoint":
        dr = a / n
        return (np.arange(n) + 0.5) * dr, np.full(n, dr)
    raise ValueError(f"unknown radial rule {rule!r}")


def mollifier_moments(d0: float, radial_nodes: int = 512, sphere_lat: int = 23, rule: str = "gauss") -> dict:
    """Moments ``int (q'(|y|)/|y|) y^alpha dy`` for all multi-indices of degree 1..3."""
    a = 0.5 * d0
    r, wr = _radial_rule(radial_nodes, a, rule)
    sph = SphereQuadrature.gauss_product(sphere_lat, 2 * sphere_lat, 1.0)
    radial = mollifier_over_r(r, d0) * wr * r * r
    out = {}
    for deg in (1, 2, 3):
        rk = np.sum(radial * r**deg)
        for i in range(3):
            for j in range(i, 3) if deg >= 2 else [None]:
                for k in range(j, 3) if deg == 3 else [None]:
                    idx = tuple(v for v in (i, j, k) if v is not None)
                    ang = np.prod(sph.nodes[:, list(idx)], axis=1)
                    out[idx] = float(rk * sph.integrate(ang))
    return out


def lemma_q_report(d0: float, radial_nodes: int = 512, sphere_lat: int = 23, rule: str = "gauss",
                   tol: float = 1e-6) -> list[OracleReport]:
    mom = mollifier_moments(d0, radial_nodes, sphere_lat, rule)
    meta = {"resolution": f"radial={radial_nodes}({rule}) sphere={sphere_lat * 2 * sphere_lat}"}
    reps = []
    for idx, v in mom.items():
        label = "".join(str(i + 1) for i in idx)
        if len(idx) == 2 and idx[0] == idx[1]:
            reps.append(OracleReport(f"q_moment_{label}", v, -1.0, tol, meta=meta))
        else:
            reps.append(OracleReport(f"q_moment_{label}", v, 0.0, tol, meta=meta))
    return reps


def functional_oracle(src: SourceModel, phi: Poly, h: float) -> tuple[float, list[str]]:
    """Midpoint-rule ``int f . grad(phi)`` on the lattice ``h Z^3``."""
    warnings = []
    if src.d0 / h < 20:
        warnings.append(f"under-resolved: d0/h = {src.d0 / h:.1f} < 20")
    a = 0.5 * src.d0
    P = src.position
    axes = [h * np.arange(math.floor((P[d] - a) / h), math.ceil((P[d] + a) / h) + 1) for d in range(3)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    f = source_field(src, pts)
    return float(np.sum(f * phi.grad(pts)) * h**3), warnings


def z_volume_oracle(state: WaveState, medium: ElasticMedium, phi: Poly) -> float:
    """``rho0 int_Omega u . grad(phi)`` by nodal quadrature."""
    pts = state.block_points()
    inside = np.linalg.norm(pts, axis=-1) < state.domain.R
    u = np.moveaxis(state.u, 0, -1)
    return medium.rho0 * float(np.sum(u * phi.grad(pts) * inside[..., None])) * state.domain.h**3


def z_growth_slope(states, medium: ElasticMedium, phi: Poly) -> float:
    """Least-squares slope of ``log|z|`` against ``log t``."""
    t = np.array([s.t for s in states])
    z = np.array([abs(z_volume_oracle(s, medium, phi)) for s in states])
    return float(np.polyfit(np.log(t), np.log(z), 1)[0])


def duhamel_check(medium: ElasticMedium, domain: DomainSpec, src: SourceModel, t: float,
                  cfl: float = 0.5, tol: float = 1e-6) -> OracleReport:
    """Compare the forced run with the time integral of homogeneous runs started by ``v = f/rho0``.

    Time invariance gives ``w(t; s) = w(t - s; 0)``, so one homogeneous run and a
    trapezoid sum over its steps suffice.
    """
    forced = integrate(medium, domain, [0.0, t], force_src=src, cfl=cfl)
    n = len(forced.step_times) - 1
    homo = integrate(medium, domain, np.linspace(0.0, t, n + 1), velocity_src=src, cfl=cfl)
    if abs(homo.dt - forced.dt) > 1e-15 * forced.dt:
        raise RuntimeError("forced and homogeneous runs used different steps")
    ws = [s.u for s in homo.snapshots]
    duh = homo.dt * (0.5 * ws[0] + sum(ws[1:-1]) + 0.5 * ws[-1])
    u = forced.snapshots[-1].u
    norm = float(np.linalg.norm(u))
    err = float(np.linalg.norm(duh - u))
    rel = err / norm if norm > 0 else err
    return OracleReport("duhamel", rel, 0.0, tol,
                        meta={"resolution": f"n={domain.n} steps={n}", "velocity_init": "f/rho0"})


def bump(center, radius: float):
    """``psi = (1 - |x-c|^2/r^2)^4`` with its gradient and Laplacian."""
    c = np.asarray(center, dtype=float)

    def psi(x):
        s = 1.0 - np.sum((x - c) ** 2, axis=-1) / radius**2
        return np.where(s > 0, np.clip(s, 0, None) ** 4, 0.0)

    def grad(x):
        d = x - c
        s = 1.0 - np.sum(d * d, axis=-1) / radius**2
        g = np.where(s > 0, -8.0 * np.clip(s, 0, None) ** 3 / radius**2, 0.0)
        return g[..., None] * d

    def lap(x):
        d = x - c
        q = np.sum(d * d, axis=-1)
        s = np.clip(1.0 - q / radius**2, 0, None)
        return 48.0 * s**2 * q / radius**4 - 24.0 * s**3 / radius**2

    return psi, grad, lap


def _central4(S: np.ndarray, H: float, axis: int) -> np.ndarray:
    n = S.shape[axis]
    sl = lambda k: np.take(S, range(2 + k, n - 2 + k), axis=axis)
    return (-sl(2) + 8.0 * sl(1) - 8.0 * sl(-1) + sl(-2)) / (12.0 * H)


def weak_poisson_sides(state: WaveState, medium: ElasticMedium, center, radius: float,
                       spacing: int = 2) -> tuple[float, float]:
    """``(int grad S . grad psi, -int rho0 u . grad psi)`` for one bump ``psi``.

    ``S`` is sampled every ``spacing * h`` on points offset by ``h/2`` from the
    solver nodes and differentiated by fourth-order central differences.
    """
    h = state.domain.h
    H = spacing * h
    _, gpsi, _ = bump(center, radius)
    c = np.asarray(center, dtype=float)
    axes = []
    for d in range(3):
        k0 = math.floor((c[d] - radius) / H) - 3
        k1 = math.ceil((c[d] + radius) / H) + 3
        axes.append(H * np.arange(k0, k1 + 1) + 0.5 * h)
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    S = potential_at(state, medium, pts)
    core = (slice(2, -2),) * 3
    g = []
    for d in range(3):
        gd = _central4(S, H, d)
        idx = list(core)
        idx[d] = slice(None)
        g.append(gd[tuple(idx)])
    lhs = float(np.sum(np.stack(g, axis=-1) * gpsi(pts[core]))) * H**3
    node_pts = state.block_points()
    inside = np.linalg.norm(node_pts, axis=-1) < state.domain.R
    u = np.moveaxis(state.u, 0, -1)
    rhs = -medium.rho0 * float(np.sum(u * gpsi(node_pts) * inside[..., None])) * h**3
    return lhs, rhs


def poisson_residual(state: WaveState, medium: ElasticMedium, bumps, tol: float = 1e-2) -> OracleReport:
    """Aggregate relative residual of the weak Poisson identity over a set of bumps."""
    lhs, rhs = [], []
    for center, radius in bumps:
        a, b = weak_poisson_sides(state, medium, center, radius)
        lhs.append(a)
        rhs.append(b)
    lhs, rhs = np.array(lhs), np.array(rhs)
    ref = float(np.linalg.norm(rhs))
    err = float(np.linalg.norm(lhs - rhs))
    rel = err / ref if ref > 0 else err
    return OracleReport("weak_poisson", rel, 0.0, tol,
                        meta={"resolution": f"n={state.domain.n} bumps={len(bumps)}", "lhs": lhs.tolist(),
                              "rhs": rhs.tolist()})


def random_bumps(src: SourceModel, count: int, seed: int = 0, spread: float = 0.4,
                 radii=(0.35, 0.65)):
    """Bumps centred near the source; large radii make some of them straddle the boundary."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        c = src.position + rng.uniform(-spread, spread, 3)
        out.append((c, float(rng.uniform(*radii))))
    return out
