"""Recovery of the moment tensor and source location from exterior gravity data.

For harmonic ``phi`` of degree at most three the moment functional
``G(phi) = int f . grad(phi)`` equals the contraction ``M : hess(phi)(P)``.
Degree-two polynomials therefore give ``M`` directly and degree-three
polynomials give a linear system for ``P``. The functionals are read off the
boundary functional ``z(t1) = t1^2 G / 2``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import DomainSpec, ElasticMedium, ObservationSpec, SourceModel, validate_source
from .gravity import GravityTrace, SphereQuadrature, SurfaceSamples, trace, trace_distance
from .harmonics import (
    HarmonicPoly,
    basis_h2,
    basis_h3,
    boundary_z,
    expansion_surface_samples,
    multipole_fit,
)
from .solver import simulate

log = logging.getLogger(__name__)

NO_SOURCE_FRACTION = 1e-10
SIGMA_MIN_FRACTION = 1e-8


class TimingError(ValueError):
    """Evaluation time violates ``t1 <= t0/2`` or ``t0 < tau0``."""


class IllConditionedError(RuntimeError):
    pass


def functional_from_z(z: float, t1: float) -> float:
    if not t1 > 0:
        raise ValueError("t1 must be positive")
    return 2.0 * z / (t1 * t1)


def functional_closed_form(M, P, phi: HarmonicPoly) -> float:
    if phi.degree > 3:
        raise ValueError(f"closed form only holds up to degree 3, {phi.name} has degree {phi.degree}")
    return float(np.tensordot(np.asarray(M, dtype=float), phi.hessian(np.asarray(P, dtype=float))))


def recover_moment(G2) -> np.ndarray:
    """Trace-free symmetric ``M`` from the five degree-two functionals (basis_h2 order)."""
    g12, g13, g23, a, b = (float(v) for v in G2)
    M = np.empty((3, 3))
    M[0, 1] = M[1, 0] = g12 / 2.0
    M[0, 2] = M[2, 0] = g13 / 2.0
    M[1, 2] = M[2, 1] = g23 / 2.0
    m11 = (a + b) / 3.0
    M[0, 0] = m11
    M[1, 1] = m11 - a
    M[2, 2] = m11 - b
    return M


def location_system(M_hat, G3) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``M_hat : hess(phi_k)(P) = G(phi_k)`` for the degree-three basis, linear in ``P``."""
    M_hat = np.asarray(M_hat, dtype=float)
    A = np.empty((7, 3))
    for k, phi in enumerate(basis_h3()):
        # the Hessian of a homogeneous cubic is linear in P
        for j in range(3):
            e = np.zeros(3)
            e[j] = 1.0
            A[k, j] = np.tensordot(M_hat, phi.hessian(e))
    return A, np.asarray(G3, dtype=float).copy()


def recover_location(M_hat, G3, m0: float) -> tuple[np.ndarray, float, float]:
    """Least-squares ``P`` with ``sigma_min`` of the system and the residual norm."""
    fro = float(np.linalg.norm(M_hat))
    if fro < 0.5 * m0:
        raise ValueError(f"|M_hat| = {fro:.3e} below m0/2 = {0.5 * m0}; location system not solvable")
    A, b = location_system(M_hat, G3)
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] < SIGMA_MIN_FRACTION * fro:
        raise IllConditionedError(
            f"location system ill-conditioned (sigma_min = {sv[-1]:.3e}); |M| may violate m0 bound")
    P, *_ = np.linalg.lstsq(A, b, rcond=None)
    return P, float(sv[-1]), float(np.linalg.norm(A @ P - b))


@dataclass(frozen=True)
class InversionSettings:
    t1: float
    t0: float
    tau0: float
    m0: float
    M0: float
    R: float = 1.0
    quad: SphereQuadrature | None = None
    lmax: int = 4
    fit_radius: float = 0.0

    def check_timing(self):
        if not self.t0 < self.tau0:
            raise TimingError(f"t0 = {self.t0:.6g} >= tau0 = {self.tau0:.6g}")
        if not 0.0 < self.t1 <= 0.5 * self.t0 * (1 + 1e-12):
            raise TimingError(f"t1 = {self.t1:.6g} must lie in (0, t0/2 = {0.5 * self.t0:.6g}]")

    @property
    def sphere(self) -> SphereQuadrature:
        return self.quad if self.quad is not None else SphereQuadrature.with_nodes(2562, self.R)


@dataclass
class ReconstructionResult:
    M_hat: np.ndarray
    P_hat: np.ndarray | None
    res_moment: float
    res_loc: float
    sigma_min: float
    detected: bool
    in_domain: bool
    t1: float
    z: dict = field(default_factory=dict)
    G: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)


def surface_from_trace(tr: GravityTrace, settings: InversionSettings) -> SurfaceSamples:
    obs = tr.observation
    k = int(np.argmin(np.abs(obs.sample_times - settings.t1)))
    if abs(obs.sample_times[k] - settings.t1) > 1e-9 * settings.t1:
        raise ValueError(f"trace has no sample at t1 = {settings.t1!r}")
    one = ObservationSpec(obs.center, obs.r0, obs.sample_points, [obs.sample_times[k]])
    exp = multipole_fit(tr.values[k], one, settings.lmax, valid_radius=settings.fit_radius)
    return expansion_surface_samples(exp, settings.sphere, settings.t1)


def reconstruct(data, settings: InversionSettings) -> ReconstructionResult:
    """Run boundary functional -> moment functionals -> ``M`` -> ``P``.

    ``data`` is either surface samples on the sphere at ``t1`` or a gravity trace,
    in which case the samples come from a multipole continuation.
    """
    settings.check_timing()
    if isinstance(data, GravityTrace):
        samples = surface_from_trace(data, settings)
        quad = settings.sphere
    else:
        samples = data
        quad = samples.quad
    t1 = settings.t1
    z, G = {}, {}
    for phi in basis_h2() + basis_h3():
        z[phi.name] = boundary_z(samples, quad, phi)
        G[phi.name] = functional_from_z(z[phi.name], t1)
    g2 = [G[p.name] for p in basis_h2()]
    g3 = [G[p.name] for p in basis_h3()]
    M_hat = recover_moment(g2)
    res_m = float(np.linalg.norm([functional_closed_form(M_hat, np.zeros(3), p) - G[p.name] for p in basis_h2()]))
    fro = float(np.linalg.norm(M_hat))
    if fro < NO_SOURCE_FRACTION * settings.M0:
        return ReconstructionResult(M_hat, None, res_m, 0.0, 0.0, False, False, t1, z, G, ["no source detected"])
    notes = []
    if not settings.m0 <= fro <= settings.M0:
        notes.append(f"|M_hat| = {fro:.4g} outside [m0, M0]")
    P_hat, smin, res_l = recover_location(M_hat, g3, settings.m0)
    in_domain = bool(np.linalg.norm(P_hat) < settings.R)
    if not in_domain:
        notes.append("P_hat outside the domain")
    return ReconstructionResult(M_hat, P_hat, res_m, res_l, smin, True, in_domain, t1, z, G, notes)


@dataclass(frozen=True)
class Perturbation:
    kind: str  # "M" or "P"
    direction: np.ndarray

    def apply(self, src: SourceModel, delta: float) -> SourceModel:
        if self.kind == "M":
            return SourceModel.create(src.M + delta * self.direction, src.P, src.d0)
        if self.kind == "P":
            return src.moved(src.position + delta * self.direction)
        raise ValueError(f"unknown perturbation kind {self.kind!r}")


def default_perturbations(src: SourceModel) -> list[Perturbation]:
    """Unit trace-free moment direction and a unit location direction."""
    E = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]) / math.sqrt(2.0)
    e = np.array([1.0, 1.0, 1.0]) / math.sqrt(3.0)
    return [Perturbation("M", E), Perturbation("P", e)]


def stability_sweep(base: SourceModel, perturbations, deltas, medium: ElasticMedium, domain: DomainSpec,
                    obs: ObservationSpec, settings: InversionSettings, cfl: float = 0.5,
                    bounds=None) -> dict[str, list[dict]]:
    """Empirical Lipschitz table per perturbation kind.

    Each row: ``delta, eps, dM, dP, ratio_recon, ratio_truth`` where ``dM``/``dP``
    are differences of the reconstructions and ``ratio_truth`` uses the true
    parameter differences.
    """
    bounds = bounds if bounds is not None else (settings.m0, settings.M0)
    bad = validate_source(base, domain, bounds)
    if bad:
        raise ValueError(f"base source inadmissible: {bad}")
    times = obs.sample_times
    tr0 = trace(simulate(medium, domain, base, times, cfl), obs, medium)
    rec0 = reconstruct(tr0, settings)
    out = {}
    for pert in perturbations:
        rows = []
        for delta in deltas:
            other = pert.apply(base, float(delta))
            bad = validate_source(other, domain, bounds)
            if bad:
                raise ValueError(f"perturbed source (delta = {delta}) inadmissible: {bad}")
            tr1 = tr0 if delta == 0 else trace(simulate(medium, domain, other, times, cfl), obs, medium)
            eps = trace_distance(tr0, tr1)
            rec1 = rec0 if delta == 0 else reconstruct(tr1, settings)
            dM = float(np.linalg.norm(rec1.M_hat - rec0.M_hat))
            dP = float(np.linalg.norm(rec1.P_hat - rec0.P_hat))
            truth = float(np.linalg.norm(other.M - base.M) + np.linalg.norm(other.position - base.position))
            flagged = eps == 0.0
            rows.append({
                "delta": float(delta), "eps": eps, "dM": dM, "dP": dP,
                "ratio_recon": math.nan if flagged else (dM + dP) / eps,
                "ratio_truth": math.nan if flagged else truth / eps,
                "flagged": flagged,
            })
            log.info("sweep %s delta=%g eps=%.3e", pert.kind, delta, eps)
        out[pert.kind] = rows
    return out


def measured_constant(rows, key: str = "ratio_truth") -> float:
    vals = [r[key] for r in rows if not r["flagged"]]
    return max(vals) if vals else math.nan
