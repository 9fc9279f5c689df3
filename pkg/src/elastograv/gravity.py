"""Gravity perturbation of a displacement field by direct dipole summation.

The potential solves ``lap S = -div(rho0 u chi_Omega)`` in all of space with
``S -> 0`` at infinity, i.e.

    S(x) = -(rho0 / 4 pi) sum_cells u(y) . (x - y) / |x - y|^3 h^3

over the grid nodes where ``u`` is non-zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .core import ElasticMedium, ObservationSpec
from .solver import Trajectory, WaveState


class SingularEvaluationError(ValueError):
    """Target point lies inside a cell that carries displacement."""


@numba.njit(parallel=True, cache=True)
def _dipole_sum(targets, ys, us, want_grad):
    nt = targets.shape[0]
    ns = ys.shape[0]
    pot = np.zeros(nt)
    grad = np.zeros((nt, 3))
    for k in numba.prange(nt):
        x0, x1, x2 = targets[k, 0], targets[k, 1], targets[k, 2]
        s = 0.0
        g0 = 0.0
        g1 = 0.0
        g2 = 0.0
        for m in range(ns):
            r0 = x0 - ys[m, 0]
            r1 = x1 - ys[m, 1]
            r2 = x2 - ys[m, 2]
            rr = r0 * r0 + r1 * r1 + r2 * r2
            inv = 1.0 / math.sqrt(rr)
            inv3 = inv * inv * inv
            ur = us[m, 0] * r0 + us[m, 1] * r1 + us[m, 2] * r2
            s += ur * inv3
            if want_grad:
                c = 3.0 * ur * inv3 * inv * inv
                g0 += us[m, 0] * inv3 - c * r0
                g1 += us[m, 1] * inv3 - c * r1
                g2 += us[m, 2] * inv3 - c * r2
        pot[k] = s
        grad[k, 0] = g0
        grad[k, 1] = g1
        grad[k, 2] = g2
    return pot, grad


def _check_targets(state: WaveState, x: np.ndarray) -> None:
    dom = state.domain
    h = dom.h
    idx = np.rint((x + dom.L) / h).astype(np.int64)
    lo = np.array(state.lo)
    shape = np.array(state.u.shape[1:])
    rel = idx - lo
    inblock = np.all((rel >= 0) & (rel < shape), axis=1)
    if not inblock.any():
        return
    occupied = np.any(state.u != 0.0, axis=0)
    cand = np.nonzero(inblock)[0]
    r = rel[cand]
    hit = occupied[r[:, 0], r[:, 1], r[:, 2]]
    node = dom.axis[idx[cand]]
    core = np.max(np.abs(x[cand] - node), axis=1) < 0.5 * h * (1.0 - 1e-9)
    bad = cand[hit & core]
    if bad.size:
        raise SingularEvaluationError(f"target {x[bad[0]].tolist()} lies inside a source-support cell")


def _evaluate(state: WaveState, medium: ElasticMedium, x, want_grad: bool):
    x = np.asarray(x, dtype=float)
    flat = np.ascontiguousarray(x.reshape(-1, 3))
    _check_targets(state, flat)
    ys, us = state.support()
    if ys.shape[0] == 0:
        return np.zeros(x.shape[:-1]), np.zeros(x.shape)
    pot, grad = _dipole_sum(flat, np.ascontiguousarray(ys), np.ascontiguousarray(us), want_grad)
    c = -medium.rho0 * state.domain.h**3 / (4.0 * math.pi)
    return (c * pot).reshape(x.shape[:-1]), (c * grad).reshape(x.shape)


def potential_at(state: WaveState, medium: ElasticMedium, x):
    return _evaluate(state, medium, x, False)[0]


def gradient_at(state: WaveState, medium: ElasticMedium, x):
    return _evaluate(state, medium, x, True)[1]


def potential_and_gradient(state: WaveState, medium: ElasticMedium, x):
    return _evaluate(state, medium, x, True)


@dataclass(frozen=True)
class GravityTrace:
    observation: ObservationSpec
    values: np.ndarray = field(repr=False)  # (n_times, n_points, 3)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        obs = self.observation
        expect = (len(obs.sample_times), len(obs.sample_points), 3)
        if v.shape != expect:
            raise ValueError(f"trace values have shape {v.shape}, expected {expect}")
        if not np.isfinite(v).all():
            raise ValueError("trace contains non-finite values")
        object.__setattr__(self, "values", v)

    def scaled(self, factor: float) -> "GravityTrace":
        return GravityTrace(self.observation, factor * self.values)


def trace(traj: Trajectory, obs: ObservationSpec, medium: ElasticMedium) -> GravityTrace:
    out = np.empty((len(obs.sample_times), len(obs.sample_points), 3))
    for k, t in enumerate(obs.sample_times):
        try:
            state = traj.at(t)
        except KeyError:
            raise KeyError(f"trajectory has no snapshot at sample time t = {t!r}") from None
        out[k] = gradient_at(state, medium, obs.sample_points)
    return GravityTrace(obs, out)


def trace_distance(tr1: GravityTrace, tr2: GravityTrace) -> float:
    """max over sample times of the point-cloud L2 norm of the difference on the ball."""
    if not tr1.observation.same_as(tr2.observation):
        raise ValueError("traces were sampled with different observation specs")
    obs = tr1.observation
    d = tr1.values - tr2.values
    per_t = np.sqrt(obs.volume / d.shape[1] * np.sum(d * d, axis=(1, 2)))
    return float(per_t.max()) if per_t.size else 0.0


@dataclass(frozen=True)
class SphereQuadrature:
    """Gauss-Legendre in ``cos(theta)`` times uniform longitude on the sphere of radius ``R``."""

    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    R: float = 1.0

    @classmethod
    def gauss_product(cls, n_lat: int, n_lon: int | None = None, R: float = 1.0) -> "SphereQuadrature":
        n_lon = 2 * n_lat if n_lon is None else n_lon
        x, w = np.polynomial.legendre.leggauss(n_lat)
        ph = 2.0 * np.pi * (np.arange(n_lon) + 0.5) / n_lon
        ct, p = np.meshgrid(x, ph, indexing="ij")
        st = np.sqrt(1.0 - ct**2)
        nodes = R * np.stack([st * np.cos(p), st * np.sin(p), ct], axis=-1).reshape(-1, 3)
        weights = (R * R * 2.0 * np.pi / n_lon) * np.repeat(w, n_lon)
        return cls(nodes, weights, R)

    @classmethod
    def with_nodes(cls, n_nodes: int, R: float = 1.0) -> "SphereQuadrature":
        """Product rule with about ``n_nodes`` nodes (``n_lon = 2 n_lat``)."""
        n_lat = max(2, int(round(math.sqrt(n_nodes / 2.0))))
        return cls.gauss_product(n_lat, 2 * n_lat, R)

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def normals(self) -> np.ndarray:
        return self.nodes / self.R

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


@dataclass(frozen=True)
class SurfaceSamples:
    quad: SphereQuadrature
    S: np.ndarray
    dS_dn: np.ndarray
    t: float = float("nan")


def surface_samples(state: WaveState, medium: ElasticMedium, quad: SphereQuadrature) -> SurfaceSamples:
    S, g = potential_and_gradient(state, medium, quad.nodes)
    return SurfaceSamples(quad, S, np.sum(g * quad.normals, axis=1), state.t)
