"""Explicit time stepping for ``rho0 u_tt - div(C grad u) = f`` on the cube grid.

Constant coefficients give ``div(C grad u) = (lambda0 + mu0) grad div u + mu0 lap u``,
discretised with centred second-order differences on the vertex grid and
advanced with velocity Verlet. The outer cube faces hold ``u = 0``.

The stencil has radius one, so after ``k`` steps the discrete field is exactly
zero more than ``k`` nodes away from the support of ``f``. Integration is
therefore carried out on the smallest index block that can become non-zero
during the run; every node outside that block is an exact zero of the
full-grid scheme, so the result is bitwise the same as a full-grid run.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import DomainSpec, ElasticMedium, SourceModel, alpha0, source_field, tau0

log = logging.getLogger(__name__)

BLOWUP_FACTOR = 1e6


class InstabilityError(RuntimeError):
    pass


class TimeWindowError(ValueError):
    """Requested horizon lies outside ``[0, tau0)``."""


@dataclass
class WaveState:
    """Displacement ``u`` and velocity ``v`` on an index block of the grid.

    ``u`` and ``v`` have shape ``(3, nx, ny, nz)`` and cover the nodes
    ``lo[d] <= i < lo[d] + shape[d]``; nodes outside the block are zero.
    """

    u: np.ndarray
    v: np.ndarray
    t: float
    domain: DomainSpec
    lo: tuple = (0, 0, 0)

    @classmethod
    def zeros(cls, domain: DomainSpec) -> "WaveState":
        shape = (3,) + (domain.n + 1,) * 3
        return cls(np.zeros(shape), np.zeros(shape), 0.0, domain, (0, 0, 0))

    @property
    def block_axes(self) -> list[np.ndarray]:
        a = self.domain.axis
        return [a[self.lo[d]: self.lo[d] + self.u.shape[d + 1]] for d in range(3)]

    def block_points(self) -> np.ndarray:
        X = np.meshgrid(*self.block_axes, indexing="ij")
        return np.stack(X, axis=-1)

    def _expand(self, arr) -> np.ndarray:
        n1 = self.domain.n + 1
        out = np.zeros((3, n1, n1, n1))
        sl = tuple(slice(self.lo[d], self.lo[d] + arr.shape[d + 1]) for d in range(3))
        out[(slice(None),) + sl] = arr
        return out

    def full_u(self) -> np.ndarray:
        return self._expand(self.u)

    def full_v(self) -> np.ndarray:
        return self._expand(self.v)

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinates ``(m, 3)`` and displacements ``(m, 3)`` of the non-zero nodes."""
        mask = np.any(self.u != 0.0, axis=0)
        pts = self.block_points()[mask]
        return pts, np.moveaxis(self.u, 0, -1)[mask]

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.u).all() and np.isfinite(self.v).all())


@dataclass
class Trajectory:
    snapshots: list
    dt: float
    step_times: np.ndarray = field(repr=False)
    max_u: np.ndarray = field(repr=False)
    energy: np.ndarray = field(repr=False)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    def at(self, t: float, rtol: float = 1e-9) -> WaveState:
        for s in self.snapshots:
            if abs(s.t - t) <= rtol * max(abs(t), 1e-300):
                return s
        raise KeyError(f"no snapshot at t = {t!r}")


def stable_dt(medium: ElasticMedium, h: float, cfl_factor: float = 0.5) -> float:
    if not 0.0 < cfl_factor <= 1.0:
        raise ValueError(f"cfl_factor must lie in (0, 1], got {cfl_factor}")
    return cfl_factor * h / (math.sqrt(3.0) * medium.cp)


def acceleration(u: np.ndarray, f: np.ndarray | None, medium: ElasticMedium, h: float) -> np.ndarray:
    """``((lambda0+mu0) grad div u + mu0 lap u + f) / rho0`` at interior nodes of ``u``.

    The outermost layer of the block is treated as a fixed zero halo and gets
    zero acceleration.
    """
    lam, mu, rho = medium.lambda0, medium.mu0, medium.rho0
    inv_h2 = 1.0 / (h * h)
    c = slice(1, -1)
    ix = [(slice(2, None), c, c), (c, slice(2, None), c), (c, c, slice(2, None))]
    im = [(slice(None, -2), c, c), (c, slice(None, -2), c), (c, c, slice(None, -2))]
    ic = (c, c, c)

    # centred first derivatives d_j u_j, stored on the full block
    dj = []
    for j in range(3):
        g = np.zeros_like(u[j])
        sl_p = [slice(None)] * 3
        sl_m = [slice(None)] * 3
        sl_c = [slice(None)] * 3
        sl_p[j], sl_m[j], sl_c[j] = slice(2, None), slice(None, -2), slice(1, -1)
        g[tuple(sl_c)] = (u[j][tuple(sl_p)] - u[j][tuple(sl_m)]) * (0.5 / h)
        dj.append(g)

    acc = np.zeros_like(u)
    for i in range(3):
        ui = u[i]
        lap_terms = [ui[ix[d]] - 2.0 * ui[ic] + ui[im[d]] for d in range(3)]
        lap = (lap_terms[0] + lap_terms[1] + lap_terms[2]) * inv_h2
        others = dj[(i + 1) % 3] + dj[(i + 2) % 3]
        mixed = (others[ix[i]] - others[im[i]]) * (0.5 / h)
        gdiv = lap_terms[i] * inv_h2 + mixed
        a = (lam + mu) * gdiv + mu * lap
        if f is not None:
            a += f[i][ic]
        acc[i][ic] = a / rho
    return acc


def _time_grid(times, dt_max: float) -> tuple[float, int, list[int]]:
    times = np.asarray(times, dtype=float)
    t_end = float(times[-1])
    if t_end <= 0.0:
        return dt_max, 0, [0] * len(times)
    n0 = max(1, math.ceil(t_end / dt_max - 1e-12))
    for n in range(n0, n0 + 100000):
        k = times * n / t_end
        if np.all(np.abs(k - np.round(k)) < 1e-9):
            return t_end / n, n, [int(round(v)) for v in k]
    raise ValueError("sample times are not commensurate with a uniform step")


def _active_block(domain: DomainSpec, centre, radius: float, n_steps: int) -> tuple[tuple, tuple]:
    """Index range ``[lo, hi)`` covering every node reachable in ``n_steps`` plus a zero halo."""
    h, L, n = domain.h, domain.L, domain.n
    lo, hi = [], []
    for d in range(3):
        a = math.floor((centre[d] - radius + L) / h) - n_steps - 1
        b = math.ceil((centre[d] + radius + L) / h) + n_steps + 1
        lo.append(max(0, a))
        hi.append(min(n + 1, b + 1))
    return tuple(lo), tuple(hi)


def integrate(medium: ElasticMedium, domain: DomainSpec, times, *, force_src: SourceModel | None = None,
              velocity_src: SourceModel | None = None, cfl: float = 0.5, dt: float | None = None,
              scale: float | None = None) -> Trajectory:
    """Velocity-Verlet run from rest (or from ``v = f/rho0`` of ``velocity_src``).

    ``force_src`` supplies the time-independent body force. Snapshots are taken at
    ``times``, which must lie on a common uniform step no larger than ``dt``
    (default: the stable step for ``cfl``).
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0 or np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ValueError("snapshot times must be non-empty, non-negative and increasing")
    h = domain.h
    dt_max = stable_dt(medium, h, cfl) if dt is None else dt
    dt, n_steps, snap_steps = _time_grid(times, dt_max)

    src = force_src if force_src is not None else velocity_src
    if src is None:
        lo, hi = (1, 1, 1), (3, 3, 3)
    else:
        lo, hi = _active_block(domain, src.position, src.d0 / 2.0, n_steps)
    shape = tuple(hi[d] - lo[d] for d in range(3))
    axes = [domain.axis[lo[d]:hi[d]] for d in range(3)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    f = None
    fmax = 0.0
    if force_src is not None:
        f = np.moveaxis(source_field(force_src, pts), -1, 0).copy()
        _zero_halo(f)
        fmax = float(np.abs(f).max())
    u = np.zeros((3,) + shape)
    v = np.zeros((3,) + shape)
    if velocity_src is not None:
        v = np.moveaxis(source_field(velocity_src, pts), -1, 0) / medium.rho0
        _zero_halo(v)
        fmax = max(fmax, float(np.abs(v).max()) * medium.rho0)
    if scale is None:
        t_end = float(times[-1])
        scale = fmax * max(t_end, dt) ** 2 / medium.rho0 + fmax * max(t_end, dt)
    limit = BLOWUP_FACTOR * max(scale, 1e-300)

    a = acceleration(u, f, medium, h)
    rho = medium.rho0
    cell = h**3
    step_t = np.empty(n_steps + 1)
    max_u = np.empty(n_steps + 1)
    energy = np.empty(n_steps + 1)
    snaps = []
    want = dict()
    for k, s in enumerate(snap_steps):
        want.setdefault(s, []).append(float(times[k]))

    def record(step):
        step_t[step] = step * dt
        max_u[step] = float(np.abs(u).max())
        elastic = -0.5 * float(np.sum(u * (rho * a - (f if f is not None else 0.0)))) * cell
        energy[step] = 0.5 * rho * float(np.sum(v * v)) * cell + elastic
        for t in want.get(step, []):
            snaps.append(WaveState(u.copy(), v.copy(), t, domain, lo))

    record(0)
    for step in range(1, n_steps + 1):
        u += dt * v + (0.5 * dt * dt) * a
        a_new = acceleration(u, f, medium, h)
        v += (0.5 * dt) * (a + a_new)
        a = a_new
        record(step)
        if not np.isfinite(max_u[step]) or max_u[step] > limit:
            raise InstabilityError(
                f"max|u| = {max_u[step]:.3e} exceeds {limit:.3e} at step {step} (t = {step * dt:.6g}, dt = {dt:.4g})"
            )
    return Trajectory(snaps, dt, step_t, max_u, energy)


def _zero_halo(arr):
    for d in range(1, arr.ndim):
        idx = [slice(None)] * arr.ndim
        idx[d] = 0
        arr[tuple(idx)] = 0.0
        idx[d] = -1
        arr[tuple(idx)] = 0.0


def step(state: WaveState, medium: ElasticMedium, src: SourceModel | None, dt: float,
         a_prev: np.ndarray | None = None) -> WaveState:
    """Advance a full-grid state by one velocity-Verlet step.

    ``a_prev`` is the acceleration at ``state``; it is recomputed when omitted.
    """
    domain = state.domain
    u, v = state.full_u(), state.full_v()
    f = None
    if src is not None:
        pts = np.stack(domain.mesh(), axis=-1)
        f = np.moveaxis(source_field(src, pts), -1, 0).copy()
        _zero_halo(f)
    a = acceleration(u, f, medium, domain.h) if a_prev is None else a_prev
    u_new = u + dt * v + 0.5 * dt * dt * a
    a_new = acceleration(u_new, f, medium, domain.h)
    v_new = v + 0.5 * dt * (a + a_new)
    return WaveState(u_new, v_new, state.t + dt, domain, (0, 0, 0))


def simulate(medium: ElasticMedium, domain: DomainSpec, src: SourceModel, times, cfl: float = 0.5) -> Trajectory:
    """Forced run from rest, refusing horizons at or beyond ``tau0``."""
    times = np.asarray(times, dtype=float)
    t_lim = tau0(src, medium)
    if times[-1] >= t_lim:
        raise TimeWindowError(f"t0 = {times[-1]:.6g} >= tau0 = alpha0*d0/2 = {t_lim:.6g}")
    return integrate(medium, domain, times, force_src=src, cfl=cfl)


def _cell_quadrature(state: WaveState, values) -> float:
    pts = state.block_points()
    inside = np.linalg.norm(pts, axis=-1) < state.domain.R
    return float(np.sum(values * inside)) * state.domain.h**3


def energy_report(traj: Trajectory, src: SourceModel, medium: ElasticMedium, rtol: float = 1e-6) -> list[dict]:
    """Per-snapshot check of ``int |u|^2 <= tau^3 exp(tau/rho0)/rho0 int |f|^2``."""
    rows = []
    rho = medium.rho0
    f2 = None
    for s in traj.snapshots:
        if f2 is None:
            f = np.moveaxis(source_field(src, s.block_points()), -1, 0)
            f2 = _cell_quadrature(s, np.sum(f * f, axis=0))
        lhs = _cell_quadrature(s, np.sum(s.u * s.u, axis=0))
        rhs = s.t**3 * math.exp(s.t / rho) / rho * f2
        rows.append({"t": s.t, "max_u": float(np.abs(s.u).max()), "lhs": lhs, "rhs": rhs,
                     "ok": lhs <= rhs * (1.0 + rtol)})
    return rows


def cone_report(traj: Trajectory, src: SourceModel, medium: ElasticMedium, x0, tau: float,
                gamma: float, rtol: float = 1e-6) -> dict:
    """Both sides of the weighted energy estimate on the truncated cone at ``x0``.

    The cone is ``{(x, t): 0 <= t <= tau - alpha0 |x - x0|}`` intersected with the
    ball; time integrals use the trapezoid rule over the trajectory snapshots.
    ``ok`` allows a slack of ``rtol`` relative to the right-hand side taken over
    the whole cylinder ``Omega x [0, tau]``, so that an empty right-hand side
    still admits round-off on the left.
    """
    a0 = alpha0(medium)
    x0 = np.asarray(x0, dtype=float)
    rho = medium.rho0
    snaps = [s for s in traj.snapshots if s.t <= tau * (1 + 1e-12)]
    if len(snaps) < 2:
        raise ValueError("cone report needs at least two snapshots inside [0, tau]")
    ts = np.array([s.t for s in snaps])
    lhs_t, rhs_t, cyl_t, sup = [], [], [], 0.0
    max_all = max(float(np.abs(s.u).max()) for s in traj.snapshots)
    for s in snaps:
        pts = s.block_points()
        f = np.moveaxis(source_field(src, pts), -1, 0)
        f2 = np.sum(f * f, axis=0)
        u2 = np.sum(s.u * s.u, axis=0)
        in_cone = a0 * np.linalg.norm(pts - x0, axis=-1) <= tau - s.t
        w = math.exp(-2.0 * gamma * s.t)
        lhs_t.append(w * _cell_quadrature(s, u2 * in_cone))
        rhs_t.append(w * _cell_quadrature(s, f2 * in_cone))
        cyl_t.append(w * _cell_quadrature(s, f2))
        inside = np.linalg.norm(pts, axis=-1) < s.domain.R
        if np.any(in_cone & inside):
            sup = max(sup, float(np.sqrt(u2[in_cone & inside].max())))
    coef = (tau / (rho * gamma)) ** 2
    lhs = float(np.trapezoid(lhs_t, ts))
    rhs = coef * float(np.trapezoid(rhs_t, ts))
    slack = rtol * coef * float(np.trapezoid(cyl_t, ts))
    return {"x0": tuple(x0), "tau": tau, "gamma": gamma, "lhs": lhs, "rhs": rhs,
            "sup_u_cone": sup, "max_u": max_all, "tol": rhs * rtol + slack,
            "ok": lhs <= rhs * (1.0 + rtol) + slack,
            "null_ok": sup <= 1e-10 * max_all if max_all > 0 else sup == 0.0}


def boundary_band_ratio(traj: Trajectory, width: float) -> float:
    """max |u| within ``width`` of the sphere divided by max |u| further inside."""
    worst = 0.0
    for s in traj.snapshots:
        pts = s.block_points()
        dist = s.domain.R - np.linalg.norm(pts, axis=-1)
        mag = np.sqrt(np.sum(s.u * s.u, axis=0))
        band = mag[dist < width]
        core = mag[dist >= width]
        # nodes outside the block are exact zeros of the scheme
        b = float(band.max()) if band.size else 0.0
        c = float(core.max()) if core.size else 0.0
        if b > 0.0:
            worst = max(worst, b / c if c > 0 else math.inf)
    return worst
