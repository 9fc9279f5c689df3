"""Medium, geometry and source definitions shared by every other module.

Lengths and times are nondimensional. The ball ``B_R(0)`` is the body; it is
embedded in the cube ``[-L, L]^3`` which carries a vertex-centred grid with
``n`` cells (``n + 1`` nodes) per axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TRACE_TOL = 1e-12


class InvalidParameterError(ValueError):
    """Raised when a physical or geometric parameter is out of its domain."""


@dataclass(frozen=True)
class ElasticMedium:
    lambda0: float
    mu0: float
    rho0: float

    def __post_init__(self):
        for name in ("lambda0", "mu0", "rho0"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def cp(self) -> float:
        return math.sqrt((self.lambda0 + 2.0 * self.mu0) / self.rho0)

    @property
    def cs(self) -> float:
        return math.sqrt(self.mu0 / self.rho0)


@dataclass(frozen=True)
class DomainSpec:
    R: float
    L: float
    n: int

    def __post_init__(self):
        if not self.R > 0:
            raise InvalidParameterError("ball radius R must be positive")
        if not self.L > self.R:
            raise InvalidParameterError(f"cube half-width L={self.L} must exceed R={self.R}")
        if self.n < 4:
            raise InvalidParameterError("need at least 4 cells per axis")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def axis(self) -> np.ndarray:
        """Node coordinates along one axis (``n + 1`` values, endpoints on the cube faces)."""
        return -self.L + self.h * np.arange(self.n + 1)

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        a = self.axis
        return np.meshgrid(a, a, a, indexing="ij")

    def distance_to_boundary(self, x) -> np.ndarray:
        """Signed distance to the sphere, positive inside the ball."""
        x = np.asarray(x, dtype=float)
        return self.R - np.linalg.norm(x, axis=-1)

    def in_inset(self, x, hp: float) -> np.ndarray:
        """Membership in ``{x in Omega : dist(x, boundary) > hp}``."""
        if not 0.0 <= hp < self.R:
            raise InvalidParameterError(f"inset depth must lie in [0, R), got {hp}")
        return self.distance_to_boundary(x) > hp

    def inside_mask(self) -> np.ndarray:
        X, Y, Z = self.mesh()
        return X * X + Y * Y + Z * Z < self.R * self.R

    @staticmethod
    def normal(x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x / np.linalg.norm(x, axis=-1, keepdims=True)


# Storage order of the six independent moment-tensor components.
M_KEYS = ("M11", "M22", "M33", "M12", "M13", "M23")
_M_INDEX = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


def sym_from6(m6) -> np.ndarray:
    m = np.zeros((3, 3))
    for v, (i, j) in zip(m6, _M_INDEX):
        m[i, j] = m[j, i] = v
    return m


def sym_to6(M) -> tuple[float, ...]:
    M = np.asarray(M, dtype=float)
    return tuple(float(M[i, j]) for i, j in _M_INDEX)


@dataclass(frozen=True)
class SourceModel:
    """Moment tensor ``M`` (six components), location ``P`` and mollifier width ``d0``.

    ``trace_removed`` records the trace projected out by :meth:`create`; a plain
    constructor call keeps ``M`` exactly as given.
    """

    m6: tuple
    P: tuple
    d0: float
    trace_removed: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "m6", tuple(float(v) for v in self.m6))
        object.__setattr__(self, "P", tuple(float(v) for v in self.P))
        if len(self.m6) != 6 or len(self.P) != 3:
            raise InvalidParameterError("moment tensor needs 6 components and P 3 coordinates")
        if not self.d0 > 0:
            raise InvalidParameterError(f"d0 must be positive, got {self.d0}")

    @classmethod
    def create(cls, M, P, d0: float) -> "SourceModel":
        """Build a source from a 3x3 (symmetrised) or 6-component tensor, projecting out the trace."""
        M = np.asarray(M, dtype=float)
        if M.shape == (6,):
            M = sym_from6(M)
        M = 0.5 * (M + M.T)
        tr = float(np.trace(M))
        M = M - tr / 3.0 * np.eye(3)
        return cls(sym_to6(M), tuple(P), d0, trace_removed=abs(tr))

    @property
    def M(self) -> np.ndarray:
        return sym_from6(self.m6)

    @property
    def position(self) -> np.ndarray:
        return np.array(self.P)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.M))

    def scaled(self, factor: float) -> "SourceModel":
        return SourceModel(tuple(factor * v for v in self.m6), self.P, self.d0, self.trace_removed)

    def moved(self, P) -> "SourceModel":
        return SourceModel(self.m6, tuple(P), self.d0, self.trace_removed)


@dataclass(frozen=True)
class ObservationSpec:
    """Exterior observation ball with a fixed point cloud and sample times."""

    center: tuple
    r0: float
    sample_points: np.ndarray = field(repr=False)
    sample_times: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.asarray(self.sample_points, dtype=float).reshape(-1, 3)
        times = np.asarray(self.sample_times, dtype=float).ravel()
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "sample_points", pts)
        object.__setattr__(self, "sample_times", times)
        if not self.r0 > 0:
            raise InvalidParameterError("observation radius must be positive")
        if np.any(np.linalg.norm(pts - np.array(self.center), axis=1) > self.r0 * (1 + 1e-12)):
            raise InvalidParameterError("sample point outside the observation ball")
        if times.size and (np.any(np.diff(times) <= 0) or times[0] < 0):
            raise InvalidParameterError("sample times must be non-negative and strictly increasing")

    @classmethod
    def ball(cls, center, r0: float, n_points: int, times, seed: int = 0) -> "ObservationSpec":
        """Scrambled-Sobol point cloud mapped volume-uniformly into the ball."""
        from scipy.stats import qmc

        u = qmc.Sobol(d=3, scramble=True, seed=seed).random(n_points)
        r = r0 * np.cbrt(u[:, 0])
        cos_t = 1.0 - 2.0 * u[:, 1]
        sin_t = np.sqrt(np.clip(1.0 - cos_t**2, 0.0, None))
        ph = 2.0 * np.pi * u[:, 2]
        d = np.stack([sin_t * np.cos(ph), sin_t * np.sin(ph), cos_t], axis=1)
        return cls(center, r0, np.asarray(center, dtype=float) + r[:, None] * d, times)

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * self.r0**3

    def same_as(self, other: "ObservationSpec") -> bool:
        return (
            self.center == other.center
            and self.r0 == other.r0
            and np.array_equal(self.sample_points, other.sample_points)
            and np.array_equal(self.sample_times, other.sample_times)
        )


def _check_d0(d0):
    if not d0 > 0:
        raise InvalidParameterError(f"d0 must be positive, got {d0}")


def mollifier_constant(d0: float) -> float:
    _check_d0(d0)
    a = 0.5 * d0
    return 315.0 / (64.0 * math.pi * a**3)


def mollifier_value(r, d0: float):
    """Unit-mass radial bump ``c (1 - (2r/d0)^2)^3`` supported on ``r < d0/2``."""
    _check_d0(d0)
    r = np.asarray(r, dtype=float)
    s = 1.0 - (2.0 * r / d0) ** 2
    return np.where(s > 0.0, mollifier_constant(d0) * np.clip(s, 0.0, None) ** 3, 0.0)


def mollifier_over_r(r, d0: float):
    """``q'(r)/r``, a polynomial in ``r^2`` on the support; finite at the centre."""
    _check_d0(d0)
    r = np.asarray(r, dtype=float)
    a2 = (0.5 * d0) ** 2
    s = 1.0 - r * r / a2
    return np.where(s > 0.0, -6.0 * mollifier_constant(d0) / a2 * np.clip(s, 0.0, None) ** 2, 0.0)


def mollifier_radial_derivative(r, d0: float):
    return np.asarray(r, dtype=float) * mollifier_over_r(r, d0)


def source_field(src: SourceModel, x) -> np.ndarray:
    """``f(x) = -M grad q(|x - P|)`` for points ``x`` of shape ``(..., 3)``."""
    y = np.asarray(x, dtype=float) - src.position
    w = mollifier_over_r(np.linalg.norm(y, axis=-1), src.d0)
    return -w[..., None] * (y @ src.M.T)


def alpha0(medium: ElasticMedium) -> float:
    return math.sqrt(medium.rho0 / (2.0 * (medium.lambda0 + 2.0 * medium.mu0)))


def tau0(src: SourceModel, medium: ElasticMedium) -> float:
    """End of the window in which the wavefield cannot reach the boundary."""
    return alpha0(medium) * src.d0 / 2.0


def validate_source(src: SourceModel, domain: DomainSpec, bounds=None) -> list[str]:
    """Return the list of violated source hypotheses (empty when admissible)."""
    out = []
    M = src.M
    fro = float(np.linalg.norm(M))
    tr = abs(float(np.trace(M)))
    if tr > TRACE_TOL * max(fro, 1.0) or src.trace_removed > TRACE_TOL * max(fro, 1.0):
        out.append(f"trace != 0 (|tr M| = {max(tr, src.trace_removed):.3e})")
    if fro == 0.0:
        out.append("M = 0")
    if bounds is not None:
        m0, M0 = bounds
        if not m0 <= fro <= M0:
            out.append(f"|M| = {fro:.6g} outside [m0, M0] = [{m0}, {M0}]")
    dist = float(domain.distance_to_boundary(src.position))
    if not dist > src.d0:
        out.append(f"P not in Omega_d0 (dist(P, boundary) = {dist:.6g} <= d0 = {src.d0})")
    return out


def random_source(rng: np.random.Generator, R: float, d0: float, m0: float, M0: float) -> SourceModel:
    """Admissible source: isotropic trace-free direction, ``|M|`` uniform in ``[m0, M0]``, ``P`` uniform in the inset ball."""
    A = rng.standard_normal((3, 3))
    M = A + A.T
    M -= np.trace(M) / 3.0 * np.eye(3)
    M *= rng.uniform(m0, M0) / np.linalg.norm(M)
    r_in = R - d0
    while True:
        P = rng.uniform(-r_in, r_in, 3)
        if np.linalg.norm(P) < r_in * (1.0 - 1e-9):
            return SourceModel.create(M, P, d0)
