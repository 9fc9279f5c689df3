"""Harmonic polynomials, the boundary functional ``z`` and exterior multipole fits."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .core import ObservationSpec
from .gravity import SphereQuadrature, SurfaceSamples


class Poly:
    """Polynomial in (x1, x2, x3) stored as ``{(a, b, c): coeff}``."""

    def __init__(self, terms=None):
        self.terms = {k: float(v) for k, v in (terms or {}).items() if v != 0}

    @classmethod
    def var(cls, i: int) -> "Poly":
        e = [0, 0, 0]
        e[i] = 1
        return cls({tuple(e): 1.0})

    @classmethod
    def const(cls, c: float) -> "Poly":
        return cls({(0, 0, 0): c})

    def _coerce(self, other):
        return other if isinstance(other, Poly) else Poly.const(other)

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, 0.0) + v
        return Poly(out)

    __radd__ = __add__

    def __neg__(self):
        return Poly({k: -v for k, v in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        out = {}
        for k1, v1 in self.terms.items():
            for k2, v2 in other.terms.items():
                k = (k1[0] + k2[0], k1[1] + k2[1], k1[2] + k2[2])
                out[k] = out.get(k, 0.0) + v1 * v2
        return Poly(out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = Poly.const(1.0)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other):
        return isinstance(other, Poly) and (self - other).is_zero()

    def is_zero(self) -> bool:
        return not self.terms

    @property
    def degree(self) -> int:
        return max((sum(k) for k in self.terms), default=0)

    def diff(self, i: int) -> "Poly":
        out = {}
        for k, v in self.terms.items():
            if k[i]:
                e = list(k)
                e[i] -= 1
                out[tuple(e)] = out.get(tuple(e), 0.0) + v * k[i]
        return Poly(out)

    def laplacian(self) -> "Poly":
        return self.diff(0).diff(0) + self.diff(1).diff(1) + self.diff(2).diff(2)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for (a, b, c), v in self.terms.items():
            out = out + v * x[..., 0] ** a * x[..., 1] ** b * x[..., 2] ** c
        return out

    def grad(self, x) -> np.ndarray:
        return np.stack([self.diff(i)(x) for i in range(3)], axis=-1)

    def hessian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        H = np.empty(x.shape[:-1] + (3, 3))
        for i in range(3):
            di = self.diff(i)
            for j in range(3):
                H[..., i, j] = di.diff(j)(x)
        return H


class HarmonicPoly(Poly):
    def __init__(self, name: str, poly: Poly):
        super().__init__(poly.terms)
        self.name = name
        if not self.laplacian().is_zero():
            raise ValueError(f"{name} is not harmonic")

    def __repr__(self):
        return f"HarmonicPoly({self.name!r})"


X1, X2, X3 = Poly.var(0), Poly.var(1), Poly.var(2)


def basis_h2() -> list[HarmonicPoly]:
    return [
        HarmonicPoly("x1x2", X1 * X2),
        HarmonicPoly("x1x3", X1 * X3),
        HarmonicPoly("x2x3", X2 * X3),
        HarmonicPoly("(x1^2-x2^2)/2", 0.5 * (X1 * X1 - X2 * X2)),
        HarmonicPoly("(x1^2-x3^2)/2", 0.5 * (X1 * X1 - X3 * X3)),
    ]


def basis_h3() -> list[HarmonicPoly]:
    return [
        HarmonicPoly("x1^3-3x2^2x1", X1**3 - 3 * X2 * X2 * X1),
        HarmonicPoly("x2^3-3x1^2x2", X2**3 - 3 * X1 * X1 * X2),
        HarmonicPoly("x1^3-3x3^2x1", X1**3 - 3 * X3 * X3 * X1),
        HarmonicPoly("x3^3-3x3x1^2", X3**3 - 3 * X3 * X1 * X1),
        HarmonicPoly("x2^3-3x2x3^2", X2**3 - 3 * X2 * X3 * X3),
        HarmonicPoly("x3^3-3x3x2^2", X3**3 - 3 * X3 * X2 * X2),
        HarmonicPoly("x1x2x3", X1 * X2 * X3),
    ]


def basis_all() -> list[HarmonicPoly]:
    return basis_h2() + basis_h3()


def boundary_z(samples: SurfaceSamples, quad: SphereQuadrature, phi: Poly) -> float:
    """``z = oint (dS/dn phi - S dphi/dn)`` over the sphere (no density prefactor)."""
    if samples.S.shape != (quad.size,) or samples.dS_dn.shape != (quad.size,):
        raise ValueError("surface samples do not match the quadrature nodes")
    dphi_dn = np.sum(phi.grad(quad.nodes) * quad.normals, axis=1)
    return quad.integrate(samples.dS_dn * phi(quad.nodes) - samples.S * dphi_dn)


# Real solid harmonics (unnormalised), m = -l..l.
def _solid_table() -> dict:
    x, y, z = X1, X2, X3
    r2 = x * x + y * y + z * z
    return {
        0: [Poly.const(1.0)],
        1: [y, z, x],
        2: [x * y, y * z, 3 * z * z - r2, x * z, x * x - y * y],
        3: [
            y * (3 * x * x - y * y),
            x * y * z,
            y * (5 * z * z - r2),
            z * (5 * z * z - 3 * r2),
            x * (5 * z * z - r2),
            z * (x * x - y * y),
            x * (x * x - 3 * y * y),
        ],
        4: [
            x * y * (x * x - y * y),
            y * z * (3 * x * x - y * y),
            x * y * (7 * z * z - r2),
            y * z * (7 * z * z - 3 * r2),
            35 * z**4 - 30 * z * z * r2 + 3 * r2 * r2,
            x * z * (7 * z * z - 3 * r2),
            (x * x - y * y) * (7 * z * z - r2),
            x * z * (x * x - 3 * y * y),
            x**4 - 6 * x * x * y * y + y**4,
        ],
    }


SOLID = _solid_table()
MAX_DEGREE = max(SOLID)


def exterior_labels(lmax: int) -> list[tuple[int, int]]:
    return [(l, m) for l in range(lmax + 1) for m in range(-l, l + 1)]


def _exterior_terms(x: np.ndarray, lmax: int):
    """Values ``(n, K)`` and gradients ``(n, K, 3)`` of ``p_lm(x) / |x|^(2l+1)``."""
    r2 = np.sum(x * x, axis=-1)
    r = np.sqrt(r2)
    vals, grads = [], []
    for l in range(lmax + 1):
        rp = r ** (2 * l + 1)
        for p in SOLID[l]:
            pv = p(x)
            pg = p.grad(x)
            vals.append(pv / rp)
            grads.append(pg / rp[:, None] - (2 * l + 1) * (pv / (rp * r2))[:, None] * x)
    return np.stack(vals, axis=1), np.stack(grads, axis=1)


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class MultipoleExpansion:
    lmax: int
    coeffs: np.ndarray = field(repr=False)
    residual: float = 0.0
    valid_radius: float = 0.0
    center: tuple = (0.0, 0.0, 0.0)
    condition: float = 1.0

    @property
    def labels(self) -> list[tuple[int, int]]:
        return exterior_labels(self.lmax)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# center={self.center[0]!r},{self.center[1]!r},{self.center[2]!r} lmax={self.lmax}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["l", "m", "coeff"])
        for (l, m), c in zip(self.labels, self.coeffs):
            w.writerow([l, m, repr(float(c))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MultipoleExpansion":
        lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
        rows = list(csv.DictReader(lines))
        lmax = max(int(r["l"]) for r in rows)
        lookup = {(int(r["l"]), int(r["m"])): float(r["coeff"]) for r in rows}
        return cls(lmax, np.array([lookup.get(k, 0.0) for k in exterior_labels(lmax)]))


def multipole_fit(values, obs: ObservationSpec, lmax: int = 4, valid_radius: float = 0.0,
                  rcond: float = 1e-14) -> MultipoleExpansion:
    """Least-squares exterior expansion whose gradient matches sampled ``grad S``."""
    if not 0 <= lmax <= MAX_DEGREE:
        raise ValueError(f"lmax must lie in [0, {MAX_DEGREE}]")
    pts = obs.sample_points
    values = np.asarray(values, dtype=float).reshape(len(pts), 3)
    n_coef = (lmax + 1) ** 2
    if 3 * len(pts) < 3 * n_coef:
        raise FitError(f"{3 * len(pts)} scalar samples for {n_coef} coefficients (need >= 3x)")
    if np.any(np.linalg.norm(pts, axis=1) <= valid_radius):
        raise FitError("observation points inside the convergence radius")
    _, G = _exterior_terms(pts, lmax)
    A = np.moveaxis(G, 2, 1).reshape(3 * len(pts), n_coef)
    b = values.reshape(-1)
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    As = A / scale
    sv = np.linalg.svd(As, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    if not sv[-1] > rcond * sv[0]:
        raise FitError(f"rank-deficient multipole system (condition number {cond:.3e})")
    sol, *_ = np.linalg.lstsq(As, b, rcond=None)
    coeffs = sol / scale
    res = float(np.linalg.norm(A @ coeffs - b))
    return MultipoleExpansion(lmax, coeffs, res, valid_radius, condition=cond)


def multipole_eval(exp: MultipoleExpansion, x) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1, 3)
    r = np.linalg.norm(flat, axis=1)
    if np.any(r <= exp.valid_radius) or np.any(r == 0):
        raise ValueError("evaluation point inside the convergence radius of the expansion")
    V, G = _exterior_terms(flat, exp.lmax)
    S = V @ exp.coeffs
    g = np.einsum("nkj,k->nj", G, exp.coeffs)
    return S.reshape(x.shape[:-1]), g.reshape(x.shape)


def expansion_surface_samples(exp: MultipoleExpansion, quad: SphereQuadrature, t: float = float("nan")) -> SurfaceSamples:
    S, g = multipole_eval(exp, quad.nodes)
    return SurfaceSamples(quad, S, np.sum(g * quad.normals, axis=1), t)
