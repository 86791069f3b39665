"""Small dense tensor calculus for strain-driven energies.

Symmetric and skew matrices of dimension 2 or 3, rigid motions, the
Mandel vectorisation used by the assemblers, and a numerical recession
function estimate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

SQRT2 = math.sqrt(2.0)
DIMS = (2, 3)


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


def _check_dim(n: int) -> None:
    if n not in DIMS:
        raise ValueError(f"dimension must be 2 or 3, got {n}")


class SymMatrix:
    """Symmetric n x n matrix, n in {2, 3}.

    The input is symmetrised only if it is already symmetric to rounding;
    otherwise a ``ValueError`` is raised. Use :meth:`from_any` to take the
    symmetric part of a general matrix.
    """

    __slots__ = ("entries",)

    def __init__(self, entries, atol: float = 1e-12):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("SymMatrix needs a square array")
        _check_dim(a.shape[0])
        scale = max(1.0, float(np.abs(a).max(initial=0.0)))
        if not np.allclose(a, a.T, rtol=0.0, atol=atol * scale):
            raise ValueError("matrix is not symmetric")
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite entries")
        self.entries = _frozen(0.5 * (a + a.T))

    @classmethod
    def from_any(cls, a) -> "SymMatrix":
        a = np.asarray(a, dtype=float)
        return cls(0.5 * (a + a.T))

    @classmethod
    def zeros(cls, n: int) -> "SymMatrix":
        return cls(np.zeros((n, n)))

    @classmethod
    def from_mandel(cls, v) -> "SymMatrix":
        return cls(from_mandel(v))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def norm(self) -> float:
        return float(np.linalg.norm(self.entries))

    def mandel(self) -> np.ndarray:
        return to_mandel(self.entries)

    def __array__(self, dtype=None, copy=None):
        return np.array(self.entries, dtype=dtype)

    def __add__(self, other):
        return SymMatrix(self.entries + np.asarray(other))

    def __mul__(self, t: float):
        return SymMatrix(t * self.entries)

    __rmul__ = __mul__

    def __eq__(self, other):
        return isinstance(other, SymMatrix) and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())

    def __repr__(self):
        return f"SymMatrix({self.entries.tolist()})"


class SkewMatrix:
    """Skew-symmetric n x n matrix (zero diagonal)."""

    __slots__ = ("entries",)

    def __init__(self, entries, atol: float = 1e-12):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("SkewMatrix needs a square array")
        _check_dim(a.shape[0])
        scale = max(1.0, float(np.abs(a).max(initial=0.0)))
        if not np.allclose(a, -a.T, rtol=0.0, atol=atol * scale):
            raise ValueError("matrix is not skew-symmetric")
        self.entries = _frozen(0.5 * (a - a.T))

    @classmethod
    def zeros(cls, n: int) -> "SkewMatrix":
        return cls(np.zeros((n, n)))

    @classmethod
    def from_params(cls, n: int, params) -> "SkewMatrix":
        return cls(skew_from_params(n, params))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def params(self) -> np.ndarray:
        return params_from_skew(self.entries)

    def axial(self) -> np.ndarray:
        """Axial vector a with R x = a ^ x (3D only)."""
        if self.n != 3:
            raise ValueError("axial form exists only in 3D")
        return params_from_skew(self.entries)

    @classmethod
    def from_axial(cls, a) -> "SkewMatrix":
        return cls(cross_matrix(a))

    def __array__(self, dtype=None, copy=None):
        return np.array(self.entries, dtype=dtype)

    def __eq__(self, other):
        return isinstance(other, SkewMatrix) and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())

    def __repr__(self):
        return f"SkewMatrix({self.entries.tolist()})"


def n_rot(n: int) -> int:
    """Number of independent rotation parameters, n(n-1)/2."""
    return n * (n - 1) // 2


def mandel_size(n: int) -> int:
    return n * (n + 1) // 2


def cross_matrix(a) -> np.ndarray:
    """Matrix [a]x with [a]x @ x == cross(a, x)."""
    a1, a2, a3 = np.asarray(a, dtype=float)
    return np.array([[0.0, -a3, a2], [a3, 0.0, -a1], [-a2, a1, 0.0]])


def skew_from_params(n: int, params) -> np.ndarray:
    """Skew matrix from its n(n-1)/2 parameters.

    In 2D the single parameter r gives [[0, -r], [r, 0]]; in 3D the three
    parameters are the axial vector.
    """
    params = np.asarray(params, dtype=float)
    if n == 2:
        r = float(params.reshape(-1)[0])
        return np.array([[0.0, -r], [r, 0.0]])
    if n == 3:
        return cross_matrix(params)
    _check_dim(n)


def params_from_skew(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape == (2, 2):
        return np.array([w[1, 0]])
    return np.array([w[2, 1], w[0, 2], w[1, 0]])


# Basis of skew matrices, one per rotation parameter: shape (n_rot, n, n).
def skew_basis(n: int) -> np.ndarray:
    return np.array([skew_from_params(n, e) for e in np.eye(n_rot(n))])


def _mandel_index(n: int):
    if n == 2:
        return [(0, 0), (1, 1), (0, 1)]
    return [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)]


def to_mandel(a) -> np.ndarray:
    """Mandel vector of the symmetric part of ``a``; its 2-norm is the
    Frobenius norm. Accepts a stack of matrices (..., n, n)."""
    a = np.asarray(a, dtype=float)
    n = a.shape[-1]
    s = 0.5 * (a + np.swapaxes(a, -1, -2))
    comps = []
    for i, j in _mandel_index(n):
        comps.append(s[..., i, j] if i == j else SQRT2 * s[..., i, j])
    return np.stack(comps, axis=-1)


def from_mandel(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    d = v.shape[-1]
    n = {3: 2, 6: 3}[d]
    out = np.zeros(v.shape[:-1] + (n, n))
    for c, (i, j) in enumerate(_mandel_index(n)):
        if i == j:
            out[..., i, i] = v[..., c]
        else:
            out[..., i, j] = v[..., c] / SQRT2
            out[..., j, i] = v[..., c] / SQRT2
    return out


# Linear map full matrix (row-major flattened, n*n) -> Mandel vector of its
# symmetric part; shape (mandel_size, n*n).
def mandel_of_matrix_operator(n: int) -> np.ndarray:
    d = mandel_size(n)
    op = np.zeros((d, n * n))
    for c, (i, j) in enumerate(_mandel_index(n)):
        if i == j:
            op[c, i * n + i] = 1.0
        else:
            op[c, i * n + j] = SQRT2 / 2
            op[c, j * n + i] = SQRT2 / 2
    return op


def sym_product(a, b) -> SymMatrix:
    """Symmetric product a (.) b = (a b^T + b a^T) / 2."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return SymMatrix(0.5 * (np.outer(a, b) + np.outer(b, a)))


def sym_product_norm_sq(a, b) -> float:
    """|a (.) b|_F^2 in closed form, (|a|^2 |b|^2 + (a.b)^2) / 2."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    ab = float(a @ b)
    return 0.5 * (float(a @ a) * float(b @ b) + ab * ab)


@dataclass(frozen=True)
class RigidMotion:
    """Displacement x -> R x + c with R skew.

    In 3D this is the same as a ^ x + c with ``a`` the axial vector of R.
    """

    rotation: SkewMatrix
    translation: np.ndarray

    def __post_init__(self):
        t = _frozen(self.translation)
        if t.shape != (self.rotation.n,):
            raise ValueError("translation length must match rotation dimension")
        object.__setattr__(self, "translation", t)

    @classmethod
    def zero(cls, n: int) -> "RigidMotion":
        return cls(SkewMatrix.zeros(n), np.zeros(n))

    @classmethod
    def from_axial(cls, a, b) -> "RigidMotion":
        return cls(SkewMatrix.from_axial(a), np.asarray(b, dtype=float))

    @classmethod
    def from_params(cls, n: int, params) -> "RigidMotion":
        """From the flat vector (rotation params..., translation...)."""
        params = np.asarray(params, dtype=float)
        nr = n_rot(n)
        return cls(SkewMatrix.from_params(n, params[:nr]), params[nr:nr + n])

    @property
    def n(self) -> int:
        return self.rotation.n

    def params(self) -> np.ndarray:
        return np.concatenate([self.rotation.params(), self.translation])

    def __call__(self, x) -> np.ndarray:
        return rigid_eval(self, x)

    def __add__(self, other: "RigidMotion") -> "RigidMotion":
        return RigidMotion(SkewMatrix(self.rotation.entries + other.rotation.entries),
                           self.translation + other.translation)

    def __sub__(self, other: "RigidMotion") -> "RigidMotion":
        return RigidMotion(SkewMatrix(self.rotation.entries - other.rotation.entries),
                           self.translation - other.translation)

    def __mul__(self, t: float) -> "RigidMotion":
        return RigidMotion(SkewMatrix(t * self.rotation.entries), t * self.translation)

    __rmul__ = __mul__


def rigid_eval(m: RigidMotion, x) -> np.ndarray:
    """Evaluate R x + c; ``x`` may be a single point or an (N, n) array."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != m.n:
        raise ValueError("point dimension does not match the motion")
    return x @ m.rotation.entries.T + m.translation


def _is_inf(v) -> bool:
    return isinstance(v, float) and math.isinf(v)


def recession_estimate(f: Callable, xi, t_ladder: Sequence[float] | None = None,
                       growth_tol: float = 1e-3, n_convex_checks: int = 64,
                       seed: int = 0) -> float:
    """Estimate the recession value lim_{t->inf} f(t xi) / t.

    ``f`` is either an :class:`~homlab.integrand.Integrand` (evaluated on its
    volume region) or a callable acting on n x n arrays. Returns
    ``math.inf`` when the quotients grow by more than ``1 + growth_tol``
    between successive rungs of the ladder.

    Raises
    ------
    ValueError
        If ``f`` fails a sampled midpoint-convexity check.
    """
    fn = _as_callable(f)
    xi = np.asarray(xi, dtype=float)
    if t_ladder is None:
        t_ladder = np.logspace(2, 6, 5)
    t_ladder = np.asarray(t_ladder, dtype=float)
    if np.any(t_ladder <= 0) or np.any(np.diff(t_ladder) <= 0):
        raise ValueError("t_ladder must be positive and increasing")
    _check_convex(fn, xi, t_ladder, n_convex_checks, seed)

    q = np.array([fn(t * xi) / t for t in t_ladder])
    for prev, cur in zip(q[:-1], q[1:]):
        if prev > 0 and cur / prev > 1.0 + growth_tol:
            return math.inf
    return float(q[-1])


def _as_callable(f):
    if hasattr(f, "evaluate"):
        return lambda a: f.evaluate("volume", a)
    return lambda a: float(f(np.asarray(a)))


def _check_convex(fn, xi, t_ladder, n_checks, seed):
    rng = np.random.default_rng(seed)
    n = xi.shape[0]
    scale = max(1.0, float(np.linalg.norm(xi)))
    pts = [t * xi for t in t_ladder[:2]]
    for _ in range(n_checks):
        a = rng.standard_normal((n, n))
        b = rng.standard_normal((n, n))
        pts.append(0.5 * (a + a.T) * scale)
        pts.append(0.5 * (b + b.T) * scale)
    for a, b in zip(pts[::2], pts[1::2]):
        mid = fn(0.5 * (a + b))
        avg = 0.5 * (fn(a) + fn(b))
        if mid > avg + 1e-9 * max(1.0, abs(avg)):
            raise ValueError("integrand is not convex (midpoint test failed)")
