"""Energy densities f(x, A) acting on symmetric strains.

The x-dependence is carried by a region tag (``"volume"`` or
``"interface"``), each with its own nonnegative weight. Two forms are
supported: a pure power ``w |A|^p`` and a quadratic form ``(C:A):A``.

Batched evaluation works on Mandel vectors (shape ``(..., d)``), whose
Euclidean norm equals the Frobenius norm of the matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .tensors import SymMatrix, mandel_size, to_mandel, _mandel_index

REGIONS = ("volume", "interface")


def _mandel_matrix(c: np.ndarray) -> np.ndarray:
    """Mandel representation of a 4th-order tensor with minor symmetries."""
    n = c.shape[0]
    idx = _mandel_index(n)
    d = len(idx)
    out = np.zeros((d, d))
    for a, (i, j) in enumerate(idx):
        fa = 1.0 if i == j else np.sqrt(2.0)
        for b, (k, l) in enumerate(idx):
            fb = 1.0 if k == l else np.sqrt(2.0)
            out[a, b] = fa * fb * c[i, j, k, l]
    return out


def isotropic_tensor(n: int, lam: float, mu: float) -> np.ndarray:
    """Mandel matrix of C with (C:A):A = lam tr(A)^2 + 2 mu |A|^2."""
    d = mandel_size(n)
    m = 2.0 * mu * np.eye(d)
    m[:n, :n] += lam
    return m


@dataclass(frozen=True)
class Integrand:
    """Convex energy density with growth constants.

    Parameters
    ----------
    p : float
        Growth exponent (>= 1). Fixed to 2 for the quadratic form.
    form : {"power", "quadratic"}
    weight : float
        Coefficient ``w`` of the power form.
    C : array, optional
        Mandel matrix (d x d) or 4th-order tensor (n, n, n, n) of the
        quadratic form. Must be symmetric positive semi-definite.
    region_weights : mapping
        Multiplier per region tag.
    alpha, beta : float, optional
        Growth constants; derived from the form when omitted.
    huber_delta : float, optional
        Smoothing radius used in place of ``|A|`` when ``p == 1``.
    """

    p: float = 2.0
    form: str = "power"
    weight: float = 1.0
    C: np.ndarray | None = None
    region_weights: Mapping[str, float] = field(
        default_factory=lambda: {"volume": 1.0, "interface": 1.0})
    alpha: float | None = None
    beta: float | None = None
    huber_delta: float | None = None

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("exponent p must be >= 1")
        if self.form not in ("power", "quadratic"):
            raise ValueError(f"unknown form {self.form!r}")
        rw = dict(self.region_weights)
        for tag, w in rw.items():
            if tag not in REGIONS:
                raise ValueError(f"unknown region tag {tag!r}")
            if w < 0:
                raise ValueError("region weights must be nonnegative")
        object.__setattr__(self, "region_weights", rw)
        if self.form == "quadratic":
            if self.C is None:
                raise ValueError("quadratic form needs C")
            c = np.array(self.C, dtype=float)
            if c.ndim == 4:
                c = _mandel_matrix(c)
            if c.shape not in ((3, 3), (6, 6)) or not np.allclose(c, c.T, atol=1e-12):
                raise ValueError("C must be a symmetric Mandel matrix of size 3 or 6")
            if np.linalg.eigvalsh(c).min() < -1e-12 * max(1.0, np.abs(c).max()):
                raise ValueError("C is indefinite: integrand would not be convex")
            c.setflags(write=False)
            object.__setattr__(self, "C", c)
            object.__setattr__(self, "p", 2.0)
        elif self.weight <= 0:
            raise ValueError("power form needs a positive weight")
        lo, hi = self._derived_bounds()
        if self.alpha is None:
            object.__setattr__(self, "alpha", lo)
        if self.beta is None:
            object.__setattr__(self, "beta", hi)

    def _derived_bounds(self):
        ws = list(self.region_weights.values()) or [1.0]
        if self.form == "power":
            return self.weight * min(ws), self.weight * max(ws)
        ev = np.linalg.eigvalsh(self.C)
        return float(ev[0]) * min(ws), float(ev[-1]) * max(ws)

    @property
    def n(self) -> int | None:
        if self.C is None:
            return None
        return {3: 2, 6: 3}[self.C.shape[0]]

    @property
    def is_quadratic(self) -> bool:
        """True when the density is a quadratic form in A."""
        return self.form == "quadratic" or (self.p == 2 and self.huber_delta is None)

    def quadratic_matrix(self, d: int) -> np.ndarray:
        """Matrix Q with f0(z) = z^T Q z on Mandel vectors of size d."""
        if self.form == "quadratic":
            if self.C.shape[0] != d:
                raise ValueError("quadratic form dimension does not match the structure")
            return self.C
        if self.p != 2:
            raise ValueError("not a quadratic integrand")
        return self.weight * np.eye(d)

    def region_weight(self, region: str) -> float:
        if region not in REGIONS:
            raise ValueError(f"unknown region tag {region!r}")
        return float(self.region_weights.get(region, 0.0))

    def smoothed(self, delta: float = 1e-4) -> "Integrand":
        """Huber-smoothed copy for p == 1; identity otherwise."""
        if self.p != 1 or self.form != "power":
            return self
        return Integrand(p=1.0, form="power", weight=self.weight,
                         region_weights=self.region_weights, alpha=self.alpha,
                         beta=self.beta, huber_delta=delta)

    # -- batched evaluation on Mandel vectors ----------------------------
    def base(self, z: np.ndarray) -> np.ndarray:
        """Region-free density f0 on Mandel vectors ``z`` (..., d)."""
        z = np.asarray(z, dtype=float)
        if self.form == "quadratic":
            return np.einsum("...i,ij,...j->...", z, self.C, z)
        r = np.linalg.norm(z, axis=-1)
        if self.huber_delta is not None:
            d = self.huber_delta
            return self.weight * np.where(r <= d, 0.5 * r * r / d, r - 0.5 * d)
        if self.p == 2:
            return self.weight * r * r
        return self.weight * r ** self.p

    def base_grad(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.form == "quadratic":
            return 2.0 * z @ self.C
        r = np.linalg.norm(z, axis=-1, keepdims=True)
        if self.huber_delta is not None:
            d = self.huber_delta
            return self.weight * z / np.maximum(r, d)
        if self.p == 2:
            return 2.0 * self.weight * z
        if self.p == 1:
            with np.errstate(invalid="ignore", divide="ignore"):
                g = np.where(r > 0, z / r, 0.0)
            return self.weight * g
        with np.errstate(invalid="ignore", divide="ignore"):
            g = np.where(r > 0, r ** (self.p - 2) * z, 0.0)
        return self.weight * self.p * g

    def evaluate(self, region: str, A) -> float:
        """f(region, A) for a single symmetric matrix ``A``."""
        w = self.region_weight(region)
        a = np.asarray(A.entries if isinstance(A, SymMatrix) else A, dtype=float)
        return w * float(self.base(to_mandel(a)))

    # -- serialisation --------------------------------------------------
    def to_dict(self) -> dict:
        out = {"p": self.p, "form": self.form, "weight": self.weight,
               "region_weights": dict(self.region_weights),
               "alpha": self.alpha, "beta": self.beta}
        if self.C is not None:
            out["C"] = self.C.tolist()
        if self.huber_delta is not None:
            out["huber_delta"] = self.huber_delta
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "Integrand":
        d = dict(d)
        if "lame" in d:
            lam, mu = d.pop("lame")
            d["C"] = isotropic_tensor(int(d.pop("n", 2)), lam, mu)
            d.setdefault("form", "quadratic")
        if "C" in d:
            d["C"] = np.asarray(d["C"], dtype=float)
        return cls(**d)

    def __eq__(self, other):
        if not isinstance(other, Integrand):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(repr(sorted(self.to_dict().items(), key=lambda kv: kv[0])))


@dataclass
class GrowthReport:
    alpha: float
    beta: float
    p: float
    min_lower_ratio: float   # min f / |A|^p
    max_upper_ratio: float   # max f / (1 + |A|^p)
    samples: int
    passed: bool

    @property
    def lower_margin(self) -> float:
        return self.min_lower_ratio - self.alpha

    @property
    def upper_margin(self) -> float:
        return self.beta - self.max_upper_ratio


def growth_check(f: Integrand, samples: int = 1000, seed: int = 0, n: int | None = None,
                 rtol: float = 1e-12) -> GrowthReport:
    """Check alpha |A|^p <= f(x, A) <= beta (1 + |A|^p) on a random sample.

    The sample mixes random symmetric matrices with log-uniform norms and,
    for the quadratic form, the eigen-directions of C, so that a degenerate
    direction is always probed.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    n = n or f.n or 2
    d = mandel_size(n)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((samples, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    z *= 10.0 ** rng.uniform(-3, 3, size=(samples, 1))
    if f.form == "quadratic":
        _, vecs = np.linalg.eigh(f.C)
        z = np.vstack([z, vecs.T, 10.0 * vecs.T])
    r = np.linalg.norm(z, axis=1)
    rp = r ** f.p
    base = f.base(z)
    lower, upper = np.inf, -np.inf
    regions = [t for t in REGIONS if t in f.region_weights] or ["volume"]
    for tag in regions:
        val = f.region_weight(tag) * base
        lower = min(lower, float(np.min(val / rp)))
        upper = max(upper, float(np.max(val / (1.0 + rp))))
    ok = (f.alpha > 0 and f.alpha <= f.beta
          and lower >= f.alpha * (1 - rtol) and upper <= f.beta * (1 + rtol))
    return GrowthReport(f.alpha, f.beta, f.p, lower, upper, len(z), bool(ok))
