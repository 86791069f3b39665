"""Cell-problem assembly and minimisation.

Every structure is reduced to a *strain system*: a list of quadrature points
q, each with a weight w_q, a region tag, and an affine map

    z_q = S_q u + G_q vec(B)

giving the Mandel vector of the density dEu/dmu at q from the degrees of
freedom u and the affine datum B (u - B x is k-periodic). The cell energy is

    E(u; B) = k^-n  sum_q  w_q * rho(region_q) * f0(z_q).

B may be any square matrix; only its symmetric part enters energies up to
a rigid change of variables, which is what the gauge checks exercise.

Gauge: the only directions leaving every jump and strain unchanged are
global translations, so one block (or node) translation is pinned. Block
rotations are left free: with u - B x periodic at fixed B a global rotation
is *not* a symmetry (it shifts B by a skew matrix).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .integrand import REGIONS, Integrand
from .structures import ElasticSpringCell, RigidSpringCell, competitor_field
from .tensors import (SymMatrix, mandel_of_matrix_operator, mandel_size, n_rot,
                      skew_basis, to_mandel)

CG_RTOL = 1e-12
GRAD_TOL = 1e-9
SUBADD_TOL = 1e-8
HUBER_DELTA = 1e-4


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class StrainSystem:
    n: int
    d: int
    S: sp.csr_matrix          # (Q*d, N)
    G: np.ndarray             # (Q*d, n*n)
    weights: np.ndarray       # (Q,) measure weights, already divided by k^n
    regions: np.ndarray       # (Q,) indices into REGIONS

    @property
    def n_points(self) -> int:
        return len(self.weights)


def _sym_basis_with_normal(n: int, axis: int) -> np.ndarray:
    """P with P @ a == Mandel(a (.) e_axis); shape (d, n)."""
    e = np.zeros(n)
    e[axis] = 1.0
    cols = [to_mandel(0.5 * (np.outer(ei, e) + np.outer(e, ei))) for ei in np.eye(n)]
    return np.array(cols).T


def _face_points(n: int, order: int):
    """Gauss-Legendre points on the unit (n-1)-cube, weights summing to 1."""
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    pts = np.array(np.meshgrid(*([x] * (n - 1)), indexing="ij")).reshape(n - 1, -1).T
    wts = np.prod(np.array(np.meshgrid(*([w] * (n - 1)), indexing="ij")).reshape(n - 1, -1),
                  axis=0)
    return pts, wts


def rigid_spring_system(cell: RigidSpringCell, face_order: int = 2) -> StrainSystem:
    """Strain system of the rigid-spring cell.

    On a face between block i and its neighbour j (periodic copy shifted by
    s), the jump is u_j(x - s) + B s - u_i(x) with u_b(x) = R_b (x - c_b) + t_b;
    the density is n * jump (.) e_m.
    """
    n = cell.n
    d = mandel_size(n)
    nr = n_rot(n)
    stride = cell.dofs_per_block
    basis = skew_basis(n)
    fpts, fw = _face_points(n, face_order)
    rows, cols, vals = [], [], []
    g_blocks, weights = [], []
    scale = float(n)      # 1 / (measure weight per unit face area)
    q = 0
    for f in cell.faces:
        P = scale * _sym_basis_with_normal(n, f.axis)
        others = [a for a in range(n) if a != f.axis]
        s = np.array(f.offset, dtype=float)
        ci = cell.centroids[f.i]
        cj = cell.centroids[f.j]
        for pt, w in zip(fpts, fw):
            x = cell.blocks[f.i].copy()
            x[f.axis] += 1.0
            x[others] += pt
            # d jump / d dofs, shape (n, n_dofs_local) for blocks j (+) and i (-)
            for blk, sign, y in ((f.j, 1.0, x - s - cj), (f.i, -1.0, x - ci)):
                jac = np.zeros((n, stride))
                for r in range(nr):
                    jac[:, r] = basis[r] @ y
                jac[:, nr:] = np.eye(n)
                block = sign * (P @ jac)
                for a in range(d):
                    for c in range(stride):
                        if block[a, c] != 0.0:
                            rows.append(q * d + a)
                            cols.append(blk * stride + c)
                            vals.append(block[a, c])
            # offset B s: d(B s)/d B[a, b] = e_a s_b
            gq = np.zeros((d, n * n))
            for a in range(n):
                for b in range(n):
                    if s[b] != 0.0:
                        gq[:, a * n + b] = P[:, a] * s[b]
            g_blocks.append(gq)
            weights.append(f.weight * w)
            q += 1
    S = sp.coo_matrix((vals, (rows, cols)), shape=(q * d, cell.n_dofs)).tocsr()
    S.sum_duplicates()
    G = np.vstack(g_blocks)
    kn = cell.k ** n
    return StrainSystem(n, d, S, G, np.array(weights) / kn,
                        np.full(q, REGIONS.index("interface")))


def _q1_gradients(h: float):
    """Shape-function gradients at the 2x2 Gauss points of an h x h quad."""
    g = 0.5 * (1.0 + np.array([-1.0, 1.0]) / math.sqrt(3.0))
    out = []
    for xi in g:
        for eta in g:
            # nodes (0,0), (1,0), (1,1), (0,1) in reference [0,1]^2
            dxi = np.array([-(1 - eta), (1 - eta), eta, -eta]) / h
            deta = np.array([-(1 - xi), -xi, xi, (1 - xi)]) / h
            out.append(np.stack([dxi, deta]))
    return out, [h * h / 4.0] * 4


def elastic_spring_system(cell: ElasticSpringCell) -> StrainSystem:
    """Strain system of the 2D elastic-spring cell.

    Volume points: 2x2 Gauss per quad, density (B + E v) / w_vol.
    Interface points: one per duplicated node pair, trapezoid weight,
    density (v_j - v_i) (.) e_m / w_int.
    """
    n, d = 2, 3
    grads, gw = _q1_gradients(cell.h)
    rows, cols, vals, weights, regions = [], [], [], [], []
    s_vol = 1.0 / cell.volume_weight
    q = 0
    sq = math.sqrt(2.0)
    for el in cell.elements:
        for dN, w in zip(grads, gw):
            for a in range(4):
                node = el[a]
                # Mandel rows: e11, e22, sqrt2 e12
                entries = ((0, 2 * node, dN[0, a]), (1, 2 * node + 1, dN[1, a]),
                           (2, 2 * node, dN[1, a] / sq), (2, 2 * node + 1, dN[0, a] / sq))
                for r, c, v in entries:
                    rows.append(q * d + r)
                    cols.append(c)
                    vals.append(s_vol * v)
            weights.append(cell.volume_weight * w)
            regions.append(REGIONS.index("volume"))
            q += 1
    n_vol = q
    if cell.interface:
        s_int = 1.0 / cell.interface_weight
        for (a, b), axis, w in zip(cell.pairs, cell.pair_axis, cell.pair_weight):
            P = s_int * _sym_basis_with_normal(2, axis)
            for comp in range(2):
                for r in range(d):
                    if P[r, comp] != 0.0:
                        rows += [q * d + r, q * d + r]
                        cols += [2 * b + comp, 2 * a + comp]
                        vals += [P[r, comp], -P[r, comp]]
            weights.append(w)
            regions.append(REGIONS.index("interface"))
            q += 1
    S = sp.coo_matrix((vals, (rows, cols)), shape=(q * d, cell.n_dofs)).tocsr()
    S.sum_duplicates()
    G = np.zeros((q * d, n * n))
    mop = s_vol * mandel_of_matrix_operator(n)
    for p in range(n_vol):
        G[p * d:(p + 1) * d] = mop
    kn = cell.k ** n
    return StrainSystem(n, d, S, G, np.array(weights) / kn, np.array(regions))


def strain_system(structure, integrand: Integrand | None = None,
                  face_order: int | None = None) -> StrainSystem:
    if structure.kind == "rigid_spring":
        if face_order is None:
            quad = integrand is None or integrand.is_quadratic
            face_order = 2 if quad else 4
        return rigid_spring_system(structure, face_order)
    if structure.kind == "elastic_spring":
        return elastic_spring_system(structure)
    raise TypeError(f"unsupported structure {structure!r}")


def _datum(A) -> np.ndarray:
    return np.asarray(getattr(A, "entries", A), dtype=float)


@dataclass(eq=False)
class CellProblem:
    """Minimise the k-periodic cell energy with affine datum ``A``."""

    structure: object
    integrand: Integrand
    A: object
    face_order: int | None = None
    system: StrainSystem | None = None

    def __post_init__(self):
        B = _datum(self.A)
        n = self.structure.n
        if B.shape != (n, n):
            raise ValueError(f"datum must be {n}x{n}")
        if self.integrand.n is not None and self.integrand.n != n:
            raise ValueError("integrand dimension does not match the structure")
        if self.system is None:
            self.system = strain_system(self.structure, self.integrand, self.face_order)

    @property
    def k(self) -> int:
        return self.structure.k

    @property
    def B(self) -> np.ndarray:
        return _datum(self.A)

    def with_datum(self, A) -> "CellProblem":
        """Same structure and integrand, new datum, shared strain system."""
        return CellProblem(self.structure, self.integrand, A, self.face_order, self.system)

    def _point_weights(self, integrand: Integrand | None = None) -> np.ndarray:
        f = integrand or self.integrand
        rho = np.array([f.region_weight(t) for t in REGIONS])
        return self.system.weights * rho[self.system.regions]

    def strains(self, u: np.ndarray, B: np.ndarray | None = None) -> np.ndarray:
        B = self.B if B is None else B
        z = self.system.S @ u + self.system.G @ B.reshape(-1)
        return z.reshape(-1, self.system.d)


def assemble_energy(problem: CellProblem, u, B=None,
                    integrand: Integrand | None = None) -> tuple[float, np.ndarray]:
    """Cell energy and its exact gradient with respect to ``u``.

    ``B`` overrides the problem's datum (a general square matrix is
    accepted); ``integrand`` overrides the density, e.g. a smoothed copy.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (problem.structure.n_dofs,):
        raise ValueError(f"expected {problem.structure.n_dofs} dofs, got {u.shape}")
    f = integrand or problem.integrand
    z = problem.strains(u, None if B is None else _datum(B))
    w = problem._point_weights(f)
    energy = math.fsum(w * f.base(z))     # compensated: keeps gauge shifts at rounding level
    grad = problem.system.S.T @ (w[:, None] * f.base_grad(z)).reshape(-1)
    return energy, grad


@dataclass
class SolveReport:
    g: float
    u: np.ndarray
    iterations: int
    residual: float
    converged: bool
    wall_time: float
    method: str
    energy_history: list = field(default_factory=list, repr=False)
    smoothing_gap: float = 0.0
    message: str = ""

    def raise_if_failed(self) -> "SolveReport":
        if not self.converged:
            raise SolverError(self.message or "cell solve did not converge")
        return self


def pcg(matvec: Callable, b: np.ndarray, diag: np.ndarray, rtol: float = CG_RTOL,
        maxiter: int | None = None, x0=None, objective: Callable | None = None):
    """Jacobi-preconditioned conjugate gradients for an SPD system.

    Returns ``(x, iterations, relative residual, converged, history)``;
    ``history`` holds ``objective(x)`` after each iterate when given.
    """
    n = len(b)
    maxiter = maxiter or 10 * n + 100
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - matvec(x)
    inv_d = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)
    z = inv_d * r
    p = z.copy()
    rz = r @ z
    bnorm = np.linalg.norm(b)
    history = [objective(x)] if objective else []
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0, True, history
    res = np.linalg.norm(r) / bnorm
    it = 0
    while res > rtol and it < maxiter:
        Ap = matvec(p)
        pAp = p @ Ap
        if pAp <= 0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        res = np.linalg.norm(r) / bnorm
        if objective:
            history.append(objective(x))
        z = inv_d * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, it, float(res), bool(res <= rtol), history


def _free_mask(problem: CellProblem) -> np.ndarray:
    mask = np.ones(problem.structure.n_dofs, dtype=bool)
    mask[problem.structure.pinned] = False
    return mask


def _solve_quadratic(problem: CellProblem, rtol: float):
    sysm = problem.system
    Q = problem.integrand.quadratic_matrix(sysm.d)
    w = problem._point_weights()
    W = sp.kron(sp.diags(w), sp.csr_matrix(Q), format="csr")
    H = (2.0 * (sysm.S.T @ W @ sysm.S)).tocsr()
    rhs_full = -2.0 * (sysm.S.T @ (W @ (sysm.G @ problem.B.reshape(-1))))
    mask = _free_mask(problem)
    Hr = H[mask][:, mask].tocsr()
    rhs = rhs_full[mask]
    n_full = problem.structure.n_dofs

    def full(x):
        u = np.zeros(n_full)
        u[mask] = x
        return u

    def objective(x):
        return assemble_energy(problem, full(x))[0]

    x, it, res, ok, hist = pcg(lambda v: Hr @ v, rhs, Hr.diagonal(), rtol,
                               objective=objective)
    u = full(x)
    return u, it, res, ok, hist


STALL_ITERS = 50
STALL_GTOL = 1e-6


def _lbfgs(fun: Callable, x0: np.ndarray, gtol: float, maxiter: int = 20000, memory: int = 10):
    """Limited-memory BFGS with Armijo backtracking; energy is monotone.

    Near degenerate minima (a p > 2 density vanishing on some face) the
    energy can reach its rounding floor before the gradient reaches
    ``gtol``. After ``STALL_ITERS`` steps without a decrease beyond
    rounding the loop stops; this counts as converged only when the
    gradient is already below ``STALL_GTOL`` relative.
    Returns (x, fx, g, iterations, history, converged, stalled).
    """
    x = x0.copy()
    fx, g = fun(x)
    g0 = max(1.0, np.linalg.norm(g))
    s_hist, y_hist = [], []
    history = [fx]
    it = 0
    flat = 0
    gnorm = np.linalg.norm(g)
    while gnorm > gtol * g0 and it < maxiter and flat < STALL_ITERS:
        # two-loop recursion
        qv = g.copy()
        alphas = []
        for s, y in reversed(list(zip(s_hist, y_hist))):
            a = (s @ qv) / (y @ s)
            alphas.append(a)
            qv -= a * y
        if s_hist:
            s, y = s_hist[-1], y_hist[-1]
            qv *= (s @ y) / (y @ y)
        else:
            qv /= max(gnorm, 1.0)
        for (s, y), a in zip(zip(s_hist, y_hist), reversed(alphas)):
            b = (y @ qv) / (y @ s)
            qv += (a - b) * s
        direction = -qv
        slope = g @ direction
        if slope >= 0:
            direction = -g
            slope = -(g @ g)
            s_hist.clear()
            y_hist.clear()
        step = 1.0
        while True:
            xn = x + step * direction
            fn, gn = fun(xn)
            if fn <= fx + 1e-4 * step * slope:
                break
            step *= 0.5
            if step < 1e-20:
                return x, fx, g, it, history, False, True
        s, y = xn - x, gn - g
        if s @ y > 1e-300:
            s_hist.append(s)
            y_hist.append(y)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
        flat = flat + 1 if fx - fn <= 4 * np.finfo(float).eps * abs(fx) else 0
        x, fx, g = xn, fn, gn
        history.append(fx)
        gnorm = np.linalg.norm(g)
        it += 1
    stalled = flat >= STALL_ITERS
    ok = gnorm <= gtol * g0 or (stalled and gnorm <= STALL_GTOL * g0)
    return x, fx, g, it, history, bool(ok), stalled


def solve(problem: CellProblem, rtol: float = CG_RTOL, gtol: float = GRAD_TOL,
          huber_delta: float = HUBER_DELTA, maxiter: int = 20000) -> SolveReport:
    """Minimise the cell energy; returns the value g_k(A) per unit volume.

    p = 2 (or a quadratic form): preconditioned CG on the gauge-reduced
    normal equations. Otherwise L-BFGS with backtracking, started from the
    competitor field, until |grad| <= gtol * max(1, |grad_0|). For p = 1
    the Huber-smoothed density is minimised and the smoothing gap bound is
    reported.
    """
    t0 = time.perf_counter()
    f = problem.integrand
    if f.is_quadratic:
        u, it, res, ok, hist = _solve_quadratic(problem, rtol)
        g = assemble_energy(problem, u)[0]
        msg = "" if ok else f"CG stopped at relative residual {res:.3e}"
        return SolveReport(g, u, it, res, ok, time.perf_counter() - t0, "cg", hist,
                           message=msg)

    fs = f.smoothed(huber_delta) if f.p == 1 else f
    gap = 0.0
    if fs.huber_delta is not None:
        gap = fs.huber_delta * f.weight * max(f.region_weights.values(), default=1.0) \
            * problem.structure.total_measure()
    mask = _free_mask(problem)
    u0 = competitor_field(problem.structure, problem.B)
    pinned_vals = u0[~mask]
    if problem.structure.kind == "rigid_spring":
        u0 = _shift_translations(problem.structure, u0, -pinned_vals)
    else:
        u0 = u0 - np.tile(pinned_vals, problem.structure.n_nodes)
    n_full = problem.structure.n_dofs

    def fun(x):
        u = np.zeros(n_full)
        u[mask] = x
        e, gr = assemble_energy(problem, u, integrand=fs)
        return e, gr[mask]

    x, fx, gx, it, hist, ok, stalled = _lbfgs(fun, u0[mask], gtol, maxiter)
    u = np.zeros(n_full)
    u[mask] = x
    g = assemble_energy(problem, u)[0]
    if not ok:
        msg = "descent did not reach the gradient tolerance"
    elif stalled:
        msg = "energy at rounding floor before the gradient tolerance"
    else:
        msg = ""
    return SolveReport(g, u, it, float(np.linalg.norm(gx)), ok, time.perf_counter() - t0,
                       "lbfgs", hist, smoothing_gap=gap, message=msg)


def _shift_translations(cell: RigidSpringCell, u: np.ndarray, t: np.ndarray) -> np.ndarray:
    u = u.copy()
    s = cell.dofs_per_block
    nr = n_rot(cell.n)
    for b in range(cell.n_blocks):
        u[b * s + nr:(b + 1) * s] += t
    return u


def add_global_rigid(structure, u: np.ndarray, rotation: np.ndarray,
                     translation: np.ndarray) -> np.ndarray:
    """DOFs of u + (R x + t), to be paired with datum B + R.

    For the rigid-spring cell the rotation is added to every block and the
    translation at each centroid adjusted; for the elastic cell the periodic
    part only moves by t (R x is absorbed in the datum).
    """
    u = np.array(u, dtype=float)
    R = np.asarray(rotation, dtype=float)
    t = np.asarray(translation, dtype=float)
    if structure.kind == "rigid_spring":
        from .tensors import params_from_skew
        s = structure.dofs_per_block
        nr = n_rot(structure.n)
        rp = params_from_skew(R)
        for b, c in enumerate(structure.centroids):
            u[b * s:b * s + nr] += rp
            u[b * s + nr:(b + 1) * s] += R @ c + t
        return u
    return u + np.tile(t, structure.n_nodes)


def competitor_energy(problem: CellProblem) -> float:
    return assemble_energy(problem, competitor_field(problem.structure, problem.B))[0]


# -- k -> infinity ----------------------------------------------------------

def rigid_spring_family(n: int) -> Callable:
    from .structures import build_rigid_spring_cell

    def make(k):
        return build_rigid_spring_cell(n, k)
    make.description = {"kind": "rigid_spring", "n": n}
    return make


def elastic_spring_family(m: int, interface: bool = True) -> Callable:
    from .structures import build_elastic_spring_cell

    def make(k):
        return build_elastic_spring_cell(k, m, interface)
    make.description = {"kind": "elastic_spring", "m": m, "interface": interface}
    return make


@dataclass
class FHomEstimate:
    A: np.ndarray
    ks: list
    g: list
    reports: list = field(repr=False)
    decrements: dict
    subadditive: bool
    converged: bool

    @property
    def estimate(self) -> float:
        """Upper estimate of f_hom(A): the smallest g_k computed."""
        return float(min(self.g))

    @property
    def flagged(self) -> bool:
        return not (self.subadditive and self.converged)


def f_hom_estimate(family: Callable, integrand: Integrand, A, ks: Sequence[int] = (1, 2, 4),
                   tol: float = SUBADD_TOL, cache: dict | None = None, **solve_kw) -> FHomEstimate:
    """Compute g_k(A) over ``ks`` and check g_{k'} <= g_k + tol for k | k'.

    ``cache`` maps k to a prebuilt :class:`CellProblem` so strain systems
    are reused across many A.
    """
    ks = [int(k) for k in ks]
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise ValueError("ks must be increasing")
    g, reports = [], []
    for k in ks:
        base = cache.get(k) if cache is not None else None
        if base is None:
            base = CellProblem(family(k), integrand, A)
            if cache is not None:
                cache[k] = base
        rep = solve(base.with_datum(A), **solve_kw)
        g.append(rep.g)
        reports.append(rep)
    decrements, ok = {}, True
    for i, a in enumerate(ks):
        for j in range(i + 1, len(ks)):
            b = ks[j]
            if b % a == 0:
                dec = g[i] - g[j]
                decrements[f"{a}->{b}"] = dec
                if dec < -tol:
                    ok = False
    return FHomEstimate(_datum(A), ks, g, reports, decrements, ok,
                        all(r.converged for r in reports))
