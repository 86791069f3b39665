"""Two-phase energies on a lattice of thin vertical cylinders.

A field is a pair (u1, u2): one rigid motion on the matrix and a
piecewise-rigid motion on the inclusions, constant per tile of a
:class:`~homlab.structures.TileGrid`. The scaled surface energy

    F_eps^gamma = eps^(gamma-1) * sum_i  int_{lateral surface of cylinder i}
                  |(u1 - u2)(x) (.) nu|^2 dH^2

is compared with its closed-form limit for gamma = 2,

    c1 int |(u1 - u2)_alpha|^2 dx + c2 int |(u1 - u2)_3|^2 dx,

with c1 = 3 pi / 8 and c2 = pi / 4.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .structures import (CylinderLattice, IncompatibleTiles, Rectangle, TileGrid,
                         build_cylinder_lattice)
from .tensors import RigidMotion


@dataclass(frozen=True)
class NonlocalConstants:
    c1: float = 3.0 * math.pi / 8.0
    c2: float = math.pi / 4.0
    cell_area: float = math.pi / 16.0    # |E|: disk of radius 1/4, unit height

    @property
    def c1_tilde(self) -> float:
        return self.c1 / self.cell_area ** 2

    @property
    def c2_tilde(self) -> float:
        return self.c2 / self.cell_area ** 2

    def to_dict(self) -> dict:
        return {"c1": self.c1, "c2": self.c2, "cell_area": self.cell_area,
                "c1_tilde": self.c1_tilde, "c2_tilde": self.c2_tilde}


CONSTANTS = NonlocalConstants()

_GX, _GW = np.polynomial.legendre.leggauss(2)
_GX = 0.5 * (_GX + 1.0)
_GW = 0.5 * _GW


@dataclass(frozen=True, eq=False)
class TwoPhaseField:
    """Rigid matrix motion ``u1`` and one rigid motion per tile for ``u2``."""

    u1: RigidMotion
    grid: TileGrid
    u2: Mapping[tuple, RigidMotion]

    def __post_init__(self):
        if self.u1.n != 3:
            raise ValueError("two-phase fields live in 3D")
        missing = [t for t in self.grid.tiles if t not in self.u2]
        if missing:
            raise ValueError(f"tiles without a rigid motion: {missing[:3]}...")
        object.__setattr__(self, "u2", dict(self.u2))

    @classmethod
    def uniform(cls, u1: RigidMotion, u2: RigidMotion, omega: Rectangle,
                eta: float = 1.0) -> "TwoPhaseField":
        grid = TileGrid(omega, eta)
        return cls(u1, grid, {t: u2 for t in grid.tiles})

    @classmethod
    def from_function(cls, u1: RigidMotion, grid: TileGrid,
                      fn: Callable[[np.ndarray], RigidMotion]) -> "TwoPhaseField":
        """u2 on each tile given by ``fn(tile_centre)``."""
        e = grid.eta
        return cls(u1, grid, {t: fn(np.array([(t[0] + 0.5) * e, (t[1] + 0.5) * e]))
                              for t in grid.tiles})

    def difference(self, tile) -> RigidMotion:
        return self.u1 - self.u2[tile]

    def shifted(self, m: RigidMotion) -> "TwoPhaseField":
        """Both phases plus the same rigid motion."""
        return TwoPhaseField(self.u1 + m, self.grid, {t: v + m for t, v in self.u2.items()})


@dataclass
class EpsilonEnergyReport:
    epsilon: float
    gamma: float
    energy: float
    per_cylinder: np.ndarray = field(repr=False)
    count: int = 0
    empty: bool = False


def _lateral_batch(R: np.ndarray, b: np.ndarray, centers: np.ndarray, r: float,
                   quad_nodes: int) -> np.ndarray:
    """Lateral-surface integrals of |(R x + b) (.) nu|^2 for a batch.

    R: (N, 3, 3), b: (N, 3), centers: (N, 2). Trapezoid rule in the angle,
    2-point Gauss in x3; the integrand is a trigonometric polynomial of
    degree 4 in the angle and a quadratic in x3, so both rules are exact
    for quad_nodes >= 5.
    """
    th = 2.0 * np.pi * np.arange(quad_nodes) / quad_nodes
    nu = np.stack([np.cos(th), np.sin(th), np.zeros_like(th)], axis=-1)        # (T, 3)
    total = np.zeros(len(b))
    for x3, w3 in zip(_GX, _GW):
        x = np.empty((len(b), quad_nodes, 3))
        x[..., 0] = centers[:, None, 0] + r * nu[None, :, 0]
        x[..., 1] = centers[:, None, 1] + r * nu[None, :, 1]
        x[..., 2] = x3
        w = np.einsum("nij,ntj->nti", R, x) + b[:, None, :]                      # (N, T, 3)
        wn = np.einsum("nti,ti->nt", w, nu)
        ww = np.einsum("nti,nti->nt", w, w)
        val = 0.5 * (ww + wn * wn)                # |w (.) nu|^2 with |nu| = 1
        total += w3 * val.sum(axis=1)
    return total * (2.0 * np.pi / quad_nodes) * r


def lateral_surface_energy(diff: RigidMotion, center, r: float, quad_nodes: int = 64) -> float:
    """int over {|x_alpha - center| = r, 0 < x3 < 1} of |diff(x) (.) nu|^2 dH^2."""
    if r <= 0:
        raise ValueError("radius must be positive")
    if quad_nodes < 8:
        raise ValueError("quad_nodes must be >= 8")
    if diff.n != 3:
        raise ValueError("cylinder energies need a 3D rigid motion")
    c = np.asarray(center, dtype=float)[:2]
    return float(_lateral_batch(diff.rotation.entries[None], diff.translation[None],
                                c[None], r, quad_nodes)[0])


def F_eps_gamma(fld: TwoPhaseField, lattice: CylinderLattice, gamma: float = 2.0,
                quad_nodes: int = 64) -> EpsilonEnergyReport:
    """Scaled surface energy of the field sampled at scale ``lattice.epsilon``.

    With mu_eps = eps H^2 on the cylinder walls and dEu/dmu_eps equal to the
    jump (.) nu divided by eps, eps^gamma int |dEu/dmu|^2 dmu reduces to
    eps^(gamma - 1) times the plain H^2 integral summed over cylinders.
    """
    eps = lattice.epsilon
    fld.grid.ratio(eps)
    if lattice.empty:
        return EpsilonEnergyReport(eps, gamma, 0.0, np.zeros(0), 0, True)
    tiles = [fld.grid.tile_of_index(i, eps) for i in lattice.indices]
    diffs = {}
    for t in set(tiles):
        if t not in fld.u2:
            raise IncompatibleTiles(f"cylinder falls in tile {t} outside the grid")
        diffs[t] = fld.difference(t)
    R = np.array([diffs[t].rotation.entries for t in tiles])
    b = np.array([diffs[t].translation for t in tiles])
    per = eps ** (gamma - 1.0) * _lateral_batch(R, b, lattice.centers, lattice.radius,
                                                quad_nodes)
    return EpsilonEnergyReport(eps, gamma, math.fsum(per), per, lattice.count)


def _box_integrals(m: RigidMotion, box) -> tuple[float, float]:
    """(int |m_alpha|^2, int |m_3|^2) over box x (0, 1), exact."""
    (x0, x1), (y0, y1) = box
    if x1 <= x0 or y1 <= y0:
        return 0.0, 0.0
    xs = x0 + (x1 - x0) * _GX
    ys = y0 + (y1 - y0) * _GX
    pts = np.array([(a, c, z) for a in xs for c in ys for z in _GX])
    wts = np.array([wa * wc * wz for wa in _GW for wc in _GW for wz in _GW])
    wts = wts * (x1 - x0) * (y1 - y0)
    v = m(pts)
    return float(wts @ (v[:, 0] ** 2 + v[:, 1] ** 2)), float(wts @ v[:, 2] ** 2)


def gamma_limit_closed(fld: TwoPhaseField, omega: Rectangle | None = None,
                       constants: NonlocalConstants = CONSTANTS) -> float:
    """c1 int |(u1-u2)_alpha|^2 + c2 int |(u1-u2)_3|^2 over omega x (0, 1)."""
    grid = fld.grid if omega is None or omega == fld.grid.omega else TileGrid(omega, fld.grid.eta)
    total = []
    for t in grid.tiles:
        ia, i3 = _box_integrals(fld.difference(t), grid.box(t))
        total.append(constants.c1 * ia + constants.c2 * i3)
    return math.fsum(total)


def limit_value(fld: TwoPhaseField, gamma: float, constants: NonlocalConstants = CONSTANTS) -> float:
    """Pointwise limit of F_eps^gamma for a fixed two-phase field."""
    closed = gamma_limit_closed(fld, constants=constants)
    if gamma == 2:
        return closed
    if gamma > 2 or closed == 0.0:
        return 0.0
    return math.inf


@dataclass
class ConvergenceStudy:
    gamma: float
    rows: list          # dicts: epsilon, energy, limit, rel_error, count, deficit
    slope: float | None
    intercept: float | None

    def table(self) -> list:
        return [(r["epsilon"], r["energy"], r["limit"], r["rel_error"]) for r in self.rows]


def loglog_slope(x: Sequence[float], y: Sequence[float]):
    """Least-squares slope and intercept of log y against log x (y > 0 only)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (y > 0) & (x > 0) & np.isfinite(y)
    if keep.sum() < 2:
        return None, None
    slope, intercept = np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)
    return float(slope), float(intercept)


def convergence_study(fld: TwoPhaseField, eps_list: Sequence[float], gamma: float = 2.0,
                      quad_nodes: int = 64, map_fn: Callable = map) -> ConvergenceStudy:
    """Energies at each eps against the limit, with a log-log error slope.

    The error column is relative when the limit is positive and absolute
    when the limit is zero. ``map_fn`` may be an executor's ordered map.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be decreasing")
    for e in eps_list:
        fld.grid.ratio(e)
    limit = limit_value(fld, gamma)
    omega = fld.grid.omega

    def one(e):
        lat = build_cylinder_lattice(omega, e)
        rep = F_eps_gamma(fld, lat, gamma, quad_nodes)
        if limit > 0 and math.isfinite(limit):
            err = abs(rep.energy - limit) / limit
        else:
            err = abs(rep.energy - limit) if math.isfinite(limit) else math.inf
        return {"epsilon": e, "energy": rep.energy, "limit": limit, "rel_error": err,
                "count": lat.count, "deficit": lat.volume_fraction_deficit()}

    rows = list(map_fn(one, eps_list))
    slope, icpt = loglog_slope([r["epsilon"] for r in rows], [r["rel_error"] for r in rows])
    return ConvergenceStudy(gamma, rows, slope, icpt)


# -- inf over rigid motions --------------------------------------------------

def box_grid(bounds, n_per_axis=(8, 8, 8)):
    """Midpoint-rule points and weights on a 3D box ((x0,x1),(y0,y1),(z0,z1))."""
    axes, ws = [], []
    for (a, b), m in zip(bounds, n_per_axis):
        h = (b - a) / m
        axes.append(a + h * (np.arange(m) + 0.5))
        ws.append(np.full(m, h))
    pts = np.array(np.meshgrid(*axes, indexing="ij")).reshape(3, -1).T
    wts = np.prod(np.array(np.meshgrid(*ws, indexing="ij")).reshape(3, -1), axis=0)
    return pts, wts


def _rigid_design(points: np.ndarray) -> np.ndarray:
    """M(x) with M(x) @ (a, b) = a ^ x + b; shape (N, 3, 6)."""
    x = np.asarray(points, dtype=float)
    N = len(x)
    M = np.zeros((N, 3, 6))
    # a ^ x = -x ^ a = -[x]x a
    M[:, 0, 1], M[:, 0, 2] = x[:, 2], -x[:, 1]
    M[:, 1, 0], M[:, 1, 2] = -x[:, 2], x[:, 0]
    M[:, 2, 0], M[:, 2, 1] = x[:, 1], -x[:, 0]
    M[:, :, 3:] = np.eye(3)
    return M


def rigid_fit_objective(params, points, values, weights,
                        constants: NonlocalConstants = CONSTANTS) -> float:
    r = RigidMotion.from_axial(params[:3], params[3:])(points)
    diff = r - values
    return float(weights @ (constants.c1_tilde * (diff[:, 0] ** 2 + diff[:, 1] ** 2)
                            + constants.c2_tilde * diff[:, 2] ** 2))


def project_onto_rigid(points, values, weights,
                       constants: NonlocalConstants = CONSTANTS) -> tuple[RigidMotion, float]:
    """Best rigid fit in the anisotropic weighted L2 norm, and its value.

    Minimises sum_q w_q (c1~ |r_alpha - u_alpha|^2 + c2~ |r_3 - u_3|^2)
    over r = a ^ x + b through the 6 x 6 normal equations.
    """
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if not np.any(weights > 0):
        raise ValueError("degenerate quadrature: all weights are zero")
    D = np.array([constants.c1_tilde, constants.c1_tilde, constants.c2_tilde])
    M = _rigid_design(points)
    WM = weights[:, None, None] * D[None, :, None] * M
    N = np.einsum("nia,nib->ab", M, WM)
    rhs = np.einsum("nia,ni->a", WM, values)
    params = np.linalg.lstsq(N, rhs, rcond=None)[0]
    motion = RigidMotion.from_axial(params[:3], params[3:])
    return motion, rigid_fit_objective(params, points, values, weights, constants)


def tile_rigidity_residual(u: Callable, grid: TileGrid, n_per_axis=(4, 4, 4)) -> dict:
    """Per-tile L2 residual of the best (isotropic) rigid fit of ``u``.

    A diagnostic for how close a sampled field is to being piecewise rigid
    on the tiles; small residuals relative to eta indicate membership of
    the limit space.
    """
    iso = NonlocalConstants(c1=1.0, c2=1.0, cell_area=1.0)
    out = {}
    for t in grid.tiles:
        (x0, x1), (y0, y1) = grid.box(t)
        pts, wts = box_grid(((x0, x1), (y0, y1), (0.0, 1.0)), n_per_axis)
        out[t] = project_onto_rigid(pts, u(pts), wts, iso)[1]
    return out
