"""Unit-cell geometry and measure weights.

Three structures are built here:

* :class:`RigidSpringCell` - k^n rigid unit blocks joined across their faces;
  the measure is (1/n) H^{n-1} on the cube skeleton.
* :class:`ElasticSpringCell` - 2D elastic unit cubes meshed with bilinear
  quadrilaterals and joined by springs on the cube boundaries; the measure
  is (Lebesgue + H^1 on the skeleton) / 3.  Without the interface term the
  mesh is conforming and the measure is Lebesgue.
* :class:`CylinderLattice` / :class:`TileGrid` - vertical cylinders of radius
  eps/4 in a slab omega x (0, 1), and the tiles of size eta = h*eps used
  to describe piecewise-rigid fields.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .tensors import DIMS, RigidMotion, n_rot


@dataclass(frozen=True)
class Face:
    """Interface between block ``i`` and its +e_axis neighbour ``j``.

    ``offset`` is the lattice vector (k e_axis or 0) to subtract from a point
    of the face to land in the periodic copy of block ``j`` stored in the
    cell.
    """

    i: int
    j: int
    axis: int
    sign: int
    centroid: tuple
    weight: float
    offset: tuple

    @property
    def normal(self) -> np.ndarray:
        e = np.zeros(len(self.centroid))
        e[self.axis] = self.sign
        return e

    def partner(self) -> "Face":
        """The same interface seen from block ``j``; an involution."""
        return Face(self.j, self.i, self.axis, -self.sign, self.centroid, self.weight,
                    tuple(-o for o in self.offset))


@dataclass(frozen=True, eq=False)
class RigidSpringCell:
    n: int
    k: int
    origin: tuple
    blocks: np.ndarray        # (k^n, n) lower corners
    faces: tuple

    kind = "rigid_spring"

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def centroids(self) -> np.ndarray:
        return self.blocks + 0.5

    @property
    def dofs_per_block(self) -> int:
        return n_rot(self.n) + self.n

    @property
    def n_dofs(self) -> int:
        return self.n_blocks * self.dofs_per_block

    @property
    def pinned(self) -> np.ndarray:
        # translation of block 0; rotations stay free (see solver docs)
        nr = n_rot(self.n)
        return np.arange(nr, nr + self.n)

    def total_measure(self) -> float:
        """Measure of the k-periodic cell divided by k^n."""
        return sum(f.weight for f in self.faces) / self.k ** self.n

    def block_motion(self, u: np.ndarray, b: int) -> RigidMotion:
        """Block ``b``'s motion in global coordinates, x -> R (x - c_b) + t_b."""
        s = self.dofs_per_block
        m = RigidMotion.from_params(self.n, u[b * s:(b + 1) * s])
        shift = m.translation - m.rotation.entries @ self.centroids[b]
        return RigidMotion(m.rotation, shift)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "k": self.k, "origin": list(self.origin)}


def build_rigid_spring_cell(n: int, k: int, origin=None) -> RigidSpringCell:
    """k-periodic cell of rigid unit blocks in dimension ``n``.

    Each block owns its n faces in the +e_m directions, so every interface
    of the periodic cell is listed exactly once. Faces on the far side of
    the cell connect to the wrapped block with offset k e_m.
    """
    if n not in DIMS:
        raise ValueError("n must be 2 or 3")
    if k < 1:
        raise ValueError("period k must be >= 1")
    origin = tuple(int(o) for o in (origin if origin is not None else (0,) * n))
    if len(origin) != n:
        raise ValueError("origin must have n components")
    multi = list(itertools.product(range(k), repeat=n))
    index = {mi: b for b, mi in enumerate(multi)}
    blocks = np.array(multi, dtype=float) + np.array(origin, dtype=float)
    faces = []
    w = 1.0 / n
    for b, mi in enumerate(multi):
        for m in range(n):
            nb = list(mi)
            nb[m] += 1
            wrap = nb[m] == k
            nb[m] %= k
            offset = [0] * n
            if wrap:
                offset[m] = k
            centroid = blocks[b] + 0.5
            centroid[m] += 0.5
            faces.append(Face(b, index[tuple(nb)], m, 1, tuple(centroid), w, tuple(offset)))
    blocks.setflags(write=False)
    return RigidSpringCell(n, k, origin, blocks, tuple(faces))


@dataclass(frozen=True, eq=False)
class ElasticSpringCell:
    """2D k x k cubes, each meshed by m x m bilinear quads.

    With ``interface=True`` every cube has its own (m+1)^2 nodes, so nodes on
    cube boundaries are duplicated and carry the two traces; ``pairs`` lists
    (node on cube, node on +e_axis neighbour, axis, trapezoid weight).
    Without interface the mesh is a conforming periodic (km) x (km) grid.
    Displacements are stored as the periodic part v of u = B x + v.
    """

    k: int
    m: int
    interface: bool
    nodes: np.ndarray          # (N, 2) coordinates (of the stored copy)
    elements: np.ndarray       # (E, 4) node ids, counter-clockwise
    element_origin: np.ndarray  # (E, 2) lower-left corner of each element
    pairs: np.ndarray          # (P, 2) node ids
    pair_axis: np.ndarray      # (P,)
    pair_weight: np.ndarray    # (P,) trapezoid length x measure weight
    volume_weight: float
    interface_weight: float

    n = 2
    kind = "elastic_spring"

    @property
    def h(self) -> float:
        return 1.0 / self.m

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_nodes

    @property
    def pinned(self) -> np.ndarray:
        return np.array([0, 1])

    def total_measure(self) -> float:
        vol = self.volume_weight * self.k ** 2
        surf = float(self.pair_weight.sum())
        return (vol + surf) / self.k ** 2

    def to_dict(self) -> dict:
        return {"kind": self.kind, "k": self.k, "m": self.m, "interface": self.interface}


def build_elastic_spring_cell(k: int, m: int, interface: bool = True) -> ElasticSpringCell:
    if k < 1 or m < 1:
        raise ValueError("k and m must be >= 1")
    h = 1.0 / m
    nn = m + 1
    elements, origins = [], []
    if interface:
        cubes = list(itertools.product(range(k), repeat=2))
        cube_id = {c: q for q, c in enumerate(cubes)}
        nodes = np.array([(c[0] + a * h, c[1] + b * h)
                          for c in cubes for a in range(nn) for b in range(nn)])

        def nid(q, a, b):
            return q * nn * nn + a * nn + b

        for q, c in enumerate(cubes):
            for a in range(m):
                for b in range(m):
                    elements.append([nid(q, a, b), nid(q, a + 1, b),
                                     nid(q, a + 1, b + 1), nid(q, a, b + 1)])
                    origins.append((c[0] + a * h, c[1] + b * h))
        tw = np.full(nn, h)
        tw[[0, -1]] = h / 2
        pairs, axes, weights = [], [], []
        for q, c in enumerate(cubes):
            for axis in range(2):
                nb = list(c)
                nb[axis] = (nb[axis] + 1) % k
                q2 = cube_id[tuple(nb)]
                for t in range(nn):
                    if axis == 0:
                        pairs.append((nid(q, m, t), nid(q2, 0, t)))
                    else:
                        pairs.append((nid(q, t, m), nid(q2, t, 0)))
                    axes.append(axis)
                    weights.append(tw[t] / 3.0)
        vw, iw = 1.0 / 3.0, 1.0 / 3.0
        pairs = np.array(pairs, dtype=int)
        axes = np.array(axes, dtype=int)
        weights = np.array(weights)
    else:
        km = k * m
        nodes = np.array([(a * h, b * h) for a in range(km) for b in range(km)])

        def gid(a, b):
            return (a % km) * km + (b % km)

        for a in range(km):
            for b in range(km):
                elements.append([gid(a, b), gid(a + 1, b), gid(a + 1, b + 1), gid(a, b + 1)])
                origins.append((a * h, b * h))
        pairs = np.zeros((0, 2), dtype=int)
        axes = np.zeros(0, dtype=int)
        weights = np.zeros(0)
        vw, iw = 1.0, 0.0
    arrs = [nodes, np.array(elements, dtype=int), np.array(origins, dtype=float),
            pairs, axes, weights]
    for a in arrs:
        a.setflags(write=False)
    return ElasticSpringCell(k, m, interface, *arrs, volume_weight=vw, interface_weight=iw)


def competitor_field(cell, A) -> np.ndarray:
    """Piecewise-affine competitor with u - A x periodic.

    Rigid-spring cell: each block translated by A times its centroid, no
    rotation. Elastic cell: u = A x, i.e. zero periodic part.
    """
    a = np.asarray(getattr(A, "entries", A), dtype=float)
    u = np.zeros(cell.n_dofs)
    if cell.kind == "rigid_spring":
        s = cell.dofs_per_block
        nr = n_rot(cell.n)
        for b, c in enumerate(cell.centroids):
            u[b * s + nr:(b + 1) * s] = a @ c
    return u


# -- cylinder lattice ------------------------------------------------------

@dataclass(frozen=True)
class Rectangle:
    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError("empty rectangle")

    @classmethod
    def unit(cls) -> "Rectangle":
        return cls(0.0, 1.0, 0.0, 1.0)

    @classmethod
    def from_list(cls, v) -> "Rectangle":
        return cls(*map(float, v))

    def to_list(self) -> list:
        return [self.x0, self.x1, self.y0, self.y1]

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)


@dataclass(frozen=True, eq=False)
class CylinderLattice:
    omega: Rectangle
    epsilon: float
    indices: np.ndarray      # (N, 2) lattice indices i
    centers: np.ndarray      # (N, 2)

    @property
    def radius(self) -> float:
        return self.epsilon / 4.0

    @property
    def count(self) -> int:
        return len(self.indices)

    @property
    def empty(self) -> bool:
        return self.count == 0

    def volume_fraction_deficit(self) -> float:
        """1 - eps^2 count / |omega|: boundary-layer deficit of the lattice."""
        return 1.0 - self.epsilon ** 2 * self.count / self.omega.area


def build_cylinder_lattice(omega: Rectangle, epsilon: float) -> CylinderLattice:
    """Cylinders eps D_i x (0,1) whose closed disk lies strictly inside omega."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    r = epsilon / 4.0
    lo1, hi1 = math.floor(omega.x0 / epsilon) - 1, math.ceil(omega.x1 / epsilon) + 1
    lo2, hi2 = math.floor(omega.y0 / epsilon) - 1, math.ceil(omega.y1 / epsilon) + 1
    i1 = np.arange(lo1, hi1 + 1)
    i2 = np.arange(lo2, hi2 + 1)
    c1 = epsilon * i1 + epsilon / 2
    c2 = epsilon * i2 + epsilon / 2
    ok1 = (c1 - r > omega.x0) & (c1 + r < omega.x1)
    ok2 = (c2 - r > omega.y0) & (c2 + r < omega.y1)
    ii = np.array([(a, b) for a in i1[ok1] for b in i2[ok2]], dtype=int).reshape(-1, 2)
    centers = epsilon * ii + epsilon / 2
    ii.setflags(write=False)
    centers.setflags(write=False)
    return CylinderLattice(omega, float(epsilon), ii, centers)


class IncompatibleTiles(ValueError):
    """Tile size is not an integer multiple of the lattice spacing."""


@dataclass(frozen=True, eq=False)
class TileGrid:
    """Square tiles eta*kk + (0, eta)^2 (times (0, 1)) meeting omega."""

    omega: Rectangle
    eta: float
    tiles: tuple = field(default=())

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if not self.tiles:
            e = self.eta
            k1 = range(math.floor(self.omega.x0 / e), math.ceil(self.omega.x1 / e))
            k2 = range(math.floor(self.omega.y0 / e), math.ceil(self.omega.y1 / e))
            object.__setattr__(self, "tiles", tuple((a, b) for a in k1 for b in k2))

    def ratio(self, epsilon: float) -> int:
        """The integer h with eta = h * epsilon, or raise."""
        h = round(self.eta / epsilon)
        if h < 1 or abs(h * epsilon - self.eta) > 1e-9 * self.eta:
            raise IncompatibleTiles(f"eta={self.eta} is not a multiple of eps={epsilon}")
        return int(h)

    def tile_of_index(self, i, epsilon: float) -> tuple:
        """Tile holding the lattice cell of index ``i`` (needs eta = h eps)."""
        h = self.ratio(epsilon)
        return (int(i[0] // h), int(i[1] // h))

    def tile_of_point(self, x) -> tuple:
        return (int(math.floor(x[0] / self.eta)), int(math.floor(x[1] / self.eta)))

    def box(self, kk) -> tuple:
        """Tile intersected with omega as ((x0, x1), (y0, y1))."""
        e = self.eta
        x0, x1 = max(kk[0] * e, self.omega.x0), min((kk[0] + 1) * e, self.omega.x1)
        y0, y1 = max(kk[1] * e, self.omega.y0), min((kk[1] + 1) * e, self.omega.y1)
        return (x0, x1), (y0, y1)

    def covers(self) -> bool:
        area = 0.0
        for kk in self.tiles:
            (x0, x1), (y0, y1) = self.box(kk)
            area += max(0.0, x1 - x0) * max(0.0, y1 - y0)
        return abs(area - self.omega.area) <= 1e-12 * self.omega.area
