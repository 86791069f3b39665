"""Structural checks on cell energies: gauge invariance, homogeneity,
convexity, growth bounds and coercivity of g_k."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .integrand import Integrand
from .solver import (CellProblem, add_global_rigid, assemble_energy, competitor_energy,
                     solve)
from .tensors import skew_from_params, n_rot


def random_sym(rng: np.random.Generator, n: int, size: int | None = None) -> np.ndarray:
    a = rng.standard_normal((size or 1, n, n))
    a = 0.5 * (a + np.swapaxes(a, 1, 2))
    return a if size else a[0]


def unit_sym(rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    a = random_sym(rng, n, size)
    return a / np.linalg.norm(a, axis=(1, 2), keepdims=True)


@dataclass
class PropertyResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    detail: str = ""


@dataclass
class PropertyReport:
    results: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def add(self, *args, **kw) -> PropertyResult:
        r = PropertyResult(*args, **kw)
        self.results.append(r)
        return r

    def __getitem__(self, name: str) -> PropertyResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)


def gauge_shift_error(problem: CellProblem, rng: np.random.Generator) -> float:
    """|E(u + r; B + R) - E(u; B)| for a random global rigid r = R x + t."""
    n = problem.structure.n
    u = rng.standard_normal(problem.structure.n_dofs)
    R = skew_from_params(n, rng.standard_normal(n_rot(n)))
    t = rng.standard_normal(n)
    e0 = assemble_energy(problem, u)[0]
    e1 = assemble_energy(problem, add_global_rigid(problem.structure, u, R, t),
                         B=problem.B + R)[0]
    return abs(e1 - e0)


def property_suite(family: Callable, integrand: Integrand, seed: int = 0, k: int = 1,
                   n_samples: int = 10, n_sphere: int = 200,
                   ts=(0.5, 2.0, 10.0), gauge_trials: int = 100) -> PropertyReport:
    """Property checks on g_k for the structure ``family(k)``.

    gauge
        a global rigid motion added to every block, together with its skew
        part added to the datum, leaves the energy unchanged
    homogeneity
        g_k(tA) = t^p g_k(A) for the pure-power form
    convexity
        midpoint convexity of A -> g_k(A)
    bounds
        alpha |A|^p <= g_k(A) <= competitor energy
    coercivity
        min of g_k over sampled unit-norm A is positive
    """
    rng = np.random.default_rng(seed)
    structure = family(k)
    n = structure.n
    base = CellProblem(structure, integrand, np.zeros((n, n)))
    rep = PropertyReport()

    def g(A):
        return solve(base.with_datum(A)).g

    worst = 0.0
    for _ in range(gauge_trials):
        p = base.with_datum(random_sym(rng, n))
        worst = max(worst, gauge_shift_error(p, rng))
    rep.add("gauge", worst < 1e-12, worst, 1e-12)

    samples = random_sym(rng, n, n_samples)
    values = [g(A) for A in samples]

    if integrand.form == "power" or integrand.p == 2:
        worst = 0.0
        for A, v in zip(samples, values):
            for t in ts:
                ref = t ** integrand.p * v
                worst = max(worst, abs(g(t * A) - ref) / max(abs(ref), 1e-300))
        rep.add("homogeneity", worst < 1e-6, worst, 1e-6)

    worst = 0.0
    for A, B, va, vb in zip(samples[::2], samples[1::2], values[::2], values[1::2]):
        gap = g(0.5 * (A + B)) - 0.5 * (va + vb)
        worst = max(worst, gap)
    rep.add("convexity", worst <= 1e-9, worst, 1e-9)

    worst = -np.inf
    for A, v in zip(samples, values):
        lower = integrand.alpha * np.linalg.norm(A) ** integrand.p
        upper = competitor_energy(base.with_datum(A))
        scale = max(1.0, upper)
        worst = max(worst, (lower - v) / scale, (v - upper) / scale)
    rep.add("bounds", worst <= 1e-10, float(worst), 1e-10)

    sphere = unit_sym(rng, n, n_sphere)
    floor = min(g(A) for A in sphere)
    rep.add("coercivity", floor > 0, floor, 0.0,
            detail=f"min g_{k} over {n_sphere} unit-norm samples")
    return rep
