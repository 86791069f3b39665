import numpy as np
import pytest
from scipy.optimize import minimize

from homlab.integrand import Integrand, isotropic_tensor
from homlab.properties import gauge_shift_error, property_suite, random_sym, unit_sym
from homlab.solver import CellProblem, elastic_spring_family, rigid_spring_family, solve
from homlab.structures import build_rigid_spring_cell


def test_samplers():
    rng = np.random.default_rng(0)
    a = random_sym(rng, 3, 4)
    assert a.shape == (4, 3, 3) and np.allclose(a, a.transpose(0, 2, 1))
    u = unit_sym(rng, 2, 50)
    np.testing.assert_allclose(np.linalg.norm(u, axis=(1, 2)), 1.0, rtol=1e-14)


@pytest.mark.parametrize("family,f", [
    (rigid_spring_family(2), Integrand(p=2)),
    (rigid_spring_family(2), Integrand(p=3)),
    (rigid_spring_family(3), Integrand(p=2)),
    (elastic_spring_family(2), Integrand(p=2)),
    (elastic_spring_family(2, interface=False), Integrand(form="quadratic",
                                                         C=isotropic_tensor(2, 1.0, 0.5))),
], ids=["rigid2-p2", "rigid2-p3", "rigid3-p2", "elastic", "elastic-quad"])
def test_suite_passes(family, f):
    rep = property_suite(family, f, seed=1, n_samples=6, n_sphere=40, gauge_trials=20)
    assert rep.passed, [r for r in rep.results if not r.passed]
    assert {r.name for r in rep.results} >= {"gauge", "convexity", "bounds", "coercivity"}


def test_zero_eigenvalue_loses_coercivity():
    # C kills the shear Mandel component, so a pure shear datum costs nothing
    f = Integrand(form="quadratic", C=np.diag([1.0, 1.0, 0.0]))   # Mandel order 11, 22, 12
    shear = np.array([[0.0, 1.0], [1.0, 0.0]]) / np.sqrt(2)
    p = CellProblem(build_rigid_spring_cell(2, 1), f, shear)
    assert solve(p).g == pytest.approx(0.0, abs=1e-14)
    rep = property_suite(rigid_spring_family(2), f, seed=0, n_samples=4, n_sphere=300,
                         gauge_trials=5)
    assert rep["coercivity"].worst < 0.05 * property_suite(
        rigid_spring_family(2), Integrand(p=2), seed=0, n_samples=2, n_sphere=300,
        gauge_trials=1)["coercivity"].worst


def test_coercivity_floor_matches_constrained_oracle():
    # g_1(A) = 2(a^2 + b^2 + d^2) on unit |A|^2 = a^2 + 2 b^2 + d^2
    def obj(x):
        return 2 * (x[0] ** 2 + x[1] ** 2 + x[2] ** 2)

    cons = {"type": "eq", "fun": lambda x: x[0] ** 2 + 2 * x[1] ** 2 + x[2] ** 2 - 1}
    best = np.inf
    for x0 in np.random.default_rng(0).standard_normal((10, 3)):
        x = minimize(obj, x0, constraints=[cons], method="SLSQP", tol=1e-14).x
        best = min(best, obj(x / np.sqrt(cons["fun"](x) + 1)))     # back onto the sphere
    assert best == pytest.approx(1.0, abs=1e-8)
    rep = property_suite(rigid_spring_family(2), Integrand(p=2), seed=2, n_samples=2,
                         n_sphere=300, gauge_trials=1)
    floor = rep["coercivity"].worst
    assert best - 1e-10 <= floor <= best + 0.05


def test_gauge_error_is_roundoff():
    rng = np.random.default_rng(3)
    p = CellProblem(build_rigid_spring_cell(3, 2), Integrand(p=2), random_sym(rng, 3))
    assert max(gauge_shift_error(p, rng) for _ in range(50)) < 1e-12


def test_homogeneity_p3():
    rng = np.random.default_rng(4)
    p = CellProblem(build_rigid_spring_cell(2, 2), Integrand(p=3), random_sym(rng, 2))
    g = solve(p).g
    for t in (0.5, 2.0, 10.0):
        assert solve(p.with_datum(t * p.B)).g == pytest.approx(t ** 3 * g, rel=1e-6)
