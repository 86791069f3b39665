import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from homlab.integrand import Integrand, isotropic_tensor
from homlab.properties import random_sym
from homlab.solver import (CellProblem, add_global_rigid, assemble_energy, competitor_energy,
                           elastic_spring_family, f_hom_estimate, pcg, rigid_spring_family,
                           solve)
from homlab.structures import (build_elastic_spring_cell, build_rigid_spring_cell,
                               competitor_field)
from homlab.tensors import RigidMotion, SkewMatrix, sym_product

F2 = Integrand(p=2)


def brute_rigid_energy(cell, u, B, f, order=6):
    """Oracle: face-by-face integral using RigidMotion objects directly."""
    n = cell.n
    x, w = np.polynomial.legendre.leggauss(order)
    x, w = 0.5 * (x + 1), 0.5 * w
    total = 0.0
    for face in cell.faces:
        mi = cell.block_motion(u, face.i)
        mj = cell.block_motion(u, face.j)
        s = np.array(face.offset, dtype=float)
        others = [a for a in range(n) if a != face.axis]
        grids = np.meshgrid(*([np.arange(order)] * (n - 1)), indexing="ij")
        for idx in np.array(grids).reshape(n - 1, -1).T:
            y = cell.blocks[face.i].copy()
            y[face.axis] += 1.0
            y[others] += x[idx]
            jump = mj(y - s) + B @ s - mi(y)
            dens = n * sym_product(jump, face.normal).entries
            total += face.weight * np.prod(w[idx]) * f.evaluate("interface", dens)
    return total / cell.k ** n


def g1_oracle(A):
    """Golden-section minimisation over the single skew parameter (n=2, k=1)."""
    A = np.asarray(A)

    def energy(r):
        R = SkewMatrix.from_params(2, [r]).entries
        tot = 0.0
        for m in range(2):
            e = np.eye(2)[m]
            jump = (A - R) @ e
            tot += 0.5 * F2.evaluate("interface", 2 * sym_product(jump, e).entries)
        return tot

    scale = 1.0 + np.abs(A).max()
    res = minimize_scalar(energy, bracket=(-scale, scale), method="golden", tol=1e-12)
    return res.fun


class TestAssembly:
    def test_zero(self):
        p = CellProblem(build_rigid_spring_cell(2, 2), F2, np.zeros((2, 2)))
        e, g = assemble_energy(p, np.zeros(p.structure.n_dofs))
        assert e == 0.0 and np.all(g == 0.0)

    def test_competitor_hand_value(self):
        # jump across the e1 face is A e1 = e1; density 2 e1 (.) e1; weight 1/2
        p = CellProblem(build_rigid_spring_cell(2, 1), F2, np.diag([1.0, 0.0]))
        assert assemble_energy(p, np.zeros(3))[0] == pytest.approx(2.0, abs=1e-14)
        assert competitor_energy(p) == pytest.approx(2.0, abs=1e-14)

    @pytest.mark.parametrize("n,k", [(2, 1), (2, 3), (3, 2)])
    def test_matches_brute_force_oracle(self, n, k):
        rng = np.random.default_rng(n * 10 + k)
        cell = build_rigid_spring_cell(n, k)
        for f in (F2, Integrand(form="quadratic", C=isotropic_tensor(n, 0.7, 1.3))):
            p = CellProblem(cell, f, random_sym(rng, n))
            u = rng.standard_normal(cell.n_dofs)
            e = assemble_energy(p, u)[0]
            assert e == pytest.approx(brute_rigid_energy(cell, u, p.B, f), rel=1e-12)

    def test_dimension_mismatch(self):
        p = CellProblem(build_rigid_spring_cell(2, 1), F2, np.zeros((2, 2)))
        with pytest.raises(ValueError):
            assemble_energy(p, np.zeros(5))
        with pytest.raises(ValueError):
            CellProblem(build_rigid_spring_cell(2, 1), F2, np.zeros((3, 3)))
        with pytest.raises(ValueError):
            CellProblem(build_rigid_spring_cell(3, 1),
                        Integrand(form="quadratic", C=np.eye(3)), np.zeros((3, 3)))

    def test_elastic_affine_energy(self):
        # u = A x with no interface: energy is |A|^2 per unit cell exactly
        rng = np.random.default_rng(1)
        cell = build_elastic_spring_cell(2, 3, interface=False)
        A = random_sym(rng, 2)
        p = CellProblem(cell, F2, A)
        assert assemble_energy(p, np.zeros(cell.n_dofs))[0] == pytest.approx(np.sum(A * A))

    def test_elastic_interface_scaling(self):
        # affine field, interface present: (1/3) |3 A|^2 = 3 |A|^2
        A = np.diag([1.0, 2.0])
        p = CellProblem(build_elastic_spring_cell(1, 2), F2, A)
        assert competitor_energy(p) == pytest.approx(3.0 * 5.0)

    def test_elastic_jump_energy(self):
        # single translated cube (k=1 wraps onto itself) has no jump; shifting
        # only the right-edge nodes by t gives a jump t on the e1 interface
        cell = build_elastic_spring_cell(1, 1)
        p = CellProblem(cell, F2, np.zeros((2, 2)))
        u = np.zeros(cell.n_dofs)
        assert assemble_energy(p, u + 0.3)[0] == pytest.approx(0.0, abs=1e-14)


FAMILIES = {
    "rigid2": lambda: build_rigid_spring_cell(2, 2),
    "rigid3": lambda: build_rigid_spring_cell(3, 2),
    "elastic": lambda: build_elastic_spring_cell(2, 2),
    "elastic_conforming": lambda: build_elastic_spring_cell(2, 2, interface=False),
}


@pytest.mark.parametrize("fam", sorted(FAMILIES))
@pytest.mark.parametrize("f", [F2, Integrand(p=3), Integrand(p=1.5)], ids=["p2", "p3", "p1.5"])
def test_gradient_finite_differences(fam, f):
    rng = np.random.default_rng(11)
    cell = FAMILIES[fam]()
    p = CellProblem(cell, f, random_sym(rng, cell.n))
    for _ in range(3):
        u = rng.standard_normal(cell.n_dofs)
        _, g = assemble_energy(p, u)
        h = 1e-6
        fd = np.empty_like(u)
        for j in range(len(u)):
            e = np.zeros_like(u)
            e[j] = h
            fd[j] = (assemble_energy(p, u + e)[0] - assemble_energy(p, u - e)[0]) / (2 * h)
        assert np.linalg.norm(fd - g) <= 1e-6 * np.linalg.norm(g)


class TestSolve:
    def test_closed_form_g1_confirmed_by_oracle(self):
        rng = np.random.default_rng(0)
        p = CellProblem(build_rigid_spring_cell(2, 1), F2, np.zeros((2, 2)))
        for A in random_sym(rng, 2, 10):
            a, b, d = A[0, 0], A[0, 1], A[1, 1]
            closed = 2 * (a * a + b * b + d * d)
            assert g1_oracle(A) == pytest.approx(closed, rel=1e-10)
            assert solve(p.with_datum(A)).g == pytest.approx(closed, abs=1e-10)

    def test_g1_is_not_twice_norm(self):
        A = np.array([[0.0, 1.0], [1.0, 0.0]])
        g = solve(CellProblem(build_rigid_spring_cell(2, 1), F2, A)).g
        assert g == pytest.approx(2.0) and g != pytest.approx(2 * np.sum(A * A))

    @pytest.mark.parametrize("fam", sorted(FAMILIES))
    def test_zero_datum(self, fam):
        r = solve(CellProblem(FAMILIES[fam](), F2, np.zeros((FAMILIES[fam]().n,) * 2)))
        assert r.g == 0.0 and np.all(r.u == 0.0)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_jensen_conforming(self, k):
        rng = np.random.default_rng(k)
        p = CellProblem(build_elastic_spring_cell(k, 3, interface=False), F2, np.zeros((2, 2)))
        for A in random_sym(rng, 2, 5):
            assert solve(p.with_datum(A)).g == pytest.approx(np.sum(A * A), abs=1e-10)

    @pytest.mark.parametrize("k", [2, 4])
    def test_diagonal_datum_no_rotation(self, k):
        p = CellProblem(build_rigid_spring_cell(2, k), F2, np.diag([0.7, -1.3]))
        r = solve(p)
        assert np.abs(r.u.reshape(-1, 3)[:, 0]).max() < 1e-8

    def test_lattice_translation_invariance(self):
        rng = np.random.default_rng(3)
        A = random_sym(rng, 2)
        base = solve(CellProblem(build_rigid_spring_cell(2, 2), Integrand(p=3), A)).g
        for origin in [(1, 0), (0, 1), (-3, 5)]:
            g = solve(CellProblem(build_rigid_spring_cell(2, 2, origin), Integrand(p=3), A)).g
            assert g == pytest.approx(base, abs=1e-10)

    def test_deterministic(self):
        A = np.array([[0.2, -0.4], [-0.4, 1.0]])
        for f in (F2, Integrand(p=3)):
            p = CellProblem(build_rigid_spring_cell(2, 3), f, A)
            assert solve(p).g == solve(p).g

    def test_cg_energy_monotone(self):
        p = CellProblem(build_elastic_spring_cell(2, 3), F2, np.array([[1.0, 0.3], [0.3, -0.5]]))
        r = solve(p)
        assert r.converged and r.method == "cg" and r.iterations > 3
        h = np.array(r.energy_history)
        assert np.all(np.diff(h) <= 1e-12 * h[0])

    def test_lbfgs_energy_monotone(self):
        p = CellProblem(build_rigid_spring_cell(2, 2), Integrand(p=1.5),
                        np.array([[1.0, 0.3], [0.3, -0.5]]))
        r = solve(p)
        assert r.converged and r.method == "lbfgs"
        assert np.all(np.diff(r.energy_history) <= 0.0)

    def test_p1_smoothing_gap_reported(self):
        A = np.array([[1.0, 0.3], [0.3, -0.5]])
        p = CellProblem(build_rigid_spring_cell(2, 2), Integrand(p=1), A)
        r = solve(p)
        assert r.converged
        assert r.smoothing_gap == pytest.approx(1e-4)
        assert r.g <= competitor_energy(p) + 1e-12
        assert r.g >= np.linalg.norm(A) - 1e-12    # Jensen lower bound, alpha = 1

    def test_quadratic_form_integrand(self):
        f = Integrand(form="quadratic", C=isotropic_tensor(2, 1.0, 0.5))
        p = CellProblem(build_elastic_spring_cell(2, 2, interface=False), f,
                        np.array([[1.0, 0.2], [0.2, 0.3]]))
        r = solve(p)
        assert r.g == pytest.approx(f.evaluate("volume", p.B), rel=1e-10)

    def test_failure_is_reported(self):
        p = CellProblem(build_rigid_spring_cell(2, 3), Integrand(p=3),
                        np.array([[0.4, 1.0], [1.0, -0.7]]))
        r = solve(p, maxiter=1)
        assert not r.converged and r.message
        with pytest.raises(RuntimeError):
            r.raise_if_failed()


def test_pcg_solves_spd():
    rng = np.random.default_rng(0)
    m = rng.standard_normal((20, 20))
    H = m @ m.T + 20 * np.eye(20)
    b = rng.standard_normal(20)
    x, it, res, ok, _ = pcg(lambda v: H @ v, b, np.diag(H))
    assert ok and res <= 1e-12
    np.testing.assert_allclose(x, np.linalg.solve(H, b), rtol=1e-10)


class TestGauge:
    @pytest.mark.parametrize("fam", sorted(FAMILIES))
    def test_global_rigid_shift(self, fam):
        rng = np.random.default_rng(5)
        cell = FAMILIES[fam]()
        n = cell.n
        p = CellProblem(cell, Integrand(p=3), random_sym(rng, n))
        u = rng.standard_normal(cell.n_dofs)
        R = SkewMatrix.from_params(n, rng.standard_normal(n * (n - 1) // 2)).entries
        t = rng.standard_normal(n)
        e0 = assemble_energy(p, u)[0]
        e1 = assemble_energy(p, add_global_rigid(cell, u, R, t), B=p.B + R)[0]
        assert abs(e1 - e0) < 1e-12 * max(1.0, e0)

    def test_skew_part_of_datum_is_irrelevant(self):
        rng = np.random.default_rng(6)
        cell = build_rigid_spring_cell(2, 2)
        A = random_sym(rng, 2)
        R = SkewMatrix.from_params(2, [0.8]).entries
        p = CellProblem(cell, F2, A)
        assert solve(p.with_datum(A + R)).g == pytest.approx(solve(p).g, abs=1e-10)


class TestFHom:
    def test_zero(self):
        est = f_hom_estimate(rigid_spring_family(2), F2, np.zeros((2, 2)))
        assert est.g == [0.0, 0.0, 0.0] and est.estimate == 0.0 and not est.flagged

    def test_doubling_and_competitor_bound(self):
        rng = np.random.default_rng(8)
        fam = rigid_spring_family(2)
        cache = {}
        for A in random_sym(rng, 2, 10):
            est = f_hom_estimate(fam, F2, A, (1, 2, 4), cache=cache)
            assert est.subadditive
            assert est.g[1] <= est.g[0] + 1e-8 and est.g[2] <= est.g[1] + 1e-8
            comp = competitor_energy(CellProblem(fam(1), F2, A))
            assert est.estimate <= comp + 1e-10

    def test_elastic_family_with_interface(self):
        A = np.array([[0.5, 0.1], [0.1, -0.2]])
        est = f_hom_estimate(elastic_spring_family(2), F2, A, (1, 2))
        assert not est.flagged
        assert est.g[1] <= est.g[0] + 1e-8

    def test_ks_must_increase(self):
        with pytest.raises(ValueError):
            f_hom_estimate(rigid_spring_family(2), F2, np.eye(2), (2, 1))
