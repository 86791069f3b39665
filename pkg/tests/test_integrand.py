import numpy as np
import pytest

from homlab.integrand import Integrand, growth_check, isotropic_tensor
from homlab.tensors import SymMatrix, sym_product


def test_evaluate_examples():
    f2 = Integrand(p=2)
    assert f2.evaluate("volume", np.zeros((2, 2))) == 0.0
    assert f2.evaluate("volume", SymMatrix(np.diag([1.0, 0.0]))) == 1.0
    f1 = Integrand(p=1)
    e1, e2 = np.eye(2)
    assert f1.evaluate("interface", sym_product(e1, e2)) == pytest.approx(np.sqrt(2 * 0.25))


def test_unknown_region():
    with pytest.raises(ValueError):
        Integrand().evaluate("bulk", np.eye(2))
    with pytest.raises(ValueError):
        Integrand(region_weights={"bulk": 1.0})


def test_region_weights_scale():
    f = Integrand(p=2, region_weights={"volume": 0.5, "interface": 3.0})
    a = np.diag([1.0, 2.0])
    assert f.evaluate("interface", a) == pytest.approx(6.0 * f.evaluate("volume", a))


def test_indefinite_quadratic_rejected():
    with pytest.raises(ValueError, match="indefinite"):
        Integrand(form="quadratic", C=np.diag([1.0, -1.0, 1.0]))


def test_quadratic_form_from_tensor_matches_lame():
    lam, mu = 1.3, 0.7
    n = 3
    I = np.eye(n)
    c4 = (lam * np.einsum("ij,kl->ijkl", I, I)
          + mu * (np.einsum("ik,jl->ijkl", I, I) + np.einsum("il,jk->ijkl", I, I)))
    f4 = Integrand(form="quadratic", C=c4)
    fl = Integrand(form="quadratic", C=isotropic_tensor(n, lam, mu))
    rng = np.random.default_rng(0)
    for _ in range(10):
        a = rng.standard_normal((n, n))
        a = a + a.T
        direct = lam * np.trace(a) ** 2 + 2 * mu * np.sum(a * a)
        assert f4.evaluate("volume", a) == pytest.approx(direct, rel=1e-12)
        assert fl.evaluate("volume", a) == pytest.approx(direct, rel=1e-12)


class TestGrowth:
    def test_pure_power_margin_zero(self):
        rep = growth_check(Integrand(p=2, alpha=1.0, beta=1.0), samples=500, seed=1)
        assert rep.passed
        assert rep.lower_margin == pytest.approx(0.0, abs=1e-15)

    def test_quadratic_eigen_bracket(self):
        # oracle: for f = z^T C z, f/|z|^2 lies in [lambda_min, lambda_max]
        rng = np.random.default_rng(2)
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        c = q @ np.diag([0.5, 1.1, 2.0]) @ q.T
        f = Integrand(form="quadratic", C=c)
        assert (f.alpha, f.beta) == pytest.approx((0.5, 2.0))
        rep = growth_check(f, samples=2000, seed=3)
        assert rep.passed
        assert 0.5 - 1e-12 <= rep.min_lower_ratio <= 0.5 + 1e-12   # eigenvector probed
        assert rep.max_upper_ratio <= 2.0

    def test_zero_eigenvalue_fails(self):
        f = Integrand(form="quadratic", C=np.diag([1.0, 0.0, 1.0]), alpha=0.5, beta=1.0)
        rep = growth_check(f, samples=100, seed=0)
        assert not rep.passed
        assert rep.min_lower_ratio == pytest.approx(0.0, abs=1e-15)

    def test_derived_alpha_zero_fails(self):
        f = Integrand(form="quadratic", C=np.diag([1.0, 0.0, 1.0]))
        assert not growth_check(f, samples=10).passed

    def test_samples_must_be_positive(self):
        with pytest.raises(ValueError):
            growth_check(Integrand(), samples=0)


@pytest.mark.parametrize("f", [Integrand(p=1), Integrand(p=1.5), Integrand(p=2), Integrand(p=3),
                               Integrand(form="quadratic", C=isotropic_tensor(2, 1.0, 0.5))],
                         ids=["p1", "p1.5", "p2", "p3", "quad"])
def test_midpoint_convexity(f):
    rng = np.random.default_rng(5)
    for _ in range(1000):
        a, b = rng.standard_normal((2, 2, 2))
        a, b = a + a.T, b + b.T
        mid = f.evaluate("volume", 0.5 * (a + b))
        assert mid <= 0.5 * f.evaluate("volume", a) + 0.5 * f.evaluate("volume", b) + 1e-12


@pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 3.0])
def test_power_homogeneity(p):
    f = Integrand(p=p, weight=1.7)
    rng = np.random.default_rng(6)
    for _ in range(50):
        a = rng.standard_normal((3, 3))
        a = a + a.T
        t = rng.uniform(0.1, 10)
        assert f.evaluate("volume", t * a) == pytest.approx(t ** p * f.evaluate("volume", a),
                                                            rel=1e-12)


def test_huber_smoothing_gap():
    f = Integrand(p=1).smoothed(1e-2)
    z = np.linspace(0, 1, 101)[:, None] * np.array([[1.0, 0.0, 0.0]])
    gap = np.linalg.norm(z, axis=1) - f.base(z)
    assert np.all(gap >= -1e-15) and np.all(gap <= 0.5e-2 + 1e-15)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    for f in (Integrand(p=1.5), Integrand(p=3), Integrand(p=1).smoothed(0.1),
              Integrand(form="quadratic", C=isotropic_tensor(3, 2.0, 1.0))):
        z = rng.standard_normal((5, 6))
        g = f.base_grad(z)
        h = 1e-6
        for j in range(6):
            e = np.zeros(6)
            e[j] = h
            fd = (f.base(z + e) - f.base(z - e)) / (2 * h)
            np.testing.assert_allclose(g[:, j], fd, rtol=1e-6, atol=1e-8)


def test_dict_roundtrip():
    for f in (Integrand(p=1.5, weight=2.0, region_weights={"volume": 0.3}),
              Integrand(form="quadratic", C=isotropic_tensor(2, 1.0, 0.5))):
        assert Integrand.from_dict(f.to_dict()) == f
    g = Integrand.from_dict({"lame": [1.0, 0.5], "n": 3})
    assert g.form == "quadratic" and g.n == 3
