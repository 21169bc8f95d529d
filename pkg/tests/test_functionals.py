import numpy as np
import pytest

from glset import (BmEndpoint, Coordinate, Linear, LinearCombination, Norm2,
                   Product, ProductWithPartial, RadialClamp, SublevelBump,
                   UserFunctional, build_model)
from glset.expressions import ExpressionFunctional
from glset.functionals import fd_gradient


ANALYTIC = [
    Coordinate(2),
    Linear([0.5, -1.5, 2.0]),
    Norm2(),
    ExpressionFunctional("exp(-norm2())"),
    ExpressionFunctional("sin(xi(1))*cos(xi(2)) + xi(3)^3"),
    Product(Norm2(), ExpressionFunctional("exp(-norm2())")),
    LinearCombination([(2.0, Norm2()), (-1.0, Coordinate(1))]),
]


@pytest.mark.parametrize("f", ANALYTIC, ids=lambda f: f.name)
def test_analytic_gradient_matches_finite_differences(f, rng):
    # 100 random points, relative tolerance 1e-6 against central differences
    xi = rng.standard_normal((100, 3))
    analytic = f.gradient(xi)
    numeric = fd_gradient(f.value, xi, 1e-5)
    scale = np.maximum(np.abs(analytic), 1.0)
    assert np.all(np.abs(analytic - numeric) / scale <= 1e-6)


def test_linear_functional_gradient_constant(rng):
    f = Coordinate(1)
    xi = rng.standard_normal((4, 3))
    assert np.array_equal(f.gradient(xi), np.tile([1.0, 0.0, 0.0], (4, 1)))


def test_norm2_gradient_is_twice_point(rng):
    xi = rng.standard_normal((6, 4))
    assert np.allclose(Norm2().gradient(xi), 2 * xi, rtol=1e-15)


def test_kl_coordinate_functional_gradient():
    # the ambient k-th coefficient of a KL point is sqrt(lambda_k) xi_k, so
    # its whitened gradient is sqrt(lambda_k) e_k
    m = build_model(("kl_brownian", 3))
    k = 2
    f = Linear(np.sqrt(m.spectrum) * np.eye(3)[k - 1])
    xi = np.random.default_rng(1).standard_normal((10, 3))
    g = f.gradient(xi)
    expected = np.zeros((10, 3))
    expected[:, k - 1] = np.sqrt(m.spectrum[k - 1])
    assert np.allclose(g, expected, rtol=1e-12)
    numeric = fd_gradient(f.value, xi, 1e-5)
    assert np.allclose(g, numeric, atol=1e-8)


def test_user_functional_fd_fallback(rng):
    f = UserFunctional(eval=lambda xi: np.sum(xi ** 2, axis=1), name="norm2-cb")
    assert not f.analytic_gradient
    xi = rng.standard_normal((20, 3))
    assert np.allclose(f.gradient(xi), 2 * xi, atol=1e-7)
    assert np.allclose(f.laplacian(xi), 6.0, atol=1e-4)


def test_user_functional_analytic_hessian(rng):
    f = UserFunctional(
        eval=lambda xi: np.sum(xi ** 2, axis=1),
        grad=lambda xi: 2 * xi,
        hess=lambda xi: np.tile(2 * np.eye(3), (xi.shape[0], 1, 1)),
    )
    xi = rng.standard_normal((5, 3))
    w = rng.standard_normal((5, 3))
    assert np.allclose(f.hessian_quad(xi, w), 2 * np.sum(w * w, axis=1))
    assert np.allclose(f.laplacian(xi), 6.0)
    assert np.allclose(f.hessian_row(xi, 2), np.tile([0, 2.0, 0], (5, 1)))


def test_hessian_quad_fd_matches_analytic(rng):
    f = ExpressionFunctional("exp(-norm2())")
    xi = rng.standard_normal((10, 3))
    w = rng.standard_normal((10, 3))
    analytic = f.hessian_quad(xi, w)
    fd = UserFunctional(eval=f.value).hessian_quad(xi, w)
    assert np.allclose(analytic, fd, rtol=1e-4, atol=1e-5)


def test_product_with_partial_is_phi_times_dkg(rng):
    phi = ExpressionFunctional("exp(-norm2())")
    G = Norm2()
    f = ProductWithPartial(phi, G, 2)
    xi = rng.standard_normal((50, 3))
    assert np.allclose(f.value(xi), phi.value(xi) * 2 * xi[:, 1], rtol=1e-14)
    numeric = fd_gradient(f.value, xi, 1e-5)
    assert np.allclose(f.gradient(xi), numeric, atol=1e-7)


def test_bm_endpoint_is_linear(kl8, rng):
    f = BmEndpoint(kl8)
    xi = rng.standard_normal((7, 8))
    assert np.allclose(f.value(xi), xi @ f.weights, rtol=1e-14)
    assert f.analytic_gradient


def test_radial_clamp_support(rng):
    f = RadialClamp(2.0)
    xi = rng.standard_normal((1000, 3))
    r = np.linalg.norm(xi, axis=1)
    v = f.value(xi)
    assert np.all(v[r <= 2.0] == 1.0)
    assert np.all(v[r >= 4.0] == 0.0)
    on_ramp = (r > 2.1) & (r < 3.9)
    numeric = fd_gradient(f.value, xi, 1e-6)
    assert np.allclose(f.gradient(xi)[on_ramp], numeric[on_ramp], atol=1e-5)


def test_sublevel_bump_vanishes_above_cut(rng):
    G = Norm2()
    f = SublevelBump(G, c=2.0, delta=0.5)
    xi = rng.standard_normal((500, 3))
    g = G.value(xi)
    v = f.value(xi)
    assert np.all(v[g >= 2.0] == 0.0)
    assert np.all(v[g <= 1.5] == 1.0)


def test_single_point_call_returns_scalar():
    assert Norm2()(np.array([1.0, 2.0])) == 5.0
