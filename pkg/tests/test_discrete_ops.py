import math

import numpy as np
import pytest

from nilsphere.discrete_ops import (
    BumpSource,
    GridError,
    GridFunction,
    NonisotropicGrid,
    adjoint_kernel,
    convolution_matrix,
    cotlar_stein_check,
    cotlar_stein_rhs,
    delta,
    fit_slope,
    group_convolve,
    maximal_function,
    operator_norm,
    random_function,
    t_mesh,
)
from nilsphere.kernels import Bump, DyadicKernelSpec, SurfaceData


@pytest.fixture
def small_grid():
    return NonisotropicGrid(2, 1, 7, 9, 0.5)


@pytest.fixture
def small_kernel():
    return random_function(NonisotropicGrid(2, 1, 3, 3, 0.5), seed=1)


def test_grid_validation():
    with pytest.raises(GridError):
        NonisotropicGrid(2, 1, 8, 9, 0.5)
    with pytest.raises(GridError):
        NonisotropicGrid(2, 1, 7, 9, -0.5)
    with pytest.raises(GridError):
        NonisotropicGrid(2, 1, 501, 501, 0.01)
    g = NonisotropicGrid.from_half_widths(2, 1, 1.0, 1.0, 20)
    assert g.n_x == 21 and g.h_u == pytest.approx(g.h_x ** 2)


def test_delta_is_identity(h1, small_grid):
    f = random_function(small_grid)
    out = group_convolve(h1, f, delta(NonisotropicGrid(2, 1, 1, 1, 0.5)))
    np.testing.assert_allclose(out.values, f.values, atol=1e-13)


def test_fft_matches_direct(h1, small_grid, small_kernel):
    f = random_function(small_grid)
    a = group_convolve(h1, f, small_kernel, "fft").values
    b = group_convolve(h1, f, small_kernel, "direct").values
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_convolution_matrix(h1, small_grid, small_kernel):
    f = random_function(small_grid, seed=5)
    M = convolution_matrix(h1, small_grid, small_kernel)
    np.testing.assert_allclose(M @ f.values.ravel(), group_convolve(h1, f, small_kernel).values.ravel(),
                               atol=1e-12)


def test_adjoint_kernel(h1, small_grid, small_kernel):
    M = convolution_matrix(h1, small_grid, small_kernel)
    Ma = convolution_matrix(h1, small_grid, adjoint_kernel(h1, small_kernel))
    # away from the truncation boundary the adjoint kernel gives the adjoint operator
    f, g = random_function(small_grid, 2), random_function(small_grid, 3)
    inside = np.zeros(small_grid.shape, bool)
    inside[2:-2, 2:-2, 3:-3] = True
    fv = np.where(inside, f.values, 0).ravel()
    gv = np.where(inside, g.values, 0).ravel()
    assert np.vdot(gv, M @ fv) == pytest.approx(np.vdot(Ma @ gv, fv), abs=1e-9)


def test_norm_methods_agree(h1, small_grid, small_kernel):
    dense = operator_norm(h1, small_kernel, small_grid, "dense_svd").value
    power = operator_norm(h1, small_kernel, small_grid, tol=1e-9, max_iter=2000).value
    assert power == pytest.approx(dense, rel=1e-5)


def test_scaled_delta_norm(h1, small_grid):
    k = delta(NonisotropicGrid(2, 1, 1, 1, 0.5), c=2.5 - 1j)
    assert operator_norm(h1, k, small_grid, "dense_svd").value == pytest.approx(abs(2.5 - 1j))


def test_positive_kernel_norm_is_its_integral(h1):
    b = Bump(SurfaceData(2, 1))
    val = operator_norm(h1, BumpSource(b), method="plancherel", lams=np.array([0.0, 1.0, 4.0])).value
    assert val == pytest.approx(b.integral(), rel=1e-10)


def test_unknown_method(h1, small_grid, small_kernel):
    with pytest.raises(GridError):
        operator_norm(h1, small_kernel, small_grid, method="magic")
    with pytest.raises(GridError):
        operator_norm(h1, small_kernel, method="dense_svd")


@pytest.mark.slow
def test_dilation_invariant_norm(h1):
    s = SurfaceData(2, 1)
    a = operator_norm(h1, DyadicKernelSpec("Kkl", s, k=2), method="plancherel").value
    b = operator_norm(h1, DyadicKernelSpec("Kkl", s, k=2, t=2.0), method="plancherel").value
    assert a == pytest.approx(b, rel=1e-8)


def test_fit_slope():
    xs = np.arange(5)
    assert fit_slope(xs, 3.0 * 2.0 ** (-0.5 * xs)) == pytest.approx(-0.5)


def test_t_mesh():
    t = t_mesh([0, 1], 4)
    assert t.size == 8 and t[0] == 1.0 and t.max() < 4.0


@pytest.mark.parametrize("A,B,eps", [(1.0, 1.0, 0.5), (1.0, 8.0, 0.3), (2.0, 3.0, 1.0), (1.0, 0.5, 0.7)])
def test_cotlar_stein_rhs_closed_form(A, B, eps):
    brute = sum(min(A, B * 2.0 ** (-abs(m) * eps)) for m in range(-4000, 4001))
    assert cotlar_stein_rhs(A, B, eps) == pytest.approx(math.sqrt(A * brute), rel=1e-10)


def window_family(n_ops=6, size=48, width=3.0, seed=0):
    rng = np.random.default_rng(seed)
    x = np.arange(size)
    out = []
    for n in range(n_ops):
        w = np.exp(-0.5 * ((x - 4 * n - 6) / width) ** 2)
        U = np.linalg.qr(rng.standard_normal((size, size)))[0]
        out.append(U @ np.diag(w))
    return out


def test_cotlar_stein_check_passes():
    T = window_family()
    rep = cotlar_stein_check(T, eps=0.5, A=1.0, B=2.0, n_vectors=50)
    assert rep["hypotheses"] and rep["pass"]
    assert rep["lhs"] <= rep["rhs"]


def test_cotlar_stein_rejects_bad_hypotheses():
    T = window_family()
    rep = cotlar_stein_check(T, eps=0.5, A=0.5, B=2.0)
    assert rep["hypotheses"] is False and rep["pass"] is None


def test_maximal_function_gaussian(h1):
    grid = NonisotropicGrid.from_half_widths(2, 1, 2.0, 2.0, 81, h_u=0.05)
    x, u = grid.points()
    f = GridFunction(grid, np.exp(-np.sum(x ** 2, axis=-1) - u[..., 0] ** 2).astype(complex), "gauss")
    val = maximal_function(h1, f, "sphere", [0.5, 1.0], nodes=64, at=(np.zeros(2), np.zeros(1)))
    # the circle |y| = t through the identity gives exp(-t^2); the max is at t = 0.5
    assert val[0] == pytest.approx(math.exp(-0.25), abs=2e-3)
    with pytest.raises(GridError):
        maximal_function(h1, f, "sphere", [])
