import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from nilsphere.kernels import (
    Bump,
    CutoffError,
    CutoffSystem,
    DyadicKernelSpec,
    KernelError,
    SurfaceData,
    SurfaceError,
    cancellation_correct,
    cutoff_eval,
    eval_kernel,
    export_binary,
    export_csv,
    import_binary,
    kernel_integral,
    n_intermediate,
    s_derivative_kernel,
    smooth_step,
    zeta0,
    zeta0_ft,
    zeta1,
)


@settings(max_examples=100, deadline=None)
@given(st.floats(-300, 300), st.floats(-300, 300))
def test_partition_of_unity(sigma, tau):
    total = CutoffSystem().partition_sum(np.array([sigma]), np.array([tau]))
    assert total[0] == pytest.approx(1.0, abs=1e-12)


def test_partition_with_vector_tau():
    rng = np.random.default_rng(0)
    sig = rng.uniform(-100, 100, 200)
    tau = rng.uniform(-100, 100, (200, 3))
    np.testing.assert_allclose(CutoffSystem().partition_sum(sig, tau), 1.0, atol=1e-12)


def test_bump_shapes():
    assert smooth_step(-1.0) == 1.0 and smooth_step(2.0) == 0.0
    assert zeta0(0.5) == 1.0 and zeta0(1.0) == 0.0
    assert zeta1(0.5) == pytest.approx(0.0) and zeta1(1.0) == pytest.approx(1.0)
    s = np.linspace(-3, 3, 101)
    np.testing.assert_allclose(zeta0(s), zeta0(-s))


@pytest.mark.parametrize("omega", [0.0, 0.7, 3.0, 12.5])
def test_zeta0_transform(omega):
    ref = quad(lambda s: zeta0(s) * math.cos(omega * s), -1, 1, limit=200, epsabs=1e-13)[0]
    assert zeta0_ft(omega) == pytest.approx(ref, abs=1e-11)


def test_cutoff_supports():
    rng = np.random.default_rng(1)
    sig = rng.uniform(-200, 200, 4000)
    tau = rng.uniform(-200, 200, 4000)
    rho = np.hypot(sig, tau)
    b = cutoff_eval("beta_kl", 6, 1, sig, tau)
    assert np.all(b[(rho < 2 ** 5) | (rho > 2 ** 7)] == 0)
    assert np.all(b[(np.abs(sig) < 2 ** 4) | (np.abs(sig) > 2 ** 6)] == 0)
    assert n_intermediate(6) == 1 and n_intermediate(3) == 0
    with pytest.raises(CutoffError):
        cutoff_eval("beta_kl", 3, 1, sig, tau)
    with pytest.raises(CutoffError):
        cutoff_eval("beta_k0", 0, 0, sig, tau)


def test_surface_derivatives():
    s = SurfaceData(3, 1, gamma="sphere-cap", support_radius=0.5)
    x = np.array([0.1, -0.2])
    h = 1e-6
    fd = np.array([(s.Gamma(x + h * e) - s.Gamma(x - h * e)) / (2 * h) for e in np.eye(2)])
    np.testing.assert_allclose(s.grad_Gamma(x), fd, atol=1e-8)
    fdh = np.array([(s.grad_Gamma(x + h * e) - s.grad_Gamma(x - h * e)) / (2 * h) for e in np.eye(2)])
    np.testing.assert_allclose(s.hess_Gamma(x), fdh, atol=1e-6)


def test_surface_validation_and_roundtrip():
    with pytest.raises(SurfaceError):
        SurfaceData(2, 1, gamma="cone")
    with pytest.raises(SurfaceError):
        SurfaceData(2, 1, gamma="sphere-cap", support_radius=1.5)
    with pytest.raises(SurfaceError):
        SurfaceData(2, 1, Lambda=[[100.0, 0.0]])
    s = SurfaceData(2, 1, Lambda=[[0.3, -0.1]], height=0.5)
    back = SurfaceData.from_dict(s.to_dict(), 2, 1)
    np.testing.assert_array_equal(back.Lambda, s.Lambda)
    assert back.height == 0.5


def test_bump_integral():
    s = SurfaceData(2, 1)
    b = Bump(s)
    rx = quad(lambda r: zeta0(r / 2) * 2 * math.pi * r, 0, 2, limit=200)[0]
    ru = quad(lambda r: zeta0(r / 2) * 2, 0, 2, limit=200)[0]
    assert b.integral() == pytest.approx(rx * ru, rel=1e-10)


def test_spec_validation(surface):
    with pytest.raises(KernelError):
        DyadicKernelSpec("Kkl", surface, k=3, l=1)
    with pytest.raises(KernelError):
        DyadicKernelSpec("Kxx", surface, k=3)
    with pytest.raises(KernelError):
        DyadicKernelSpec("Kkl", surface, k=3, t=0.0)


def test_lattice_matches_quadrature(surface):
    spec = DyadicKernelSpec("Kkl", surface, k=3)
    rng = np.random.default_rng(2)
    x = np.column_stack([rng.uniform(-0.8, 0.8, 6), 1 + rng.uniform(-0.5, 0.5, 6)])
    u = rng.uniform(-0.5, 0.5, (6, 1))
    lat = eval_kernel(spec, x, u)
    ref = eval_kernel(spec, x, u, method="quadrature")
    np.testing.assert_allclose(lat, ref, atol=1e-8 * np.abs(ref).max())


def test_kernel_vanishes_off_support(surface):
    spec = DyadicKernelSpec("Kkl", surface, k=3)
    assert np.all(eval_kernel(spec, np.array([[5.0, 5.0]]), np.array([[0.0]])) == 0)


def test_dilation_scaling(surface):
    spec = DyadicKernelSpec("Kkl", surface, k=3)
    x, u = np.array([[0.2, 1.1]]), np.array([[0.1]])
    t = 1.5
    lhs = eval_kernel(spec.dilated(t), t * x, t * t * u)
    assert lhs[0] == pytest.approx(t ** -4 * eval_kernel(spec, x, u)[0], rel=1e-10)


def test_s_derivative_chain_rule(surface):
    spec = DyadicKernelSpec("Kkl", surface, k=3)
    rng = np.random.default_rng(3)
    x = np.column_stack([rng.uniform(-0.6, 0.6, 5), 1 + rng.uniform(-0.4, 0.4, 5)])
    u = rng.uniform(-0.4, 0.4, (5, 1))
    chain = s_derivative_kernel(spec, x, u)
    fd = s_derivative_kernel(spec, x, u, method="fd")
    np.testing.assert_allclose(chain, fd, atol=1e-6 * np.abs(fd).max())


def test_integral_methods_agree(surface):
    spec = DyadicKernelSpec("Kkl", surface, k=4)
    a = kernel_integral(spec, "frequency")
    b = kernel_integral(spec, "spatial")
    assert abs(a - b) <= 1e-8 * max(1.0, abs(a))


def test_cancellation_zero_integral(surface):
    spec = DyadicKernelSpec("Kkl", surface, k=4)
    gamma, corrected = cancellation_correct(spec)
    resid = kernel_integral(spec, "spatial") - gamma * corrected.bump.integral()
    assert abs(resid) < 1e-9
    x, u = np.array([[0.1, 1.0]]), np.array([[0.0]])
    assert corrected(x, u)[0] == pytest.approx(eval_kernel(spec, x, u)[0] - gamma * corrected.bump(x, u)[0])


def test_binary_roundtrip(tmp_path):
    vals = np.arange(24, dtype=float).reshape(2, 3, 4) * (1 - 0.5j)
    export_binary(tmp_path / "k.bin", vals, [0.1, 0.2, 0.3])
    back, sp = import_binary(tmp_path / "k.bin")
    np.testing.assert_array_equal(back, vals)
    assert sp == (0.1, 0.2, 0.3)
    raw = (tmp_path / "k.bin").read_bytes()
    assert len(raw) == 8 * 7 + 16 * 24
    with pytest.raises(KernelError):
        export_binary(tmp_path / "bad.bin", vals, [0.1])


def test_csv_export(tmp_path):
    x = np.array([[0.1, 0.2]])
    u = np.array([[0.3]])
    export_csv(tmp_path / "k.csv", x, u, np.array([1 / 3 + 2j]))
    lines = (tmp_path / "k.csv").read_text().splitlines()
    assert lines[0] == "x1,x2,u1,re,im"
    assert lines[1].split(",")[3] == "0.333333333333"
    with pytest.raises(KernelError):
        export_csv(tmp_path / "big.csv", np.zeros((3, 2)), np.zeros((3, 1)), np.zeros(3), max_rows=2)
