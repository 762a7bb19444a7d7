import numpy as np
import pytest

from nilsphere.fold_analysis import (
    MatrixInputError,
    PatchError,
    PhaseContext,
    Psi,
    QuadratureError,
    Theta,
    det_factorization,
    det_pairs,
    dyadic_det_cutoff,
    fold_base,
    fold_condition_check,
    grad_Psi,
    h1_fold_context,
    kernel_unit_vector,
    null_direction_check,
    inverse_norm_check,
    det_derivative_check,
    mixed_hessian,
    mixed_hessian_fd,
    on_fold,
    oscillatory_matrix,
    phase_Phi,
    phi_pairs,
    quadratic_reduction_residual,
    sample_fold_points,
    stationary_phase_compare,
    theta_crit,
    theta_hessian,
    theta_hessian_det,
    top_singular_value,
)
from nilsphere.group_core import build_group, nondegeneracy_constants
from nilsphere.kernels import SurfaceData, zeta0


def spd(rng, n):
    M = rng.standard_normal((n, n))
    return M @ M.T + 0.1 * np.eye(n)


def skew(rng, n):
    M = rng.standard_normal((n, n))
    return M - M.T


def random_ctx(g, surface, rng):
    y = rng.uniform(-0.5, 0.5, g.d)
    x = np.concatenate([y[:-1] + rng.uniform(-0.2, 0.2, g.d - 1), rng.uniform(-1, 1, 1)])
    return PhaseContext(g, surface, x, rng.standard_normal(g.m), y, rng.uniform(-0.5, 0.5, g.m))


def test_inverse_norm_random(rng):
    for _ in range(50):
        n = int(rng.integers(1, 9))
        rep = inverse_norm_check(spd(rng, n), skew(rng, n), float(rng.uniform(-2, 2)))
        assert rep["holds_sigma"] in (True, None)
        assert rep["holds_skew"] in (True, None)


def test_inverse_norm_input_checks(rng):
    with pytest.raises(MatrixInputError):
        inverse_norm_check(-np.eye(3), skew(rng, 3), 1.0)
    with pytest.raises(MatrixInputError):
        inverse_norm_check(np.eye(3), np.eye(3), 1.0)


@pytest.mark.parametrize("n", [3, 5, 7])
def test_det_derivative_leading_coefficient(rng, n):
    for _ in range(10):
        rep = det_derivative_check(spd(rng, n), skew(rng, n))
        assert rep["rel_error"] < 1e-6


def test_det_derivative_needs_odd_dimension(rng):
    with pytest.raises(MatrixInputError):
        det_derivative_check(np.eye(4), skew(rng, 4))


def test_kernel_unit_vector(rng):
    S = skew(rng, 5)
    e = kernel_unit_vector(S)
    assert np.linalg.norm(S @ e) < 1e-10 and np.linalg.norm(e) == pytest.approx(1.0)


@pytest.mark.parametrize("kind", ["heisenberg", "appendix"])
def test_null_direction_small_B(kind, rng):
    g = build_group(kind)
    rep = nondegeneracy_constants(g)
    for _ in range(20):
        B = rng.standard_normal(g.d - 1)
        B *= rng.uniform(0, 1) * rep.c0 / (8 * rep.C0) / np.linalg.norm(B)
        out = null_direction_check(g, rng.standard_normal(g.m), B, rep.c0, rep.C0)
        assert out["applies"] and out["holds"] and out["kernel_dim"] == 1


def test_null_direction_vacuous_for_large_B(h1):
    assert null_direction_check(h1, [1.0], [10.0])["applies"] is False


def test_theta_critical_point(h1, surface, rng):
    for _ in range(10):
        ctx = random_ctx(h1, surface, rng)
        c = theta_crit(ctx)
        gr = grad_Psi(ctx, c)
        assert np.abs(gr.vector()).max() < 1e-12
        assert Psi(ctx, c) == pytest.approx(phase_Phi(ctx), abs=1e-12)
        assert np.linalg.det(theta_hessian(ctx)) == pytest.approx(theta_hessian_det(ctx.m))


def test_theta_hessian_matches_fd(h1, surface, rng):
    ctx = random_ctx(h1, surface, rng)
    c = theta_crit(ctx).vector()
    h = 1e-4
    n = c.size
    H = np.empty((n, n))
    for i in range(n):
        e = np.eye(n)[i] * h
        H[i] = (grad_Psi(ctx, Theta.from_vector(c + e, ctx.m)).vector()
                - grad_Psi(ctx, Theta.from_vector(c - e, ctx.m)).vector()) / (2 * h)
    np.testing.assert_allclose(H, theta_hessian(ctx), atol=1e-8)


@pytest.mark.parametrize("kind", ["heisenberg", "quaternionic"])
def test_mixed_hessian_and_det(kind, rng):
    g = build_group(kind)
    s = SurfaceData(g.d, g.m, Lambda=0.1 * rng.standard_normal((g.m, g.d)))
    for _ in range(5):
        ctx = random_ctx(g, s, rng)
        H = mixed_hessian(ctx)
        np.testing.assert_allclose(mixed_hessian_fd(ctx), H, atol=1e-4 * np.abs(H).max())
        f = det_factorization(ctx)
        assert f["det_direct"] == pytest.approx(f["det_formula"], abs=1e-9 * f["scale"])


def test_on_fold_zeroes_sigma(h1, surface, rng):
    assert on_fold(random_ctx(h1, surface, rng)).sigma_cr == pytest.approx(0.0, abs=1e-14)


def test_patch_error(h1):
    s = SurfaceData(2, 1, gamma="sphere-cap", support_radius=0.5)
    with pytest.raises(PatchError):
        PhaseContext(h1, s, np.array([2.0, 0.0]), np.ones(1), np.zeros(2), np.zeros(1))
    with pytest.raises(PatchError):
        PhaseContext(h1, SurfaceData(3, 1), np.zeros(2), np.ones(1), np.zeros(2), np.zeros(1))


def test_fold_points_h1_and_control(h1, surface):
    pts = sample_fold_points(h1, surface, 10, seed=4)
    reps = [fold_condition_check(p) for p in pts]
    assert all(r.holds and r.rank == 2 for r in reps)
    ab = build_group("custom", J=np.zeros((1, 2, 2)))
    ctl = [fold_condition_check(p, c0=0.0) for p in sample_fold_points(ab, surface, 10, seed=4)]
    assert not any(r.holds for r in ctl)
    assert "holds" in reps[0].to_dict()


def test_pairwise_phase_and_det(h1, flat_surface):
    ctx = h1_fold_context(h1, flat_surface)
    X = np.concatenate([ctx.x, ctx.u])[None]
    Y = np.concatenate([ctx.y, ctx.v])[None]
    assert phi_pairs(h1, flat_surface, X, Y)[0, 0] == pytest.approx(phase_Phi(ctx), abs=1e-13)
    assert det_pairs(h1, flat_surface, X, Y)[0, 0] == pytest.approx(np.linalg.det(mixed_hessian(ctx)), abs=1e-13)


def test_dyadic_det_cutoff_telescopes():
    D = np.linspace(-2, 2, 401)
    total = sum(dyadic_det_cutoff(D, l, 1.0) for l in range(0, 30))
    np.testing.assert_allclose(total, zeta0(D) - zeta0(2.0 ** 30 * D), atol=1e-14)


def test_oscillatory_matrix_unimodular_phase(h1, flat_surface):
    ctx = h1_fold_context(h1, flat_surface)
    K0 = oscillatory_matrix(ctx, 0.0, 0.3, 5, None)
    K1 = oscillatory_matrix(ctx, 50.0, 0.3, 5, None)
    np.testing.assert_allclose(np.abs(K1), np.abs(K0), atol=1e-14)
    # no oscillation: the norm is at least the normalized amplitude mass
    assert top_singular_value(K1) <= top_singular_value(K0) + 1e-12


def test_quadratic_reduction_exact(h1, flat_surface, rng):
    ctx = fold_base(h1, flat_surface, 0)
    c = theta_crit(ctx).vector()
    assert quadratic_reduction_residual(ctx, c + rng.standard_normal((20, 4))) < 1e-12


def test_stationary_control_exact(h1, flat_surface):
    ctx = fold_base(h1, flat_surface, 0)
    rep = stationary_phase_compare(ctx, 3, 0, [50, 100], amplitude="control")
    assert max(r["err_1term"] for r in rep.rows()) < 1e-10


def test_stationary_input_checks(h1, flat_surface):
    ctx = fold_base(h1, flat_surface, 0)
    with pytest.raises(ValueError):
        stationary_phase_compare(ctx, 3, 0, [50], amplitude="other")
    with pytest.raises(QuadratureError):
        stationary_phase_compare(ctx, 3, 0, [1024])


def test_svds_matches_dense_norm(h1, flat_surface):
    ctx = h1_fold_context(h1, flat_surface)
    K = oscillatory_matrix(ctx, 64.0, 0.3, 8, 0.8, l=0)
    assert top_singular_value(K) == pytest.approx(np.linalg.norm(K, 2), rel=1e-10)
