"""One test per acceptance criterion, each at its stated tolerance and time limit."""

import time

import numpy as np
import pytest

from nilsphere.classify import appendix_determinant, non_isomorphism_certificate
from nilsphere.discrete_ops.experiments import (
    almost_orthogonality_experiment,
    cotlar_stein_check,
    decay_experiment,
    fit_slope,
)
from nilsphere.fold_analysis import (
    PhaseContext,
    det_factorization,
    fold_base,
    fold_condition_check,
    h1_fold_context,
    null_direction_check,
    inverse_norm_check,
    det_derivative_check,
    mixed_hessian,
    mixed_hessian_fd,
    oscillatory_norm_experiment,
    sample_fold_points,
    stationary_phase_compare,
)
from nilsphere.group_core import algebra_identity_errors, build_group, nondegeneracy_constants
from nilsphere.kernels import (
    DyadicKernelSpec,
    SurfaceData,
    cancellation_correct,
    kernel_integral,
    kernel_l1,
    kernel_size_report,
)
from nilsphere.sharpness import blowup_experiment, stein_lp_profile


def spd(rng, n):
    M = rng.standard_normal((n, n))
    return M @ M.T + 0.05 * np.eye(n)


def skew(rng, n):
    M = rng.standard_normal((n, n))
    return M - M.T


def test_c01_appendix_determinant(record):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst = max(appendix_determinant(mu)["rel_error"] for mu in rng.standard_normal((1000, 2)))
    el = time.perf_counter() - t0
    assert record(1, "appendix determinant", worst <= 1e-9, f"max rel error {worst:.2e} <= 1e-9", el, 1)


def test_c02_non_isomorphism_certificate(record):
    t0 = time.perf_counter()
    cert = non_isomorphism_certificate()
    el = time.perf_counter() - t0
    ok = (set(cert.reduced) == {"rho", "2*rho**2 + 1"} and cert.matches_displayed and cert.infeasible
          and cert.groebner == ["1"] and cert.numeric_floor >= cert.numeric_bound)
    assert record(2, "non-isomorphism certificate", ok,
                  f"constraints {cert.reduced}, Groebner basis {cert.groebner}, "
                  f"floor {cert.numeric_floor:.3f} >= {cert.numeric_bound:g}", el, 10)


def test_c03_inverse_bounds(record):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    fails = regime = 0
    for i in range(1000):
        n = int(rng.integers(1, 9))
        A = spd(rng, n)
        S = skew(rng, n)
        if i % 2 and n % 2 == 0:
            # place half of the invertible-S cases inside the small-sigma regime
            s_inv = 1 / np.linalg.svd(S, compute_uv=False)[-1]
            sigma = float(rng.uniform(-1, 1)) / (2 * np.linalg.norm(A, 2) * s_inv)
        else:
            sigma = float(rng.uniform(-3, 3))
        rep = inverse_norm_check(A, S, sigma)
        fails += rep["holds_sigma"] is False or rep["holds_skew"] is False
        regime += rep["holds_skew"] is not None
    el = time.perf_counter() - t0
    assert record(3, "inverse bounds for sigma A + S", fails == 0 and regime > 0,
                  f"{fails} failures in 1000 trials, {regime} in the small-sigma regime", el, 5)


def test_c04_leading_coefficient(record):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst = 0.0
    for i in range(100):
        n = (3, 5, 7)[i % 3]
        worst = max(worst, det_derivative_check(spd(rng, n), skew(rng, n))["rel_error"])
    el = time.perf_counter() - t0
    assert record(4, "leading coefficient of det(sigma A + S)", worst <= 1e-6,
                  f"max rel error {worst:.2e} <= 1e-6", el, 5)


def test_c05_kernel_dimension(record):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    held = total = 0
    for kind in ("heisenberg", "appendix"):
        g = build_group(kind)
        rep = nondegeneracy_constants(g)
        for _ in range(100):
            B = rng.standard_normal(g.d - 1)
            B *= rng.uniform(0, 1) * rep.c0 / (8 * rep.C0) / np.linalg.norm(B)
            out = null_direction_check(g, rng.standard_normal(g.m), B, rep.c0, rep.C0)
            held += bool(out["applies"] and out["holds"] and out["kernel_dim"] == 1)
            total += 1
    el = time.perf_counter() - t0
    assert record(5, "kernel dimension and lower bounds", held == total, f"{held}/{total} hold", el, 10)


def test_c06_hessian_factorization(record):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    g = build_group("heisenberg")
    s = SurfaceData(2, 1)
    det_err = fd_err = 0.0
    for _ in range(50):
        y = rng.uniform(-0.5, 0.5, 2)
        x = np.array([y[0] + rng.uniform(-0.3, 0.3), rng.uniform(-1, 1)])
        ctx = PhaseContext(g, s, x, rng.uniform(0.5, 1.5, 1) * rng.choice([-1, 1]), y, rng.uniform(-.5, .5, 1))
        f = det_factorization(ctx)
        det_err = max(det_err, abs(f["det_direct"] - f["det_formula"]) / abs(f["det_direct"]))
        H = mixed_hessian(ctx)
        fd_err = max(fd_err, np.linalg.norm(mixed_hessian_fd(ctx) - H) / np.linalg.norm(H))
    el = time.perf_counter() - t0
    ok = det_err <= 1e-9 and fd_err <= 1e-4
    assert record(6, "Hessian factorization", ok,
                  f"det rel error {det_err:.2e} <= 1e-9, FD rel error {fd_err:.2e} <= 1e-4", el, 10)


def test_c07_fold_conditions(record):
    t0 = time.perf_counter()
    g = build_group("heisenberg")
    s = SurfaceData(2, 1)
    reps = [fold_condition_check(c) for c in sample_fold_points(g, s, 50, seed=7)]
    rank_ok = all(r.rank == g.d + g.m - 1 for r in reps)
    n_hold = sum(r.holds for r in reps)
    ab = build_group("custom", J=np.zeros((1, 2, 2)))
    n_ctrl = sum(fold_condition_check(c, c0=0.0).holds for c in sample_fold_points(ab, s, 50, seed=7))
    el = time.perf_counter() - t0
    assert record(7, "fold conditions", rank_ok and n_hold == 50 and n_ctrl == 0,
                  f"rank {g.d + g.m - 1} at all points: {rank_ok}, {n_hold}/50 hold, "
                  f"abelian control {n_ctrl}/50 hold", el, 30)


@pytest.mark.slow
def test_c08_oscillatory_scaling(record):
    t0 = time.perf_counter()
    g = build_group("heisenberg")
    ctx = h1_fold_context(g, SurfaceData(2, 1, height=0.0))
    rep = oscillatory_norm_experiment(ctx, [64, 128, 256], [0, 1, 2], n=16)
    el = time.perf_counter() - t0
    ok = (abs(rep.lam_slope - rep.lam_target) <= 0.3 and rep.l_slope is not None
          and abs(rep.l_slope - 0.5) <= 0.3 and not rep.skipped)
    assert record(8, "oscillatory scaling", ok,
                  f"lam-exponent {rep.lam_slope:+.3f} (target {rep.lam_target:+.1f} +- 0.3), "
                  f"l-exponent {rep.l_slope:+.3f} (target +0.5 +- 0.3)", el, 300)


def test_c09_stationary_phase(record):
    t0 = time.perf_counter()
    g = build_group("heisenberg")
    ctx = fold_base(g, SurfaceData(2, 1, height=0.0), 0)
    rep = stationary_phase_compare(ctx, 3, 0, [50, 100, 200])
    ctl = stationary_phase_compare(ctx, 3, 0, [50, 100, 200], amplitude="control")
    worst = max(r["err_1term"] for r in ctl.rows())
    el = time.perf_counter() - t0
    assert record(9, "stationary phase", rep.one_term_slope <= -0.7 and worst <= 1e-10,
                  f"1-term error exponent {rep.one_term_slope:+.3f} <= -0.7, "
                  f"control error {worst:.1e}", el, 300)


@pytest.mark.slow
def test_c10_decay_slopes(record):
    t0 = time.perf_counter()
    g = build_group("heisenberg")
    s = SurfaceData(2, 1)
    kk = decay_experiment(g, "Kkl", [3, 4, 5, 6, 7], [0, 1], surface=s)
    sd = decay_experiment(g, "sderiv", [3, 4, 5, 6], surface=s)
    el = time.perf_counter() - t0
    ok = (abs(kk.k_slope - kk.k_target) <= 0.3 and abs(kk.l_slope - kk.l_target) <= 0.3
          and abs(sd.k_slope - sd.k_target) <= 0.3)
    assert record(10, "kernel decay slopes", ok,
                  f"k-slope {kk.k_slope:+.3f} (target {kk.k_target:+.1f}), l-slope at k=7 {kk.l_slope:+.3f} "
                  f"(target {kk.l_target:+.1f}), s-derivative k-slope {sd.k_slope:+.3f} "
                  f"(target {sd.k_target:+.1f}), all +- 0.3", el, 600)


@pytest.mark.slow
def test_c11_almost_orthogonality(record):
    t0 = time.perf_counter()
    rep = almost_orthogonality_experiment(build_group("heisenberg"), 3, 0, [0, 1, 2, 3])
    el = time.perf_counter() - t0
    assert record(11, "almost orthogonality", rep.slope <= -0.7,
                  f"|n - n'| decay slope {rep.slope:+.3f} <= -0.7", el, 300)


def windowed_family(rng):
    """Unitary rotations of Gaussian windows marching along the index set."""
    size = int(rng.integers(24, 64))
    n_ops = int(rng.integers(3, 8))
    width = rng.uniform(1.0, 3.0)
    step = rng.uniform(2.0, 5.0)
    x = np.arange(size)
    T = []
    for n in range(n_ops):
        w = rng.uniform(0.5, 1.0) * np.exp(-0.5 * ((x - step * n - 3) / width) ** 2)
        U = np.linalg.qr(rng.standard_normal((size, size)))[0]
        T.append(U @ np.diag(w))
    return T


def admissible_constants(T, eps):
    A = max(np.linalg.norm(t, 2) for t in T)
    B2 = max(np.linalg.norm(ti @ tj.conj().T, 2) * 2.0 ** (eps * abs(i - j))
             for i, ti in enumerate(T) for j, tj in enumerate(T))
    return A, max(np.sqrt(B2), 2 * A)


def test_c12_cotlar_stein(record):
    t0 = time.perf_counter()
    rng = np.random.default_rng(12)
    fails = bad_hyp = 0
    for trial in range(100):
        T = windowed_family(rng)
        eps = float(rng.uniform(0.2, 1.0))
        A, B = admissible_constants(T, eps)
        rep = cotlar_stein_check(T, eps, A, B, n_vectors=50, seed=trial)
        bad_hyp += not rep["hypotheses"]
        fails += rep["pass"] is not True
    el = time.perf_counter() - t0
    assert record(12, "Cotlar-Stein chain", fails == 0 and bad_hyp == 0,
                  f"{fails} failures on 100 admissible families", el, 30)


def test_c13_kernel_sizes(record):
    t0 = time.perf_counter()
    s = SurfaceData(2, 1)
    ks = [4, 5, 6, 7, 8]
    reps = [kernel_size_report(DyadicKernelSpec("Kkl", s, k=k)) for k in ks]
    el = time.perf_counter() - t0
    l1 = [r.l1_norm for r in reps]
    ratio = max(l1) / min(l1)
    sd_slope = fit_slope(ks, [r.l1_norm_sderiv for r in reps])
    pc = [r.pointwise_constant for r in reps]
    c_slope = fit_slope(ks, pc)
    # with C = max_k C(k), the bound holds at every sample by construction of C(k)
    ok = ratio < 5 and abs(sd_slope - 1) <= 0.4 and abs(c_slope) <= 0.25 and np.isfinite(max(pc))
    assert record(13, "kernel sizes", ok,
                  f"L1 max/min {ratio:.3f} < 5, s-derivative k-slope {sd_slope:+.3f} (1 +- 0.4), "
                  f"pointwise C = {max(pc):.3f} with log2-slope {c_slope:+.3f} (|.| <= 0.25)", el, 120)


def test_c14_cancellation(record):
    t0 = time.perf_counter()
    s = SurfaceData(2, 1)
    ks = [4, 5, 6, 7, 8]
    gam, resid = [], []
    for k in ks:
        spec = DyadicKernelSpec("Kkl", s, k=k)
        gamma, corrected = cancellation_correct(spec)
        gam.append(abs(gamma))
        # integral of K - gamma b from the independent spatial quadrature
        r = abs(kernel_integral(spec, "spatial") - gamma * corrected.bump.integral())
        resid.append(r / kernel_l1(spec))
    el = time.perf_counter() - t0
    slope = fit_slope(ks, gam)
    ok = slope <= -3 and max(resid) <= 1e-9
    assert record(14, "cancellation", ok,
                  f"log2 |gamma| slope {slope:+.2f} <= -3, corrected integral {max(resid):.1e} <= 1e-9 ||K||_1",
                  el, 60)


def test_c15_sharpness(record):
    t0 = time.perf_counter()
    g = build_group("heisenberg")
    prof = stein_lp_profile(2, 2.0)
    rep = blowup_experiment(g, (1, 2, 3, 4))
    el = time.perf_counter() - t0
    ok = prof.classification == "convergent" and rep.monotone and min(rep.increments) >= 0.5
    assert record(15, "sharpness", ok,
                  f"L^2 shell sums {prof.classification} (Raabe {prof.raabe:.2f}), Mf per level "
                  f"{', '.join(f'{v:.2f}' for v in rep.increments)} >= 0.5", el, 120)


def test_c16_group_algebra(record):
    t0 = time.perf_counter()
    worst = {}
    for kind in ("heisenberg", "appendix", "quaternionic"):
        for name, v in algebra_identity_errors(build_group(kind), trials=1000, seed=16).items():
            worst[name] = max(worst.get(name, 0.0), v)
    el = time.perf_counter() - t0
    assert record(16, "group and dilation algebra", max(worst.values()) <= 1e-10,
                  ", ".join(f"{k} {v:.1e}" for k, v in sorted(worst.items())) + " <= 1e-10", el, 5)
