"""Leading stationary-phase terms of the theta integral against direct quadrature.

For m = 1 and Lambda = 0 the phase is exactly quadratic about theta_crit,

    Psi - Phi = dz (dsigma - y1 dtau) + dw dtau,

and with the amplitude f1(dz) f2(dw - y1 dz) q(sigma, tau) the substitution
w' = dw - y1 dz turns the integral into

    lam^2 \\iint F1(lam dsigma) F2(lam dtau) q(sigma, tau) dsigma dtau,

with F(omega) = \\int f(s) e^{i omega s} ds.  That integrand is not
oscillatory in the phase, so composite Gauss-Legendre converges quickly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..kernels.cutoffs import cutoff_eval, zeta0, zeta0_ft
from .phase import PhaseContext, Psi, Theta, phase_Phi, theta_crit, theta_hessian

log = logging.getLogger(__name__)

LAM_CAP = 512.0
AMPLITUDES = ("kernel", "control")
_GL = np.polynomial.legendre.leggauss(16)


class QuadratureError(RuntimeError):
    pass


@dataclass
class Amplitude:
    """b(theta) = f1(dz) f2(dw - y1 dz) q(sigma, tau) with transforms F1, F2."""

    f1: Callable
    f2: Callable
    F1: Callable
    F2: Callable
    q: Callable
    box: tuple  # (sigma_lo, sigma_hi, tau_lo, tau_hi) containing supp q


def _gl_panels(lo: float, hi: float, n_panels: int):
    x, w = _GL
    edges = np.linspace(lo, hi, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


def _transform(f: Callable, lo: float, hi: float, n_panels: int = 200):
    """omega -> \\int f(s) e^{i omega s} ds for f supported in [lo, hi]."""
    s, w = _gl_panels(lo, hi, n_panels)
    fw = w * f(s)

    def F(omega):
        omega = np.asarray(omega, dtype=float)
        return (np.exp(1j * np.multiply.outer(omega, s)) @ fw).reshape(omega.shape)

    return F


def _cutoff_name(k: int, l: int) -> str:
    return "beta_kl" if l >= 1 else "beta_k0"


def kernel_amplitude(ctx: PhaseContext, k: int, l: int, r: float = 1.0, r_u: float = 1.0,
                     z_off: float = 0.6, w_off: float = 0.7) -> Amplitude:
    """chi0 bump in (x', z_d, w) times the dyadic cutoff beta_{k,l} rescaled by 2^k.

    The bump centre sits at offsets (z_off r, w_off r_u) from theta_crit, so the
    critical point lies on its ramp and E1 does not vanish.
    """
    a = float(ctx.x[0] - ctx.y[0])
    if abs(a) >= 0.5 * r:
        raise ValueError(f"|x1 - y1| = {abs(a)} must be below r/2 = {0.5 * r}")
    s0, t0 = z_off * r, w_off * r_u
    f1 = lambda s: zeta0(np.hypot(a, np.asarray(s) + s0) / r)
    f2 = lambda s: zeta0((np.asarray(s) + t0) / r_u)
    half = math.sqrt(r * r - a * a)
    name = _cutoff_name(k, l)
    scale = 2.0 ** k
    q = lambda sig, tau: cutoff_eval(name, k, l, scale * sig, scale * tau)
    return Amplitude(f1, f2, _transform(f1, -half - s0, half - s0),
                     lambda w: np.exp(-1j * np.asarray(w) * t0) * r_u * zeta0_ft(np.asarray(w) * r_u),
                     q, (-2.0, 2.0, -2.0, 2.0))


def control_amplitude(ctx: PhaseContext, R: float = 0.5) -> Amplitude:
    """Gaussian f1, f2 and a q equal to 1 near the critical point: every j >= 1 term vanishes."""
    sc, uc = ctx.sigma_cr, float(ctx.u[0])
    gauss = lambda s: np.exp(-0.5 * np.asarray(s) ** 2)
    Fg = lambda w: math.sqrt(2 * math.pi) * np.exp(-0.5 * np.asarray(w) ** 2)
    q = lambda sig, tau: zeta0(np.hypot(sig - sc, tau - uc) / R)
    return Amplitude(gauss, gauss, Fg, Fg, q, (sc - R, sc + R, uc - R, uc + R))


def amplitude_at(ctx: PhaseContext, amp: Amplitude, vec: np.ndarray) -> float:
    """b at a theta vector in the order (z_d, w, tau, sigma)."""
    c = theta_crit(ctx).vector()
    dz, dw = vec[0] - c[0], vec[1] - c[1]
    y1 = float(ctx.y[0])
    return float(amp.f1(np.array(dz)) * amp.f2(np.array(dw - y1 * dz)) * amp.q(np.array(vec[3]), np.array(vec[2])))


def _fd_hessian(f: Callable, x0: np.ndarray, h: float = 1e-2) -> np.ndarray:
    """Fourth-order central differences."""
    n = x0.size
    H = np.zeros((n, n))
    c = [(-2, -1 / 12), (-1, 4 / 3), (1, 4 / 3), (2, -1 / 12)]
    f0 = f(x0)
    E = np.eye(n) * h
    for i in range(n):
        H[i, i] = (sum(wt * f(x0 + s * E[i]) for s, wt in c) - 2.5 * f0) / h ** 2
        for j in range(i + 1, n):
            d1 = sum(si * sj * f(x0 + si * E[i] + sj * E[j]) for si in (1, -1) for sj in (1, -1)) / (4 * h * h)
            d2 = sum(si * sj * f(x0 + 2 * si * E[i] + 2 * sj * E[j]) for si in (1, -1) for sj in (1, -1)) / (16 * h * h)
            H[i, j] = H[j, i] = (4 * d1 - d2) / 3
    return H


def expansion_terms(ctx: PhaseContext, amp: Amplitude) -> tuple[complex, complex]:
    """(E0, E1) so that the integral is E0 + E1 / lam + O(lam^-2).

    The theta Hessian has signature zero and |det| = 1, so the prefactor is
    (2 pi)^{m+1}; E1 carries (2i)^{-1} <H^{-1} D, D> b with D = -i grad.
    """
    m = ctx.m
    H = theta_hessian(ctx)
    pref = (2 * math.pi) ** (m + 1) / math.sqrt(abs(np.linalg.det(H)))
    c = theta_crit(ctx).vector()
    b0 = amplitude_at(ctx, amp, c)
    Hb = _fd_hessian(lambda v: amplitude_at(ctx, amp, v), c)
    e1 = 0.5j * float(np.trace(np.linalg.solve(H, Hb)))
    return complex(pref * b0), complex(pref * e1)


def reduced_integral(ctx: PhaseContext, amp: Amplitude, lam: float, panels_per_unit: float,
                     chunk: int = 512) -> complex:
    """lam^2 \\iint F1(lam dsigma) F2(lam dtau) q: the integral times e^{-i lam Phi}."""
    slo, shi, tlo, thi = amp.box
    ns = max(4, int(math.ceil((shi - slo) * panels_per_unit)))
    nt = max(4, int(math.ceil((thi - tlo) * panels_per_unit)))
    s, ws = _gl_panels(slo, shi, ns)
    t, wt = _gl_panels(tlo, thi, nt)
    a = ws * amp.F1(lam * (s - ctx.sigma_cr))
    b = wt * amp.F2(lam * (t - float(ctx.u[0])))
    total = 0.0
    for i in range(0, s.size, chunk):
        Q = amp.q(s[i:i + chunk, None], t[None, :])
        total = total + a[i:i + chunk] @ (Q @ b)
    return complex(lam ** 2 * total)


def theta_integral(ctx: PhaseContext, amp: Amplitude, lam: float, tol: float = 1e-8,
                   start: float = 4.0, max_doublings: int = 6) -> tuple[complex, float]:
    """Panel doubling until successive values agree to ``tol`` (absolute)."""
    ppu = max(start, lam / 8.0)
    prev = reduced_integral(ctx, amp, lam, ppu)
    for _ in range(max_doublings):
        ppu *= 2
        cur = reduced_integral(ctx, amp, lam, ppu)
        err = abs(cur - prev)
        if err < tol:
            return cur, err
        prev = cur
    raise QuadratureError(f"no convergence at lam={lam}: last change {err:.3e}")


def quadratic_reduction_residual(ctx: PhaseContext, theta_pts: np.ndarray) -> float:
    """Largest |Psi - Phi - quadratic form| over sample points; zero when the reduction is valid."""
    c = theta_crit(ctx).vector()
    phi = phase_Phi(ctx)
    y1 = float(ctx.y[0])
    worst = 0.0
    for v in theta_pts:
        dz, dw, dt, ds = v - c
        quad = dz * (ds - y1 * dt) + dw * dt
        worst = max(worst, abs(Psi(ctx, Theta.from_vector(v, ctx.m)) - phi - quad))
    return worst


@dataclass
class StationaryPhaseReport:
    table: list = field(default_factory=list)
    E0: complex = 0j
    E1: complex = 0j
    one_term_slope: Optional[float] = None
    two_term_slope: Optional[float] = None

    @property
    def decays(self) -> bool:
        return self.one_term_slope is not None and self.one_term_slope <= -0.7

    def rows(self) -> list[dict]:
        return list(self.table)


def fold_base(g, surface, l: int, u: float = 0.9, a: float = 0.05) -> PhaseContext:
    """Base point with sigma_cr = 1.2 2^{-l} and x1 - y1 = a."""
    y = np.array([0.1, 0.0])
    x = np.array([0.1 + a, 1.2 * 2.0 ** (-l) - u * y[0]])
    return PhaseContext(g, surface, x, np.array([u]), y, np.array([0.0]))


def stationary_phase_compare(ctx: PhaseContext, k: int, l: int, lam_list: Sequence[float],
                             amplitude: str = "kernel", tol: float = 1e-8,
                             lam_cap: float = LAM_CAP) -> StationaryPhaseReport:
    """Relative errors of the 1- and 2-term expansions against quadrature."""
    if ctx.m != 1 or np.any(ctx.Lam != 0):
        raise ValueError("the reduced quadrature needs m = 1 and Lambda = 0")
    if amplitude not in AMPLITUDES:
        raise ValueError(f"amplitude must be one of {AMPLITUDES}")
    amp = kernel_amplitude(ctx, k, l) if amplitude == "kernel" else control_amplitude(ctx)
    E0, E1 = expansion_terms(ctx, amp)
    rep = StationaryPhaseReport(E0=E0, E1=E1)
    lams, e1s, e2s = [], [], []
    for lam in sorted(float(x) for x in lam_list):
        if lam > lam_cap:
            raise QuadratureError(f"lam={lam} exceeds the cap {lam_cap}")
        I, qerr = theta_integral(ctx, amp, lam, tol)
        one = abs(I - E0) / abs(I)
        two = abs(I - E0 - E1 / lam) / abs(I)
        rep.table.append({"lam": lam, "integral_re": I.real, "integral_im": I.imag,
                          "E0": E0.real, "E1_re": E1.real, "E1_im": E1.imag, "err_1term": one,
                          "err_2term": two, "quad_err": qerr})
        log.info("lam=%g I=%s 1-term %.3e 2-term %.3e", lam, I, one, two)
        lams.append(lam)
        e1s.append(one)
        e2s.append(two)
    if len(lams) > 1 and amplitude == "kernel":
        rep.one_term_slope = float(np.polyfit(np.log(lams), np.log(e1s), 1)[0])
        rep.two_term_slope = float(np.polyfit(np.log(lams), np.log(e2s), 1)[0])
    return rep
