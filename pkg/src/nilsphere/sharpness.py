"""The L^{d/(d-1)} counterexample to the maximal bound and the Hormander-condition check."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad

from .group_core import StepTwoGroup, bilinear
from .kernels.cutoffs import zeta0
from .kernels.kernel import DyadicKernelSpec, eval_kernel

log = logging.getLogger(__name__)

_GL = np.polynomial.legendre.leggauss(16)


class SharpnessError(ValueError):
    pass


@dataclass(frozen=True)
class SteinFunction:
    """f(y, v) = |y|^{1-d} |log|y||^{-1} on eps <= |y| <= r0, times zeta0(|v| / v_radius)."""

    d: int
    eps: float
    r0: float = 0.5
    v_radius: float = 2.0

    def __post_init__(self):
        if not 0 < self.eps < self.r0 < 1:
            raise SharpnessError(f"need 0 < eps < r0 < 1, got eps={self.eps}, r0={self.r0}")

    def radial(self, rho):
        rho = np.asarray(rho, dtype=float)
        live = (rho >= self.eps) & (rho <= self.r0)
        safe = np.where(live, rho, 0.5)
        return np.where(live, safe ** (1.0 - self.d) / np.abs(np.log(safe)), 0.0)

    def __call__(self, y, v):
        y = np.asarray(y, dtype=float)
        v = np.asarray(v, dtype=float)
        return self.radial(np.linalg.norm(y, axis=-1)) * zeta0(np.linalg.norm(v, axis=-1) / self.v_radius)

    def lp_norm(self, p: float, m: int = 1) -> float:
        """||f||_p, radial in y and in v."""
        rad = _radial_power_integral(self.d, p, self.eps, self.r0)
        vpart = _vfactor(m, p, self.v_radius)
        return float((rad * vpart) ** (1.0 / p))


@dataclass(frozen=True)
class BallSpec:
    """B_delta = {|x| <= delta, |u| <= delta^2}."""

    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise SharpnessError("delta must be positive")

    def contains(self, x, u) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return (np.linalg.norm(x, axis=-1) <= self.delta) & (np.linalg.norm(u, axis=-1) <= self.delta ** 2)


def _sphere_area(n: int) -> float:
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def _shell_integral(d: int, p: float, lo: float, hi: float) -> float:
    """|S^{d-1}| \\int_lo^hi rho^{(1-d)p + d - 1} |log rho|^{-p} d rho, in the variable s = -log rho."""
    a = (1.0 - d) * p + d

    def g(s):
        return math.exp(-a * s) * s ** (-p)

    return _sphere_area(d) * quad(g, -math.log(hi), -math.log(lo), epsabs=0.0, epsrel=1e-12, limit=200)[0]


def _radial_power_integral(d: int, p: float, eps: float, r0: float) -> float:
    return _shell_integral(d, p, eps, r0)


def _vfactor(m: int, p: float, R: float, panels: int = 32) -> float:
    """\\int zeta0(|v| / R)^p dv over R^m, composite Gauss-Legendre in |v|."""
    x, w = _GL
    edges = np.linspace(0.0, R, panels + 1)
    half = 0.5 * np.diff(edges)
    r = ((edges[:-1] + edges[1:])[:, None] * 0.5 + half[:, None] * x).ravel()
    w = (half[:, None] * w).ravel()
    return float(_sphere_area(m) * np.sum(w * r ** (m - 1) * zeta0(r / R) ** p)) if m > 1 else \
        float(2 * np.sum(w * zeta0(r / R) ** p))


@dataclass
class ShellProfile:
    d: int
    p: float
    shells: list
    partial_sums: list
    ratio: float
    raabe: float
    classification: str
    predicted: str

    def rows(self) -> list[dict]:
        return [{"j": j, "shell": s, "partial_sum": ps}
                for j, (s, ps) in enumerate(zip(self.shells, self.partial_sums), start=1)]


def predicted_class(d: int, p: float) -> str:
    """Local L^p membership of the profile: convergent iff p(d-1) < d, or p(d-1) = d and p > 1."""
    e = p * (d - 1)
    if math.isclose(e, d, rel_tol=1e-12):
        return "convergent" if p > 1 else "divergent"
    return "convergent" if e < d else "divergent"


def stein_lp_profile(d: int, p: float, eps_list: Optional[Sequence[float]] = None,
                     n_shells: int = 60, r0: float = 0.5, ratio_tol: float = 0.02) -> ShellProfile:
    """Shell integrals of |f|^p over 2^{-j-1} <= |y| <= 2^{-j}; ratio test, then Raabe's test.

    ``eps_list`` adds the partial sums at those truncations to the table as extra shells.
    """
    if not p > 1 and not math.isclose(p, 1.0):
        raise SharpnessError("p must be at least 1")
    j0 = int(math.ceil(-math.log2(r0)))
    shells = [_shell_integral(d, p, 2.0 ** (-j - 1), 2.0 ** (-j)) for j in range(j0, j0 + n_shells)]
    partial = list(np.cumsum(shells))
    if eps_list:
        for e in eps_list:
            log.info("eps=%g: ||f||_p^p = %.6g", e, _radial_power_integral(d, p, e, r0))
    s = np.asarray(shells)
    tail = s[-10:]
    ratio = float(np.exp(np.mean(np.diff(np.log(tail)))))
    js = np.arange(j0, j0 + n_shells)[-10:-1]
    raabe = float(np.mean(js * (tail[:-1] / tail[1:] - 1.0)))
    if ratio < 1 - ratio_tol:
        cls = "convergent"
    elif ratio > 1 + ratio_tol:
        cls = "divergent"
    else:
        cls = "convergent" if raabe > 1 else "divergent"
    return ShellProfile(d, p, shells, [float(x) for x in partial], ratio, raabe, cls, predicted_class(d, p))


# ---------------------------------------------------------------- blowup of the maximal function

def _gl_integrate(fn: Callable, edges: np.ndarray) -> float:
    x, w = _GL
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    nodes = (0.5 * (hi + lo))[:, None] + half[:, None] * x
    return float(np.sum(half[:, None] * w * fn(nodes)))


def _alpha_of_rho(rho: float, xn: float, t: float) -> float:
    c = (xn * xn + t * t - rho * rho) / (2 * xn * t)
    return math.acos(min(1.0, max(-1.0, c)))


def circle_integral(g: StepTwoGroup, f: SteinFunction, x: np.ndarray, u: np.ndarray, t: float) -> float:
    """\\int f((x, u)(t omega, 0)^{-1}) d omega over the unit circle (arclength, mass 2 pi).

    Integrated in the angle alpha between omega and x, with geometric panels
    toward the point where the circle passes closest to y = 0.
    """
    if g.d != 2:
        raise SharpnessError("circle averages need d = 2")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    xn = float(np.linalg.norm(x))
    if xn == 0:
        raise SharpnessError("probe x must be nonzero")
    phx = math.atan2(x[1], x[0])
    rho_min = abs(xn - t)
    lo_r, hi_r = max(f.eps, rho_min), min(f.r0, xn + t)
    if lo_r >= hi_r:
        return 0.0
    # when the circle stays outside the inner truncation the range starts at alpha = 0 exactly
    a_lo = 0.0 if f.eps <= rho_min else _alpha_of_rho(lo_r, xn, t)
    a_hi = _alpha_of_rho(hi_r, xn, t)
    if a_lo > 0:
        n = max(2, int(math.ceil(2 * math.log2(a_hi / a_lo))) + 1)
        edges = np.geomspace(a_lo, a_hi, n)
    else:
        edges = np.concatenate([[0.0], np.geomspace(a_hi * 2.0 ** -30, a_hi, 61)])
    total = 0.0
    for side in (1.0, -1.0):
        def fn(alpha):
            phi = phx + side * alpha
            om = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
            y = x - t * om
            v = u - bilinear(g, x, t * om)
            rho = np.linalg.norm(y, axis=-1)
            # keep the truncation edges exact against rounding in acos
            rho = np.clip(rho, lo_r, hi_r)
            return f.radial(rho) * zeta0(np.linalg.norm(v, axis=-1) / f.v_radius)
        total += _gl_integrate(fn, edges)
    return total


@dataclass
class BlowupReport:
    levels: list
    eps: list
    max_mf: list
    lp_norms: list
    increments: list
    slope: float
    probes: list = field(default_factory=list)
    label: str = "probe construction: circle through the singular line y = 0 (reconstruction)"

    @property
    def monotone(self) -> bool:
        return all(dv > 0 for dv in self.increments)

    @property
    def demonstrated(self) -> bool:
        return self.monotone and self.slope >= 0.5 and max(self.lp_norms) <= 1.5 * min(self.lp_norms)

    def rows(self) -> list[dict]:
        return [{"level": j, "eps": e, "max_Mf": mf, "lp_norm": n}
                for j, e, mf, n in zip(self.levels, self.eps, self.max_mf, self.lp_norms)]


def default_probes(n: int = 4) -> list[tuple[np.ndarray, np.ndarray]]:
    ang = 2 * math.pi * np.arange(n) / n + 0.3
    return [(np.array([math.cos(a), math.sin(a)]), np.zeros(1)) for a in ang]


def blowup_experiment(g: StepTwoGroup, levels: Sequence[int] = (1, 2, 3, 4),
                      probes: Optional[Sequence] = None, t_offsets: Sequence[float] = (-0.02, -0.005, 0.0, 0.005, 0.02),
                      r0: float = 0.5) -> BlowupReport:
    """Mf at probe points as the inner truncation eps_j = 2^{-2^j} shrinks.

    The circle of radius |x| about a probe x meets y = 0, where the average of
    f picks up 2 log 2 (arclength measure) per level.  Growth is measured per
    level, that is per unit of log2 log2(1/eps).
    """
    if g.d != 2:
        raise SharpnessError("the blowup experiment uses circle averages (d = 2)")
    probes = default_probes() if probes is None else list(probes)
    if not probes:
        raise SharpnessError("probe set is empty")
    d = g.d
    p = d / (d - 1)
    mf, eps_l, norms = [], [], []
    for j in levels:
        eps = 2.0 ** (-(2 ** j))
        f = SteinFunction(d, eps, r0)
        best = 0.0
        for x, u in probes:
            xn = float(np.linalg.norm(x))
            for dt in t_offsets:
                best = max(best, circle_integral(g, f, x, u, xn * (1 + dt)))
        mf.append(best)
        eps_l.append(eps)
        norms.append(f.lp_norm(p, g.m))
        log.info("level %d eps=%.3g max Mf=%.6g ||f||_p=%.6g", j, eps, best, norms[-1])
    inc = list(np.diff(mf))
    slope = float(np.polyfit(list(levels), mf, 1)[0])
    return BlowupReport(list(levels), eps_l, mf, norms, [float(x) for x in inc], slope,
                        [(list(map(float, x)), list(map(float, u))) for x, u in probes])


# ---------------------------------------------------------------- Hormander condition

@dataclass
class HormanderReport:
    k: int
    l: int
    rows_: list
    constant: float

    def rows(self) -> list[dict]:
        return list(self.rows_)


def hormander_bounds(k: int, l: int, m: int, lambda_norm: float, r: float) -> tuple[float, float]:
    return 2.0 ** (k - l) * (1 + lambda_norm * 2.0 ** l), 2.0 ** (k * (m + 2)) * min(1.0 / r, r)


def _ball_samples(g: StepTwoGroup, r: float) -> list[tuple[np.ndarray, np.ndarray]]:
    out = []
    for a in (0.0, math.pi / 4, math.pi / 2):
        x = np.zeros(g.d)
        x[0], x[1] = r * math.cos(a), r * math.sin(a)
        for sgn in (0.0, 1.0):
            u = np.zeros(g.m)
            u[0] = sgn * r * r
            out.append((x, u))
    return out


def hormander_integral(g: StepTwoGroup, spec: DyadicKernelSpec, y: np.ndarray, v: np.ndarray, r: float,
                       n: int = 40, s_values: Sequence[float] = (1.0, 1.25, 1.5, 1.75, 2.0)) -> float:
    """Midpoint-rule value of \\int_{B_{10r}^c} sup_s |K_s((y, v)^{-1}(x, u)) - K_s(x, u)| dx du."""
    sf = spec.surface
    smax = max(s_values)
    ny = float(np.linalg.norm(y))
    # supp K_s lies in |x - s x0| <= s r, |u - Lambda x| <= s^2 r_u
    R = smax * (float(np.linalg.norm(sf.x0)) + sf.r) + ny
    Ru = smax ** 2 * sf.u_radius + sf.lambda_norm * R + float(np.linalg.norm(v)) + ny * R
    hx, hu = 2 * R / n, 2 * Ru / n
    if hx > r / 2:
        raise SharpnessError(f"grid step {hx:.3g} too coarse for r={r}")
    ax = -R + hx * (np.arange(n) + 0.5)
    au = -Ru + hu * (np.arange(n) + 0.5)
    mesh = np.meshgrid(*([ax] * g.d + [au] * g.m), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    x, u = pts[:, :g.d], pts[:, g.d:]
    outside = ~BallSpec(10 * r).contains(x, u)
    x, u = x[outside], u[outside]
    # (y, v)^{-1} (x, u) = (x - y, u - v - y^T J x)
    xs = x - y
    us = u - v - bilinear(g, np.broadcast_to(y, x.shape), x)
    best = np.zeros(x.shape[0])
    for s in s_values:
        sp = spec.dilated(s)
        best = np.maximum(best, np.abs(eval_kernel(sp, xs, us) - eval_kernel(sp, x, u)))
    return float(np.sum(best) * hx ** g.d * hu ** g.m)


def hormander_condition_check(g: StepTwoGroup, spec: DyadicKernelSpec, r_list: Sequence[float],
                              n: int = 40, samples: Optional[Sequence] = None) -> HormanderReport:
    """Worst sampled (y, v) in B_r; ratios to both bounds and the fitted constant max_r I / min(bounds)."""
    rows = []
    for r in r_list:
        if r > 1:
            raise SharpnessError("r must be at most 1")
        pts = _ball_samples(g, r) if samples is None else samples
        val = max(hormander_integral(g, spec, y, v, r, n) for y, v in pts)
        b1, b2 = hormander_bounds(spec.k, spec.l, g.m, spec.surface.lambda_norm, r)
        rows.append({"r": r, "integral": val, "bound_kl": b1, "bound_grad": b2,
                     "ratio_kl": val / b1, "ratio_grad": val / b2})
    const = max(row["integral"] / min(row["bound_kl"], row["bound_grad"]) for row in rows)
    return HormanderReport(spec.k, spec.l, rows, float(const))
