"""Maximal function, the Cotlar-Stein chain and the decay-exponent experiments."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from ..group_core import StepTwoGroup, bilinear
from ..kernels.analysis import cancellation_correct
from ..kernels.kernel import DyadicKernelSpec, s_derivative_kernel
from ..kernels.surface import Bump, SurfaceData
from .grid import GridError, GridFunction, NonisotropicGrid, group_convolve, kernel_grid, sample_kernel
from .norms import operator_norm
from .plancherel import BumpSource, DyadicSource, Source, dilation_derivative

log = logging.getLogger(__name__)

FAMILIES = ("Kkl", "Ktilde", "sderiv")
HYPOTHESIS_SLACK = 1e-9


def fit_slope(xs, values) -> float:
    """Least-squares slope of log2(values) against xs."""
    xs = np.asarray(xs, dtype=float)
    ys = np.log2(np.asarray(values, dtype=float))
    if xs.size < 2:
        return float("nan")
    return float(np.polyfit(xs, ys, 1)[0])


# ---------------------------------------------------------------- maximal function

def _circle_average(g: StepTwoGroup, f: GridFunction, t: float, nodes: int,
                    x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """f * mu_t at points (x, u) for the normalized circle |y| = t, v = 0 (d = 2); trapezoid rule in the angle."""
    grid = f.grid
    xa, ua = grid.axes()
    interp = RegularGridInterpolator([xa] * grid.d + [ua] * grid.m, f.values,
                                     bounds_error=False, fill_value=0.0)
    theta = 2 * math.pi * np.arange(nodes) / nodes
    out = np.zeros(x.shape[:-1], dtype=complex)
    for th in theta:
        y = t * np.array([math.cos(th), math.sin(th)])
        # (x, u) (y, 0)^{-1} = (x - y, u - x^T J y)
        pts = np.concatenate([x - y, u - bilinear(g, x, y)], axis=-1)
        out += interp(pts.reshape(-1, grid.d + grid.m)).reshape(out.shape)
    return out / nodes


def maximal_function(g: StepTwoGroup, f: GridFunction, family: Union[DyadicKernelSpec, str],
                     t_samples: Sequence[float], nodes: int = 360, at=None):
    """Pointwise ``max_t |f * K_t|`` over ``t_samples``.

    ``family`` is a kernel spec (dilated to each t) or ``"sphere"`` for the raw
    normalized circle measure on a group with d = 2.  For the sphere, ``at``
    may be a pair ``(x, u)`` of point arrays; the maxima are then returned
    there as an array instead of a grid function.
    """
    ts = sorted(set(float(t) for t in t_samples))
    if not ts:
        raise GridError("empty t set")
    if family == "sphere":
        if g.d != 2:
            raise GridError("raw circle averages need d = 2")
        x, u = f.grid.points() if at is None else (np.atleast_2d(at[0]), np.atleast_2d(at[1]))
        conv = lambda t: _circle_average(g, f, t, nodes, x, u)
    elif isinstance(family, DyadicKernelSpec):
        if at is not None:
            raise GridError("point evaluation is available for the sphere family only")
        conv = lambda t: group_convolve(g, f, family.dilated(t)).values
    else:
        raise GridError(f"unknown family {family!r}")
    best = None
    for t in ts:
        val = np.abs(conv(t))
        best = val if best is None else np.maximum(best, val)
    if at is not None:
        return best
    return GridFunction(f.grid, best.astype(complex), f"M[{f.metadata}]")


def t_mesh(n_range: Sequence[int], s_points: int) -> np.ndarray:
    """{2^n s}: n in n_range, s on a geometric mesh of [1, 2)."""
    s = 2.0 ** (np.arange(s_points) / s_points)
    return np.sort(np.concatenate([2.0 ** n * s for n in n_range]))


# ---------------------------------------------------------------- Cotlar-Stein

def cotlar_stein_rhs(A: float, B: float, eps: float) -> float:
    """(A sum_{m in Z} min{A, B 2^{-|m| eps}})^{1/2}, summed in closed form."""
    # terms with B 2^{-|m| eps} >= A contribute A
    m0 = int(math.floor(math.log2(B / A) / eps)) if B > A else -1
    flat = (2 * m0 + 1) * A if m0 >= 0 else 0.0
    start = m0 + 1
    tail = 2 * B * 2.0 ** (-start * eps) / (1.0 - 2.0 ** (-eps))
    if start == 0:
        tail -= B  # m = 0 counted once
    return math.sqrt(A * (flat + tail))


def cotlar_stein_check(T: Sequence[np.ndarray], eps: float, A: float, B: float,
                       n_vectors: int = 100, seed: int = 0) -> dict:
    """Check (sum_n ||T_n f||^2)^{1/2} <= rhs on random unit vectors f.

    Hypotheses ``||T_n|| <= A`` and ``||T_n T_n'^*|| <= B^2 2^{-eps |n - n'|}``
    are verified first; on a violation the check is skipped.
    """
    T = [np.atleast_2d(np.asarray(t)) for t in T]
    norms = [np.linalg.norm(t, 2) for t in T]
    report = {"lhs": None, "rhs": cotlar_stein_rhs(A, B, eps), "pass": None, "hypotheses": True}
    if max(norms) > A * (1 + HYPOTHESIS_SLACK):
        report.update(hypotheses=False, reason="||T_n|| exceeds A")
        return report
    for i, ti in enumerate(T):
        for j, tj in enumerate(T):
            if np.linalg.norm(ti @ tj.conj().T, 2) > B * B * 2.0 ** (-eps * abs(i - j)) * (1 + HYPOTHESIS_SLACK):
                report.update(hypotheses=False, reason=f"||T_{i} T_{j}^*|| exceeds the decay bound")
                return report
    rng = np.random.default_rng(seed)
    n = T[0].shape[1]
    F = rng.standard_normal((n, n_vectors)) + 1j * rng.standard_normal((n, n_vectors))
    F /= np.linalg.norm(F, axis=0)
    lhs = np.sqrt(sum(np.linalg.norm(t @ F, axis=0) ** 2 for t in T))
    worst = float(lhs.max())
    report.update(lhs=worst, **{"pass": bool(worst <= report["rhs"] * (1 + HYPOTHESIS_SLACK))})
    # the constant in the C A sqrt(eps^{-1} log(B/A)) form, as a fitted ratio
    scale = A * math.sqrt(max(math.log(B / A), 1e-300) / eps) if B > A else A
    report["constant_ratio"] = worst / scale
    return report


# ---------------------------------------------------------------- decay experiments

@dataclass
class SlopeReport:
    family: str
    table: list = field(default_factory=list)  # (k, l, norm)
    k_slope: Optional[float] = None
    l_slope: Optional[float] = None
    k_target: Optional[float] = None
    l_target: Optional[float] = None

    def rows(self) -> list[dict]:
        return [{"family": self.family, "k": k, "l": l, "norm": v, "log2_norm": math.log2(v)}
                for k, l, v in self.table]


def _targets(family: str, d: int) -> tuple[float, Optional[float]]:
    if family == "Kkl":
        return -(d - 1) / 2, 0.5
    if family == "sderiv":
        return -(d - 3) / 2, -0.5
    return -(d - 1) / 2 + 1 / 6, None


def _family_source(family: str, spec: DyadicKernelSpec) -> Source:
    if family == "sderiv":
        return dilation_derivative(lambda s: DyadicSource(spec.dilated(s)), spec.t)
    return DyadicSource(spec)


def _family_grid_kernel(family: str, spec: DyadicKernelSpec, grid: NonisotropicGrid) -> GridFunction:
    kg = kernel_grid(spec, grid)
    x, u = kg.points()
    if family == "sderiv":
        vals = s_derivative_kernel(spec, x.reshape(-1, kg.d), u.reshape(-1, kg.m)).reshape(kg.shape)
        return GridFunction(kg, vals, f"d/ds {spec.describe()}")
    return sample_kernel(spec, kg)


def family_norm(g: StepTwoGroup, family: str, spec: DyadicKernelSpec, method: str = "plancherel",
                grid: Optional[NonisotropicGrid] = None, **kw) -> float:
    if method == "plancherel":
        return operator_norm(g, _family_source(family, spec), method="plancherel", **kw).value
    if grid is None:
        raise GridError(f"{method} needs a grid")
    h = grid.h_x
    if h > 2.0 ** (-spec.k - 1):
        raise GridError(f"h_x = {h:g} does not resolve frequency 2^{spec.k}")
    return operator_norm(g, _family_grid_kernel(family, spec, grid), grid, method=method, **kw).value


def decay_experiment(g: StepTwoGroup, family: str, k_range: Sequence[int], l_range: Sequence[int] = (0,),
                     surface: Optional[SurfaceData] = None, method: str = "plancherel",
                     grid: Optional[NonisotropicGrid] = None, l_at_k: Optional[int] = None,
                     **kw) -> SlopeReport:
    """log2 operator norms of a kernel family with slopes in k (at l = l_range[0]) and in l.

    The l-sweep runs at ``k = l_at_k`` (default: the largest k).
    """
    if family not in FAMILIES:
        raise GridError(f"unknown family {family!r}; choose from {FAMILIES}")
    surface = surface or SurfaceData(g.d, g.m)
    kind = "Ktilde" if family == "Ktilde" else "Kkl"
    l0 = l_range[0]
    kt, lt = _targets(family, g.d)
    rep = SlopeReport(family, k_target=kt, l_target=lt)
    cache = {}

    def norm(k, l):
        if (k, l) not in cache:
            spec = DyadicKernelSpec(kind, surface, k=k, l=l if kind == "Kkl" else 0)
            cache[k, l] = family_norm(g, family, spec, method, grid, **kw)
            log.info("%s k=%d l=%d: %.6g", family, k, l, cache[k, l])
            rep.table.append((k, l, cache[k, l]))
        return cache[k, l]

    ks = list(k_range)
    rep.k_slope = fit_slope(ks, [norm(k, l0) for k in ks])
    if kind == "Kkl" and len(l_range) > 1:
        kl = l_at_k if l_at_k is not None else max(ks)
        rep.l_slope = fit_slope(list(l_range), [norm(kl, l) for l in l_range])
    return rep


# ---------------------------------------------------------------- almost orthogonality

def corrected_source(spec: DyadicKernelSpec, t: float, gamma: complex, bump: Bump,
                     tail: float) -> Source:
    src = DyadicSource(spec.dilated(t), tail=tail)
    if gamma == 0:
        return src
    return src - gamma * BumpSource(bump, t, tail=tail)


@dataclass
class OrthogonalityReport:
    k: int
    l: int
    s: float
    corrected: bool
    table: list = field(default_factory=list)  # (n, n', norm)
    slope: Optional[float] = None

    def rows(self) -> list[dict]:
        return [{"n": n, "n_prime": m, "gap": abs(n - m), "norm": v, "corrected": self.corrected}
                for n, m, v in self.table]


def almost_orthogonality_experiment(g: StepTwoGroup, k: int, l: int, n_range: Sequence[int],
                                    s: float = 1.0, surface: Optional[SurfaceData] = None,
                                    corrected: bool = True, tail: float = 60.0,
                                    lam_floor: float = 1 / 16, **kw) -> OrthogonalityReport:
    """Norms of ``f -> f * K_{2^n' s} * (K_{2^n s})^*`` for n' = min(n_range) and each n.

    The slope of log2(norm) against |n - n'| is fitted.  ``corrected=False``
    uses the raw kernels as a contrast.
    """
    if (g.d, g.m) != (2, 1):
        raise GridError("the scale-separated products are computed on H^1 through the Plancherel reduction")
    surface = surface or SurfaceData(g.d, g.m)
    spec = DyadicKernelSpec("Kkl", surface, k=k, l=l)
    gamma, _ = cancellation_correct(spec)
    bump = Bump(surface)
    gam = gamma if corrected else 0.0
    n0 = min(n_range)
    base = corrected_source(spec, 2.0 ** n0 * s, gam, bump, tail)
    rep = OrthogonalityReport(k, l, s, corrected)
    for n in n_range:
        other = corrected_source(spec, 2.0 ** n * s, gam, bump, tail)
        val = operator_norm(g, [(base, False), (other, True)], method="plancherel",
                            lam_floor=lam_floor, **kw).value
        rep.table.append((n, n0, val))
        log.info("almost orthogonality n=%d n'=%d: %.6g", n, n0, val)
    gaps = [abs(n - m) for n, m, _ in rep.table]
    rep.slope = fit_slope(gaps, [v for *_, v in rep.table])
    return rep
