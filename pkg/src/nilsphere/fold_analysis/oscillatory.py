"""Norms of localized oscillatory integral operators with the phase Phi."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.sparse.linalg import svds

from ..group_core import StepTwoGroup
from ..kernels.cutoffs import zeta0
from ..kernels.surface import SurfaceData
from .phase import PhaseContext, det_sign, on_fold

log = logging.getLogger(__name__)

DENSE_LIMIT = 4096


def _split(g: StepTwoGroup, Z: np.ndarray):
    return Z[..., : g.d], Z[..., g.d:]


def phi_pairs(g: StepTwoGroup, s: SurfaceData, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Phi at every pair of rows of X = (x, u) and Y = (y, v); shape (len(X), len(Y))."""
    x, u = _split(g, X[:, None, :])
    y, v = _split(g, Y[None, :, :])
    x, y = np.broadcast_arrays(x, y)
    diff = x[..., :-1] - y[..., :-1]
    Gm = s.Gamma(diff)
    xz = np.concatenate([x[..., :-1], (y[..., -1] + Gm)[..., None]], axis=-1)
    twist = np.einsum("...i,kij,...j->...k", xz, g.J, y)
    L = s.Lambda
    bracket = v - twist - L[:, -1] * Gm[..., None] - diff @ L[:, :-1].T
    return -x[..., -1] * (y[..., -1] + Gm) - np.sum(u * bracket, axis=-1)


def det_pairs(g: StepTwoGroup, s: SurfaceData, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """det of the mixed Hessian through sigma_cr A + P J_u P^T + E(B), for all pairs."""
    x, u = _split(g, X[:, None, :])
    y, _ = _split(g, Y[None, :, :])
    x, y = np.broadcast_arrays(x, y)
    u = np.broadcast_to(u, x.shape[:-1] + (g.m,))
    diff = x[..., :-1] - y[..., :-1]
    Ju = np.einsum("...k,kij->...ij", u, g.J)
    Xi = np.einsum("kj,...j->...k", g.J[:, -1, :], y) + s.Lambda[:, -1]
    sig = x[..., -1] - np.sum(u * Xi, axis=-1)
    A = s.hess_Gamma(diff)
    B = s.grad_Gamma(diff)
    M = (sig[..., None, None] * A + Ju[..., :-1, :-1]
         + B[..., :, None] * Ju[..., -1, None, :-1] + Ju[..., :-1, -1, None] * B[..., None, :])
    return det_sign(g.d, g.m) * np.linalg.det(M)


def patch_points(center: np.ndarray, r: float, n: int) -> tuple[np.ndarray, float]:
    ax = np.linspace(-r, r, n)
    P = np.array(list(itertools.product(ax, repeat=center.size)))
    return center + P, float(ax[1] - ax[0])


def dyadic_det_cutoff(D: np.ndarray, l: int, delta: float) -> np.ndarray:
    """beta_l = eta(2^l |D| / delta) - eta(2^{l+1} |D| / delta) with eta = zeta0."""
    a = np.abs(D) / delta
    return zeta0(2.0 ** l * a) - zeta0(2.0 ** (l + 1) * a)


def oscillatory_matrix(ctx: PhaseContext, lam: float, r: float, n: int, delta: Optional[float],
                       l: Optional[int] = None, near_fold_levels: Optional[int] = None,
                       chunk: int = 512) -> np.ndarray:
    """Dense discretization of T_lam[a beta_l] on n^{d+m}-point patches about the base.

    The amplitude is zeta0(|X - X0| / r) zeta0(|Y - Y0| / r).  ``l`` selects
    beta_l; ``near_fold_levels = L`` selects the remainder eta(2^L |D| / delta);
    with neither the amplitude is not localized in det.  Phase terms depending
    on X alone or Y alone are removed; they do not change the norm.
    """
    g, s = ctx.group, ctx.surface
    X0 = np.concatenate([ctx.x, ctx.u])
    Y0 = np.concatenate([ctx.y, ctx.v])
    X, h = patch_points(X0, r, n)
    Y, _ = patch_points(Y0, r, n)
    if X.shape[0] > DENSE_LIMIT:
        raise ValueError(f"{X.shape[0]} points per side exceed the dense limit {DENSE_LIMIT}")
    ax = zeta0(np.linalg.norm(X - X0, axis=-1) / r)
    ay = zeta0(np.linalg.norm(Y - Y0, axis=-1) / r)
    px = phi_pairs(g, s, X, Y0[None])[:, 0]
    py = phi_pairs(g, s, X0[None], Y)[0]
    p00 = float(phi_pairs(g, s, X0[None], Y0[None])[0, 0])
    vol = h ** (g.d + g.m)
    K = np.empty((X.shape[0], Y.shape[0]), dtype=complex)
    for i in range(0, X.shape[0], chunk):
        sl = slice(i, i + chunk)
        ph = phi_pairs(g, s, X[sl], Y) - px[sl, None] - py[None, :] + p00
        amp = ax[sl, None] * ay[None, :]
        if l is not None or near_fold_levels is not None:
            D = det_pairs(g, s, X[sl], Y)
            if l is not None:
                amp = amp * dyadic_det_cutoff(D, l, delta)
            else:
                amp = amp * zeta0(2.0 ** near_fold_levels * np.abs(D) / delta)
        K[sl] = np.exp(1j * lam * ph) * amp * vol
    return K


def top_singular_value(K: np.ndarray, seed: int = 0) -> float:
    if min(K.shape) <= 64:
        return float(np.linalg.norm(K, 2))
    v0 = np.random.default_rng(seed).standard_normal(min(K.shape))
    return float(svds(K, k=1, v0=v0, return_singular_vectors=False)[0])


@dataclass
class ScalingReport:
    table: list = field(default_factory=list)  # (lam, l, norm); l = None for unlocalized, "zeta" for the remainder
    lam_slope: Optional[float] = None
    l_slope: Optional[float] = None
    zeta_slope: Optional[float] = None
    lam_target: Optional[float] = None
    l_target: float = 0.5
    zeta_target: Optional[float] = None
    skipped: list = field(default_factory=list)

    def rows(self) -> list[dict]:
        return [{"lam": lam, "l": l, "norm": v} for lam, l, v in self.table]


def h1_fold_context(g: StepTwoGroup, surface: SurfaceData) -> PhaseContext:
    """Default base on the fold set: x' - y' = 0.1, |u| = 1."""
    x = np.zeros(g.d)
    x[0] = 0.1
    u = np.zeros(g.m)
    u[0] = 1.0
    return on_fold(PhaseContext(g, surface, x, u, np.zeros(g.d), np.zeros(g.m)))


def oscillatory_norm_experiment(ctx: PhaseContext, lam_list: Sequence[float], l_list: Sequence[int],
                                l_at: Optional[float] = None, r0: float = 1.2, n: int = 16,
                                delta: Optional[float] = None, localize: bool = True,
                                zeta: bool = False) -> ScalingReport:
    """Largest singular values of T_lam[a beta_l] and the fitted exponents.

    The amplitude radius is ``r0 lam^{-1/3}``; ``delta`` (the det scale of
    beta_0) defaults to ``2.52 r0 lam_max^{-1/3}`` so the slabs are the same
    for every lam.  Pairs with 2^l > lam^{1/3} are skipped.  With
    ``localize=False`` the amplitude is not cut in det (nondegenerate control).
    """
    g = ctx.group
    N = g.d + g.m
    lams = sorted(float(x) for x in lam_list)
    lam_hi = lams[-1]
    l_at = lam_hi if l_at is None else float(l_at)
    if delta is None:
        delta = 2.52 * r0 * lam_hi ** (-1 / 3)
    rep = ScalingReport(lam_target=-N / 2, zeta_target=1 / 6 - N / 2)
    l0 = min(l_list)

    def norm(lam, l=None, levels=None):
        K = oscillatory_matrix(ctx, lam, r0 * lam ** (-1 / 3), n, delta, l=l, near_fold_levels=levels)
        return top_singular_value(K)

    base = []
    for lam in lams:
        val = norm(lam, l0 if localize else None)
        rep.table.append((lam, l0 if localize else None, val))
        base.append(val)
        log.info("lam=%g l=%s: %.6g", lam, l0, val)
    rep.lam_slope = float(np.polyfit(np.log2(lams), np.log2(base), 1)[0])
    if localize and len(l_list) > 1:
        ls, vals = [], []
        for l in sorted(l_list):
            if 2.0 ** l > l_at ** (1 / 3):
                rep.skipped.append((l_at, l))
                log.warning("skipping l=%d at lam=%g: 2^l exceeds lam^(1/3)", l, l_at)
                continue
            val = base[lams.index(l_at)] if (l == l0 and l_at in lams) else norm(l_at, l)
            if not (l == l0 and l_at in lams):
                rep.table.append((l_at, l, val))
            ls.append(l)
            vals.append(val)
        if len(ls) > 1:
            rep.l_slope = float(np.polyfit(ls, np.log2(vals), 1)[0])
    if zeta:
        zs = []
        for lam in lams:
            L = int(math.floor(math.log2(lam) / 3 - 1e-12)) + 1
            val = norm(lam, levels=L)
            rep.table.append((lam, "zeta", val))
            zs.append(val)
        rep.zeta_slope = float(np.polyfit(np.log2(lams), np.log2(zs), 1)[0])
    return rep
