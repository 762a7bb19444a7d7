"""Fold conditions for the canonical relation of the phase Phi."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..group_core import StepTwoGroup, nondegeneracy_constants
from ..kernels.surface import SurfaceData
from .phase import FD_STEP, E_of_B, PhaseContext, mixed_hessian, on_fold

RANK_TOL = 1e-9


@dataclass
class FoldReport:
    sigma_cr: float
    det_mixed: float
    kernel_dim: int
    W_L: np.ndarray
    W_R: np.ndarray
    transversal_derivative_L: float
    transversal_derivative_R: float
    floor: float
    rank: int

    @property
    def holds(self) -> bool:
        return (self.kernel_dim == 1
                and abs(self.transversal_derivative_L) >= self.floor
                and abs(self.transversal_derivative_R) >= self.floor)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["W_L"] = self.W_L.tolist()
        out["W_R"] = self.W_R.tolist()
        out["holds"] = self.holds
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def leading_scale(ctx: PhaseContext) -> float:
    """<A e, e> times the product of the nonzero singular values of P J_u P^T + E(B)."""
    M = ctx.P @ ctx.Ju @ ctx.P.T + E_of_B(ctx.Ju, ctx.B)
    _, s, Vt = np.linalg.svd(M) if M.size else (None, np.zeros(0), np.ones((1, 1)))
    e = Vt[-1]
    return float(e @ ctx.A @ e) * float(np.prod(s[:-1]))


def _det_along(ctx: PhaseContext, V: np.ndarray, side: str) -> float:
    d = ctx.d
    h = FD_STEP

    def det_at(eps):
        if side == "L":
            c = ctx.moved(y=ctx.y + eps * V[:d], v=ctx.v + eps * V[d:])
        else:
            c = ctx.moved(x=ctx.x + eps * V[:d], u=ctx.u + eps * V[d:])
        return np.linalg.det(mixed_hessian(c))

    return float((det_at(h) - det_at(-h)) / (2 * h))


def fold_condition_check(ctx: PhaseContext, c0: Optional[float] = None,
                         c_floor: Optional[float] = None) -> FoldReport:
    """Rank, null vectors and transversal derivatives of det at a fold point.

    ``ctx`` is first moved onto the fold set (sigma_cr = 0).  The default floor
    is ``0.1 c0`` times the leading coefficient scale of the determinant.
    """
    ctx = on_fold(ctx)
    if c0 is None:
        c0 = nondegeneracy_constants(ctx.group).c0
    H = mixed_hessian(ctx)
    U, s, Vt = np.linalg.svd(H)
    rank = int(np.sum(s > RANK_TOL * s[0]))
    V_L = Vt[-1]
    V_R = U[:, -1]
    d = ctx.d
    if c_floor is None:
        c_floor = max(0.1 * c0 * abs(leading_scale(ctx)), 1e-6)
    return FoldReport(
        sigma_cr=ctx.sigma_cr,
        det_mixed=float(np.linalg.det(H)),
        kernel_dim=H.shape[0] - rank,
        W_L=_unit(V_L[: d - 1]),
        W_R=_unit(V_R[: d - 1]),
        transversal_derivative_L=_det_along(ctx, V_L, "L"),
        transversal_derivative_R=_det_along(ctx, V_R, "R"),
        floor=float(c_floor),
        rank=rank,
    )


def sample_fold_points(g: StepTwoGroup, surface: SurfaceData, n: int, seed: int = 0,
                       spread: float = 0.15) -> list[PhaseContext]:
    """Random bases with |x' - y'| <= spread and |u| in [1/2, 3/2], moved onto the fold set."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        y = rng.uniform(-0.5, 0.5, g.d)
        off = rng.standard_normal(g.d - 1)
        off *= spread * rng.uniform() / max(np.linalg.norm(off), 1e-12)
        x = np.concatenate([y[:-1] + off, [0.0]])
        u = rng.standard_normal(g.m)
        u *= rng.uniform(0.5, 1.5) / np.linalg.norm(u)
        v = rng.uniform(-0.5, 0.5, g.m)
        out.append(on_fold(PhaseContext(g, surface, x, u, y, v)))
    return out
