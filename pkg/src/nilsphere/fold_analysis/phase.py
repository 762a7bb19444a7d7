"""Phase functions of the reduced oscillatory integral operators.

Coordinates: ``x = (x', x_d)``, ``y = (y', y_d)`` in R^d, ``u, v`` in R^m and
frequency variables ``theta = (z_d, w, sigma, tau)``.  ``Lambda`` is the m x d
perturbation matrix of the surface data, ``Lambda_d`` its last column.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..group_core import StepTwoGroup, assemble_J
from ..kernels.surface import SurfaceData

FD_STEP = np.finfo(float).eps ** (1 / 3)


class PatchError(ValueError):
    pass


@dataclass(frozen=True)
class Theta:
    z_d: float
    w: np.ndarray
    sigma: float
    tau: np.ndarray

    def vector(self) -> np.ndarray:
        """Flattened in the order (z_d, w, tau, sigma) used for the theta Hessian."""
        return np.concatenate([[self.z_d], self.w, self.tau, [self.sigma]])

    @classmethod
    def from_vector(cls, v: np.ndarray, m: int) -> "Theta":
        v = np.asarray(v, dtype=float)
        return cls(float(v[0]), v[1:1 + m], float(v[-1]), v[1 + m:1 + 2 * m])


@dataclass(frozen=True)
class PhaseContext:
    group: StepTwoGroup
    surface: SurfaceData
    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    v: np.ndarray
    theta: Optional[Theta] = None

    def __post_init__(self):
        g, s = self.group, self.surface
        if (g.d, g.m) != (s.d, s.m):
            raise PatchError("group and surface dimensions differ")
        for name, n in (("x", g.d), ("u", g.m), ("y", g.d), ("v", g.m)):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(n)
            object.__setattr__(self, name, arr)
        if s.gamma == "sphere-cap" and np.linalg.norm(self.xp - self.yp) >= 1:
            raise PatchError("x' - y' leaves the domain of Gamma")

    @property
    def d(self) -> int:
        return self.group.d

    @property
    def m(self) -> int:
        return self.group.m

    @property
    def xp(self) -> np.ndarray:
        return self.x[:-1]

    @property
    def yp(self) -> np.ndarray:
        return self.y[:-1]

    @property
    def Lam(self) -> np.ndarray:
        return self.surface.Lambda

    @property
    def Ju(self) -> np.ndarray:
        return assemble_J(self.group, self.u)

    @property
    def A(self) -> np.ndarray:
        return self.surface.hess_Gamma(self.xp - self.yp)

    @property
    def B(self) -> np.ndarray:
        return self.surface.grad_Gamma(self.xp - self.yp)

    @property
    def Gam(self) -> float:
        return float(self.surface.Gamma(self.xp - self.yp))

    @property
    def P(self) -> np.ndarray:
        return np.eye(self.d)[:-1]

    @property
    def Xi(self) -> np.ndarray:
        """Xi_i = e_d^T J_i y + Lambda_{id}."""
        return self.group.J[:, -1, :] @ self.y + self.Lam[:, -1]

    @property
    def sigma_cr(self) -> float:
        return float(self.x[-1] - self.u @ self.Xi)

    def moved(self, **kw) -> "PhaseContext":
        return replace(self, **kw)


def E_of_B(Ju: np.ndarray, B: np.ndarray) -> np.ndarray:
    """B e_d^T J_u P^T + P J_u e_d B^T (skew)."""
    row = Ju[-1, :-1]
    col = Ju[:-1, -1]
    return np.outer(B, row) + np.outer(col, B)


def Psi(ctx: PhaseContext, th: Theta) -> float:
    x, u, y, v = ctx.x, ctx.u, ctx.y, ctx.v
    L, J = ctx.Lam, ctx.group.J
    xz = np.concatenate([ctx.xp, [th.z_d]])
    inner = (th.w - v + L[:, :-1] @ (ctx.xp - ctx.yp) + L[:, -1] * (th.z_d - y[-1])
             + np.einsum("i,kij,j->k", xz, J, y))
    return float(-x[-1] * th.z_d - u @ th.w + th.sigma * (th.z_d - y[-1] - ctx.Gam) + th.tau @ inner)


def grad_Psi(ctx: PhaseContext, th: Theta) -> Theta:
    """Gradient in theta, returned as a Theta of partial derivatives."""
    J = ctx.group.J
    xz = np.concatenate([ctx.xp, [th.z_d]])
    d_z = -ctx.x[-1] + th.tau @ (J[:, -1, :] @ ctx.y) + th.sigma + th.tau @ ctx.Lam[:, -1]
    d_w = th.tau - ctx.u
    d_tau = (th.w - ctx.v + np.einsum("i,kij,j->k", xz, J, ctx.y) + ctx.Lam[:, :-1] @ (ctx.xp - ctx.yp)
             + ctx.Lam[:, -1] * (th.z_d - ctx.y[-1]))
    d_sigma = th.z_d - ctx.y[-1] - ctx.Gam
    return Theta(float(d_z), d_w, float(d_sigma), d_tau)


def theta_crit(ctx: PhaseContext) -> Theta:
    y, J, L = ctx.y, ctx.group.J, ctx.Lam
    Gm = ctx.Gam
    z = y[-1] + Gm
    xz = np.concatenate([ctx.xp, [z]])
    w = ctx.v - np.einsum("i,kij,j->k", xz, J, y) - L[:, :-1] @ (ctx.xp - ctx.yp) - L[:, -1] * Gm
    return Theta(float(z), w, ctx.sigma_cr, ctx.u.copy())


def theta_hessian(ctx: PhaseContext) -> np.ndarray:
    """Psi_theta_theta in the order (z_d, w, tau, sigma); independent of theta."""
    m = ctx.m
    H = np.zeros((2 * m + 2, 2 * m + 2))
    Xi = ctx.Xi
    H[0, 1 + m:1 + 2 * m] = Xi
    H[1 + m:1 + 2 * m, 0] = Xi
    H[0, -1] = H[-1, 0] = 1.0
    H[1:1 + m, 1 + m:1 + 2 * m] = np.eye(m)
    H[1 + m:1 + 2 * m, 1:1 + m] = np.eye(m)
    return H


def theta_hessian_det(m: int) -> float:
    """Closed form det Psi_theta_theta = (-1)^{m+1}."""
    return float((-1) ** (m + 1))


def phase_Phi(ctx: PhaseContext) -> float:
    """Closed form of Psi at theta_crit."""
    x, u, y, v = ctx.x, ctx.u, ctx.y, ctx.v
    L, J = ctx.Lam, ctx.group.J
    Gm = ctx.Gam
    xz = np.concatenate([ctx.xp, [y[-1] + Gm]])
    bracket = v - np.einsum("i,kij,j->k", xz, J, y) - L[:, -1] * Gm - L[:, :-1] @ (ctx.xp - ctx.yp)
    return float(-x[-1] * (y[-1] + Gm) - u @ bracket)


def _phi_flat(ctx: PhaseContext, X: np.ndarray, Y: np.ndarray) -> float:
    d, m = ctx.d, ctx.m
    c = ctx.moved(x=X[:d], u=X[d:], y=Y[:d], v=Y[d:])
    return phase_Phi(c)


def mixed_hessian(ctx: PhaseContext) -> np.ndarray:
    """Closed form of the mixed Hessian d^2 Phi / d(x, u) d(y, v).

    Rows (x', x_d, u), columns (y', y_d, v).  Differentiating the closed form
    of Phi gives the block -I in the (u, v) slot.
    """
    d, m = ctx.d, ctx.m
    J, L = ctx.group.J, ctx.Lam
    A, B, Ju, P = ctx.A, ctx.B, ctx.Ju, ctx.P
    Gm = ctx.Gam
    xp, y = ctx.xp, ctx.y
    H = np.zeros((d + m, d + m))
    H[:d - 1, :d - 1] = ctx.sigma_cr * A + P @ Ju @ P.T + np.outer(B, Ju[-1, :-1])
    H[:d - 1, d - 1] = Ju[:-1, -1]
    H[d - 1, :d - 1] = B
    H[d - 1, d - 1] = -1.0
    Xi = ctx.Xi
    for i in range(m):
        Ji = J[i]
        C = (xp @ Ji[:-1, :-1] + y[-1] * Ji[-1, :-1] - Xi[i] * B - L[i, :-1] + Gm * Ji[-1, :-1])
        H[d + i, :d - 1] = C
        H[d + i, d - 1] = xp @ Ji[:-1, -1] + Ji[-1, :] @ y
    H[d:, d:] = -np.eye(m)
    return H


def mixed_hessian_fd(ctx: PhaseContext, h: Optional[float] = None) -> np.ndarray:
    """Central second differences of Phi (oracle)."""
    d, m = ctx.d, ctx.m
    h = h or np.finfo(float).eps ** 0.25
    X0 = np.concatenate([ctx.x, ctx.u])
    Y0 = np.concatenate([ctx.y, ctx.v])
    n = d + m
    H = np.empty((n, n))
    I = np.eye(n) * h
    for i in range(n):
        for j in range(n):
            H[i, j] = (_phi_flat(ctx, X0 + I[i], Y0 + I[j]) - _phi_flat(ctx, X0 + I[i], Y0 - I[j])
                       - _phi_flat(ctx, X0 - I[i], Y0 + I[j]) + _phi_flat(ctx, X0 - I[i], Y0 - I[j])) / (4 * h * h)
    return H


def det_sign(d: int, m: int) -> float:
    """Sign relating det of the mixed Hessian to det(sigma A + P J_u P^T + E(B))."""
    return float((-1) ** (m + 1))


def det_factorization(ctx: PhaseContext) -> dict:
    H = mixed_hessian(ctx)
    M = ctx.sigma_cr * ctx.A + ctx.P @ ctx.Ju @ ctx.P.T + E_of_B(ctx.Ju, ctx.B)
    return {
        "det_direct": float(np.linalg.det(H)),
        "det_formula": det_sign(ctx.d, ctx.m) * float(np.linalg.det(M)),
        "sigma_cr": ctx.sigma_cr,
        "scale": float(np.linalg.norm(H, 2) ** (ctx.d + ctx.m)),
    }


def on_fold(ctx: PhaseContext) -> PhaseContext:
    """Move x_d so that sigma_cr = 0 (linear in x_d)."""
    x = ctx.x.copy()
    x[-1] = float(ctx.u @ ctx.Xi)
    return ctx.moved(x=x)
