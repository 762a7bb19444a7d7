"""Graph surfaces x_d = Gamma(x') with the cutoff chi and the perturbation matrix Lambda."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cutoffs import zeta0


class SurfaceError(ValueError):
    pass


GAMMA_KINDS = ("paraboloid", "sphere-cap")


@dataclass(frozen=True)
class SurfaceData:
    """Surface, cutoff and perturbation for a group of dimensions (d, m).

    ``chi(x, u) = zeta0(|x - x0| / r) * zeta0(|u - Lambda x| / r_u)`` with
    ``x0 = (0, Gamma(0))``.  ``r_u`` defaults to ``r**2``.  ``height`` shifts the
    graph off the identity: ``Gamma(0) = height``.
    """

    d: int
    m: int
    gamma: str = "paraboloid"
    support_radius: float = 1.0
    u_radius: Optional[float] = None
    Lambda: np.ndarray = field(default=None)
    lambda_bound: float = 10.0
    height: float = 1.0

    def __post_init__(self):
        if self.gamma not in GAMMA_KINDS:
            raise SurfaceError(f"unknown surface {self.gamma!r}; choose from {GAMMA_KINDS}")
        if self.support_radius <= 0:
            raise SurfaceError("support_radius must be positive")
        if self.gamma == "sphere-cap" and self.support_radius >= 1:
            raise SurfaceError("sphere-cap needs support_radius < 1")
        Lam = np.zeros((self.m, self.d)) if self.Lambda is None else np.asarray(self.Lambda, float)
        Lam = Lam.reshape(self.m, self.d)
        if np.linalg.norm(Lam, 2) > self.lambda_bound:
            raise SurfaceError("||Lambda|| exceeds the configured bound")
        Lam.setflags(write=False)
        object.__setattr__(self, "Lambda", Lam)
        if self.u_radius is None:
            object.__setattr__(self, "u_radius", self.support_radius ** 2)

    @property
    def r(self) -> float:
        return self.support_radius

    @property
    def lambda_norm(self) -> float:
        return float(np.linalg.norm(self.Lambda, 2))

    # Gamma and its derivatives act on the last axis (length d-1)
    def Gamma(self, xp):
        xp = np.asarray(xp, dtype=float)
        q = np.sum(xp * xp, axis=-1)
        if self.gamma == "paraboloid":
            return self.height + 0.5 * q
        return self.height + 1.0 - np.sqrt(1.0 - q)

    def grad_Gamma(self, xp):
        xp = np.asarray(xp, dtype=float)
        if self.gamma == "paraboloid":
            return xp.copy()
        q = np.sum(xp * xp, axis=-1, keepdims=True)
        return xp / np.sqrt(1.0 - q)

    def hess_Gamma(self, xp):
        xp = np.asarray(xp, dtype=float)
        n = xp.shape[-1]
        eye = np.broadcast_to(np.eye(n), xp.shape[:-1] + (n, n))
        if self.gamma == "paraboloid":
            return eye.copy()
        q = np.sum(xp * xp, axis=-1)[..., None, None]
        s = np.sqrt(1.0 - q)
        return eye / s + np.einsum("...i,...j->...ij", xp, xp) / s ** 3

    @property
    def x0(self) -> np.ndarray:
        return np.concatenate([np.zeros(self.d - 1), [float(self.Gamma(np.zeros(self.d - 1)))]])

    def chi(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        rx = np.linalg.norm(x - self.x0, axis=-1)
        ru = np.linalg.norm(u - x @ self.Lambda.T, axis=-1)
        return zeta0(rx / self.r) * zeta0(ru / self.u_radius)

    def euler_chi(self, x, u):
        """``d/ds chi(x/s, u/s^2)`` at s = 1, by central differences of the exact bump."""
        eps = 1e-5
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        hi = self.chi(x / (1 + eps), u / (1 + eps) ** 2)
        lo = self.chi(x / (1 - eps), u / (1 - eps) ** 2)
        return (hi - lo) / (2 * eps)

    def gradient_bound(self) -> float:
        """max |grad Gamma| over the x'-support of chi."""
        edge = np.zeros(self.d - 1)
        edge[0] = self.r
        return float(np.linalg.norm(self.grad_Gamma(edge)))

    def gradient_condition(self, c0: float, C0: float) -> dict:
        """Check |grad Gamma| <= c0 / (100 C0) on the support; reported, not enforced."""
        bound = c0 / (100.0 * C0)
        value = self.gradient_bound()
        return {"max_grad": value, "bound": bound, "holds": value <= bound}

    def curvature_ok(self) -> bool:
        edge = np.zeros(self.d - 1)
        edge[0] = min(self.r, 0.999)
        return bool(np.all(np.linalg.eigvalsh(self.hess_Gamma(edge)) > 0))

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "support_radius": self.support_radius,
            "u_radius": self.u_radius,
            "Lambda": self.Lambda.tolist(),
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, data: dict, d: int, m: int) -> "SurfaceData":
        return cls(
            d=d, m=m,
            gamma=data.get("gamma", "paraboloid"),
            support_radius=float(data.get("support_radius", 1.0)),
            u_radius=data.get("u_radius"),
            Lambda=None if data.get("Lambda") is None else np.asarray(data["Lambda"], float),
            height=float(data.get("height", 1.0)),
        )


@dataclass(frozen=True)
class Bump:
    """``b(x, u) = zeta0(|x - x0| / R) zeta0(|u - Lambda x| / R_u)``; equals 1 on supp chi when
    ``R >= 2 r`` and ``R_u >= 2 r_u``."""

    surface: SurfaceData
    scale: float = 2.0

    def __call__(self, x, u):
        s = self.surface
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        rx = np.linalg.norm(x - s.x0, axis=-1)
        ru = np.linalg.norm(u - x @ s.Lambda.T, axis=-1)
        return zeta0(rx / (self.scale * s.r)) * zeta0(ru / (self.scale * s.u_radius))

    def integral(self) -> float:
        """Exact-to-quadrature value of the integral of b (radial in x and in u - Lambda x)."""
        s = self.surface
        return _radial_integral(s.d, self.scale * s.r) * _radial_integral(s.m, self.scale * s.u_radius)


def _radial_integral(n: int, R: float) -> float:
    rr, w = np.polynomial.legendre.leggauss(200)
    rr = 0.5 * R * (rr + 1.0)
    w = 0.5 * R * w
    area = 2 * math.pi ** (n / 2) / math.gamma(n / 2)
    return float(area * np.sum(w * rr ** (n - 1) * zeta0(rr / R)))
