"""Smooth cutoffs and the dyadic partition of the (sigma, tau) frequency space."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class CutoffError(ValueError):
    pass


def _exp_neg_inv(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_step(t):
    """C-infinity step: 1 for t <= 0, 0 for t >= 1, all derivatives flat at both ends."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    a = _exp_neg_inv(1.0 - t)
    b = _exp_neg_inv(t)
    return a / (a + b)


def zeta0(s):
    """Even bump: 1 on |s| <= 1/2, support in (-1, 1)."""
    s = np.abs(np.asarray(s, dtype=float))
    return smooth_step(2.0 * s - 1.0)


_FT_NODES = np.polynomial.legendre.leggauss(400)


def zeta0_ft(omega):
    """``\\int zeta0(s) e^{-i omega s} ds`` over the line (real, even in omega)."""
    omega = np.asarray(omega, dtype=float)
    x, w = _FT_NODES
    s = 0.75 + 0.25 * x
    w = 0.25 * w
    flat = np.abs(omega).ravel()
    small = flat < 1e-12
    safe = np.where(small, 1.0, flat)
    plateau = np.where(small, 0.5, np.sin(0.5 * safe) / safe)
    ramp = np.cos(np.outer(flat, s)) @ (w * zeta0(s))
    return (2.0 * (plateau + ramp)).reshape(omega.shape)


def zeta1(s):
    """Dyadic annulus piece ``zeta0(s/2) - zeta0(s)``; support 1/2 <= |s| <= 2."""
    s = np.asarray(s, dtype=float)
    return zeta0(0.5 * s) - zeta0(s)


def n_intermediate(k: int) -> int:
    """Number of l >= 1 with l < k/3."""
    return max(0, math.ceil(k / 3) - 1)


@dataclass(frozen=True)
class CutoffSystem:
    """The partition beta_0 + sum_k (beta_{k,0} + sum_l beta_{k,l} + beta~_k) = 1.

    ``beta_0 = zeta0(rho/2)`` and ``beta~_k`` uses ``zeta0(2^{L_k - k} sigma)``
    with ``L_k`` the largest admissible l; both make the sum telescope exactly.
    """

    def validate(self, which: str, k: int = 0, l: int = 0):
        if which == "beta0":
            return
        if k < 1:
            raise CutoffError(f"{which} needs k >= 1, got k={k}")
        if which == "beta_kl":
            if not (1 <= l and 3 * l < k):
                raise CutoffError(f"beta_kl needs 1 <= l < k/3, got k={k}, l={l}")
        elif which not in ("beta_k0", "beta_tilde_k"):
            raise CutoffError(f"unknown cutoff {which!r}")

    def evaluate(self, which: str, k: int, l: int, sigma, tau):
        """Evaluate a cutoff; ``tau`` may carry a trailing axis of length m."""
        self.validate(which, k, l)
        sigma = np.asarray(sigma, dtype=float)
        tau = np.asarray(tau, dtype=float)
        tau_norm = np.abs(tau) if tau.ndim == sigma.ndim else np.linalg.norm(tau, axis=-1)
        rho = np.hypot(sigma, tau_norm)
        if which == "beta0":
            return zeta0(0.5 * rho)
        ring = zeta1(2.0 ** (-k) * rho)
        if which == "beta_k0":
            return ring * (1.0 - zeta0(2.0 ** (-k) * sigma))
        if which == "beta_kl":
            return ring * zeta1(2.0 ** (l - k) * sigma)
        return ring * zeta0(2.0 ** (n_intermediate(k) - k) * sigma)

    def radial_support(self, which: str, k: int) -> float:
        """Radius of a ball in (sigma, tau) containing the support."""
        return 2.0 if which == "beta0" else 2.0 ** (k + 1)

    def partition_sum(self, sigma, tau, k_max: int | None = None):
        sigma = np.asarray(sigma, dtype=float)
        tau = np.asarray(tau, dtype=float)
        tau_norm = np.abs(tau) if tau.ndim == sigma.ndim else np.linalg.norm(tau, axis=-1)
        if k_max is None:
            rho_max = float(np.max(np.hypot(sigma, tau_norm), initial=0.0))
            k_max = max(1, int(math.ceil(math.log2(max(rho_max, 1.0)))) + 2)
        total = self.evaluate("beta0", 0, 0, sigma, tau)
        for k in range(1, k_max + 1):
            total = total + self.evaluate("beta_k0", k, 0, sigma, tau)
            for l in range(1, n_intermediate(k) + 1):
                total = total + self.evaluate("beta_kl", k, l, sigma, tau)
            total = total + self.evaluate("beta_tilde_k", k, 0, sigma, tau)
        return total


def cutoff_eval(which: str, k: int, l: int, sigma, tau):
    return CutoffSystem().evaluate(which, k, l, sigma, tau)
