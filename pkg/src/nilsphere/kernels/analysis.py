"""Integrals, L1 sizes and cancellation correction of the dyadic kernels.

In the coordinates ``a = x_d - Gamma(x')``, ``b = u - Lambda x`` the cutoff
factors as ``chi = zeta0(|x - x0| / r) zeta0(|b| / r_u)`` and ``Bhat`` does not
depend on ``x'``.  Integrating out ``x'`` gives the profile

    w(a) = \\int zeta0(|(x', a + Gamma(x') - Gamma(0))| / r) dx',

so ``\\iint K = \\iint Bhat(a, b) w(a) psi(b) da db`` with ``psi = zeta0(|.|/r_u)``.
The frequency form of this integral never forms the cancelling sum and keeps
full relative accuracy for the tiny values of ``gamma``.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy import special

from .cutoffs import zeta0, zeta0_ft
from .kernel import DyadicKernelSpec, KernelError, bhat_grid, eval_kernel
from .surface import Bump, SurfaceData

TWO_PI = 2.0 * math.pi


def _sphere_area(n: int) -> float:
    """Surface area of the unit sphere in R^n."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def _gl(a: float, b: float, n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def _composite(a: float, b: float, panels: int, order: int = 16):
    edges = np.linspace(a, b, panels + 1)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        x, w = _gl(lo, hi, order)
        nodes.append(x)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def a_range(s: SurfaceData) -> tuple[float, float]:
    edge = np.zeros(s.d - 1)
    edge[0] = s.r
    bend = float(s.Gamma(edge) - s.Gamma(np.zeros(s.d - 1)))
    return -s.r - max(bend, 0.0), s.r - min(bend, 0.0)


def profile_w(s: SurfaceData, a, nodes: int = 256) -> np.ndarray:
    """The x'-integrated cutoff profile w(a); Gamma is radial in x'."""
    a = np.asarray(a, dtype=float)
    n = s.d - 1
    rho, wr = _composite(0.0, s.r, 8, nodes // 8)
    pts = np.zeros((rho.size, n))
    pts[:, 0] = rho
    bend = s.Gamma(pts) - s.Gamma(np.zeros(n))
    vals = zeta0(np.hypot(rho[None, :], a.reshape(-1, 1) + bend[None, :]) / s.r)
    if n == 1:
        # the integrand is even in x'
        return (2.0 * vals @ wr).reshape(a.shape)
    return (_sphere_area(n) * vals @ (wr * rho ** (n - 1))).reshape(a.shape)


def psi_ft(s: SurfaceData, tau_norm) -> np.ndarray:
    """Fourier transform of zeta0(|b| / r_u) on R^m at frequency radius |tau|."""
    t = np.abs(np.asarray(tau_norm, dtype=float))
    ru, m = s.u_radius, s.m
    if m == 1:
        return ru * zeta0_ft(ru * t)
    rho, w = _composite(0.0, ru, 8, 32)
    flat = t.ravel()
    out = np.empty(flat.size)
    small = flat < 1e-12
    out[small] = _sphere_area(m) * np.sum(w * rho ** (m - 1) * zeta0(rho / ru))
    tt = flat[~small][:, None]
    nu = m / 2 - 1
    radial = rho ** (m / 2) * special.jv(nu, tt * rho) * zeta0(rho / ru)
    out[~small] = TWO_PI ** (m / 2) * tt[:, 0] ** (-nu) * (radial @ w)
    return out.reshape(t.shape)


def phi_hat(s: SurfaceData, sigma) -> np.ndarray:
    """\\int w(a) e^{-i sigma a} da."""
    sigma = np.asarray(sigma, dtype=float)
    lo, hi = a_range(s)
    smax = float(np.max(np.abs(sigma), initial=0.0))
    panels = max(16, int(math.ceil(smax * (hi - lo) / (TWO_PI * 2))))
    a, wa = _composite(lo, hi, panels, 16)
    wv = profile_w(s, a) * wa
    flat = sigma.ravel()
    out = np.empty(flat.size, dtype=complex)
    for start in range(0, flat.size, 512):
        sl = slice(start, start + 512)
        out[sl] = np.exp(-1j * np.outer(flat[sl], a)) @ wv
    return out.reshape(sigma.shape)


def kernel_integral(spec: DyadicKernelSpec, method: str = "frequency") -> complex:
    """\\iint K at t = 1.

    ``"frequency"``: (2 pi)^{-(1+m)} \\iint beta(sigma, tau) phi_hat(-sigma) psi_hat(|tau|).
    ``"spatial"``: trapezoid sum of Bhat w psi on a uniform (a, b) grid (m = 1).
    """
    s, m = spec.surface, spec.m
    R = spec.freq_radius
    if method == "frequency":
        sig, ws = _composite(-R, R, max(32, int(R)), 16)
        rho, wr = _composite(0.0, R, max(16, int(R / 2)), 16)
        if m == 1:
            # beta is even in tau
            rho, wr = rho, 2.0 * wr
        else:
            wr = wr * _sphere_area(m) * rho ** (m - 1)
        beta = spec.beta(sig[:, None], np.stack([rho] + [np.zeros_like(rho)] * (m - 1), -1)[None])
        ph = phi_hat(s, -sig)
        ps = psi_ft(s, rho)
        val = (ws * ph) @ beta @ (wr * ps)
        return complex(val / TWO_PI ** (1 + m))
    if method == "spatial":
        A, B, ha, hb = _ab_grid(spec)
        W = profile_w(s, A)
        P = zeta0(np.abs(B) / s.u_radius)
        Bh = bhat_grid(spec, A[0], ha, A.size, B[0], hb, B.size)
        return complex(W @ Bh @ P * ha * hb)
    raise KernelError(f"unknown method {method!r}")


# beyond this multiple of 1/width the transform of a zeta0 profile is below ~1e-9
PROFILE_TAIL = 320.0


def _ab_grid(spec: DyadicKernelSpec):
    s = spec.surface
    if s.m != 1:
        raise KernelError("grid quadrature in (a, b) is implemented for m = 1")
    lo, hi = a_range(s)
    # trapezoid aliasing sits at 2 pi / h - R; push it past the profile tail
    R = spec.freq_radius
    h = min(math.pi / R, TWO_PI / (R + PROFILE_TAIL / min(s.r, s.u_radius)))
    na = int(math.ceil((hi - lo) / h)) + 1
    nb = 2 * int(math.ceil(s.u_radius / h)) + 1
    A = lo + h * np.arange(na)
    B = h * (np.arange(nb) - (nb - 1) / 2)
    return A, B, h, h


@dataclass(frozen=True)
class CorrectedKernel:
    """``K - gamma b``, integrating to zero."""

    spec: DyadicKernelSpec
    gamma: complex
    bump: Bump

    def __call__(self, x, u):
        t = self.spec.t
        N = self.spec.d + 2 * self.spec.m
        x = np.asarray(x, dtype=float).reshape(-1, self.spec.d)
        u = np.asarray(u, dtype=float).reshape(-1, self.spec.m)
        b = self.bump(x / t, u / t ** 2) * t ** (-N)
        return eval_kernel(self.spec, x, u) - self.gamma * b


def cancellation_correct(spec: DyadicKernelSpec, bump: Optional[Bump] = None) -> tuple[complex, CorrectedKernel]:
    """gamma = \\iint K / \\iint b and the corrected kernel K - gamma b."""
    bump = bump or Bump(spec.surface)
    if bump.scale < 2.0:
        raise KernelError("the bump must equal 1 on supp chi (scale >= 2)")
    ib = bump.integral()
    if ib == 0:
        raise KernelError("bump has zero integral")
    gamma = kernel_integral(spec) / ib
    return gamma, CorrectedKernel(spec, gamma, bump)


def kernel_l1(spec: DyadicKernelSpec) -> float:
    """||K||_1 at t = 1 (dilation invariant)."""
    s = spec.surface
    A, B, ha, hb = _ab_grid(spec)
    Bh = bhat_grid(spec, A[0], ha, A.size, B[0], hb, B.size)
    return float(profile_w(s, A) @ np.abs(Bh) @ zeta0(np.abs(B) / s.u_radius) * ha * hb)


def sderiv_l1(spec: DyadicKernelSpec, x_nodes: int = 48) -> float:
    """||d/ds K_s||_1 at s = 1, integrating over x' by Gauss-Legendre (d = 2, m = 1)."""
    s = spec.surface
    if (s.d, s.m) != (2, 1):
        raise KernelError("sderiv_l1 is implemented for d = 2, m = 1")
    A, B, ha, hb = _ab_grid(spec)
    Bh = bhat_grid(spec, A[0], ha, A.size, B[0], hb, B.size)
    Ba = bhat_grid(spec, A[0], ha, A.size, B[0], hb, B.size, multiplier="a")
    Bb = bhat_grid(spec, A[0], ha, A.size, B[0], hb, B.size, multiplier="b0")
    N = s.d + 2 * s.m
    xp, wx = _composite(-s.r, s.r, 4, x_nodes // 4)
    total = 0.0
    for x1, w1 in zip(xp, wx):
        xd = A + float(s.Gamma(np.array([x1])))
        X = np.stack(np.broadcast_arrays(x1, xd[:, None], B[None, :])[:2], -1)
        U = np.broadcast_to(B[None, :], X.shape[:2])[..., None] + X @ s.Lambda.T
        chi = s.chi(X, U)
        if not np.any(chi):
            continue
        echi = s.euler_chi(X, U)
        da = -xd + x1 * float(s.grad_Gamma(np.array([x1]))[0])
        db = -2.0 * U[..., 0] + (X @ s.Lambda.T)[..., 0]
        val = (echi - N * chi) * Bh + chi * (da[:, None] * Ba + db * Bb)
        total += w1 * np.sum(np.abs(val)) * ha * hb
    return float(total)


def pointwise_constant(spec: DyadicKernelSpec, N: int = 2) -> float:
    """Smallest C with |K| <= C 2^{k-l} (1 + 2^{k-l}|a|)^{-N} 2^{km} (1 + 2^k |b|)^{-N} on the grid."""
    s = spec.surface
    A, B, ha, hb = _ab_grid(spec)
    Bh = np.abs(bhat_grid(spec, A[0], ha, A.size, B[0], hb, B.size))
    # chi peaks at 1 over x' for every a, b inside its support
    env = (profile_w(s, A) > 0)[:, None] * (zeta0(np.abs(B) / s.u_radius) > 0)[None, :]
    sa = 2.0 ** (spec.k - spec.l)
    sb = 2.0 ** spec.k
    bound = sa * (1 + sa * np.abs(A))[:, None] ** (-N) * sb ** s.m * (1 + sb * np.abs(B))[None, :] ** (-N)
    return float(np.max(np.where(env, Bh / bound, 0.0)))


@dataclass(frozen=True)
class KernelSizeReport:
    kernel: str
    l1_norm: float
    l1_norm_sderiv: float
    pointwise_constant: float


def kernel_size_report(spec: DyadicKernelSpec) -> KernelSizeReport:
    return KernelSizeReport(spec.describe(), kernel_l1(spec), sderiv_l1(spec), pointwise_constant(spec))


def export_binary(path: Union[str, Path], values: np.ndarray, spacings: Sequence[float]) -> None:
    """Header: ndim (as double), dims, spacings (IEEE doubles, little endian); then
    row-major complex values as (re, im) double pairs."""
    v = np.ascontiguousarray(values, dtype=np.complex128)
    if len(spacings) != v.ndim:
        raise KernelError("one spacing per axis required")
    head = [float(v.ndim), *map(float, v.shape), *map(float, spacings)]
    with open(path, "wb") as fh:
        fh.write(struct.pack(f"<{len(head)}d", *head))
        fh.write(v.astype("<c16").tobytes())


def import_binary(path: Union[str, Path]) -> tuple[np.ndarray, tuple]:
    raw = Path(path).read_bytes()
    ndim = int(struct.unpack_from("<d", raw, 0)[0])
    head = struct.unpack_from(f"<{1 + 2 * ndim}d", raw, 0)
    shape = tuple(int(x) for x in head[1: 1 + ndim])
    spacings = tuple(head[1 + ndim:])
    vals = np.frombuffer(raw, dtype="<c16", offset=8 * (1 + 2 * ndim)).reshape(shape)
    return vals.copy(), spacings


def export_csv(path: Union[str, Path], x: np.ndarray, u: np.ndarray, values: np.ndarray,
               max_rows: int = 100_000) -> None:
    """One row per sample point: x_1..x_d, u_1..u_m, re, im."""
    x = np.asarray(x).reshape(len(values), -1)
    u = np.asarray(u).reshape(len(values), -1)
    if len(values) > max_rows:
        raise KernelError(f"{len(values)} rows exceed the CSV limit {max_rows}; use the binary export")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"x{i + 1}" for i in range(x.shape[1])] + [f"u{i + 1}" for i in range(u.shape[1])] + ["re", "im"])
        for xi, ui, v in zip(x, u, values):
            wr.writerow([f"{c:.12g}" for c in (*xi, *ui, v.real, v.imag)])
