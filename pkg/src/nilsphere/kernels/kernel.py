"""Dyadic pieces of the surface measure.

Each kernel has the form

    K(x, u) = chi(x, u) * Bhat(x_d - Gamma(x'), u - Lambda x),
    Bhat(a, b) = (2 pi)^{-(1+m)} \\iint e^{i(sigma a + tau . b)} beta(sigma, tau) dsigma dtau,

with ``beta`` one of the cutoffs of :mod:`.cutoffs`.  ``Bhat`` is computed by a
trapezoid rule on a uniform (sigma, tau) lattice; on uniform target grids the
lattice sum is an inverse FFT, at scattered points it is a direct sum.  A
composite Gauss-Legendre rule provides an independent check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import fft as sfft

from .cutoffs import CutoffSystem, n_intermediate
from .surface import SurfaceData

KINDS = ("K0", "Kkl", "Ktilde")
TWO_PI = 2.0 * math.pi
# aliasing distance, in units of the kernel's finest spatial scale
ALIAS_WIDTH = 400.0


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class DyadicKernelSpec:
    kind: str
    surface: SurfaceData
    k: int = 0
    l: int = 0
    t: float = 1.0
    padding: float = 4.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise KernelError(f"unknown kernel kind {self.kind!r}")
        if self.t <= 0:
            raise KernelError("dilation t must be positive")
        if self.kind != "K0" and self.k < 1:
            raise KernelError("k >= 1 required")
        if self.kind == "Kkl" and not (0 <= self.l and 3 * self.l < self.k):
            raise KernelError(f"need 0 <= l < k/3, got k={self.k}, l={self.l}")
        if self.padding < 4:
            raise KernelError("padding factor must be at least 4")

    @property
    def d(self) -> int:
        return self.surface.d

    @property
    def m(self) -> int:
        return self.surface.m

    @property
    def cutoff_name(self) -> str:
        if self.kind == "K0":
            return "beta0"
        if self.kind == "Ktilde":
            return "beta_tilde_k"
        return "beta_k0" if self.l == 0 else "beta_kl"

    def dilated(self, t: float) -> "DyadicKernelSpec":
        return replace(self, t=t)

    def beta(self, sigma, tau):
        return CutoffSystem().evaluate(self.cutoff_name, self.k, self.l, sigma, tau)

    @property
    def freq_radius(self) -> float:
        return CutoffSystem().radial_support(self.cutoff_name, self.k)

    @property
    def sigma_scale(self) -> float:
        """Width of the sigma-profile of the cutoff (sets the spatial decay in a)."""
        if self.kind == "K0":
            return 1.0
        if self.kind == "Ktilde":
            return 2.0 ** (self.k - n_intermediate(self.k))
        return 2.0 ** (self.k - self.l)

    @property
    def tau_scale(self) -> float:
        return 1.0 if self.kind == "K0" else 2.0 ** self.k

    def spatial_extent(self) -> tuple[float, float]:
        """Bounds on |a| and |b| over supp chi, at t = 1."""
        s = self.surface
        edge = np.zeros(self.d - 1)
        edge[0] = s.r
        a_max = s.r + abs(float(s.Gamma(edge) - s.Gamma(np.zeros(self.d - 1))))
        return a_max, s.u_radius

    def describe(self) -> str:
        tag = {"K0": "K0", "Ktilde": f"Ktilde^{self.k}", "Kkl": f"K^{self.k},{self.l}"}[self.kind]
        return tag if self.t == 1 else f"{tag}_t={self.t:g}"


@dataclass
class FrequencyLattice:
    """Samples of the cutoff on a uniform (sigma, tau) lattice."""

    sigma: np.ndarray
    tau: np.ndarray  # shape (N_tau,) per axis, shared over the m axes
    dsigma: float
    dtau: float
    values: np.ndarray  # shape (N_sigma, N_tau, ..., N_tau)


def _lattice_step(extent: float, scale: float, padding: float) -> float:
    period = max(padding * 2.0 * extent, extent + ALIAS_WIDTH / scale)
    return TWO_PI / period


def frequency_lattice(spec: DyadicKernelSpec, multiplier: Optional[str] = None) -> FrequencyLattice:
    """Sample ``beta`` (optionally times i*sigma or i*tau_j) on a trapezoid lattice.

    ``multiplier`` is None, ``"a"`` (i sigma) or ``"b0"``, ``"b1"``, ... (i tau_j).
    """
    a_ext, b_ext = spec.spatial_extent()
    R = spec.freq_radius
    ds = _lattice_step(a_ext, spec.sigma_scale, spec.padding)
    dt = _lattice_step(b_ext, spec.tau_scale, spec.padding)
    ns = int(math.ceil(R / ds))
    nt = int(math.ceil(R / dt))
    sigma = ds * np.arange(-ns, ns + 1)
    tau = dt * np.arange(-nt, nt + 1)
    grids = np.meshgrid(sigma, *([tau] * spec.m), indexing="ij")
    tau_stack = np.stack(grids[1:], axis=-1)
    vals = spec.beta(grids[0], tau_stack).astype(complex)
    vals = _apply_multiplier(vals, multiplier, grids)
    return FrequencyLattice(sigma, tau, ds, dt, vals)


def _apply_multiplier(vals, multiplier, grids):
    if multiplier is None:
        return vals
    if multiplier == "a":
        return vals * (1j * grids[0])
    if multiplier.startswith("b"):
        j = int(multiplier[1:])
        return vals * (1j * grids[1 + j])
    raise KernelError(f"unknown multiplier {multiplier!r}")


def _norm_const(m: int) -> float:
    return TWO_PI ** (-(1 + m))


def bhat_points(spec: DyadicKernelSpec, a, b, multiplier: Optional[str] = None,
                lattice: Optional[FrequencyLattice] = None, chunk: int = 4096) -> np.ndarray:
    """Direct lattice sum of Bhat at scattered points (a: (n,), b: (n, m))."""
    lat = lattice if lattice is not None else frequency_lattice(spec, multiplier)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float).reshape(a.shape[0], spec.m)
    out = np.empty(a.shape[0], dtype=complex)
    w = _norm_const(spec.m) * lat.dsigma * lat.dtau ** spec.m
    flat = lat.values.reshape(lat.values.shape[0], -1)  # (N_sigma, N_tau^m)
    tau_axes = np.meshgrid(*([lat.tau] * spec.m), indexing="ij")
    tau_flat = np.stack([t.ravel() for t in tau_axes], axis=-1)  # (N_tau^m, m)
    for start in range(0, a.shape[0], chunk):
        sl = slice(start, start + chunk)
        eb = np.exp(1j * (b[sl] @ tau_flat.T))  # (n, N_tau^m)
        inner = eb @ flat.T  # (n, N_sigma)
        ea = np.exp(1j * np.outer(a[sl], lat.sigma))
        out[sl] = w * np.sum(ea * inner, axis=1)
    return out


def bhat_grid(spec: DyadicKernelSpec, a0: float, ha: float, na: int,
              b0, hb: float, nb: int, multiplier: Optional[str] = None) -> np.ndarray:
    """Bhat on the tensor grid a0 + i ha, b0_j + q hb via one inverse FFT.

    The lattice spacing is chosen so the FFT length covers the aliasing period;
    ``ha`` and ``hb`` must resolve the frequency support (Nyquist).
    """
    R = spec.freq_radius
    if ha > math.pi / R or hb > math.pi / R:
        raise KernelError(f"grid step too coarse for frequency radius {R:g}")
    a_ext, b_ext = spec.spatial_extent()
    b0 = np.broadcast_to(np.asarray(b0, dtype=float), (spec.m,))
    pa = TWO_PI / _lattice_step(a_ext, spec.sigma_scale, spec.padding)
    pb = TWO_PI / _lattice_step(b_ext, spec.tau_scale, spec.padding)
    Na = sfft.next_fast_len(max(na, int(math.ceil(pa / ha))))
    Nb = sfft.next_fast_len(max(nb, int(math.ceil(pb / hb))))
    sigma = TWO_PI * sfft.fftfreq(Na, ha)
    tau = TWO_PI * sfft.fftfreq(Nb, hb)
    grids = np.meshgrid(sigma, *([tau] * spec.m), indexing="ij")
    vals = spec.beta(grids[0], np.stack(grids[1:], axis=-1)).astype(complex)
    vals = _apply_multiplier(vals, multiplier, grids)
    phase = np.exp(1j * grids[0] * a0)
    for j in range(spec.m):
        phase = phase * np.exp(1j * grids[1 + j] * b0[j])
    vals *= phase
    ds, dt = TWO_PI / (Na * ha), TWO_PI / (Nb * hb)
    out = sfft.ifftn(vals) * vals.size
    out *= _norm_const(spec.m) * ds * dt ** spec.m
    idx = (slice(0, na),) + (slice(0, nb),) * spec.m
    return out[idx]


def bhat_quadrature(spec: DyadicKernelSpec, a, b, multiplier: Optional[str] = None,
                    panels: int = 64, order: int = 12) -> np.ndarray:
    """Composite Gauss-Legendre evaluation of Bhat (independent of the lattice path)."""
    R = spec.freq_radius
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(-R, R, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    grids = np.meshgrid(nodes, *([nodes] * spec.m), indexing="ij")
    vals = spec.beta(grids[0], np.stack(grids[1:], axis=-1)).astype(complex)
    vals = _apply_multiplier(vals, multiplier, grids)
    for ax in range(1 + spec.m):
        shape = [1] * (1 + spec.m)
        shape[ax] = -1
        vals = vals * weights.reshape(shape)
    # weights are folded into the values, so unit spacings
    lat = FrequencyLattice(nodes, nodes, 1.0, 1.0, vals)
    return bhat_points(spec, a, b, lattice=lat)


def _split(spec: DyadicKernelSpec, x, u):
    x = np.asarray(x, dtype=float).reshape(-1, spec.d)
    u = np.asarray(u, dtype=float).reshape(-1, spec.m)
    return x, u


def _ab(spec: DyadicKernelSpec, x, u):
    s = spec.surface
    a = x[:, -1] - s.Gamma(x[:, :-1])
    b = u - x @ s.Lambda.T
    return a, b


def eval_kernel(spec: DyadicKernelSpec, x, u, method: str = "lattice") -> np.ndarray:
    """K_t(x, u) = t^{-(d+2m)} K(x/t, u/t^2) at scattered points.

    ``method`` is ``"lattice"`` (trapezoid sum) or ``"quadrature"`` (Gauss-Legendre).
    """
    x, u = _split(spec, x, u)
    t = spec.t
    xs, us = x / t, u / t ** 2
    chi = spec.surface.chi(xs, us)
    out = np.zeros(x.shape[0], dtype=complex)
    live = chi > 0
    if np.any(live):
        a, b = _ab(spec, xs[live], us[live])
        bh = bhat_points(spec, a, b) if method == "lattice" else bhat_quadrature(spec, a, b)
        out[live] = chi[live] * bh
    return out * t ** (-(spec.d + 2 * spec.m))


def s_derivative_kernel(spec: DyadicKernelSpec, x, u, method: str = "chain",
                        eps: float = 1e-4) -> np.ndarray:
    """d/ds K_s(x, u) at s = spec.t.

    ``"chain"`` inserts the phase derivative (the rho multiplier) under the
    frequency integral; ``"fd"`` is a central difference in s.
    """
    x, u = _split(spec, x, u)
    t = spec.t
    if method == "fd":
        h = eps * t
        hi = eval_kernel(spec.dilated(t + h), x, u)
        lo = eval_kernel(spec.dilated(t - h), x, u)
        return (hi - lo) / (2 * h)
    if method != "chain":
        raise KernelError(f"unknown method {method!r}")
    s = spec.surface
    N = spec.d + 2 * spec.m
    xs, us = x / t, u / t ** 2
    chi = s.chi(xs, us)
    echi = s.euler_chi(xs, us)
    out = np.zeros(x.shape[0], dtype=complex)
    live = (chi > 0) | (echi != 0)
    if np.any(live):
        xl, ul = xs[live], us[live]
        a, b = _ab(spec, xl, ul)
        B = bhat_points(spec, a, b)
        Ba = bhat_points(spec, a, b, multiplier="a")
        da = -xl[:, -1] + np.sum(xl[:, :-1] * s.grad_Gamma(xl[:, :-1]), axis=-1)
        db = -2.0 * ul + xl @ s.Lambda.T
        acc = -N * chi[live] * B + echi[live] * B + chi[live] * da * Ba
        for j in range(spec.m):
            Bb = bhat_points(spec, a, b, multiplier=f"b{j}")
            acc = acc + chi[live] * db[:, j] * Bb
        out[live] = acc
    return out * t ** (-N - 1)
