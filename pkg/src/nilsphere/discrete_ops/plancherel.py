"""L^2 norms of convolution operators on H^1 through the Plancherel reduction.

A transform in the central variable turns right convolution by ``g`` into a
family of twisted convolutions in x.  A further transform in ``x2`` and a
shear leave, for each ``lam``, an integral operator on L^2(R) with kernel

    k_lam(x, y) = G(x - y; lam (x + y), lam),
    G(z; xi, lam) = \\iint g(z, x2, u) e^{-i (xi x2 + lam u)} dx2 du,

and ``||f -> f * g|| = sup_lam ||k_lam||``.  At ``lam = 0`` the operator is a
Euclidean convolution whose norm is the sup of the symbol.

Kernels enter through *sources* exposing the partial transform
``W(z, x2; lam) = \\int g(z, x2, u) e^{-i lam u} du``; sources combine linearly,
which covers cancellation-corrected kernels and finite differences in the
dilation parameter.  Requires d = 2, m = 1 and Lambda = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import fft as sfft
from scipy.optimize import minimize_scalar
from scipy.sparse.linalg import LinearOperator, svds

from ..kernels.cutoffs import zeta0, zeta0_ft as bump_ft
from ..kernels.kernel import DyadicKernelSpec, _lattice_step
from ..kernels.surface import Bump, SurfaceData

TWO_PI = 2.0 * math.pi
# |FT of zeta0| relative to its peak falls below ~1e-6 past this frequency
BUMP_TAIL = 160.0


class PlancherelError(ValueError):
    pass


def _check_surface(s: SurfaceData):
    if (s.d, s.m) != (2, 1):
        raise PlancherelError("the Plancherel reduction is implemented for H^1 (d=2, m=1)")
    if s.lambda_norm != 0:
        raise PlancherelError("the Plancherel reduction needs Lambda = 0")


class Source:
    """Partial transform W(z, x2; lam) of a kernel on H^1."""

    radius: float  # support radius in z
    x2_lo: float  # support of W in x2
    x2_hi: float
    z_band: float  # frequency content in z
    xi_band: float  # frequency content in x2
    lam_band: float  # |lam| beyond which W vanishes

    def W(self, z: np.ndarray, x2: np.ndarray, lam: float, hx2: float) -> np.ndarray:
        raise NotImplementedError

    def __add__(self, other: "Source") -> "Source":
        return Combination([(1.0, self), (1.0, other)])

    def __rmul__(self, c: complex) -> "Source":
        return Combination([(c, self)])

    def __sub__(self, other: "Source") -> "Source":
        return Combination([(1.0, self), (-1.0, other)])


@dataclass
class Combination(Source):
    terms: Sequence[tuple]

    def __post_init__(self):
        srcs = [s for _, s in self.terms]
        self.radius = max(s.radius for s in srcs)
        self.x2_lo = min(s.x2_lo for s in srcs)
        self.x2_hi = max(s.x2_hi for s in srcs)
        self.z_band = max(s.z_band for s in srcs)
        self.xi_band = max(s.xi_band for s in srcs)
        self.lam_band = max(s.lam_band for s in srcs)

    def W(self, z, x2, lam, hx2):
        out = 0
        for c, s in self.terms:
            if c != 0:
                out = out + c * s.W(z, x2, lam, hx2)
        return out


@dataclass
class DyadicSource(Source):
    """The dilated kernel K_t of a :class:`DyadicKernelSpec`."""

    spec: DyadicKernelSpec
    tail: float = BUMP_TAIL

    def __post_init__(self):
        s = self.spec.surface
        _check_surface(s)
        t, r = self.spec.t, s.r
        R = self.spec.freq_radius
        slope = float(np.abs(s.grad_Gamma(np.array([r]))).max())
        self.radius = t * r
        self.x2_lo, self.x2_hi = t * (s.height - r), t * (s.height + r)
        self.z_band = (R * slope + self.tail / r) / t
        self.xi_band = (R + self.tail / r) / t
        self.lam_band = (R + self.tail / s.u_radius) / t ** 2
        self._cache = {}

    def _beta_tilde(self, lam_s: float, ha: float):
        """(sigma lattice, beta~(sigma, lam_s)) for evaluation steps ``ha`` in a."""
        key = (lam_s, ha)
        if key in self._cache:
            return self._cache[key]
        spec, s = self.spec, self.spec.surface
        a_ext, b_ext = spec.spatial_extent()
        Pa = TWO_PI / _lattice_step(a_ext, spec.sigma_scale, spec.padding)
        Na = sfft.next_fast_len(int(math.ceil(Pa / ha)))
        sigma = TWO_PI * sfft.fftfreq(Na, ha)
        dtau = _lattice_step(b_ext, spec.tau_scale, spec.padding)
        R = spec.freq_radius
        nt = int(math.ceil(R / dtau))
        tau = dtau * np.arange(-nt, nt + 1)
        ru = s.u_radius
        near = np.abs(lam_s - tau) <= self.tail / ru * 2
        tau = tau[near]
        live = np.abs(sigma) <= R
        bt = np.zeros(Na)
        if tau.size:
            uhat = ru * bump_ft(ru * (lam_s - tau))
            beta = spec.beta(sigma[live][:, None], tau[None, :, None])
            bt[live] = dtau * (beta @ uhat)
        self._cache = {key: (sigma, bt, Na)}
        return sigma, bt, Na

    def W(self, z, x2, lam, hx2):
        spec, s = self.spec, self.spec.surface
        t, r = spec.t, s.r
        ha = hx2 / t
        if ha > math.pi / spec.freq_radius:
            raise PlancherelError("x2 step does not resolve the kernel's frequency support")
        sigma, bt, Na = self._beta_tilde(t * t * lam, ha)
        out = np.zeros((z.size, x2.size), dtype=complex)
        if not np.any(bt):
            return out
        zs = z / t
        inside = np.abs(zs) < r
        norm = TWO_PI ** -2 * (TWO_PI / (Na * ha))
        a_start = x2[0] / t
        for i in np.nonzero(inside)[0]:
            a0 = a_start - float(s.Gamma(np.array([zs[i]])))
            C = sfft.ifft(bt * np.exp(1j * sigma * a0)) * (Na * norm)
            C = C[: x2.size] if x2.size <= Na else np.resize(C, x2.size)
            chi = zeta0(np.hypot(zs[i], x2 / t - s.height) / r)
            out[i] = chi * C
        return out / t ** 2


@dataclass
class BumpSource(Source):
    """The dilated bump b_t used in the cancellation correction."""

    bump: Bump
    t: float = 1.0
    tail: float = BUMP_TAIL

    def __post_init__(self):
        s = self.bump.surface
        _check_surface(s)
        self.Rx = self.bump.scale * s.r
        self.Ru = self.bump.scale * s.u_radius
        self.radius = self.t * self.Rx
        self.x2_lo = self.t * (s.height - self.Rx)
        self.x2_hi = self.t * (s.height + self.Rx)
        self.z_band = self.tail / (self.Rx * self.t)
        self.xi_band = self.z_band
        self.lam_band = self.tail / self.Ru / self.t ** 2

    def W(self, z, x2, lam, hx2):
        t = self.t
        uhat = self.Ru * float(bump_ft(self.Ru * t * t * lam))
        rho = np.hypot(z[:, None] / t, x2[None, :] / t - self.bump.surface.height)
        return (uhat / t ** 2) * zeta0(rho / self.Rx).astype(complex)


def dilation_derivative(make: Callable[[float], Source], t: float, eps: float = 1e-4) -> Source:
    """Central difference d/ds of the source family ``make(s)`` at ``s = t``."""
    h = eps * t
    return Combination([(1.0 / (2 * h), make(t + h)), (-1.0 / (2 * h), make(t - h))])


@dataclass
class ReducedGrid:
    """Common x-grid for the reduced operators at one value of lam."""

    lam: float
    h: float
    n: int
    band: int
    hx2: float
    n_fft: int

    @property
    def x(self) -> np.ndarray:
        return self.h * (np.arange(self.n) - (self.n - 1) / 2)


def reduced_grid(sources: Sequence[Source], lam: float, oversample: float = 1.5,
                 max_points: int = 60_000) -> ReducedGrid:
    if lam == 0:
        raise PlancherelError("lam = 0 is handled by the symbol")
    R = max(s.radius for s in sources)
    X = max(max(abs(s.x2_lo), abs(s.x2_hi)) for s in sources)
    zb = max(s.z_band for s in sources)
    xb = max(s.xi_band for s in sources)
    # smallest frequency extent bounds the rows that matter for a product
    xcut = min(s.xi_band for s in sources)
    al = abs(lam)
    h = math.pi / (oversample * (zb + 2 * al * X))
    half = xcut / (2 * al) + R
    n = 2 * int(math.ceil(half / h)) + 1
    if n > max_points:
        raise PlancherelError(f"reduced grid needs {n} points at lam={lam:g} (limit {max_points})")
    band = int(math.ceil(R / h))
    hx2_max = math.pi / (oversample * xb)
    n_fft = sfft.next_fast_len(int(math.ceil(math.pi / (al * h * hx2_max))))
    hx2 = math.pi / (al * h * n_fft)
    return ReducedGrid(lam, h, n, band, hx2, n_fft)


class BandedOperator:
    """Banded n x n matrix stored by diagonals: A[i, i - delta] = diags[delta + band, i]."""

    def __init__(self, diags: np.ndarray, band: int):
        self.diags = diags
        self.band = band
        self.n = diags.shape[1]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n, dtype=complex)
        for k in range(2 * self.band + 1):
            dl = k - self.band
            if dl >= 0:
                out[dl:] += self.diags[k, dl:] * v[: self.n - dl]
            else:
                out[:dl] += self.diags[k, :dl] * v[-dl:]
        return out

    def rmatvec(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n, dtype=complex)
        vc = v
        for k in range(2 * self.band + 1):
            dl = k - self.band
            if dl >= 0:
                out[: self.n - dl] += np.conj(self.diags[k, dl:]) * vc[dl:]
            else:
                out[-dl:] += np.conj(self.diags[k, :dl]) * vc[:dl]
        return out

    def dense(self) -> np.ndarray:
        A = np.zeros((self.n, self.n), dtype=complex)
        for k in range(2 * self.band + 1):
            dl = k - self.band
            i = np.arange(max(dl, 0), min(self.n, self.n + dl))
            A[i, i - dl] = self.diags[k, i]
        return A


def reduced_operator(src: Source, grid: ReducedGrid) -> BandedOperator:
    """Nystrom discretization of k_lam on ``grid``."""
    lam, h, n, B = grid.lam, grid.h, grid.n, grid.band
    c = (n - 1) / 2
    nx2 = int(math.ceil((src.x2_hi - src.x2_lo) / grid.hx2)) + 1
    x2 = src.x2_lo + grid.hx2 * np.arange(nx2)
    z = h * np.arange(-B, B + 1)
    W = src.W(z, x2, lam, grid.hx2)
    diags = np.zeros((2 * B + 1, n), dtype=complex)
    i = np.arange(n)
    step = 2 * lam * h
    nf = grid.n_fft
    for k in range(2 * B + 1):
        if not np.any(W[k]):
            continue
        dl = k - B
        xi0 = lam * h * (-dl - 2 * c)
        # sum_p W_p e^{-i (xi0 + step i) x2_p} hx2 via one FFT of length nf
        row = W[k] * np.exp(-1j * xi0 * x2)
        buf = np.zeros(nf, dtype=complex)
        np.add.at(buf, np.arange(nx2) % nf, row)
        spec = sfft.fft(buf)
        phase = np.exp(-1j * step * i * x2[0])
        # step * hx2 = +-2 pi / nf; the sign of lam picks the transform direction
        vals = grid.hx2 * spec[(np.sign(lam) * i).astype(int) % nf] * phase
        xi = xi0 + step * i
        vals[np.abs(xi) > math.pi / grid.hx2] = 0
        j = i - dl
        ok = (j >= 0) & (j < n)
        diags[k, ok] = h * vals[ok]
    return BandedOperator(diags, B)


def _top_singular(matvec, rmatvec, n: int, seed: int = 0, tol: float = 1e-6) -> float:
    if n <= 800:
        A = np.stack([matvec(e) for e in np.eye(n, dtype=complex)], axis=1)
        return float(np.linalg.norm(A, 2))
    op = LinearOperator((n, n), matvec=matvec, rmatvec=rmatvec, dtype=complex)
    v0 = np.random.default_rng(seed).standard_normal(n).astype(complex)
    s = svds(op, k=1, v0=v0, tol=tol, return_singular_vectors=False, maxiter=5000)
    return float(s[0])


def lam_norm(sources: Sequence[Source], lam: float, adjoints: Sequence[bool] = None,
             oversample: float = 1.5, seed: int = 0) -> float:
    """Norm of the product ``M_1 M_2 ...`` (``M_i`` or its adjoint) of reduced operators at ``lam``."""
    grid = reduced_grid(sources, lam, oversample)
    ops = [reduced_operator(s, grid) for s in sources]
    adj = adjoints or [False] * len(ops)

    def mv(v):
        v = np.ravel(v)
        for op, a in zip(reversed(ops), reversed(adj)):
            v = op.rmatvec(v) if a else op.matvec(v)
        return v

    def rmv(v):
        v = np.ravel(v)
        for op, a in zip(ops, adj):
            v = op.matvec(v) if a else op.rmatvec(v)
        return v

    return _top_singular(mv, rmv, grid.n, seed)


def symbol_sup(sources: Sequence[Source], adjoints: Sequence[bool] = None, oversample: float = 1.5,
               pad: int = 8) -> float:
    """sup over (xi1, xi2) of |product of the Euclidean symbols| at lam = 0."""
    R = max(s.radius for s in sources)
    lo = min(s.x2_lo for s in sources)
    hi = max(s.x2_hi for s in sources)
    band = max(max(s.z_band, s.xi_band) for s in sources)
    hx = math.pi / (oversample * band)
    nz = 2 * int(math.ceil(R / hx)) + 1
    z = hx * (np.arange(nz) - (nz - 1) / 2)
    n2 = int(math.ceil((hi - lo) / hx)) + 1
    x2 = lo + hx * np.arange(n2)
    shape = tuple(sfft.next_fast_len(max(2 * n, min(pad * n, 4096))) for n in (nz, n2))
    adj = adjoints or [False] * len(sources)
    prod = None
    for s, a in zip(sources, adj):
        S = sfft.fft2(s.W(z, x2, 0.0, hx), s=shape) * hx * hx
        S = np.conj(S) if a else S
        prod = S if prod is None else prod * S
    return float(np.max(np.abs(prod)))


def lam_samples(lam_lo: float, lam_hi: float, per_octave: int = 2) -> np.ndarray:
    """{0} together with +-geometric samples in [lam_lo, lam_hi]."""
    n = max(2, int(math.ceil(per_octave * math.log2(lam_hi / lam_lo))) + 1)
    pos = np.geomspace(lam_lo, lam_hi, n)
    return np.concatenate([[0.0], pos, -pos])


def plancherel_norm(sources: Sequence[Source], adjoints: Sequence[bool] = None,
                    lams: Optional[np.ndarray] = None, lam_floor: float = 1 / 64,
                    per_octave: int = 2, oversample: float = 1.5, seed: int = 0,
                    refine: bool = True) -> dict:
    """sup over sampled lam of the product norm, with the per-lam profile.

    Without explicit ``lams`` the samples run from ``lam_floor`` times the
    smallest lam-band up to the smallest lam-band (beyond it a factor vanishes).
    With ``refine`` a bounded scalar search in log|lam| between the neighbours
    of the best nonzero sample sharpens the sup.
    """
    if lams is None:
        hi = min(s.lam_band for s in sources)
        lams = lam_samples(lam_floor * hi, hi, per_octave)
    values = []
    for lam in lams:
        if lam == 0:
            values.append(symbol_sup(sources, adjoints, oversample))
        else:
            values.append(lam_norm(sources, float(lam), adjoints, oversample, seed))
    lams = np.asarray(lams, dtype=float)
    values = np.asarray(values)
    k = int(np.argmax(values))
    best, at = float(values[k]), float(lams[k])
    if refine and at != 0:
        same = lams[np.sign(lams) == np.sign(at)]
        mags = np.sort(np.abs(same))
        j = int(np.searchsorted(mags, abs(at)))
        lo = math.log(mags[max(j - 1, 0)])
        hi = math.log(mags[min(j + 1, mags.size - 1)])
        if hi > lo:
            sgn = math.copysign(1.0, at)
            res = minimize_scalar(lambda e: -lam_norm(sources, sgn * math.exp(e), adjoints, oversample, seed),
                                  bounds=(lo, hi), method="bounded", options={"xatol": 0.02})
            if -res.fun > best:
                best, at = float(-res.fun), sgn * math.exp(res.x)
    return {"norm": best, "lam_at_max": at, "lams": lams, "values": values}
