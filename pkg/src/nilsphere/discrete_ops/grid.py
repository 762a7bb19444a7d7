"""Grid discretization of the group convolution.

Grids are centred lattices ``x = h_x * (i - c)`` and ``u = h_u * (j - c_u)``
with odd point counts, so the origin is a grid point.  With the default
``h_u = h_x**2`` the twist ``x^T J y`` of an integer-entry group lands on the
u-lattice.  The discrete convolution is

    (f * g)(x, u) = sum_{y, v} f(y, v) g(x - y, u - v + x^T J y) h_x^d h_u^m.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import fft as sfft

from ..group_core import StepTwoGroup, bilinear
from ..kernels.kernel import DyadicKernelSpec, eval_kernel

log = logging.getLogger(__name__)
LATTICE_TOL = 1e-9


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class NonisotropicGrid:
    d: int
    m: int
    n_x: int
    n_u: int
    h_x: float
    h_u: Optional[float] = None
    budget: int = 2_000_000

    def __post_init__(self):
        if self.h_u is None:
            object.__setattr__(self, "h_u", self.h_x ** 2)
        if self.h_x <= 0 or self.h_u <= 0:
            raise GridError("grid spacings must be positive")
        if self.n_x % 2 == 0 or self.n_u % 2 == 0:
            raise GridError("point counts must be odd so the origin is on the grid")
        if self.size > self.budget:
            raise GridError(f"grid has {self.size} points, budget is {self.budget}")

    @classmethod
    def from_half_widths(cls, d: int, m: int, R_x: float, R_u: float, n_x: int,
                         n_u: Optional[int] = None, **kw) -> "NonisotropicGrid":
        """Grid covering [-R_x, R_x]^d x [-R_u, R_u]^m with ``n_x`` points per x-axis."""
        n_x = n_x | 1
        h_x = 2.0 * R_x / (n_x - 1)
        h_u = kw.pop("h_u", h_x ** 2)
        if n_u is None:
            n_u = 2 * int(np.ceil(R_u / h_u)) + 1
        return cls(d, m, n_x, n_u | 1, h_x, h_u, **kw)

    @property
    def shape(self) -> tuple:
        return (self.n_x,) * self.d + (self.n_u,) * self.m

    @property
    def size(self) -> int:
        return self.n_x ** self.d * self.n_u ** self.m

    @property
    def half_widths(self) -> tuple[float, float]:
        return self.h_x * (self.n_x // 2), self.h_u * (self.n_u // 2)

    @property
    def volume_element(self) -> float:
        return self.h_x ** self.d * self.h_u ** self.m

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        x = self.h_x * (np.arange(self.n_x) - self.n_x // 2)
        u = self.h_u * (np.arange(self.n_u) - self.n_u // 2)
        return x, u

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """All grid points as (size, d) and (size, m) arrays, row-major in ``shape``."""
        x, u = self.axes()
        mesh = np.meshgrid(*([x] * self.d + [u] * self.m), indexing="ij")
        flat = np.stack([a.ravel() for a in mesh], axis=-1)
        return flat[:, : self.d], flat[:, self.d:]

    def x_points(self) -> np.ndarray:
        x, _ = self.axes()
        mesh = np.meshgrid(*([x] * self.d), indexing="ij")
        return np.stack([a.ravel() for a in mesh], axis=-1)

    def compatible(self, other: "NonisotropicGrid") -> bool:
        return (self.d, self.m) == (other.d, other.m) and np.isclose(self.h_x, other.h_x) \
            and np.isclose(self.h_u, other.h_u)


@dataclass(frozen=True)
class GridFunction:
    grid: NonisotropicGrid
    values: np.ndarray
    metadata: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.size != self.grid.size:
            raise GridError(f"{v.size} values for a grid of {self.grid.size} points")
        object.__setattr__(self, "values", v.reshape(self.grid.shape))

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.volume_element))

    def integral(self) -> complex:
        return complex(np.sum(self.values) * self.grid.volume_element)

    def l1_norm(self) -> float:
        return float(np.sum(np.abs(self.values)) * self.grid.volume_element)

    def inner(self, other: "GridFunction") -> complex:
        return complex(np.vdot(other.values, self.values) * self.grid.volume_element)

    def __add__(self, other):
        return GridFunction(self.grid, self.values + other.values, self.metadata)

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - other.values, self.metadata)

    def scale(self, c: complex) -> "GridFunction":
        return GridFunction(self.grid, c * self.values, self.metadata)

    def with_values(self, values, metadata: Optional[str] = None) -> "GridFunction":
        return GridFunction(self.grid, values, self.metadata if metadata is None else metadata)


def delta(grid: NonisotropicGrid, c: complex = 1.0) -> GridFunction:
    """Discrete delta at the identity, normalized so convolution with it is ``c`` times the identity."""
    v = np.zeros(grid.shape, dtype=complex)
    v[tuple(n // 2 for n in grid.shape)] = c / grid.volume_element
    return GridFunction(grid, v, "delta")


def sample_kernel(spec: DyadicKernelSpec, grid: NonisotropicGrid) -> GridFunction:
    x, u = grid.points()
    vals = eval_kernel(spec, x, u)
    return GridFunction(grid, vals, spec.describe())


def kernel_grid(spec: DyadicKernelSpec, grid: NonisotropicGrid) -> NonisotropicGrid:
    """Grid with ``grid``'s spacings covering the support of the dilated kernel."""
    surf, t = spec.surface, spec.t
    rx = t * (surf.r + float(np.max(np.abs(surf.x0))))
    ru = t ** 2 * (surf.u_radius + surf.lambda_norm * surf.r)
    nx = 2 * int(np.ceil(rx / grid.h_x)) + 1
    nu = 2 * int(np.ceil(ru / grid.h_u)) + 1
    return NonisotropicGrid(grid.d, grid.m, nx, nu, grid.h_x, grid.h_u, budget=grid.budget * 16)


def random_function(grid: NonisotropicGrid, seed: int = 0, complex_valued: bool = True) -> GridFunction:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(grid.shape)
    if complex_valued:
        v = v + 1j * rng.standard_normal(grid.shape)
    return GridFunction(grid, v, f"random(seed={seed})")


def _twist_steps(g: StepTwoGroup, grid: NonisotropicGrid) -> np.ndarray:
    """x^T J y / h_u for all grid pairs, shape (Nx^d, Nx^d, m); must be integral."""
    xs = grid.x_points()
    tw = bilinear(g, xs[:, None, :], xs[None, :, :]) / grid.h_u
    steps = np.rint(tw)
    if np.max(np.abs(tw - steps), initial=0.0) > LATTICE_TOL:
        raise GridError("twist x^T J y is off the u-lattice; use an evaluable kernel or h_u dividing h_x^2 J")
    return steps.astype(int)


def _x_offsets(grid: NonisotropicGrid, kgrid: NonisotropicGrid):
    """Kernel x-index of x - y for all output/input pairs, and a validity mask."""
    d = grid.d
    idx = np.array(list(itertools.product(range(grid.n_x), repeat=d)))
    diff = idx[:, None, :] - idx[None, :, :] + kgrid.n_x // 2
    ok = np.all((diff >= 0) & (diff < kgrid.n_x), axis=-1)
    flat = np.ravel_multi_index(tuple(np.clip(diff, 0, kgrid.n_x - 1).transpose(2, 0, 1)),
                                (kgrid.n_x,) * d)
    return flat, ok


def truncation_report(kernel: GridFunction, grid: NonisotropicGrid) -> float:
    """Fraction of kernel L1 mass outside the x-range reachable from ``grid``."""
    kx, _ = kernel.grid.axes()
    reach = grid.h_x * (grid.n_x - 1)
    inside = np.abs(kx) <= reach + 1e-12
    mask = np.ones(kernel.grid.shape, dtype=bool)
    for ax in range(grid.d):
        shape = [1] * len(kernel.grid.shape)
        shape[ax] = -1
        mask &= inside.reshape(shape)
    total = np.sum(np.abs(kernel.values))
    return 0.0 if total == 0 else float(np.sum(np.abs(kernel.values[~mask])) / total)


def _convolve_direct(g, f: GridFunction, kern: GridFunction) -> np.ndarray:
    grid, kg = f.grid, kern.grid
    nx, nu, m = grid.n_x ** grid.d, grid.n_u, grid.m
    F = f.values.reshape(nx, nu ** m)
    K = kern.values.reshape(kg.n_x ** grid.d, *(kg.n_u,) * m)
    off, ok = _x_offsets(grid, kg)
    steps = _twist_steps(g, grid)
    out = np.zeros((nx,) + (nu,) * m, dtype=complex)
    uidx = np.array(list(itertools.product(range(nu), repeat=m)))  # (nu^m, m)
    cu, cku = nu // 2, kg.n_u // 2
    for i in range(nx):
        for j in np.nonzero(ok[i])[0]:
            # kernel u-index of u - v + twist, for all (u, v) pairs
            w = uidx[:, None, :] - uidx[None, :, :] + steps[i, j] + cku
            valid = np.all((w >= 0) & (w < kg.n_u), axis=-1)
            if not valid.any():
                continue
            wc = np.clip(w, 0, kg.n_u - 1)
            kv = K[(off[i, j],) + tuple(wc[..., a] for a in range(m))] * valid
            out[i].reshape(-1)[:] += kv @ F[j]
    return out.reshape(grid.shape) * grid.volume_element


def _convolve_fft(g, f: GridFunction, kern: GridFunction) -> np.ndarray:
    grid, kg = f.grid, kern.grid
    nx, m = grid.n_x ** grid.d, grid.m
    steps = _twist_steps(g, grid)
    smax = int(np.max(np.abs(steps), initial=0))
    P = sfft.next_fast_len(grid.n_u + kg.n_u + 2 * smax)
    uax = tuple(range(1, 1 + m))
    F = sfft.fftn(f.values.reshape((nx,) + (grid.n_u,) * m), s=(P,) * m, axes=uax)
    # kernel with its u-origin rolled to index 0 so FFT phases are relative to u = 0
    Kp = np.zeros((kg.n_x ** grid.d,) + (P,) * m, dtype=complex)
    Kv = kern.values.reshape((kg.n_x ** grid.d,) + (kg.n_u,) * m)
    Kp[(slice(None),) + (slice(0, kg.n_u),) * m] = Kv
    Kp = np.roll(Kp, shift=(-(kg.n_u // 2),) * m, axis=uax)
    G = sfft.fftn(Kp, axes=uax)
    off, ok = _x_offsets(grid, kg)
    freqs = np.meshgrid(*([np.arange(P)] * m), indexing="ij")
    out = np.zeros((nx,) + (P,) * m, dtype=complex)
    for i in range(nx):
        js = np.nonzero(ok[i])[0]
        if js.size == 0:
            continue
        ph = np.zeros((js.size,) + (P,) * m)
        for a in range(m):
            ph = ph + steps[i, js, a].reshape((-1,) + (1,) * m) * freqs[a]
        twist = np.exp(2j * np.pi * ph / P)
        out[i] = np.sum(F[js] * G[off[i, js]] * twist, axis=0)
    res = sfft.ifftn(out, axes=uax)
    # output u-origin: f's index c_u maps to c_u after the kernel roll
    res = res[(slice(None),) + (slice(0, grid.n_u),) * m]
    return res.reshape(grid.shape) * grid.volume_element


def _convolve_evaluable(g, f: GridFunction, spec: DyadicKernelSpec) -> np.ndarray:
    grid = f.grid
    xs = grid.x_points()
    _, u = grid.axes()
    umesh = np.stack([a.ravel() for a in np.meshgrid(*([u] * grid.m), indexing="ij")], -1)
    F = f.values.reshape(xs.shape[0], -1)
    out = np.zeros_like(F)
    for i, x in enumerate(xs):
        z = x[None, :] - xs
        tw = bilinear(g, np.broadcast_to(x, xs.shape), xs)  # (Ny, m)
        w = umesh[:, None, None, :] - umesh[None, None, :, :] + tw[None, :, None, :]
        zz = np.broadcast_to(z[None, :, None, :], w.shape[:3] + (grid.d,))
        kv = eval_kernel(spec, zz.reshape(-1, grid.d), w.reshape(-1, grid.m)).reshape(w.shape[:3])
        out[i] = np.einsum("uyv,yv->u", kv, F)
    return out.reshape(grid.shape) * grid.volume_element


def group_convolve(g: StepTwoGroup, f: GridFunction,
                   kernel: Union[DyadicKernelSpec, GridFunction], method: str = "fft") -> GridFunction:
    """Discrete group convolution ``f * kernel`` on ``f``'s grid.

    ``method`` is ``"fft"`` (transform in the central variable, then twisted
    convolutions in x) or ``"direct"``.  A :class:`DyadicKernelSpec` is
    sampled on a kernel grid with ``f``'s spacings unless ``method="exact"``,
    which evaluates it at every shifted point.
    """
    grid = f.grid
    if (g.d, g.m) != (grid.d, grid.m):
        raise GridError("group and grid dimensions differ")
    if isinstance(kernel, DyadicKernelSpec):
        if method == "exact":
            return f.with_values(_convolve_evaluable(g, f, kernel), f"{f.metadata}*{kernel.describe()}")
        kernel = sample_kernel(kernel, kernel_grid(kernel, grid))
    if not grid.compatible(kernel.grid):
        raise GridError("kernel grid spacings differ from the function grid")
    lost = truncation_report(kernel, grid)
    if lost > 1e-12:
        log.warning("kernel extends beyond the grid; %.3e of its L1 mass is never reached", lost)
    if method == "direct":
        vals = _convolve_direct(g, f, kernel)
    elif method == "fft":
        vals = _convolve_fft(g, f, kernel)
    else:
        raise GridError(f"unknown method {method!r}")
    return f.with_values(vals, f"{f.metadata}*{kernel.metadata}")


def adjoint_kernel(g: StepTwoGroup, kern: GridFunction) -> GridFunction:
    """``conj(kern(-x, -u))``; the grid is centred, so this is a flip of every axis."""
    return kern.with_values(np.conj(np.flip(kern.values)), f"adj({kern.metadata})")


def convolution_matrix(g: StepTwoGroup, grid: NonisotropicGrid, kernel: GridFunction) -> np.ndarray:
    """Dense matrix of ``f -> f * kernel`` on ``grid`` (columns are images of unit vectors)."""
    n = grid.size
    if n > 4096:
        raise GridError("dense matrices are limited to 4096 grid points")
    cols = np.empty((n, n), dtype=complex)
    e = np.zeros(n, dtype=complex)
    for j in range(n):
        e[:] = 0
        e[j] = 1.0
        cols[:, j] = group_convolve(g, GridFunction(grid, e), kernel).values.ravel()
    return cols
