"""L^2 operator norms of (products of) group convolution operators."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from ..group_core import StepTwoGroup
from ..kernels.kernel import DyadicKernelSpec
from .grid import (
    GridError,
    GridFunction,
    NonisotropicGrid,
    adjoint_kernel,
    convolution_matrix,
    group_convolve,
    kernel_grid,
    random_function,
    sample_kernel,
)
from .plancherel import DyadicSource, Source, plancherel_norm

log = logging.getLogger(__name__)

METHODS = ("power_iteration", "dense_svd", "plancherel")
DENSE_LIMIT = 4096

Kernel = Union[GridFunction, DyadicKernelSpec]


@dataclass(frozen=True)
class OperatorNormEstimate:
    value: float
    iterations: int
    residual: float
    method: str
    converged: bool = True

    def __float__(self) -> float:
        return self.value


def _as_factors(kernel) -> list[tuple[object, bool]]:
    """Normalise to a list of (kernel, adjoint) applied left to right: f -> ((f * k1) * k2) ..."""
    if isinstance(kernel, (GridFunction, DyadicKernelSpec, Source)):
        return [(kernel, False)]
    out = []
    for item in kernel:
        if isinstance(item, tuple):
            out.append((item[0], bool(item[1])))
        else:
            out.append((item, False))
    return out


def _sampled(g: StepTwoGroup, k, adj: bool, grid: NonisotropicGrid) -> GridFunction:
    if isinstance(k, DyadicKernelSpec):
        k = sample_kernel(k, kernel_grid(k, grid))
    if not isinstance(k, GridFunction):
        raise GridError("grid methods need sampled or evaluable kernels")
    return adjoint_kernel(g, k) if adj else k


def _power_iteration(g, factors, grid, tol, max_iter, seed) -> OperatorNormEstimate:
    fwd = [_sampled(g, k, a, grid) for k, a in factors]
    back = [adjoint_kernel(g, k) for k in reversed(fwd)]

    def apply(f, kernels):
        for k in kernels:
            f = group_convolve(g, f, k)
        return f

    v = random_function(grid, seed=seed)
    v = v.scale(1.0 / v.norm())
    mu_old, residual = 0.0, np.inf
    for it in range(1, max_iter + 1):
        w = apply(apply(v, fwd), back)
        mu = w.norm()
        if mu == 0.0:
            return OperatorNormEstimate(0.0, it, 0.0, "power_iteration")
        residual = abs(mu - mu_old) / mu
        v = w.scale(1.0 / mu)
        mu_old = mu
        if residual < tol:
            return OperatorNormEstimate(float(np.sqrt(mu)), it, residual, "power_iteration")
    log.warning("power iteration stopped after %d steps with residual %.2e", max_iter, residual)
    return OperatorNormEstimate(float(np.sqrt(mu_old)), max_iter, residual, "power_iteration", False)


def _dense_svd(g, factors, grid) -> OperatorNormEstimate:
    if grid.size > DENSE_LIMIT:
        raise GridError(f"dense_svd needs at most {DENSE_LIMIT} grid points, got {grid.size}")
    M = np.eye(grid.size, dtype=complex)
    for k, a in factors:
        M = convolution_matrix(g, grid, _sampled(g, k, a, grid)) @ M
    return OperatorNormEstimate(float(np.linalg.norm(M, 2)), 1, 0.0, "dense_svd")


def _plancherel(factors, **kw) -> OperatorNormEstimate:
    sources = [DyadicSource(k) if isinstance(k, DyadicKernelSpec) else k for k, _ in factors]
    if not all(isinstance(s, Source) for s in sources):
        raise GridError("the plancherel method takes kernel specs or sources")
    # the reduction composes right factors first: f * k1 * k2 <-> M(k2) M(k1)
    sources = sources[::-1]
    adj = [a for _, a in factors][::-1]
    res = plancherel_norm(sources, adj, **kw)
    return OperatorNormEstimate(res["norm"], len(res["lams"]), 0.0, "plancherel")


def operator_norm(g: StepTwoGroup, kernel, grid: NonisotropicGrid = None,
                  method: str = "power_iteration", tol: float = 1e-6, max_iter: int = 500,
                  seed: int = 0, **plancherel_kw) -> OperatorNormEstimate:
    """Norm of ``f -> f * k_1 * k_2 * ...`` on L^2.

    ``kernel`` is one kernel or a sequence of kernels, each optionally paired
    with an adjoint flag as ``(kernel, True)``.  ``"power_iteration"`` and
    ``"dense_svd"`` act on ``grid``; ``"plancherel"`` is grid free (H^1 only).
    """
    if method not in METHODS:
        raise GridError(f"unknown method {method!r}; choose from {METHODS}")
    factors = _as_factors(kernel)
    if method == "plancherel":
        return _plancherel(factors, **plancherel_kw)
    if grid is None:
        raise GridError(f"{method} needs a grid")
    if method == "dense_svd":
        return _dense_svd(g, factors, grid)
    return _power_iteration(g, factors, grid, tol, max_iter, seed)
