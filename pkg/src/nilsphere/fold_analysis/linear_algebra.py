"""Linear-algebra facts behind the fold geometry, checked numerically."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..group_core import StepTwoGroup, assemble_J, nondegeneracy_constants
from .phase import E_of_B


class MatrixInputError(ValueError):
    pass


def null_direction_check(g: StepTwoGroup, u, B, c0: Optional[float] = None, C0: Optional[float] = None,
                  rank_tol: float = 1e-10) -> dict:
    """Kernel dimension and the lower bounds for P J_u P^T + E(B), |u| = 1.

    Vacuous (``applies=False``) unless ||B|| <= c0 / (4 C0).
    """
    u = np.asarray(u, dtype=float)
    u = u / np.linalg.norm(u)
    B = np.asarray(B, dtype=float).reshape(g.d - 1)
    if c0 is None or C0 is None:
        rep = nondegeneracy_constants(g)
        c0, C0 = rep.c0, rep.C0
    out = {"c0": c0, "C0": C0, "norm_B": float(np.linalg.norm(B)), "applies": True}
    if np.linalg.norm(B) > c0 / (4 * C0):
        out["applies"] = False
        return out
    Ju = assemble_J(g, u)
    M = Ju[:-1, :-1] + E_of_B(Ju, B)
    _, s, Vt = np.linalg.svd(M)
    W = Vt[-1]
    n = g.d - 1
    null = s[-1] <= rank_tol * max(s[0], 1.0) if n > 1 else abs(s[-1]) <= rank_tol
    kdim = int(np.sum(s <= rank_tol * max(s[0], 1.0)))
    edge_bound = float(abs(Ju[-1, :-1] @ W))
    gap_bound = float(s[-2]) if n > 1 else math.inf
    out.update(
        kernel_dim=kdim,
        W=W,
        singular_values=s,
        edge_bound=edge_bound,
        gap_bound=gap_bound,
        holds_edge=edge_bound >= c0 / 2 * (1 - 1e-12),
        holds_gap=gap_bound >= c0 / 2 * (1 - 1e-12),
        holds=bool(null and kdim == 1 and edge_bound >= c0 / 2 * (1 - 1e-12) and gap_bound >= c0 / 2 * (1 - 1e-12)),
    )
    return out


def inverse_norm_check(A, S, sigma: float) -> dict:
    """||(sigma A + S)^{-1}|| against |sigma|^{-1} ||A^{-1}|| and, in its regime, 2 ||S^{-1}||."""
    A = np.asarray(A, dtype=float)
    S = np.asarray(S, dtype=float)
    if not np.allclose(A, A.T) or np.linalg.eigvalsh(A).min() <= 0:
        raise MatrixInputError("A must be symmetric positive definite")
    if not np.allclose(S, -S.T):
        raise MatrixInputError("S must be skew")
    M = sigma * A + S
    out = {"inv_norm": None, "sigma_bound": None, "skew_bound": None, "holds_sigma": None, "holds_skew": None}
    try:
        inv = 1.0 / np.linalg.svd(M, compute_uv=False)[-1]
    except np.linalg.LinAlgError:
        inv = math.inf
    out["inv_norm"] = float(inv)
    if sigma != 0:
        b = float(np.linalg.norm(np.linalg.inv(A), 2) / abs(sigma))
        out.update(sigma_bound=b, holds_sigma=bool(inv <= b * (1 + 1e-10)))
    smin = np.linalg.svd(S, compute_uv=False)[-1]
    if smin > 1e-12 * max(1.0, np.linalg.norm(S, 2)):
        s_inv = 1.0 / smin
        if abs(sigma) <= 1.0 / (2 * np.linalg.norm(A, 2) * s_inv):
            b = 2 * s_inv
            out.update(skew_bound=float(b), holds_skew=bool(inv <= b * (1 + 1e-10)))
    return out


def kernel_unit_vector(S: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    _, s, Vt = np.linalg.svd(S)
    n = S.shape[0]
    rank = int(np.sum(s > tol * max(s[0], 1.0))) if n > 1 or s[0] > 0 else 0
    if rank != n - 1:
        raise MatrixInputError(f"S has rank {rank}, expected {n - 1}")
    return Vt[-1]


def det_derivative_check(A, S, h: float = 1e-4) -> dict:
    """d/dsigma det(sigma A + S) at 0 versus <A e_S, e_S> det(pi_S S pi_S^*).

    Fourth-order central differences with step ``h ||S|| / ||A||``.
    """
    A = np.asarray(A, dtype=float)
    S = np.asarray(S, dtype=float)
    n = A.shape[0]
    if n % 2 == 0:
        raise MatrixInputError("the dimension must be odd")
    e = kernel_unit_vector(S) if n > 1 or abs(S[0, 0]) < 1e-12 else None
    if e is None:
        raise MatrixInputError("S must have rank n - 1")
    # orthonormal basis of the complement of e_S, rows of Q
    Q = np.linalg.svd(np.eye(n) - np.outer(e, e))[0][:, : n - 1].T
    rhs = float(e @ A @ e) * (float(np.linalg.det(Q @ S @ Q.T)) if n > 1 else 1.0)
    h = h * (np.linalg.norm(S, 2) or 1.0) / np.linalg.norm(A, 2)
    f = lambda s: np.linalg.det(s * A + S)
    lhs = (-f(2 * h) + 8 * f(h) - 8 * f(-h) + f(-2 * h)) / (12 * h)
    rel = abs(lhs - rhs) / max(abs(rhs), 1e-300)
    return {"lhs_derivative": float(lhs), "rhs_leading": rhs, "rel_error": float(rel), "e_S": e}
