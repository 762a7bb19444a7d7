"""Step-two nilpotent groups in exponential coordinates.

A group is fixed by ``m`` skew-symmetric ``d x d`` structure matrices
``J_1, ..., J_m``; the product is

    (x, u) . (y, v) = (x + y, u + v + x^T J y),   (x^T J y)_i = x^T J_i y.

Besides the group law this module computes the nondegeneracy constants
``c0 = min_{|u|=1} ||J_u^{-1}||^{-1}`` and ``C0 = max_{|u|=1} ||J_u||`` and
tests the Heisenberg-type identity ``J_u^2 = -kappa |u|^2 I``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import minimize, minimize_scalar

SKEW_TOL = 1e-12
ORTHO_TOL = 1e-10
METIVIER_TOL = 1e-8


class GroupError(ValueError):
    """Invalid group data or dimension mismatch."""


@dataclass(frozen=True)
class StepTwoGroup:
    d: int
    m: int
    J: np.ndarray  # shape (m, d, d)
    label: str = ""

    def __post_init__(self):
        J = np.array(self.J, dtype=float)
        if J.ndim == 2:
            J = J[None]
        if self.d < 2 or self.m < 1:
            raise GroupError(f"need d >= 2 and m >= 1, got d={self.d}, m={self.m}")
        if J.shape != (self.m, self.d, self.d):
            raise GroupError(f"J has shape {J.shape}, expected {(self.m, self.d, self.d)}")
        asym = np.abs(J + np.transpose(J, (0, 2, 1))).max()
        if asym > SKEW_TOL * max(1.0, np.abs(J).max()):
            raise GroupError(f"structure matrices are not skew-symmetric (max |J+J^T| = {asym:.3e})")
        J.setflags(write=False)
        object.__setattr__(self, "J", J)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "m": self.m,
            "J": [Ji.reshape(-1).tolist() for Ji in self.J],
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StepTwoGroup":
        d, m = int(data["d"]), int(data["m"])
        J = np.array([np.asarray(row, dtype=float).reshape(d, d) for row in data["J"]])
        return cls(d=d, m=m, J=J, label=data.get("label", ""))

    def to_json(self, path: Union[str, Path, None] = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, source: Union[str, Path]) -> "StepTwoGroup":
        p = Path(source)
        if p.suffix == ".json" and p.exists():
            return cls.from_dict(json.loads(p.read_text()))
        return cls.from_dict(json.loads(str(source)))


@dataclass(frozen=True)
class GroupPoint:
    x: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        object.__setattr__(self, "u", np.atleast_1d(np.asarray(self.u, dtype=float)))


@dataclass
class NondegeneracyReport:
    c0: float
    C0: float
    witness_u: np.ndarray
    resolution: int
    is_metivier: bool
    h_type_kappa: Optional[float] = None
    inconsistent: bool = False
    notes: list = field(default_factory=list)


def _check_point(g: StepTwoGroup, p: GroupPoint):
    if p.x.shape != (g.d,) or p.u.shape != (g.m,):
        raise GroupError(
            f"point dimensions ({p.x.shape[0]}, {p.u.shape[0]}) do not match group ({g.d}, {g.m})"
        )


def bilinear(g: StepTwoGroup, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Return ``x^T J y`` in R^m; broadcasts over leading axes of x and y."""
    return np.einsum("...a,iab,...b->...i", x, g.J, y)


def multiply(g: StepTwoGroup, p: GroupPoint, q: GroupPoint) -> GroupPoint:
    _check_point(g, p)
    _check_point(g, q)
    return GroupPoint(p.x + q.x, p.u + q.u + bilinear(g, p.x, q.x))


def inverse(g: StepTwoGroup, p: GroupPoint) -> GroupPoint:
    _check_point(g, p)
    return GroupPoint(-p.x, -p.u)


def identity(g: StepTwoGroup) -> GroupPoint:
    return GroupPoint(np.zeros(g.d), np.zeros(g.m))


def dilate(g: StepTwoGroup, t: float, p: GroupPoint) -> GroupPoint:
    """Automorphic dilation ``(x, u) -> (t x, t^2 u)``."""
    if not t > 0:
        raise GroupError(f"dilation parameter must be positive, got {t}")
    _check_point(g, p)
    return GroupPoint(t * p.x, t * t * p.u)


def assemble_J(g: StepTwoGroup, u: Sequence[float]) -> np.ndarray:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape[-1] != g.m:
        raise GroupError(f"u has length {u.shape[-1]}, group has m={g.m}")
    return np.tensordot(u, g.J, axes=([-1], [0]))


def _sphere_samples(m: int, resolution: int) -> np.ndarray:
    if m == 1:
        return np.array([[1.0], [-1.0]])
    if m == 2:
        ang = np.linspace(0.0, 2 * np.pi, resolution, endpoint=False)
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    if m == 3:
        # Fibonacci sphere
        n = max(resolution, 8) ** 2 // 4
        i = np.arange(n) + 0.5
        phi = np.arccos(1 - 2 * i / n)
        theta = np.pi * (1 + 5**0.5) * i
        return np.stack(
            [np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1
        )
    rng = np.random.default_rng(0)
    pts = rng.standard_normal((resolution ** 2, m))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def _extreme_singular(g: StepTwoGroup, u: np.ndarray, which: str) -> float:
    s = np.linalg.svd(assemble_J(g, u / np.linalg.norm(u)), compute_uv=False)
    return s[-1] if which == "min" else s[0]


def _refine(g: StepTwoGroup, u0: np.ndarray, which: str, step: float) -> tuple[float, np.ndarray]:
    sign = 1.0 if which == "min" else -1.0
    m = g.m
    if m == 1:
        return _extreme_singular(g, u0, which), u0
    if m == 2:
        a0 = math.atan2(u0[1], u0[0])

        def f(a):
            return sign * _extreme_singular(g, np.array([math.cos(a), math.sin(a)]), which)

        try:
            res = minimize_scalar(f, bracket=(a0 - step, a0, a0 + step), method="golden",
                                  options={"xtol": 1e-10})
            a = res.x if res.fun < f(a0) else a0
        except ValueError:
            # the bracket is not valid when the scan already sits on a plateau
            a = a0
        u = np.array([math.cos(a), math.sin(a)])
        return _extreme_singular(g, u, which), u
    res = minimize(lambda v: sign * _extreme_singular(g, v, which), u0, method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
    u = res.x / np.linalg.norm(res.x)
    val = _extreme_singular(g, u, which)
    base = _extreme_singular(g, u0, which)
    if sign * val > sign * base:
        return base, u0
    return val, u


def nondegeneracy_constants(g: StepTwoGroup, resolution: int = 64) -> NondegeneracyReport:
    """Scan the unit sphere of the center for the extreme singular values of ``J_u``.

    A coarse scan (``resolution`` angles for m=2, a Fibonacci sphere for m=3)
    is followed by one refinement pass around each extremiser.
    """
    if resolution < 8:
        raise GroupError("resolution must be at least 8")
    pts = _sphere_samples(g.m, resolution)
    svals = np.linalg.svd(assemble_J(g, pts), compute_uv=False)
    smin, smax = svals[:, -1], svals[:, 0]
    i_min, i_max = int(np.argmin(smin)), int(np.argmax(smax))
    step = 2 * np.pi / resolution
    c0, witness = _refine(g, pts[i_min], "min", step)
    C0, _ = _refine(g, pts[i_max], "max", step)
    c0 = min(c0, float(smin[i_min]))
    C0 = max(C0, float(smax[i_max]))
    if c0 < 1e-13:
        c0 = 0.0
    report = NondegeneracyReport(
        c0=float(c0), C0=float(C0), witness_u=np.asarray(witness, dtype=float),
        resolution=resolution, is_metivier=bool(c0 > METIVIER_TOL),
    )
    if report.is_metivier and g.d % 2 == 1:
        # an odd-dimensional skew matrix is singular; a positive c0 means roundoff
        report.is_metivier = False
        report.inconsistent = True
        report.notes.append("odd d with positive scanned c0: flagged inconsistent")
    report.h_type_kappa = h_type_test(g)
    return report


def h_type_test(g: StepTwoGroup, tol: float = 1e-10) -> Optional[float]:
    """Return kappa if ``J_i J_j + J_j J_i = -2 kappa delta_ij I`` for all i, j."""
    eye = np.eye(g.d)
    kappa = -np.trace(g.J[0] @ g.J[0]) / g.d
    if kappa <= tol:
        return None
    for i in range(g.m):
        for j in range(i, g.m):
            anti = g.J[i] @ g.J[j] + g.J[j] @ g.J[i]
            target = -2 * kappa * eye if i == j else 0 * eye
            if np.abs(anti - target).max() > tol * max(1.0, kappa):
                return None
    return float(kappa)


def conjugate_by_rotation(g: StepTwoGroup, Q: np.ndarray) -> StepTwoGroup:
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (g.d, g.d):
        raise GroupError(f"Q has shape {Q.shape}, expected {(g.d, g.d)}")
    if np.abs(Q.T @ Q - np.eye(g.d)).max() > ORTHO_TOL:
        raise GroupError("Q is not orthogonal")
    J = np.einsum("ba,ibc,cd->iad", Q, g.J, Q)
    J = 0.5 * (J - np.transpose(J, (0, 2, 1)))
    return StepTwoGroup(g.d, g.m, J, label=f"{g.label} (rotated)")


def symplectic(n: int) -> np.ndarray:
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, eye], [-eye, zero]])


def appendix_E(mu: Sequence[float]) -> np.ndarray:
    m1, m2 = float(mu[0]), float(mu[1])
    return np.array([
        [m1, 0.0, 0.0, -m2],
        [m2, m1, 0.0, 0.0],
        [0.0, m2, m1, 0.0],
        [0.0, 0.0, m2, m1],
    ])


def appendix_J(mu: Sequence[float]) -> np.ndarray:
    E = appendix_E(mu)
    Z = np.zeros((4, 4))
    return np.block([[Z, E], [-E.T, Z]])


def _quaternion_J() -> np.ndarray:
    # left multiplication by i, j, k on H = R^4 with basis (1, i, j, k)
    Li = np.array([[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]], dtype=float)
    Lj = np.array([[0, 0, -1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, -1, 0, 0]], dtype=float)
    Lk = np.array([[0, 0, 0, -1], [0, 0, -1, 0], [0, 1, 0, 0], [1, 0, 0, 0]], dtype=float)
    return np.stack([Li, Lj, Lk])


def build_group(kind: str, n: int = 1, J: Optional[Sequence] = None, scale: float = 1.0) -> StepTwoGroup:
    """Build one of the reference groups.

    ``kind`` is ``"heisenberg"`` (uses ``n``), ``"appendix"``,
    ``"quaternionic"`` or ``"custom"`` (uses ``J``).  ``scale`` multiplies
    every structure matrix.
    """
    kind = kind.lower()
    if kind == "heisenberg":
        if n < 1:
            raise GroupError("heisenberg group needs n >= 1")
        Js = scale * symplectic(n)[None]
        return StepTwoGroup(2 * n, 1, Js, label=f"H^{n}")
    if kind == "appendix":
        Js = scale * np.stack([appendix_J((1, 0)), appendix_J((0, 1))])
        return StepTwoGroup(8, 2, Js, label="appendix (d=8, m=2)")
    if kind == "quaternionic":
        return StepTwoGroup(4, 3, scale * _quaternion_J(), label="quaternionic H-type (d=4, m=3)")
    if kind == "custom":
        if J is None:
            raise GroupError("custom group needs J")
        Js = np.asarray(J, dtype=float)
        if Js.ndim == 2:
            Js = Js[None]
        return StepTwoGroup(Js.shape[1], Js.shape[0], scale * Js, label="custom")
    raise GroupError(f"unknown group kind {kind!r}")


def group_from_config(spec: Union[dict, str]) -> StepTwoGroup:
    """Resolve a group reference from a config: a kind name, a kind dict, or a serialized group."""
    if isinstance(spec, str):
        return build_group(spec)
    if "J" in spec and "d" in spec:
        return StepTwoGroup.from_dict(spec)
    return build_group(spec["kind"], n=spec.get("n", 1), J=spec.get("J"), scale=spec.get("scale", 1.0))


def _random_orthogonal(rng: np.random.Generator, d: int) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    return Q * np.sign(np.diag(R))


def algebra_identity_errors(g: StepTwoGroup, trials: int = 1000, seed: int = 0,
                            n_directions: int = 16) -> dict:
    """Largest errors of the group identities over random points, relative to 1 + |value|.

    Covers associativity, two-sided inverses, the dilation homomorphism and the
    invariance of the extreme singular values of J_u (over a common set of
    directions u) under conjugation by random rotations.
    """
    rng = np.random.default_rng(seed)
    d, m = g.d, g.m

    def mul(x1, u1, x2, u2):
        return x1 + x2, u1 + u2 + bilinear(g, x1, x2)

    def err(a, b):
        return float(np.max(np.abs(a - b) / (1.0 + np.abs(b))))

    px, pu, qx, qu, rx, ru = (rng.standard_normal((trials, n)) for n in (d, m, d, m, d, m))
    t = rng.uniform(0.1, 10.0, (trials, 1))
    left = mul(*mul(px, pu, qx, qu), rx, ru)
    right = mul(px, pu, *mul(qx, qu, rx, ru))
    assoc = max(err(left[0], right[0]), err(left[1], right[1]))
    e1 = mul(px, pu, -px, -pu)
    e2 = mul(-px, -pu, px, pu)
    inv = float(max(np.abs(e1[0]).max(), np.abs(e1[1]).max(), np.abs(e2[0]).max(), np.abs(e2[1]).max()))
    dq = mul(t * px, t * t * pu, t * qx, t * t * qu)
    pq = mul(px, pu, qx, qu)
    dil = max(err(dq[0], t * pq[0]), err(dq[1], t * t * pq[1]))
    dirs = rng.standard_normal((n_directions, m))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    base = np.linalg.svd(assemble_J(g, dirs), compute_uv=False)
    c0, C0 = base[:, -1].min(), base[:, 0].max()
    rot = 0.0
    for _ in range(trials):
        Q = _random_orthogonal(rng, d)
        s = np.linalg.svd(np.einsum("ba,nbc,cd->nad", Q, assemble_J(g, dirs), Q), compute_uv=False)
        rot = max(rot, abs(s[:, -1].min() - c0) / (1 + c0), abs(s[:, 0].max() - C0) / (1 + C0))
    return {"associativity": assoc, "inverse": inv, "dilation": dil, "rotation": float(rot)}
