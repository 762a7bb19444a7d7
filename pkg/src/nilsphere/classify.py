"""The explicit ten-dimensional Metivier group and the certificate that it is not of H-type."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
import sympy as sp
from scipy.optimize import minimize

from .group_core import StepTwoGroup, appendix_J, assemble_J, build_group, h_type_test, nondegeneracy_constants


class ClassifyError(ValueError):
    pass


def appendix_determinant(mu: Sequence[float]) -> dict:
    """det of the assembled 8x8 J_mu against (mu1^4 + mu2^4)^2."""
    m1, m2 = float(mu[0]), float(mu[1])
    det = float(np.linalg.det(appendix_J((m1, m2))))
    formula = (m1 ** 4 + m2 ** 4) ** 2
    rel = abs(det - formula) / formula if formula > 0 else abs(det)
    return {"det_assembled": det, "det_formula": formula, "rel_error": rel}


def h_type_det_invariant(g: StepTwoGroup, w: Sequence[float]) -> dict:
    """|det J_w| against (sqrt(kappa) |w|)^d for an H-type group."""
    kappa = h_type_test(g)
    if kappa is None:
        raise ClassifyError("group is not of H-type")
    w = np.asarray(w, dtype=float)
    det = abs(float(np.linalg.det(assemble_J(g, w))))
    pred = (math.sqrt(kappa) * float(np.linalg.norm(w))) ** g.d
    rel = abs(det - pred) / pred if pred > 0 else det
    return {"det": det, "predicted": pred, "kappa": kappa, "rel_error": rel}


@dataclass
class IsomorphismCandidate:
    """Rows (a, b), (c, d) of |det A|^{-1/4} B^T."""

    a: float
    b: float
    c: float
    d: float

    @property
    def rho(self) -> float:
        return self.a * self.b + self.c * self.d

    @property
    def admissible(self) -> bool:
        return math.isclose(self.a ** 2 + self.c ** 2, 1.0) and math.isclose(self.b ** 2 + self.d ** 2, 1.0)

    def coefficients(self, target: str = "appendix") -> dict:
        return _numeric_coefficients(self.a ** 2 + self.c ** 2, self.b ** 2 + self.d ** 2, self.rho, target)


def _numeric_coefficients(P: float, Q: float, rho: float, target: str) -> dict:
    """Coefficients of (P mu1^2 + Q mu2^2 + 2 rho mu1 mu2)^2 - target(mu) by monomial (i, j) = mu1^i mu2^j."""
    cross = 2.0 if target == "square" else 0.0
    return {(4, 0): P * P - 1.0, (0, 4): Q * Q - 1.0, (3, 1): 4 * P * rho, (1, 3): 4 * Q * rho,
            (2, 2): 2 * P * Q + 4 * rho * rho - cross}


def _target(target: str, m1, m2):
    if target == "appendix":
        return m1 ** 4 + m2 ** 4
    if target == "square":
        return (m1 ** 2 + m2 ** 2) ** 2
    raise ClassifyError(f"unknown target {target!r}")


@dataclass
class Certificate:
    target: str
    coefficients: dict
    normalization: list
    reduced: list
    groebner: list
    infeasible: bool
    witness: Optional[dict]
    numeric_floor: float
    numeric_bound: float
    grid: int
    grid_min: float
    lipschitz: float
    matches_displayed: bool
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        if self.target == "appendix":
            return self.infeasible and self.matches_displayed and self.numeric_floor >= self.numeric_bound
        return not self.infeasible and self.numeric_floor <= 1e-12

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _symbolic_part(target: str) -> dict:
    a, b, c, d, m1, m2 = sp.symbols("a b c d mu1 mu2", real=True)
    P, Q, rho = sp.symbols("P Q rho", real=True)
    expr = sp.expand(((a * m1 + b * m2) ** 2 + (c * m1 + d * m2) ** 2) ** 2 - _target(target, m1, m2))
    poly = sp.Poly(expr, m1, m2)
    coeffs = {mon: sp.factor(cf) for mon, cf in zip(poly.monoms(), poly.coeffs())}
    subs = {P: a ** 2 + c ** 2, Q: b ** 2 + d ** 2, rho: a * b + c * d}
    reduced_form = sp.Poly(sp.expand((P * m1 ** 2 + Q * m2 ** 2 + 2 * rho * m1 * m2) ** 2
                                     - _target(target, m1, m2)), m1, m2)
    in_pqr = {mon: cf for mon, cf in zip(reduced_form.monoms(), reduced_form.coeffs())}
    for mon in set(coeffs) | set(in_pqr):
        lhs = coeffs.get(mon, sp.Integer(0))
        rhs = in_pqr.get(mon, sp.Integer(0)).subs(subs)
        if sp.expand(lhs - rhs) != 0:
            raise ClassifyError(f"coefficient of {mon} does not reduce to (P, Q, rho)")
    # P, Q are sums of squares; the mu1^4, mu2^4 coefficients P^2 - 1, Q^2 - 1 force P = Q = 1
    norm = [sp.factor(in_pqr[(4, 0)]), sp.factor(in_pqr[(0, 4)])]
    rest = [sp.expand(in_pqr[mon].subs({P: 1, Q: 1})) for mon in sorted(in_pqr) if mon not in ((4, 0), (0, 4))]
    rest = [r for r in rest if r != 0]
    primitive = sorted({sp.primitive(sp.Poly(r, rho))[1].as_expr() for r in rest}, key=sp.default_sort_key)
    G = sp.groebner(primitive, rho, domain="QQ") if primitive else None
    gb = [str(x) for x in G.exprs] if G is not None else []
    infeasible = gb == ["1"]
    witness = None
    if not infeasible:
        sols = sp.solve(primitive, rho, dict=True) if primitive else [{rho: 0}]
        real = [s for s in sols if s[rho].is_real]
        if real:
            r0 = float(real[0][rho])
            witness = {"P": 1.0, "Q": 1.0, "rho": r0, "a": 1.0, "b": r0, "c": 0.0, "d": math.sqrt(1 - r0 * r0)}
        else:
            infeasible = True
    return {
        "coefficients": {f"mu1^{i} mu2^{j}": str(cf) for (i, j), cf in sorted(coeffs.items())},
        "normalization": [str(x) for x in norm],
        "reduced": [str(x) for x in primitive],
        "groebner": gb,
        "infeasible": infeasible,
        "witness": witness,
        "primitive": primitive,
        "rho": rho,
    }


def _residual(alpha: np.ndarray, beta: np.ndarray, target: str) -> np.ndarray:
    rho = np.cos(alpha - beta)
    cf = _numeric_coefficients(1.0, 1.0, rho, target)
    return np.max(np.abs(np.stack(list(np.broadcast_arrays(*cf.values())))), axis=0)


def numeric_floor(target: str = "appendix", n: int = 720) -> dict:
    """Grid minimum of the max-coefficient residual on the torus plus one refinement.

    Each coefficient is Lipschitz in (alpha, beta) with constant 8 per
    coordinate (|d(4 rho^2)/d alpha| <= 8), so grid_min - 8 h bounds the true
    minimum from below, h = 2 pi / n.
    """
    ang = 2 * math.pi * np.arange(n) / n
    A, B = np.meshgrid(ang, ang, indexing="ij")
    R = _residual(A, B, target)
    i, j = np.unravel_index(int(np.argmin(R)), R.shape)
    grid_min = float(R[i, j])
    res = minimize(lambda v: float(_residual(np.array(v[0]), np.array(v[1]), target)),
                   [ang[i], ang[j]], method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14})
    refined = min(grid_min, float(res.fun))
    L = 8.0
    h = 2 * math.pi / n
    return {"grid_min": grid_min, "refined_min": refined, "lower_bound": max(0.0, grid_min - L * h),
            "lipschitz": L, "grid": n}


def non_isomorphism_certificate(target: str = "appendix", n: int = 720, floor: float = 0.05) -> Certificate:
    """Symbolic reduction to constraints on rho plus the numeric residual floor.

    ``target="square"`` replaces mu1^4 + mu2^4 by (mu1^2 + mu2^2)^2, the H-type
    profile; that system is feasible and serves as the negative control.
    """
    sym = _symbolic_part(target)
    num = numeric_floor(target, n)
    rho = sym["rho"]
    displayed = {sp.expand(2 * rho ** 2 + 1), rho}
    matches = set(sym["primitive"]) == displayed if target == "appendix" else True
    notes = []
    if target == "appendix" and not matches:
        notes.append(f"reduced constraints {sym['reduced']} differ from the displayed pair")
    return Certificate(
        target=target, coefficients=sym["coefficients"], normalization=sym["normalization"],
        reduced=sym["reduced"], groebner=sym["groebner"], infeasible=sym["infeasible"],
        witness=sym["witness"], numeric_floor=num["lower_bound"] if target == "appendix" else num["refined_min"],
        numeric_bound=floor, grid=num["grid"], grid_min=num["grid_min"], lipschitz=num["lipschitz"],
        matches_displayed=matches, notes=notes)


def appendix_summary(resolution: int = 128) -> dict:
    """Nondegeneracy constants of the appendix group and its H-type status."""
    g = build_group("appendix")
    rep = nondegeneracy_constants(g, resolution)
    return {"c0": rep.c0, "C0": rep.C0, "is_metivier": rep.is_metivier, "h_type_kappa": h_type_test(g),
            "is_h_type": h_type_test(g) is not None}
