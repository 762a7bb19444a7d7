import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nilsphere.group_core import (
    GroupError,
    GroupPoint,
    StepTwoGroup,
    algebra_identity_errors,
    assemble_J,
    build_group,
    conjugate_by_rotation,
    dilate,
    group_from_config,
    h_type_test,
    identity,
    inverse,
    multiply,
    nondegeneracy_constants,
)

finite = st.floats(-10, 10, allow_nan=False)


def vec(n):
    return arrays(np.float64, n, elements=finite)


def close(p, q, tol=1e-9):
    return np.allclose(p.x, q.x, atol=tol) and np.allclose(p.u, q.u, atol=tol * (1 + np.abs(q.u).max()))


@settings(max_examples=50, deadline=None)
@given(vec(2), vec(1), vec(2), vec(1), vec(2), vec(1))
def test_h1_associativity(x1, u1, x2, u2, x3, u3):
    g = build_group("heisenberg")
    p, q, r = GroupPoint(x1, u1), GroupPoint(x2, u2), GroupPoint(x3, u3)
    assert close(multiply(g, multiply(g, p, q), r), multiply(g, p, multiply(g, q, r)))


@settings(max_examples=50, deadline=None)
@given(vec(8), vec(2), st.floats(0.1, 5))
def test_appendix_inverse_and_dilation(x, u, t):
    g = build_group("appendix")
    p = GroupPoint(x, u)
    assert close(multiply(g, p, inverse(g, p)), identity(g))
    q = GroupPoint(x[::-1], u[::-1])
    lhs = dilate(g, t, multiply(g, p, q))
    rhs = multiply(g, dilate(g, t, p), dilate(g, t, q))
    assert close(lhs, rhs, 1e-8)


def test_heisenberg_twist(h1):
    p = multiply(h1, GroupPoint([1, 0], [0]), GroupPoint([0, 1], [0]))
    np.testing.assert_allclose(p.u, [1.0])


def test_validation():
    with pytest.raises(GroupError):
        StepTwoGroup(2, 1, np.ones((1, 2, 2)))
    with pytest.raises(GroupError):
        StepTwoGroup(2, 2, np.zeros((1, 2, 2)))
    with pytest.raises(GroupError):
        build_group("lorentz")
    with pytest.raises(GroupError):
        dilate(build_group("heisenberg"), -1.0, GroupPoint([1, 1], [1]))
    with pytest.raises(GroupError):
        multiply(build_group("heisenberg"), GroupPoint([1, 1, 1], [0]), GroupPoint([1, 1], [0]))


def test_nondegeneracy_reference_groups(h1, appendix_group):
    rep = nondegeneracy_constants(h1)
    assert rep.c0 == pytest.approx(1.0) and rep.C0 == pytest.approx(1.0)
    assert rep.is_metivier and rep.h_type_kappa == pytest.approx(1.0)
    app = nondegeneracy_constants(appendix_group, 128)
    # extreme singular values of the companion-like block E_mu on the unit circle
    assert app.c0 == pytest.approx(0.5412, abs=2e-4)
    assert app.C0 == pytest.approx(1.3066, abs=2e-4)
    assert app.is_metivier and app.h_type_kappa is None


def test_degenerate_groups():
    odd = build_group("custom", J=[[[0, 1, 0], [-1, 0, 0], [0, 0, 0]]])
    assert not nondegeneracy_constants(odd).is_metivier
    ab = build_group("custom", J=np.zeros((1, 2, 2)))
    rep = nondegeneracy_constants(ab)
    assert rep.c0 == 0.0 and not rep.is_metivier


def test_h_type():
    assert h_type_test(build_group("quaternionic")) == pytest.approx(1.0)
    assert h_type_test(build_group("heisenberg", n=2, scale=2.0)) == pytest.approx(4.0)
    assert h_type_test(build_group("appendix")) is None


def test_rotation_invariance(appendix_group, rng):
    Q, _ = np.linalg.qr(rng.standard_normal((8, 8)))
    rot = conjugate_by_rotation(appendix_group, Q)
    a, b = nondegeneracy_constants(appendix_group), nondegeneracy_constants(rot)
    assert a.c0 == pytest.approx(b.c0, rel=1e-6) and a.C0 == pytest.approx(b.C0, rel=1e-6)
    with pytest.raises(GroupError):
        conjugate_by_rotation(appendix_group, np.ones((8, 8)))


def test_serialization_roundtrip(appendix_group, tmp_path):
    path = tmp_path / "g.json"
    appendix_group.to_json(path)
    back = StepTwoGroup.from_json(path)
    np.testing.assert_array_equal(back.J, appendix_group.J)
    assert group_from_config(json.loads(path.read_text())).d == 8
    assert group_from_config({"kind": "heisenberg", "n": 2}).d == 4


def test_assemble_J_linear(appendix_group):
    np.testing.assert_allclose(assemble_J(appendix_group, [2.0, -1.0]),
                               2 * appendix_group.J[0] - appendix_group.J[1])


@pytest.mark.parametrize("kind", ["heisenberg", "appendix", "quaternionic"])
def test_identity_errors(kind):
    errs = algebra_identity_errors(build_group(kind), trials=200, seed=3)
    assert set(errs) == {"associativity", "inverse", "dilation", "rotation"}
    assert max(errs.values()) < 1e-10
