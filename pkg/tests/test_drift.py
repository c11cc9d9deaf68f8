import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from containment.drift import (ContainmentQuery, DimensionError, DriftSpec, NoiseSpec,
                               eval_drift, noise_sigma, rotation_to_e1)
from containment.expr import ExprDomainError, ParseError


def test_eval_examples():
    assert eval_drift(DriftSpec.ou(1.0), 0.0) == 0.0
    assert eval_drift(DriftSpec.piecewise(20.0, 1.0), -0.5) == 10.0
    assert eval_drift(DriftSpec.piecewise(20.0, 1.0), 0.5) == -0.5
    np.testing.assert_allclose(eval_drift(DriftSpec.radial("-r"), [3.0, 4.0]), [-3.0, -4.0])
    assert eval_drift(DriftSpec.expression("-x - x^3"), 2.0) == -10.0


def test_radial_origin_and_dimension_checks():
    f = DriftSpec.radial("-r + 0.5", 3)
    np.testing.assert_array_equal(eval_drift(f, np.zeros(3)), np.zeros(3))
    with pytest.raises(DimensionError):
        eval_drift(f, [1.0, 2.0])
    with pytest.raises(DimensionError):
        DriftSpec("expression", 2, source="x")


def test_domain_error_propagates():
    f = DriftSpec.expression("1/x")
    with pytest.raises(ExprDomainError):
        eval_drift(f, 0.0)
    assert np.isnan(f.batch([0.0])[0, 0])


def test_constructor_validation():
    with pytest.raises(ParseError):
        DriftSpec.expression("-x +")
    with pytest.raises(ValueError):
        DriftSpec("nope")
    with pytest.raises(ValueError):
        DriftSpec.ou(float("inf"))
    with pytest.raises(ValueError):
        NoiseSpec(0.0)
    assert noise_sigma(0.0) == 0.0
    assert noise_sigma(NoiseSpec(2.0)) == 2.0
    with pytest.raises(ValueError):
        noise_sigma(-1.0)
    with pytest.raises(ValueError):
        ContainmentQuery(R=3.0, T=1.0, K=2.0)
    with pytest.raises(ValueError):
        ContainmentQuery(R=1.0, T=0.0, K=2.0)


def test_mapping_round_trip():
    for spec in (DriftSpec.ou(2.0, 3), DriftSpec.piecewise(20, 1), DriftSpec.expression("-x"),
                 DriftSpec.radial("-2*r", 2)):
        assert DriftSpec.from_mapping({k: str(v) for k, v in spec.to_dict().items()}) == spec


def test_max_pull():
    assert DriftSpec.ou(3.0).max_pull == 3.0
    assert DriftSpec.piecewise(1e4, 1.0).max_pull == 1e4
    assert DriftSpec.expression("-x").max_pull is None


def test_batch_matches_pointwise():
    rng = np.random.default_rng(3)
    for spec in (DriftSpec.ou(1.5, 2), DriftSpec.radial("-r*tanh(r)", 2)):
        P = rng.normal(size=(20, 2))
        np.testing.assert_allclose(spec.batch(P), np.array([eval_drift(spec, p) for p in P]),
                                   rtol=1e-14, atol=1e-15)


@pytest.mark.parametrize("x,target", [((0.0, 1.0), (1.0, 0.0)), ((3.0, 4.0), (1.0, 0.0))])
def test_rotation_examples(x, target):
    Rm = rotation_to_e1(x)
    u = np.asarray(x) / np.linalg.norm(x)
    np.testing.assert_allclose(Rm @ u, target, atol=1e-15)
    np.testing.assert_allclose(Rm @ Rm.T, np.eye(2), atol=1e-15)
    assert np.linalg.det(Rm) == pytest.approx(1.0)


def test_rotation_at_origin_is_identity():
    np.testing.assert_array_equal(rotation_to_e1(np.zeros(2)), np.eye(2))
    np.testing.assert_array_equal(rotation_to_e1(np.zeros(4)), np.eye(4))
    with pytest.raises(DimensionError):
        rotation_to_e1([1.0])


vec = st.integers(2, 6).flatmap(
    lambda d: arrays(np.float64, d, elements=st.floats(-1e3, 1e3, allow_nan=False)))


@settings(max_examples=200, deadline=None)
@given(vec)
def test_rotation_is_proper_and_aligns(x):
    Rm = rotation_to_e1(x)
    d = x.size
    np.testing.assert_allclose(Rm @ Rm.T, np.eye(d), atol=1e-12)
    assert np.linalg.det(Rm) == pytest.approx(1.0, abs=1e-12)
    r = np.linalg.norm(x)
    if r > 1e-100:
        e1 = np.zeros(d)
        e1[0] = 1.0
        np.testing.assert_allclose(Rm @ (x / r), e1, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(-10, 10), st.floats(0, 5))
def test_linear_families_are_homogeneous(ll, lr, x, c):
    for spec in (DriftSpec.ou(ll), DriftSpec.piecewise(ll, lr)):
        assert eval_drift(spec, c * x) == pytest.approx(c * eval_drift(spec, x), rel=1e-12, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(vec, st.floats(0.1, 3))
def test_radial_is_rotation_equivariant(x, lam):
    f = DriftSpec.radial(f"-{lam!r}*r", x.size)
    g = DriftSpec.ou(lam, x.size)
    np.testing.assert_allclose(eval_drift(f, x), eval_drift(g, x), rtol=1e-12, atol=1e-9)
    if np.linalg.norm(x) > 1e-6:
        Rm = rotation_to_e1(x)
        np.testing.assert_allclose(eval_drift(f, Rm @ x), Rm @ eval_drift(f, x),
                                   rtol=1e-9, atol=1e-9)
