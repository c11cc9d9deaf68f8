import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from containment.dominance import (GRID_NOTE, ContractionError, check_dominance_1d,
                                   check_dominance_nd, check_ou_dominance, contraction_rate,
                                   contraction_to_ou_bound, sphere_points)
from containment.drift import DimensionError, DriftSpec
from containment.estimate import containment_probability
from containment.spectral import asymptotic_rate, kushner_rate

OU1, OU2 = DriftSpec.ou(1.0), DriftSpec.ou(2.0)


def test_equal_drifts_hold_with_zero_margin():
    rep = check_dominance_1d(OU1, OU1, 2.0)
    assert rep.holds and rep.margin == 0.0 and rep.analytic_verdict == "holds"
    assert rep.note == GRID_NOTE


def test_stronger_pull_holds():
    rep = check_dominance_1d(OU2, OU1, 2.0, n_grid=201)
    assert rep.holds and rep.margin == 0.0
    assert rep.witnesses[0]["x"] == 0.0
    assert rep.grid["points"] == 402


def test_counterexample_drift_is_not_dominated_by_ou():
    pw = DriftSpec.piecewise(20.0, 1.0)
    rep = check_dominance_1d(OU1, pw, 1.0)
    assert rep.verdict == "violated" and rep.analytic_verdict == "violated"
    w = rep.witnesses[0]
    assert w["x"] == 1.0 and w["slack"] == pytest.approx(-19.0)
    # the other way round the symmetric condition holds
    assert check_dominance_1d(pw, OU1, 1.0).holds


def test_evaluation_failure_is_a_violation():
    rep = check_dominance_1d(DriftSpec.expression("-x + 1/(x - 0.5)"), OU1, 1.0, n_grid=11)
    assert not rep.holds and rep.margin == -math.inf
    assert rep.witnesses[0]["x"] == 0.5


def test_report_serializes():
    d = json.loads(check_dominance_1d(OU2, OU1, 1.0, 11).to_json())
    assert d["verdict"] == "holds" and d["witnesses"][0]["x"] == 0.0


def test_nd_radial_examples():
    rep = check_dominance_nd(DriftSpec.radial("-2*r", 3), DriftSpec.radial("-r", 3), 2.0)
    assert rep.holds and rep.margin == 0.0 and rep.witnesses[0]["r"] == 0.0
    f = DriftSpec.radial("-r*tanh(r)", 2)
    same = check_dominance_nd(f, f, 2.0)
    assert same.holds and same.margin == 0.0
    bad = check_dominance_nd(DriftSpec.radial("-r + 0.5", 2), DriftSpec.radial("-r", 2), 2.0)
    assert not bad.holds and bad.margin == pytest.approx(-0.5)
    assert 0 < bad.witnesses[0]["r"] < 0.5


def test_nd_non_radial_drifts():
    rep = check_dominance_nd(DriftSpec.ou(2.0, 2), DriftSpec.ou(1.0, 2), 2.0)
    assert rep.holds and rep.analytic_verdict == "holds"
    rep = check_dominance_nd(DriftSpec.ou(1.0, 2), DriftSpec.ou(2.0, 2), 2.0)
    assert not rep.holds and rep.analytic_verdict == "violated"


def test_dimension_checks():
    with pytest.raises(DimensionError):
        check_dominance_1d(DriftSpec.ou(1.0, 2), OU1, 1.0)
    with pytest.raises(DimensionError):
        check_dominance_nd(OU1, OU1, 1.0)
    with pytest.raises(ValueError):
        check_dominance_1d(OU1, OU1, 0.0)


def test_ou_dominance_examples():
    rep = check_ou_dominance(DriftSpec.expression("-x - x^3"), 1.0, 3.0)
    assert rep.holds and rep.margin == pytest.approx(0.0, abs=1e-15)
    assert rep.witnesses[0]["x"] == 0.0
    weak = check_ou_dominance(DriftSpec.ou(0.5), 1.0, 2.0)
    assert not weak.holds and weak.witnesses[0]["x"] != 0.0
    tanh = check_ou_dominance(DriftSpec.radial("-2*r*tanh(r)", 2), 1.0, 3.0)
    assert not tanh.holds and tanh.witnesses[0]["r"] < math.atanh(0.5)


def test_sphere_points():
    th = sphere_points(3, 100, 7)
    assert th.shape == (100, 3)
    np.testing.assert_allclose(np.linalg.norm(th, axis=1), 1.0)
    np.testing.assert_array_equal(th, sphere_points(3, 100, 7))
    assert abs(th.mean(axis=0)).max() < 0.1


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0.5, 4))
def test_ou_pairs_match_analytic_verdict(a, b, K):
    rep = check_dominance_1d(DriftSpec.ou(a), DriftSpec.ou(b), K, 101)
    assert rep.verdict == rep.analytic_verdict


def test_contraction_examples():
    for d in (1, 2, 4):
        est = contraction_rate(DriftSpec.ou(1.0, d), 2.0, 256)
        assert est.lambda_hat == pytest.approx(1.0, abs=1e-8)
    est = contraction_rate(DriftSpec.expression("-x - x^3"), 2.0)
    assert est.lambda_hat == pytest.approx(1.0, abs=1e-6)
    assert est.min_witness == [0.0]
    assert contraction_rate(DriftSpec.expression("x"), 1.0).lambda_hat == pytest.approx(-1.0)


def test_contraction_skips_bad_samples():
    est = contraction_rate(DriftSpec.expression("-x - x^0.5"), 1.0, 64)
    assert est.n_skipped > 0 and est.n_samples + est.n_skipped == 64
    with pytest.raises(ContractionError):
        contraction_rate(DriftSpec.expression("(-1 - x^2)^0.5"), 1.0, 16)
    with pytest.raises(ValueError):
        contraction_rate(OU1, 1.0, fd_step=0.0)


def test_radial_contraction():
    est = contraction_rate(DriftSpec.radial("-r - r^3", 2), 1.5, 512)
    assert est.lambda_hat == pytest.approx(1.0, abs=1e-6)


def test_bound_closed_forms():
    # sqrt(2) sigma = sqrt(2) puts the distance process in the normalized form at R
    b = contraction_to_ou_bound(1.0, 1.0, 3.0, 5.0, "asymptotic")
    assert b.value == pytest.approx(math.exp(-5 * asymptotic_rate(3.0).mu))
    assert b.value == pytest.approx(0.9357, abs=1e-4) and not b.guaranteed
    k = contraction_to_ou_bound(1.0, 1.0, 3.0, 5.0, "kushner")
    assert k.value == pytest.approx(math.exp(-5 * kushner_rate(3.0).mu))
    assert k.value == pytest.approx(0.3292, abs=1e-4) and k.guaranteed
    assert k.value < b.value


def test_bound_sigma_scaling():
    # sigma = 1/sqrt(2): OU(1, 1) distance process, normalized radius 3 sqrt(2)
    b = contraction_to_ou_bound(1.0, 1 / math.sqrt(2), 3.0, 5.0, "asymptotic")
    assert b.value == pytest.approx(math.exp(-5 * asymptotic_rate(3 * math.sqrt(2)).mu))
    assert b.rate["R_normalized"] == pytest.approx(3 * math.sqrt(2))


def test_bound_edge_cases():
    assert contraction_to_ou_bound(1.0, 1.0, 0.0, 5.0).value == 0.0
    with pytest.raises(ValueError):
        contraction_to_ou_bound(0.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        contraction_to_ou_bound(1.0, 1.0, 1.0, 1.0, "mc")
    with pytest.raises(DimensionError):
        contraction_to_ou_bound(1.0, 1.0, 1.0, 1.0, "spectral", d=2)


def test_bound_provenance():
    b = contraction_to_ou_bound(2.0, 0.5, 1.0, 1.0, "spectral")
    steps = [p["step"] for p in b.provenance]
    assert steps == ["contraction", "radial dominance", "comparison", "OU reference"]
    assert all(p["claim"] and p["paper_anchor"] for p in b.provenance)
    assert b.to_dict()["rate"]["method"] == "spectral"


def test_bound_mc_callable():
    def mc(spec, s, R, T):
        return containment_probability(spec, s, np.zeros(spec.dimension), R, T, 500, 1e-2, 0)
    b = contraction_to_ou_bound(1.0, 1.0, 1.5, 1.0, "mc", d=2, mc=mc)
    assert 0.0 < b.value < 1.0 and b.method == "mc" and not b.guaranteed
    assert b.rate["drift"]["dimension"] == 2
