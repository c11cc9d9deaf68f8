"""End-to-end acceptance criteria 1-10.

Each test prints one ``criterion N: PASS|FAIL`` line (collected again in the
terminal summary) and then asserts the same verdict, so a criterion that is
not met fails its test.  Criteria 4, 5 and 10 share the CLI artifacts, which
are produced once per worker count and cached for the module.
"""

import functools
import io
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from containment.cli import run
from containment.dominance import (check_dominance_1d, check_dominance_nd, contraction_rate)
from containment.drift import DriftSpec
from containment.estimate import containment_probability, pooled_se, wilson_interval
from containment.sim import coupled_violation_stats
from containment.spectral import asymptotic_rate, kushner_rate, sturm_liouville_rate

pytestmark = pytest.mark.acceptance

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SQRT2 = math.sqrt(2.0)

DECAY_INI = """
[experiment]
kind = fig-decay
[decay]
radii = 3
[mc]
horizons = 5, 10, 15
n_paths = 100000
dt = 1e-3
bridge = true
"""


def _cli(argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(argv, out, err)
    assert code == 0, err.getvalue()
    return out.getvalue()


@functools.lru_cache(maxsize=None)
def decay_artifact(workers, path):
    return _cli(["fig-decay", "--config", path, "--workers", str(workers)])


@functools.lru_cache(maxsize=None)
def sweep_artifact(workers):
    return _cli(["fig-counterexample", "--config", str(CONFIGS / "fig_counterexample.ini"),
                 "--workers", str(workers)])


@pytest.fixture(scope="module")
def decay_ini(tmp_path_factory):
    p = tmp_path_factory.mktemp("acceptance") / "decay.ini"
    p.write_text(DECAY_INI)
    return str(p)


def _table(text):
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    header = lines[0].split(",")
    return [dict(zip(header, l.split(","))) for l in lines[1:]]


# ---------------------------------------------------------------- 1 - 3

def test_criterion_1_kushner_closed_form(criterion):
    a, b = kushner_rate(2.0).mu, kushner_rate(3.0).mu
    ok = a == 0.5 and abs(b - 2.0 / 9.0) <= np.finfo(float).eps * (2.0 / 9.0)
    assert criterion(1, ok, f"mu_K(2)={a!r} mu_K(3)={b!r}")


def test_criterion_2_drift_off_oracle(criterion):
    worst, slowest = 0.0, 0.0
    for R in (0.5, 1.0, 2.0):
        t0 = time.perf_counter()
        mu = sturm_liouville_rate(R, weight="unit").mu
        slowest = max(slowest, time.perf_counter() - t0)
        worst = max(worst, abs(mu / (math.pi / (2 * R)) ** 2 - 1.0))
    ok = worst <= 1e-4 and slowest < 1.0
    assert criterion(2, ok, f"max rel err {worst:.2e} (tol 1e-4), slowest radius {slowest:.3f}s (< 1s)")


def test_criterion_3_asymptotic_agreement(criterion):
    t0 = time.perf_counter()
    parts, ok = [], True
    for R in (3.0, 3.5, 4.0):
        ms, ma = sturm_liouville_rate(R).mu, asymptotic_rate(R).mu
        rel = abs(ms / ma - 1.0)
        ok &= rel <= 0.15
        parts.append(f"R={R:g}: spectral/asymptotic={ms / ma:.3f}")
    dt = time.perf_counter() - t0
    ok &= dt < 5.0
    assert criterion(3, ok, "; ".join(parts) + f" (tol 15%), {dt:.2f}s")


# ---------------------------------------------------------------- 4 - 5

def test_criterion_4_decay_fit(criterion, decay_ini):
    t0 = time.perf_counter()
    row, = _table(decay_artifact(1, decay_ini))
    dt = time.perf_counter() - t0
    mu_s = sturm_liouville_rate(3.0).mu
    mu, se = float(row["mu_mc"]), float(row["mu_mc_stderr"])
    z = (mu - mu_s) / se
    ok = row["mc_lower_bound"] == "0" and abs(z) <= 3.0
    assert criterion(4, ok, f"mu_fit={mu:.6g} +- {se:.3g}, mu_D(3)={mu_s:.6g}, z={z:+.2f} "
                            f"(|z| <= 3), p_hat(5,10,15)=({row['p_hat_T5']}, {row['p_hat_T10']}, "
                            f"{row['p_hat_T15']}), {dt:.0f}s")


def _sweep_rows(text):
    rows = _table(text)
    out = {}
    for r in rows:
        n = int(r["n_paths"])
        p = float(r["p_hat"])
        out[float(r["lambda"])] = dict(p=p, n=n, k=round(p * n),
                                       lo99=float(r["ci99_low"]), hi99=float(r["ci99_high"]))
    return out


def test_criterion_5_counterexample_shape(criterion):
    t0 = time.perf_counter()
    rows = _sweep_rows(sweep_artifact(1))
    dt = time.perf_counter() - t0
    ref = rows.pop(math.inf)
    a = rows[20.0]["p"] > rows[1.0]["p"] and rows[20.0]["lo99"] > rows[1.0]["hi99"]
    best = max(rows, key=lambda lam: rows[lam]["p"])
    b = best in (10.0, 20.0, 50.0)
    big = rows[10000.0]
    pr = (big["k"] + ref["k"]) / (big["n"] + ref["n"])
    se = math.sqrt(pr * (1 - pr) * (1 / big["n"] + 1 / ref["n"]))
    gap = abs(big["p"] - ref["p"]) / se
    c = gap <= 3.0
    curve = " ".join(f"{lam:g}:{r['p']:.5f}" for lam, r in sorted(rows.items()))
    detail = (f"(a) {'ok' if a else 'no'} P(1)={rows[1.0]['p']:.5f} P(20)={rows[20.0]['p']:.5f}; "
              f"(b) {'ok' if b else 'no'} argmax={best:g}; "
              f"(c) {'ok' if c else 'no'} |P(1e4)-P_ref|={gap:.1f} pooled SE "
              f"(P_ref={ref['p']:.5f}); curve {curve}; {dt:.0f}s")
    assert criterion(5, a and b and c, detail)


# ---------------------------------------------------------------- 6 - 8

def _pathwise(f, g, n_paths, seed):
    out = {}
    for dt in (1e-3, 1e-4):
        viol, _, ovf, h = coupled_violation_stats(f, g, dt, 1.0, 4.0, n_paths, seed)
        assert not ovf.any()
        out[dt] = (float(viol.max()), float(np.mean(np.maximum(viol, 0.0))))
    fine_ok = out[1e-4][0] <= 10 * math.sqrt(1e-4)
    coarse_worse = out[1e-3][1] > out[1e-4][1]
    detail = (f"max viol dt=1e-4: {out[1e-4][0]:.3g} (<= {10 * math.sqrt(1e-4):g}); "
              f"mean positive viol dt=1e-3 {out[1e-3][1]:.3g} > dt=1e-4 {out[1e-4][1]:.3g}")
    return fine_ok and coarse_worse, detail


def test_criterion_6_sign_coupling(criterion):
    t0 = time.perf_counter()
    ok, detail = _pathwise(DriftSpec.ou(2.0), DriftSpec.ou(1.0), 1000, 6)
    dt = time.perf_counter() - t0
    ok &= dt < 60
    assert criterion(6, ok, f"{detail}; {dt:.1f}s")


def test_criterion_7_rotation_coupling(criterion):
    f, g = DriftSpec.radial("-2*r", 2), DriftSpec.radial("-r", 2)
    ok, detail = _pathwise(f, g, 1000, 7)
    ou = DriftSpec.ou(1.0, 2)
    x0 = np.zeros(2)
    rot = containment_probability(ou, 1.0, x0, 2.0, 1.0, 100_000, 1e-3, 71, noise_mode="rotated")
    plain = containment_probability(ou, 1.0, x0, 2.0, 1.0, 100_000, 1e-3, 72, noise_mode="plain")
    gap = abs(rot.p_hat - plain.p_hat) / pooled_se(rot, plain)
    ok &= gap <= 3.0
    assert criterion(7, ok, f"{detail}; marginal law: rotated {rot.p_hat:.5f} vs plain "
                            f"{plain.p_hat:.5f}, {gap:.2f} pooled SE (<= 3)")


APPROVED_PAIRS = [
    ("OU(2) vs OU(1)", DriftSpec.ou(2.0), DriftSpec.ou(1.0), 4.0),
    ("piecewise(20,1) vs OU(1)", DriftSpec.piecewise(20.0, 1.0), DriftSpec.ou(1.0), 1.0),
    ("-x-x^3 vs OU(1)", DriftSpec.expression("-x - x^3"), DriftSpec.ou(1.0), 3.0),
    ("radial -2r vs -r, d=2", DriftSpec.radial("-2*r", 2), DriftSpec.radial("-r", 2), 4.0),
    ("radial -2r vs -r, d=3", DriftSpec.radial("-2*r", 3), DriftSpec.radial("-r", 3), 2.0),
    ("trap -5r vs -r in beam, d=2", DriftSpec.radial("-5*r*max(sgn(1.5 - r), 0)", 2),
     DriftSpec.radial("-r*max(sgn(1.5 - r), 0)", 2), 2.0),
    ("OU(1.5) vs radial -r, d=2", DriftSpec.ou(1.5, 2), DriftSpec.radial("-r", 2), 2.0),
]


def test_criterion_8_probability_ordering(criterion):
    worst, parts, ok = math.inf, [], True
    for i, (name, f, g, K) in enumerate(APPROVED_PAIRS):
        rep = (check_dominance_1d(f, g, K) if f.dimension == 1 else check_dominance_nd(f, g, K))
        ok &= rep.holds
        x0 = np.zeros(f.dimension)
        for R in (K / 2, K):
            ex = containment_probability(f, 1.0, x0, R, 1.0, 20_000, 1e-3, 800 + 2 * i, True)
            ey = containment_probability(g, 1.0, x0, R, 1.0, 20_000, 1e-3, 801 + 2 * i, True)
            z = (ex.p_hat - ey.p_hat) / max(pooled_se(ex, ey), 1e-300)
            worst = min(worst, z)
            ok &= ex.p_hat >= ey.p_hat - 3 * pooled_se(ex, ey)
        parts.append(name)
    assert criterion(8, ok, f"{len(APPROVED_PAIRS)} checker-approved pairs x R in {{K/2, K}}; "
                            f"smallest (p_X - p_Y)/pooled SE = {worst:+.2f} (>= -3)")


# ---------------------------------------------------------------- 9 - 10

def test_criterion_9_contraction_pipeline(criterion):
    lam = contraction_rate(DriftSpec.expression("-x - x^3"), 2.0).lambda_hat
    rate_ok = abs(lam - 1.0) <= 1e-6
    doc = json.loads(_cli(["bound", "--config", str(CONFIGS / "bound.ini")]))
    assert doc["config"]["bound"]["sigma"] == pytest.approx(1 / SQRT2)
    bound = doc["bound"]["value"]
    value_ok = abs(bound - 0.9357) <= 5e-4
    dist = doc["mc"]["distance"]
    mc_ok = dist["p_hat"] >= bound - 3 * dist["se"]
    detail = (f"lambda_hat={lam!r} ({'ok' if rate_ok else 'no'}); bound={bound:.6f} vs expected "
              f"0.9357 ({'ok' if value_ok else 'no'}); MC distance p_hat={dist['p_hat']:.5f} "
              f"se={dist['se']:.2g} >= bound - 3 SE ({'ok' if mc_ok else 'no'})")
    assert criterion(9, rate_ok and value_ok and mc_ok, detail)


def test_criterion_10_reproducibility(criterion, decay_ini):
    same = {}
    for name, make in (("fig-decay", lambda w: decay_artifact(w, decay_ini)),
                       ("fig-counterexample", sweep_artifact)):
        base = make(1)
        same[name] = all(make(w) == base for w in (4, 8))
    ok = all(same.values())
    assert criterion(10, ok, ", ".join(f"{k} byte-identical for workers 1/4/8: {v}"
                                       for k, v in same.items()))
