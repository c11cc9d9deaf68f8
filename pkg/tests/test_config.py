from pathlib import Path

import pytest

from containment.config import DEFAULT_SEED, EXPERIMENTS, ConfigError, load_config
from containment.drift import DriftSpec

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path, text):
    p = tmp_path / "c.ini"
    p.write_text(text)
    return str(p)


@pytest.mark.parametrize("kind", sorted(EXPERIMENTS))
def test_defaults_load(kind):
    cfg = load_config(kind)
    assert cfg.run["seed"] == DEFAULT_SEED and cfg.run["workers"] == 1
    r = cfg.resolved()
    assert r["experiment"] == kind and "workers" not in r and "out" not in r


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.ini")), ids=lambda p: p.name)
def test_shipped_configs_load(path):
    kind = path.stem.replace("_", "-")
    cfg = load_config(kind, str(path))
    assert cfg.kind == kind


def test_shipped_defaults_match_figures():
    dec = load_config("fig-decay", str(CONFIGS / "fig_decay.ini")).sections["mc"]
    assert (dec["dt"], dec["n_paths"], dec["bridge"]) == (1e-3, 100_000, True)
    sw = load_config("fig-counterexample", str(CONFIGS / "fig_counterexample.ini")).sections["sweep"]
    assert (sw["R"], sw["T"], sw["n_paths"], sw["dt"]) == (0.5, 1.0, 200_000, 1e-4)
    assert sw["lambdas"] == [1, 2, 5, 10, 20, 50, 100, 1000, 10000]


def test_values_parse(tmp_path):
    p = _write(tmp_path, """
[run]
seed = 7
[sweep]
lambdas = 1, 3.5
bridge = off
""")
    cfg = load_config("fig-counterexample", p)
    assert cfg.run["seed"] == 7
    assert cfg.sections["sweep"]["lambdas"] == [1.0, 3.5]
    assert cfg.sections["sweep"]["bridge"] is False


def test_drift_sections(tmp_path):
    p = _write(tmp_path, """
[drift_f]
family = piecewise
lambda_left = 20
lambda_right = 1
[drift_g]
family = expression
source = "-x"
""")
    cfg = load_config("coupling-demo", p)
    assert cfg.drifts["drift_f"] == DriftSpec.piecewise(20, 1)
    assert cfg.drifts["drift_g"] == DriftSpec.expression("-x")


def test_all_errors_reported_together(tmp_path):
    p = _write(tmp_path, """
[run]
seed = -1
colour = blue
[extra]
a = 1
[mc]
n_paths = many
dt = 0
""")
    with pytest.raises(ConfigError) as ei:
        load_config("fig-decay", p)
    errs = ei.value.errors
    for frag in ("run.seed:", "run.colour: unknown key", "extra: unknown section",
                 "mc.n_paths: cannot parse", "mc.dt: must be > 0"):
        assert any(e.startswith(frag) for e in errs), frag
    assert len(errs) == 5


@pytest.mark.parametrize("kind,text,frag", [
    ("bound", "[bound]\nR = 4\nK = 3\n", "bound.R: must be <= bound.K"),
    ("bound", "[drift]\nfamily = radial\nsource = -r\n", "bound.rate_method"),
    ("fig-decay", "[mc]\nhorizons = 5\n", "mc.horizons"),
    ("fig-decay", "[decay]\nn_grid = 100\n", "decay.n_grid: must be an odd integer"),
    ("coupling-demo", "[drift_f]\nfamily = radial\nsource = -r\n", "drift_f.dimension"),
    ("coupling-demo", "[drift_f]\nfamily = expression\nsource = -x +\n", "drift_f.source"),
    ("coupling-demo", "[drift_f]\nfamily = ou\n", "drift_f.lambda: required"),
    ("coupling-demo", "[drift_f]\nfamily = spline\n", "drift_f.family"),
    ("trap-demo", "[trap]\nx0 = 1\n", "trap.x0"),
    ("trap-demo", "[drift]\nfamily = ou\nlambda = 1\n", "drift.family: trap-demo"),
    ("bound", "[experiment]\nkind = fig-decay\n", "experiment.kind"),
    ("fig-counterexample", "[sweep]\nlambdas = 0.5\n", "sweep.lambdas"),
])
def test_validation_messages(tmp_path, kind, text, frag):
    with pytest.raises(ConfigError) as ei:
        load_config(kind, _write(tmp_path, text))
    assert any(frag in e for e in ei.value.errors), ei.value.errors


def test_overrides(tmp_path):
    cfg = load_config("fig-decay", None, {"seed": 3, "workers": 4})
    assert cfg.run["seed"] == 3 and cfg.run["workers"] == 4
    assert cfg.resolved()["seed"] == 3
    with pytest.raises(ConfigError, match="--workers"):
        load_config("fig-decay", None, {"workers": 0})
    with pytest.raises(ConfigError, match="--seed"):
        load_config("fig-decay", None, {"seed": 2 ** 64})


def test_io_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("bound", str(tmp_path / "missing.ini"))
    with pytest.raises(ConfigError, match="syntax error"):
        load_config("bound", _write(tmp_path, "no section header\n"))
    with pytest.raises(ConfigError, match="unknown kind"):
        load_config("fig-9")


def test_resolved_ignores_workers_and_out(tmp_path):
    a = load_config("bound", _write(tmp_path, "[run]\nworkers = 8\nout = x.json\n")).resolved()
    assert a == load_config("bound").resolved()
