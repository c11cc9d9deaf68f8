"""Experiment configuration: INI files with typed, field-level validation.

Each experiment reads a fixed set of sections.  Unknown sections or keys,
bad types and out-of-range values are all collected and reported together
as ``section.key: message`` lines in a :class:`ConfigError`.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass

from .drift import DriftSpec
from .expr import ParseError

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "EXPERIMENTS", "DEFAULT_SEED"]

DEFAULT_SEED = 20240601
FIG3_LAMBDAS = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 1000.0, 10000.0]


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


def _float(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _floats(s):
    s = s.strip()
    return [] if not s else [_float(t) for t in s.split(",")]


def _int(s):
    return int(s.strip())


def _bool(s):
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true/false")


def _str(s):
    return s.strip().strip('"').strip("'")


def _pos(v):
    return None if v > 0 else "must be > 0"


def _nonneg(v):
    return None if v >= 0 else "must be >= 0"


def _all_pos(v):
    return None if all(x > 0 for x in v) else "all values must be > 0"


def _odd3(v):
    return None if v >= 3 and v % 2 == 1 else "must be an odd integer >= 3"


def _ge1(v):
    return None if v >= 1 else "must be >= 1"


def _u64(v):
    return None if 0 <= v < 2 ** 64 else "must fit in 64 unsigned bits"


def _choice(*opts):
    def check(v):
        return None if v in opts else f"must be one of {', '.join(opts)}"
    return check


# key -> (parser, default, check); default None means required
RUN = {"seed": (_int, DEFAULT_SEED, _u64), "workers": (_int, 1, _ge1), "out": (_str, "", None)}

EXPERIMENTS = {
    "fig-decay": {
        "decay": {"radii": (_floats, [1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0], _all_pos),
                  "n_grid": (_int, 4001, _odd3), "refinement": (_int, 2, _nonneg)},
        "mc": {"horizons": (_floats, [5.0, 10.0, 15.0], None),
               "n_paths": (_int, 100_000, _ge1), "dt": (_float, 1e-3, _pos),
               "bridge": (_bool, True, None)},
    },
    "fig-counterexample": {
        "sweep": {"lambdas": (_floats, FIG3_LAMBDAS, lambda v: None if v and min(v) >= 1 else "need values >= 1"),
                  "R": (_float, 0.5, _pos), "T": (_float, 1.0, _pos),
                  "n_paths": (_int, 200_000, _ge1), "dt": (_float, 1e-4, _pos),
                  "bridge": (_bool, True, None), "sigma": (_float, 1.0, _pos)},
    },
    "coupling-demo": {
        "drift_f": "drift", "drift_g": "drift",
        "coupling": {"dt": (_float, 1e-3, _pos), "T": (_float, 5.0, _pos), "K": (_float, 4.0, _pos),
                     "epsilon": (_float, 0.5, _pos), "sigma": (_float, 1.0, _pos),
                     "path": (_int, 0, _nonneg), "n_grid": (_int, 2001, _odd3)},
    },
    "bound": {
        "drift": "drift",
        "bound": {"sigma": (_float, 0.7071067811865476, _pos), "R": (_float, 3.0, _pos),
                  "T": (_float, 5.0, _pos), "K": (_float, 3.0, _pos),
                  "rate_method": (_str, "asymptotic", _choice("spectral", "asymptotic", "kushner", "mc")),
                  "n_samples": (_int, 1024, _ge1), "n_grid": (_int, 4001, _odd3),
                  "dt": (_float, 1e-3, _pos), "n_paths": (_int, 20_000, _ge1),
                  "bridge": (_bool, True, None)},
    },
    "trap-demo": {
        "drift": "drift", "reference": "drift?",
        "trap": {"sigma": (_float, 1.0, _nonneg), "beam_radius": (_float, 1.5, _pos),
                 "R": (_float, 2.0, _pos), "T": (_float, 1.0, _pos), "dt": (_float, 1e-3, _pos),
                 "n_paths": (_int, 20_000, _ge1), "n_show": (_int, 3, _nonneg),
                 "x0": (_floats, [0.0, 0.0], None), "K": (_float, 2.0, _pos)},
    },
}

DEFAULT_DRIFTS = {
    ("coupling-demo", "drift_f"): {"family": "ou", "lambda": "2"},
    ("coupling-demo", "drift_g"): {"family": "ou", "lambda": "1"},
    ("bound", "drift"): {"family": "expression", "source": "-x - x^3"},
    ("trap-demo", "drift"): {"family": "radial", "dimension": "2",
                             "source": "-5*r*max(sgn(1.5 - r), 0)"},
    ("trap-demo", "reference"): {"family": "radial", "dimension": "2",
                                 "source": "-r*max(sgn(1.5 - r), 0)"},
}

DRIFT_KEYS = ("family", "dimension", "lambda", "lambda_left", "lambda_right", "source")


@dataclass
class ExperimentConfig:
    kind: str
    run: dict
    sections: dict          # typed values per section
    drifts: dict            # section name -> DriftSpec

    def resolved(self) -> dict:
        """Everything that determines the artifact (worker count and output path excluded)."""
        out = {"experiment": self.kind, "seed": self.run["seed"]}
        for name, vals in sorted(self.sections.items()):
            out[name] = dict(sorted(vals.items()))
        for name, spec in sorted(self.drifts.items()):
            out[name] = spec.to_dict()
        return out


def _parse_section(name, schema, raw, errors):
    vals = {}
    for key in raw:
        if key not in schema:
            errors.append(f"{name}.{key}: unknown key")
    for key, (parse, default, check) in schema.items():
        if key in raw:
            try:
                v = parse(raw[key])
            except (ValueError, TypeError) as e:
                errors.append(f"{name}.{key}: cannot parse {raw[key]!r} ({e})")
                continue
        elif default is None:
            errors.append(f"{name}.{key}: required")
            continue
        else:
            v = default
        msg = check(v) if check else None
        if msg:
            errors.append(f"{name}.{key}: {msg} (got {v!r})")
        else:
            vals[key] = v
    return vals


def _parse_drift(name, raw, errors):
    for key in raw:
        if key not in DRIFT_KEYS:
            errors.append(f"{name}.{key}: unknown key")
    fam = _str(raw.get("family", ""))
    if fam not in ("ou", "piecewise", "expression", "radial"):
        errors.append(f"{name}.family: must be one of ou, piecewise, expression, radial (got {fam!r})")
        return None
    need = {"ou": ["lambda"], "piecewise": ["lambda_left", "lambda_right"],
            "expression": ["source"], "radial": ["source"]}[fam]
    missing = [k for k in need if k not in raw]
    for k in missing:
        errors.append(f"{name}.{k}: required for family {fam}")
    if missing:
        return None
    try:
        return DriftSpec.from_mapping({k: _str(v) for k, v in raw.items()})
    except ParseError as e:
        errors.append(f"{name}.source: {e}")
    except (ValueError, TypeError) as e:
        errors.append(f"{name}: {e}")
    return None


def load_config(kind: str, path: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Read and validate the config of experiment ``kind`` (defaults when ``path`` is None)."""
    if kind not in EXPERIMENTS:
        raise ConfigError([f"experiment: unknown kind {kind!r}"])
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except OSError as e:
            raise ConfigError([f"config: cannot read {path}: {e}"]) from None
        except configparser.Error as e:
            raise ConfigError([f"config: syntax error: {e}"]) from None
    errors = []
    schema = EXPERIMENTS[kind]
    known = {"run", "experiment"} | set(schema)
    for sec in cp.sections():
        if sec not in known:
            errors.append(f"{sec}: unknown section for experiment {kind}")
    if cp.has_section("experiment"):
        k = _str(cp["experiment"].get("kind", kind))
        if k != kind:
            errors.append(f"experiment.kind: config is for {k!r}, not {kind!r}")
    run = _parse_section("run", RUN, dict(cp["run"]) if cp.has_section("run") else {}, errors)
    for key, v in (overrides or {}).items():
        if v is not None:
            msg = RUN[key][2](v) if RUN[key][2] else None
            if msg:
                errors.append(f"--{key}: {msg} (got {v!r})")
            else:
                run[key] = v
    sections, drifts = {}, {}
    for name, sub in schema.items():
        raw = dict(cp[name]) if cp.has_section(name) else None
        if isinstance(sub, str):
            if raw is None:
                raw = DEFAULT_DRIFTS.get((kind, name))
                if raw is None:
                    continue
            spec = _parse_drift(name, raw, errors)
            if spec is not None:
                drifts[name] = spec
        else:
            sections[name] = _parse_section(name, sub, raw or {}, errors)
    if not errors:
        _cross_checks(kind, sections, drifts, errors)
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(kind, run, sections, drifts)


def _cross_checks(kind, s, drifts, errors):
    if kind == "fig-decay" and s["mc"]["horizons"]:
        h = s["mc"]["horizons"]
        if len(h) < 2 or min(h) < 1:
            errors.append("mc.horizons: need at least two horizons, all >= 1 (or leave empty)")
    if kind == "coupling-demo":
        for n in ("drift_f", "drift_g"):
            if drifts[n].dimension != 1:
                errors.append(f"{n}.dimension: coupling-demo needs 1-d drifts")
        c = s["coupling"]
        if c["dt"] > c["T"]:
            errors.append("coupling.dt: must not exceed coupling.T")
    if kind == "bound":
        b = s["bound"]
        if b["R"] > b["K"]:
            errors.append(f"bound.R: must be <= bound.K (got R={b['R']}, K={b['K']})")
        if drifts["drift"].dimension > 1 and b["rate_method"] != "mc":
            errors.append("bound.rate_method: only 'mc' is available for d >= 2")
    if kind == "trap-demo":
        t = s["trap"]
        for n, spec in drifts.items():
            if spec.family != "radial" or spec.dimension != 2:
                errors.append(f"{n}.family: trap-demo needs a 2-d radial drift")
        if len(t["x0"]) != 2:
            errors.append("trap.x0: need two coordinates")
