"""Command-line front end.

Subcommands write one CSV or JSON artifact each.  Every artifact starts with
the tool version and the resolved configuration (``#`` rows in CSV, fields in
JSON) and is byte-identical across runs with the same configuration, whatever
the worker count.

Exit codes: 0 success, 1 configuration error, 2 numeric failure, 3 refused
because a dominance or contraction check failed (``--force`` overrides the
refusal where a result can still be produced).
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .dominance import (ContractionError, check_dominance_1d, check_dominance_nd,
                        check_ou_dominance, contraction_rate, contraction_to_ou_bound)
from .drift import DriftSpec
from .estimate import (containment_probability, counterexample_sweep, distance_containment,
                       fit_decay_rate, pooled_se, reflected_reference)
from .expr import ExprDomainError
from .rng import RngStream
from .sim import PathOverflowError, euler_maruyama, first_exit, hitting_steps, simulate_coupled_1d
from .spectral import (SpectralConfig, SpectralConvergenceError, containment_lower_bound,
                       ou_rate, rate_table)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_REFUSED = 0, 1, 2, 3
TOOL = f"containment {__version__}"
SQRT2 = math.sqrt(2.0)
# contraction estimates carry finite-difference noise; the bound uses a slightly smaller rate
LAMBDA_SAFETY = 1e-6


class Refusal(Exception):
    def __init__(self, message, artifact=None):
        super().__init__(message)
        self.artifact = artifact


def _f(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _csv(cfg: ExperimentConfig, header, rows, meta=()) -> str:
    buf = io.StringIO()
    buf.write(f"# tool: {TOOL}\n")
    buf.write("# config: " + json.dumps(cfg.resolved(), sort_keys=True) + "\n")
    for k, v in meta:
        buf.write(f"# {k}: {v}\n")
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(x if isinstance(x, str) else _f(x) for x in r) + "\n")
    return buf.getvalue()


def _json(cfg: ExperimentConfig, body: dict) -> str:
    doc = {"tool": TOOL, "config": cfg.resolved()}
    doc.update(body)
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def cmd_fig_decay(cfg: ExperimentConfig):
    dec, mc = cfg.sections["decay"], cfg.sections["mc"]
    table = rate_table(dec["radii"], SpectralConfig(dec["n_grid"], dec["refinement"]))
    with_mc = bool(mc["horizons"])
    header = ["R", "mu_kushner", "mu_spectral", "mu_asymptotic"]
    if with_mc:
        header += ["mu_mc", "mu_mc_stderr", "mc_lower_bound"]
        header += [f"p_hat_T{t:g}" for t in mc["horizons"]]
    header.append("status")
    rows, failed = [], False
    for R, mk, ms, ma, status in table.rows:
        row = [R, mk, ms, ma]
        if with_mc:
            try:
                rate, ests = fit_decay_rate(DriftSpec.ou(1.0), SQRT2, R, mc["horizons"],
                                            mc["n_paths"], mc["dt"], cfg.run["seed"],
                                            bridge=mc["bridge"], workers=cfg.run["workers"])
                row += [rate.mu, rate.stderr, rate.lower_bound] + [e.p_hat for e in ests]
            except (PathOverflowError, ValueError) as e:
                row += [math.nan, None, None] + [None] * len(mc["horizons"])
                status = f"mc failed: {e}"
        failed |= status != "ok"
        rows.append(row + [status.replace(",", ";")])
    meta = [("process", "dX = -X dt + sqrt(2) dB, X0 = 0")]
    if with_mc:
        meta.append(("mc", f"dt={mc['dt']!r} n_paths={mc['n_paths']} bridge={mc['bridge']}"))
    return _csv(cfg, header, rows, meta), EXIT_NUMERIC if failed else EXIT_OK


def cmd_fig_counterexample(cfg: ExperimentConfig):
    s = cfg.sections["sweep"]
    seed, workers = cfg.run["seed"], cfg.run["workers"]
    res = counterexample_sweep(s["lambdas"], s["R"], s["T"], s["n_paths"], s["dt"], seed,
                               s["bridge"], workers, s["sigma"])
    # the reference runs on its own stream so that it is independent of the sweep
    ref = reflected_reference(s["R"], s["T"], s["n_paths"], s["dt"], (seed + 1) % 2 ** 64,
                              s["bridge"], workers, s["sigma"])
    header = ["kind", "lambda", "p_hat", "ci_low", "ci_high", "ci99_low", "ci99_high",
              "p_hat_raw", "dt", "n_paths", "n_overflow"]
    rows = []
    for lam, e in res + [(math.inf, ref)]:
        lo99, hi99 = e.interval(0.99)
        rows.append(["sweep" if math.isfinite(lam) else "reflected", lam, e.p_hat, e.ci_low,
                     e.ci_high, lo99, hi99, e.p_hat_raw, e.dt, e.n_paths, e.n_overflow])
    best = max(res, key=lambda t: t[1].p_hat)[0]
    meta = [("argmax_lambda", repr(best)),
            ("drift", "f(x) = -x for x > 0, -lambda x for x < 0; paired seeds across lambda"),
            ("reference", "P(sup |X^1| <= R) of the reflected pull-1 process, seed + 1")]
    return _csv(cfg, header, rows, meta), EXIT_OK


def cmd_coupling_demo(cfg: ExperimentConfig, force: bool = False):
    c = cfg.sections["coupling"]
    f, g = cfg.drifts["drift_f"], cfg.drifts["drift_g"]
    rep = check_dominance_1d(f, g, c["K"], c["n_grid"])
    if not rep.holds and not force:
        raise Refusal(f"f does not dominate g on [-K, K]: margin {rep.margin!r} at {rep.witnesses[0]}")
    pair = simulate_coupled_1d(f, g, c["dt"], c["T"], c["K"], RngStream(cfg.run["seed"], c["path"]),
                               c["sigma"])
    y = pair.Y.states[:, 0]
    hs = hitting_steps(y, c["epsilon"])
    taus = {t for t, _ in hs}
    upss = {u for _, u in hs if u is not None}
    t = pair.X.times
    n = len(t)
    header = ["t", "x", "y", "noise_x", "noise_y", "tau", "upsilon"]
    rows = []
    for k in range(n):
        nx = pair.noise_x[k, 0] if k < n - 1 else None
        ny = pair.noise_y[k, 0] if k < n - 1 else None
        rows.append([t[k], pair.X.states[k, 0], y[k], nx, ny, int(k in taus), int(k in upss)])
    viol = float(np.max(np.abs(pair.X.states[:, 0]) - np.abs(y)))
    meta = [("dominance", f"{rep.verdict} margin={rep.margin!r} forced={bool(force and not rep.holds)}"),
            ("coupling", "sign coupling, factor +1 at an exactly zero state"),
            ("tau_times", " ".join(repr(a * pair.X.dt) for a, _ in hs)),
            ("upsilon_times", " ".join(repr(b * pair.X.dt) for _, b in hs if b is not None)),
            ("T_K", repr(pair.T_K_discrete)),
            ("max_abs_x_minus_abs_y", repr(viol)),
            ("dt_effective", repr(pair.X.dt))]
    return _csv(cfg, header, rows, meta), EXIT_OK


def cmd_bound(cfg: ExperimentConfig, force: bool = False):
    b = cfg.sections["bound"]
    f = cfg.drifts["drift"]
    seed, workers = cfg.run["seed"], cfg.run["workers"]
    d = f.dimension
    con = contraction_rate(f, b["K"], b["n_samples"], master_seed=seed)
    body = {"contraction": con.to_dict()}
    if con.lambda_hat <= 0:
        body.update({"verdict": "violated", "witness": con.min_witness, "bound": None,
                     "reason": "drift is not contracting on the sampled box"})
        raise Refusal(f"drift is not contracting (lambda_hat = {con.lambda_hat!r} at {con.min_witness})",
                      _json(cfg, body))
    lam = con.lambda_hat * (1.0 - LAMBDA_SAFETY)
    rep = check_ou_dominance(f, lam, b["K"], master_seed=seed)
    body["dominance"] = rep.to_dict()
    body["verdict"] = rep.verdict
    scfg = SpectralConfig(b["n_grid"], 2)

    def mc_ref(spec, sigma, R, T):
        return containment_probability(spec, sigma, None, R, T, b["n_paths"], b["dt"], seed,
                                       b["bridge"], workers)

    bound = contraction_to_ou_bound(lam, b["sigma"], b["R"], b["T"], b["rate_method"], scfg, d,
                                    mc=mc_ref)
    body["bound"] = bound.to_dict()
    if rep.holds:
        if b["rate_method"] == "mc":
            ref = DriftSpec.ou(lam, d)
            st = mc_ref(ref, b["sigma"], b["R"], b["T"])
            body["state_bound"] = {"value": st.p_hat, "method": "mc",
                                   "reference": st.to_record(ref, b["sigma"], seed)}
        else:
            r = ou_rate(lam, b["sigma"], b["R"], b["rate_method"], scfg)
            sb = containment_lower_bound(r, b["T"])
            body["state_bound"] = dict(sb.to_dict(), rate=dict(r.to_dict(), **r.meta))
    else:
        body["state_bound"] = None
    dist = distance_containment(f, b["sigma"], None, b["R"], b["T"], b["n_paths"], b["dt"],
                                seed, b["bridge"], workers)
    state = containment_probability(f, b["sigma"], None, b["R"], b["T"], b["n_paths"], b["dt"],
                                     seed, b["bridge"], workers)
    body["mc"] = {"distance": dist.to_record(f.to_dict(), b["sigma"], seed) | {"se": dist.se},
                  "state": state.to_record(f.to_dict(), b["sigma"], seed) | {"se": state.se}}
    body["checks"] = {"distance_mc_ge_bound_minus_3se": dist.p_hat >= bound.value - 3 * dist.se}
    if body["state_bound"] is not None:
        body["checks"]["state_mc_ge_state_bound_minus_3se"] = (
            state.p_hat >= body["state_bound"]["value"] - 3 * state.se)
    return _json(cfg, body), EXIT_OK


def cmd_trap_demo(cfg: ExperimentConfig, force: bool = False):
    t = cfg.sections["trap"]
    f = cfg.drifts["drift"]
    ref = cfg.drifts.get("reference")
    seed, workers = cfg.run["seed"], cfg.run["workers"]
    probe = np.linspace(t["beam_radius"], 4.0 * t["beam_radius"], 401)[1:]
    for name, spec in (("drift", f), ("reference", ref)):
        if spec is None:
            continue
        vals = spec.batch(np.column_stack([probe, np.zeros_like(probe)]))
        if np.any(vals != 0):
            raise ConfigError([f"{name}.source: force must vanish outside the beam radius "
                               f"{t['beam_radius']!r}"])
    x0 = np.asarray(t["x0"], float)
    meta = []
    est = containment_probability(f, t["sigma"], x0, t["R"], t["T"], t["n_paths"], t["dt"], seed,
                                  False, workers)
    meta.append(("p_hat_trap", f"{est.p_hat!r} ci=({est.ci_low!r}, {est.ci_high!r}) se={est.se!r}"))
    if ref is not None:
        rep = check_dominance_nd(f, ref, t["K"], master_seed=seed)
        if not rep.holds and not force:
            raise Refusal(f"trap drift does not dominate the reference: margin {rep.margin!r}")
        er = containment_probability(ref, t["sigma"], x0, t["R"], t["T"], t["n_paths"], t["dt"],
                                     seed, False, workers)
        meta.append(("dominance", f"{rep.verdict} margin={rep.margin!r}"))
        meta.append(("p_hat_reference", f"{er.p_hat!r} ci=({er.ci_low!r}, {er.ci_high!r}) se={er.se!r}"))
        meta.append(("ordering_ok", str(est.p_hat >= er.p_hat - 3 * pooled_se(est, er))))
    header = ["path", "t", "x1", "x2", "exit"]
    rows = []
    for i in range(t["n_show"]):
        stream = RngStream(seed, i)
        tr = euler_maruyama(f, t["sigma"], x0, t["dt"], t["T"], stream)
        first_exit(tr, t["R"])
        for k, tk in enumerate(tr.times):
            out = tr.exit_time is not None and tk >= tr.exit_time - 1e-12
            rows.append([i, tk, tr.states[k, 0], tr.states[k, 1], int(out)])
    return _csv(cfg, header, rows, meta), EXIT_OK


COMMANDS = {
    "fig-decay": (cmd_fig_decay, "decay rates of OU containment (kushner, spectral, asymptotic, MC fit)"),
    "fig-counterexample": (cmd_fig_counterexample, "containment vs left pull strength"),
    "coupling-demo": (cmd_coupling_demo, "one sign-coupled pair with hitting-time markers"),
    "bound": (cmd_bound, "containment bound for a contracting drift"),
    "trap-demo": (cmd_trap_demo, "2-d trap with a force that vanishes outside the beam"),
}


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors; argparse's own code 2 means numeric failure here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="containment", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=TOOL)
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, helptext) in COMMANDS.items():
        sp = sub.add_parser(name, help=helptext)  # subparsers inherit _Parser
        sp.add_argument("--config", help="INI config file (defaults are used when omitted)")
        sp.add_argument("--out", help="output path (default: [run] out, else stdout)")
        sp.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        sp.add_argument("--workers", type=int, help="worker threads for Monte Carlo")
        sp.add_argument("--force", action="store_true", help="skip the dominance refusal")
    return p


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    fn = COMMANDS[args.command][0]
    try:
        cfg = load_config(args.command, args.config, {"seed": args.seed, "workers": args.workers})
        if fn in (cmd_fig_decay, cmd_fig_counterexample):
            text, code = fn(cfg)
        else:
            text, code = fn(cfg, args.force)
    except ConfigError as e:
        print(f"containment: {e}", file=stderr)
        return EXIT_CONFIG
    except Refusal as e:
        print(f"containment: refused: {e}", file=stderr)
        if e.artifact is not None:
            _emit(e.artifact, args.out or cfg.run["out"], stdout)
        return EXIT_REFUSED
    except (PathOverflowError, SpectralConvergenceError, ContractionError, ExprDomainError,
            FloatingPointError) as e:
        print(f"containment: numeric failure: {e}", file=stderr)
        return EXIT_NUMERIC
    _emit(text, args.out or cfg.run["out"], stdout)
    return code


def _emit(text, path, stdout):
    if path:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        stdout.write(text)


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
