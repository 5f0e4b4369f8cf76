"""Command-line experiment runner.

Every subcommand reads an optional YAML config, applies ``--set`` overrides,
writes CSV/JSON files to the output directory and prints a JSON summary
framed by ``--- jmgt <command> ---`` / ``--- end ---`` lines on stdout.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import energy as en
from . import suites
from .config import SCHEMA_VERSION, ExperimentConfig, load_config, parse_value
from .decay import AppendixSpec, decay_series_rows, regularity_loss_experiment, verify_appendix_inequalities
from .errors import (ConfigurationError, FitError, InequalityViolation, JMGTError,
                     UnsupportedRepresentationError)
from .history import Grid, InitialData, init_state, profile_from_dict, save_snapshot
from .medium import ExponentialKernel, classify_regime, validate_assumptions
from .modes import sweep_csv_rows
from .solver import SolverConfig, run

log = logging.getLogger("jmgt")

EXIT_OK, EXIT_KERNEL, EXIT_BLOWUP, EXIT_INEQUALITY, EXIT_FIT, EXIT_CONFIG = 0, 2, 3, 4, 5, 64


class Context:
    def __init__(self, cfg: ExperimentConfig, args):
        self.cfg = cfg
        self.reproducible = args.reproducible
        self.figures = args.figures or bool(cfg.output.get("figures"))
        self.jobs = args.jobs
        self.out = Path(args.out) if args.out else cfg.output_dir()
        self.formats = set(cfg.output.get("formats", ["csv", "json"]))
        self.written = []

    def path(self, name) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        self.written.append(str(p))
        return p

    def stamp(self) -> str | None:
        if self.reproducible:
            return None
        return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")

    def write_csv(self, name, header, rows):
        if "csv" not in self.formats:
            return
        with self.path(name).open("w", newline="") as fh:
            st = self.stamp()
            if st:
                fh.write(f"# generated {st}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(x) for x in r])

    def write_json(self, name, payload: dict):
        doc = {"schema_version": SCHEMA_VERSION}
        st = self.stamp()
        if st:
            doc["generated"] = st
        doc.update(payload)
        if "json" in self.formats:
            self.path(name).write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")
        return doc


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def _clean(obj):
    """Make a report JSON-safe (numpy scalars, NaN/inf as strings, dataclasses via as_dict)."""
    if hasattr(obj, "as_dict"):
        return _clean(obj.as_dict())
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if hasattr(obj, "value") and not isinstance(obj, (str, bytes)):
        return obj.value
    return obj


def _emit(command, doc):
    print(f"--- jmgt {command} ---")
    print(json.dumps(_clean(doc), indent=2, sort_keys=True))
    print("--- end ---")


def _rho_grid(cfg):
    spec = cfg.analysis.get("rho_grid", {})
    if isinstance(spec, list):
        return np.asarray(spec, dtype=float)
    return np.logspace(math.log10(float(spec.get("min", 1e-3))), math.log10(float(spec.get("max", 1e3))),
                       int(spec.get("count", 40)))


# ---------------------------------------------------------------- commands


def cmd_validate_kernel(ctx: Context) -> int:
    cfg = ctx.cfg
    params, kernel = cfg.params(), cfg.kernel_obj()
    report = validate_assumptions(kernel, params)
    doc = ctx.write_json("kernel_report.json", {"command": "validate-kernel", "report": report.as_dict()})
    _emit("validate-kernel", doc)
    return EXIT_OK if report.all_pass else EXIT_KERNEL


def cmd_symbol(ctx: Context) -> int:
    cfg = ctx.cfg
    params, kernel = cfg.params(), cfg.kernel_obj()
    rho = _rho_grid(cfg)
    info = suites.symbol_summary(params, kernel, rho)
    dich = suites.dichotomy_check(params, rho)
    regime, chi = classify_regime(params, kernel)
    header, rows = sweep_csv_rows(info["curve"])
    ctx.write_csv("abscissa.csv", header, rows)
    payload = {
        "command": "symbol", "regime": regime.value, "chi": chi, "summary": info["summary"],
        "all_negative": info["all_negative"], "lambda_low": info["lambda_low"],
        "lambda_high": info["lambda_high"], "scaling": info["scaling"],
        "no_memory_dichotomy": {k: v for k, v in dich.items() if k != "rows"},
    }
    if ctx.figures:
        from .plotting import plot_abscissa
        payload["figures"] = [str(plot_abscissa(info["curve"], ctx.path("abscissa.png")))]
    doc = ctx.write_json("symbol.json", payload)
    _emit("symbol", doc)
    return EXIT_OK


def _initial_data(cfg) -> InitialData:
    block = cfg.analysis.get("initial_data", {})
    profiles = []
    for key in ("psi0", "psi1", "psi2"):
        b = dict(block.get(key) or {"kind": "zero"})
        if str(b.get("kind")) == "random" and "seed" not in b:
            b["seed"] = cfg.seed + int(key[-1])
        profiles.append(profile_from_dict(b))
    return InitialData(*profiles, scale=float(block.get("scale", 1.0)))


def cmd_simulate(ctx: Context) -> int:
    cfg = ctx.cfg
    params, kernel = cfg.params(), cfg.kernel_obj()
    g = Grid(int(cfg.grid["n"]), int(cfg.grid["N"]), float(cfg.grid["L"]), ctx.jobs)
    sb = cfg.solver
    rep = sb.get("representation", "reduced")
    scfg = SolverConfig(dt=float(sb["dt"]), t_end=float(sb["t_end"]), scheme=sb["scheme"],
                        dealias=bool(sb.get("dealias", True)), snapshot_stride=int(sb["snapshot_stride"]),
                        nonlinearity_form=sb.get("nonlinearity_form", "def_F"),
                        history_stride=int(sb.get("history_stride", 0)),
                        history_r_max=sb.get("history_r_max"), workers=ctx.jobs)
    init = init_state(g, _initial_data(cfg), kernel, params, rep, dt=scfg.dt,
                      r_max=sb.get("history_r_max"))
    has_eta = rep == "history" or scfg.history_stride > 0
    coeffs = None
    if has_eta:
        try:
            coeffs = en.select_lyapunov_coeffs(params, kernel)
        except JMGTError as exc:
            log.info("no Lyapunov coefficients: %s", exc)
    s = int(cfg.analysis.get("s", 2))
    forcing = "off" if params.k == 0 else scfg.nonlinearity_form
    hook = en.diagnostics_hook(params, kernel, s=s, kappas=tuple(range(min(s, 2))), coeffs=coeffs,
                               forcing=forcing, mean_free=bool(cfg.analysis.get("mean_free", False)))
    traj = run(init, scfg, params, kernel, diagnostics=hook)

    base = ["t", "l2_psi", "l2_v", "l2_w", "l2_U"]
    ctx.write_csv("trajectory.csv", base, [[r[k] for k in base] for r in traj.records])
    ekeys = [k for k in traj.records[0] if k not in base]
    ctx.write_csv("energy.csv", ["t"] + ekeys, [[r["t"]] + [r[k] for k in ekeys] for r in traj.records])
    if "snapshot" in ctx.formats and getattr(traj, "final_state", None) is not None:
        save_snapshot(traj.final_state, ctx.path("final.snap"))
    payload = {"command": "simulate", "representation": rep, "scheme": scfg.scheme.value,
               "steps": scfg.n_steps, "snapshots": len(traj.records),
               "final": traj.records[-1], "failed": traj.failed, "failure": traj.failure,
               "failure_time": traj.failure_time,
               "energy_finite": bool(all(np.isfinite(r[k]) for r in traj.records for k in ekeys
                                         if isinstance(r[k], float)))}
    if ctx.figures:
        from .plotting import plot_trajectory
        payload["figures"] = [str(plot_trajectory(traj, ["l2_psi", "l2_v", "l2_w", "triple"],
                                                  ctx.path("trajectory.png")))]
    doc = ctx.write_json("simulate.json", payload)
    _emit("simulate", doc)
    return EXIT_BLOWUP if traj.failed else EXIT_OK


def cmd_decay(ctx: Context) -> int:
    cfg = ctx.cfg
    params, kernel = cfg.params(), cfg.kernel_obj()
    if not isinstance(kernel, ExponentialKernel):
        raise UnsupportedRepresentationError("decay experiments need an exponential kernel")
    a = cfg.analysis
    d = a.get("decay", {})
    tol = a.get("tolerances", {})
    window = tuple(float(x) for x in a["fit_window"])
    n = int(d.get("n", 3))
    samples = int(a.get("fit_samples", 40))
    if d.get("regularity_loss"):
        rl = regularity_loss_experiment(params, kernel, n, float(d.get("s_data", 0.0)), window, samples)
        doc = ctx.write_json("decay.json", {"command": "decay", "mode": "regularity_loss", "report": rl})
        _emit("decay", doc)
        return EXIT_OK
    try:
        res = suites.decay_suite(params, kernel, n, tuple(d.get("quantities", ["U0", "U1", "v0", "w0"])),
                                 window, samples, float(tol.get("decay", 0.05)),
                                 float(tol.get("r2_min", 0.999)),
                                 w_tau=d.get("w_tau", 0.1), grad_window=d.get("grad_window", (1e3, 1e4)))
    except FitError as exc:
        doc = ctx.write_json("decay.json", {"command": "decay", "error": str(exc)})
        _emit("decay", doc)
        return EXIT_FIT
    for q, (t, y) in res["series"].items():
        header, rows = decay_series_rows(t, {f"norm_{q}": y})
        ctx.write_csv(f"decay_{q}.csv", header, rows)
    payload = {"command": "decay", "fits": res["fits"], "pass": res["pass"], "power_law": res["power_law"]}
    if not res["power_law"]:
        payload["warning"] = "fit quality below the r2 gate; the window may sit inside a transient"
        log.warning(payload["warning"])
    if ctx.figures:
        from .plotting import plot_series
        t0 = next(iter(res["series"].values()))[0]
        same = all(np.array_equal(t, t0) for t, _ in res["series"].values())
        if same:
            payload["figures"] = [str(plot_series(t0, {q: y for q, (_, y) in res["series"].items()},
                                                  ctx.path("decay.png"), fits=res["fits"]))]
        else:
            payload["figures"] = [str(plot_series(t, {q: y}, ctx.path(f"decay_{q}.png"), fits=res["fits"]))
                                  for q, (t, y) in res["series"].items()]
    doc = ctx.write_json("decay.json", payload)
    _emit("decay", doc)
    if not res["power_law"] or not res["pass"]:
        return EXIT_FIT
    return EXIT_OK


def cmd_verify(ctx: Context) -> int:
    cfg = ctx.cfg
    params, kernel = cfg.params(), cfg.kernel_obj()
    v = cfg.analysis.get("verify", {})
    fault = cfg.analysis.get("fault_injection")
    report = {"command": "verify"}
    ok_ineq, ok_other = True, True
    if v.get("energy", True):
        if v.get("representation", "history") == "reduced":
            raise UnsupportedRepresentationError("F3/F4 and the energy identities need the history variable; "
                                                 "the reduced representation only stores int g eta")
        coeffs = en.select_lyapunov_coeffs(params.with_(k=0.0), kernel)
        if fault == "f3_sign":
            coeffs.f3_sign = -1.0
        kappas = tuple(int(k) for k in v.get("kappas", [0, 1]))
        tol = float(cfg.analysis.get("tolerances", {}).get("residual_factor", 10.0))
        e = suites.energy_suite(params, kernel, kappas, coeffs, tol)
        report["energy"] = e
        ok_ineq &= e["pass"]
    if v.get("appendix", True):
        app = verify_appendix_inequalities(AppendixSpec())
        report["appendix"] = app
        ok_ineq &= app["all_pass"]
    if v.get("oracles", True):
        o = suites.oracle_suite(params, kernel, quick=bool(v.get("quick", False)))
        report["oracles"] = o
        ok_other &= o["pass"]
    report["pass"] = bool(ok_ineq and ok_other)
    doc = ctx.write_json("verify.json", report)
    _emit("verify", doc)
    if not ok_ineq:
        raise InequalityViolation("at least one inequality slack is below tolerance")
    if not ok_other:
        raise InequalityViolation("an oracle cross-check exceeded its tolerance")
    return EXIT_OK


COMMANDS = {
    "validate-kernel": cmd_validate_kernel,
    "symbol": cmd_symbol,
    "simulate": cmd_simulate,
    "decay": cmd_decay,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="jmgt", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("-c", "--config", help="YAML experiment file")
        sp.add_argument("--set", action="append", default=[], metavar="BLOCK.KEY=VALUE",
                        help="override a config value (repeatable)")
        sp.add_argument("-o", "--out", help="output directory")
        sp.add_argument("--reproducible", action="store_true", help="omit timestamps from outputs")
        sp.add_argument("--jobs", type=int, default=None, help="cap on FFT worker threads")
        sp.add_argument("--figures", action="store_true", help="also write PNG figures")
        sp.add_argument("--seed", type=int, default=None)
        if name == "verify":
            sp.add_argument("--fault", choices=["f3_sign"], default=None,
                            help="inject a known fault to exercise the violation path")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        for item in args.set:
            if "=" not in item:
                raise ConfigurationError(f"--set expects BLOCK.KEY=VALUE, got {item!r}")
            key, val = item.split("=", 1)
            cfg.override(key.strip(), parse_value(val))
        if args.seed is not None:
            cfg.seed = args.seed
        if getattr(args, "fault", None):
            cfg.analysis["fault_injection"] = args.fault
        cfg.validate()
        return COMMANDS[args.command](Context(cfg, args))
    except JMGTError as exc:
        print(f"jmgt: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
