"""Command-line front end.

Exit codes: 0 success, 2 configuration or usage error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import dataclasses
import datetime as _dt
import io
import json
import math
import sys
from typing import Callable

import numpy as np

from . import bounds
from .fock import TruncationError
from .lock import LockConfig, LockLossError, simulate_lock
from .model import ImperfectionModel, REFERENCE_MODEL, SignalModel, ValidationError
from .montecarlo import RunConfig, simulate_run, sweep_beta
from .solvers import ConvergenceError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

CURVES = ("ql_bpsk", "ql_ook", "sql", "sql_eta", "odr_ideal", "odr_model", "kennedy")


class ConfigError(Exception):
    pass


def _fmt(x: float) -> str:
    if not math.isfinite(x):
        raise ArithmeticError(f"non-finite value {x!r} in output")
    return f"{x:.17g}"


def curve_value(name: str, alpha_sq: float, model: ImperfectionModel) -> float:
    a = math.sqrt(alpha_sq)
    if name == "ql_bpsk":
        return bounds.helstrom_bpsk_ber(a).ber
    if name == "ql_ook":
        return bounds.helstrom_ook_ber(alpha_sq).ber
    if name == "sql":
        return bounds.sql_homodyne_ber(a, 1.0).ber
    if name == "sql_eta":
        return bounds.sql_homodyne_ber(a, model.eta).ber
    if name == "kennedy":
        return bounds.kennedy_ber(a).ber
    s = SignalModel(a)
    if name == "odr_ideal":
        return bounds.odr_ber(s, bounds.optimal_beta_ideal(a)).ber
    if name == "odr_model":
        return bounds.optimal_beta_model(s, model)[1].ber
    raise ConfigError(f"unknown curve {name!r}; choose from {', '.join(CURVES)}")


def alpha_sq_grid(lo: float, hi: float, steps: int, log: bool = False) -> np.ndarray:
    if not (lo < hi and steps >= 2):
        raise ConfigError("curve grid needs lo < hi and steps >= 2")
    if log:
        if lo <= 0:
            raise ConfigError("log grid needs lo > 0")
        return np.geomspace(lo, hi, steps)
    if lo < 0:
        raise ConfigError("alpha_sq must be >= 0")
    return np.linspace(lo, hi, steps)


def write_curves(fh, grid, names, model: ImperfectionModel) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["alpha_sq", *names])
    for x in grid:
        w.writerow([_fmt(float(x)), *(_fmt(curve_value(n, float(x), model)) for n in names)])


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def _run_config(data: dict, seed: int | None) -> RunConfig:
    if seed is not None:
        data = {**data, "seed": seed}
    try:
        return RunConfig.from_dict(data)
    except ValidationError as exc:
        raise ConfigError(f"config field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config: {exc}") from exc


@contextlib.contextmanager
def _output(path: str | None):
    """Yield a text buffer, written to ``path`` (or stdout) only on success."""
    buf = io.StringIO()
    yield buf
    if path is None or path == "-":
        sys.stdout.write(buf.getvalue())
        return
    try:
        with open(path, "w", newline="") as fh:
            fh.write(buf.getvalue())
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc.strerror}") from exc


def _summary(args, text: str) -> None:
    # keep stdout clean when it carries the data itself
    stream = sys.stderr if args.out in (None, "-") else sys.stdout
    print(text, file=stream)


def _stamp(args, doc: dict) -> dict:
    if not args.no_timestamp:
        doc["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return doc


def cmd_curves(args) -> None:
    names = [n.strip() for n in args.curves.split(",") if n.strip()]
    for n in names:
        if n not in CURVES:
            raise ConfigError(f"unknown curve {n!r}; choose from {', '.join(CURVES)}")
    try:
        model = ImperfectionModel(args.eta, args.nu, args.xi, args.sigma)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    grid = alpha_sq_grid(args.lo, args.hi, args.steps, args.log)
    with _output(args.out) as fh:
        write_curves(fh, grid, names, model)
    _summary(args, f"curves: {len(grid)} points x {len(names)} curves")


def cmd_simulate(args) -> None:
    cfg = _run_config(_load_json(args.config), args.seed)
    run = simulate_run(cfg, record=cfg.n_trials if args.trials_csv else 0, workers=args.workers)
    r = run.result
    doc = {
        "ber": r.ber,
        "stderr": r.stderr,
        "n_trials": r.n_trials,
        "seed": cfg.seed,
        "provenance": r.provenance,
        "beta_sq": run.beta**2,
        "n_plus": run.n_plus,
        "analytic_ber": run.analytic.ber,
    }
    with _output(args.out) as fh:
        json.dump(_stamp(args, doc), fh, indent=2)
        fh.write("\n")
    if args.trials_csv:
        with _output(args.trials_csv) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "true_bit", "photons", "height_ev", "decided_bit"])
            for t in run.records:
                h = "" if t.pulse_height_ev is None else _fmt(t.pulse_height_ev)
                w.writerow([t.index, t.true_bit, t.detected_photons, h, t.decided_bit])
    _summary(args, f"ber = {r.ber:.5f} +/- {r.stderr:.5f} ({r.n_trials} trials, analytic {run.analytic.ber:.5f})")


def _parse_grid(text: str) -> list[float]:
    try:
        lo, hi, step = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise ConfigError("--grid must be lo:hi:step") from exc
    if not (step > 0 and hi >= lo):
        raise ConfigError("--grid needs step > 0 and hi >= lo")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 12) for i in range(n)]


def cmd_sweep(args) -> None:
    data = _load_json(args.config)
    grid = data.pop("beta_sq_grid", None)
    if args.grid:
        grid = _parse_grid(args.grid)
    if not grid:
        raise ConfigError("sweep needs --grid lo:hi:step or a beta_sq_grid list in the config")
    cfg = _run_config(data, args.seed)
    curve = sweep_beta(cfg, [float(g) for g in grid], workers=args.workers)
    with _output(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["beta_sq", "ber", "stderr", "n_trials", "analytic_ber"])
        for b2, run in curve:
            r = run.result
            w.writerow([_fmt(b2), _fmt(r.ber), _fmt(r.stderr), r.n_trials, _fmt(run.analytic.ber)])
    b2, best = min(curve, key=lambda p: p[1].result.ber)
    _summary(args, f"sweep: {len(curve)} points, minimum ber = {best.result.ber:.5f} +/- {best.result.stderr:.5f} at beta_sq = {b2:g}")


def cmd_histogram(args) -> None:
    data = {**_load_json(args.config), "tes_enabled": True}
    cfg = _run_config(data, args.seed)
    e = cfg.tes.photon_energy_ev
    lo = -e if args.lo is None else args.lo
    hi = 7 * e if args.hi is None else args.hi
    width = e / 10 if args.bin_width is None else args.bin_width
    if not (hi > lo and width > 0):
        raise ConfigError("histogram needs hi > lo and bin width > 0")
    edges = lo + width * np.arange(int(math.ceil((hi - lo) / width - 1e-9)) + 1)
    run = simulate_run(cfg, record=0, workers=args.workers, edges=edges)
    with _output(args.out) as fh:
        run.histogram.write_csv(fh)
    r = run.result
    _summary(args, f"histogram: {r.n_trials} trials, ber = {r.ber:.5f} +/- {r.stderr:.5f}, clamped = {run.histogram.n_clamped}")


def cmd_lock(args) -> None:
    data = _load_json(args.config) if args.config else {}
    if args.seed is not None:
        data["seed"] = args.seed
    fields = {f.name for f in dataclasses.fields(LockConfig)}
    unknown = set(data) - fields
    if unknown:
        raise ConfigError(f"config field {sorted(unknown)[0]} is not a recognised field")
    try:
        cfg = LockConfig(**data)
    except ValidationError as exc:
        raise ConfigError(f"config field {exc}") from exc
    except TypeError as exc:
        raise ConfigError(f"config: {exc}") from exc
    res = simulate_lock(cfg)
    with _output(args.out) as fh:
        res.write_csv(fh)
    _summary(args, f"residual_std_rad = {res.residual_std_rad:.5f} over {cfg.n_windows - cfg.settle} windows")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", default=None, help="output path (default: stdout)")
    common.add_argument("--no-timestamp", action="store_true", help="omit the timestamp field from JSON output")

    p = argparse.ArgumentParser(prog="odrsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("curves", parents=[common], help="analytic BER curves as CSV")
    c.add_argument("--lo", type=float, default=0.01)
    c.add_argument("--hi", type=float, default=3.0)
    c.add_argument("--steps", type=int, default=300)
    c.add_argument("--log", action="store_true", help="geometric alpha_sq spacing")
    c.add_argument("--curves", default=",".join(CURVES), help="comma-separated subset of " + ", ".join(CURVES))
    c.add_argument("--eta", type=float, default=REFERENCE_MODEL.eta)
    c.add_argument("--nu", type=float, default=REFERENCE_MODEL.nu)
    c.add_argument("--xi", type=float, default=REFERENCE_MODEL.xi)
    c.add_argument("--sigma", type=float, default=0.0, help="phase jitter (rad) for model curves")
    c.set_defaults(func=cmd_curves)

    for name, func, helptext in (
        ("simulate", cmd_simulate, "Monte Carlo BER for one configuration"),
        ("sweep", cmd_sweep, "Monte Carlo BER over a displacement grid"),
        ("histogram", cmd_histogram, "TES pulse-height histogram"),
    ):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("config", help="run configuration JSON")
        s.add_argument("--workers", type=int, default=1, help="threads; never changes results")
        s.set_defaults(func=func)
        if name == "simulate":
            s.add_argument("--trials-csv", default=None, help="also write every trial record here")
        elif name == "sweep":
            s.add_argument("--grid", default=None, help="beta_sq grid as lo:hi:step")
        else:
            s.add_argument("--lo", type=float, default=None, help="lowest edge in eV")
            s.add_argument("--hi", type=float, default=None, help="highest edge in eV")
            s.add_argument("--bin-width", type=float, default=None, help="bin width in eV")

    lk = sub.add_parser("lock", parents=[common], help="phase-lock loop simulation")
    lk.add_argument("config", nargs="?", default=None, help="lock configuration JSON (optional)")
    lk.set_defaults(func=cmd_lock)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    handler: Callable = args.func
    try:
        handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, LockLossError, TruncationError, ArithmeticError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
