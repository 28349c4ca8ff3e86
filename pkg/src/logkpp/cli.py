"""Command-line driver.

Every subcommand writes its data files first and ``manifest.json`` last.
Exit codes: 0 success, 1 usage or validation error, 2 numerical failure.
Failures print one line to stderr of the form

    logkpp: error code=<name> exit=<n> msg=<text>
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import ma_spectrum
from .errors import ModelError, NumericalError
from .io import write_csv, write_json
from .model import make_params

logger = logging.getLogger("logkpp")

THETA_HEADER = ["r", "A", "theta", "theta_r", "ybar", "method_residual"]
TAIL_HEADER = ["r", "A", "regime", "statistic", "window_lo", "window_hi", "flatness"]
DELAY_HEADER = ["r", "A", "dx", "lambda", "t_end", "model", "coefficient", "intercept", "rms"]
SPECTRUM_HEADER = ["A", "h", "L", "stencil", "n", "lambda"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class _WarningLog(logging.Handler):
    def __init__(self):
        super().__init__(logging.WARNING)
        self.messages: list[str] = []

    def emit(self, record):
        self.messages.append(record.getMessage())


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


# --- argument helpers --------------------------------------------------------


def parse_grid(text: str) -> list[float]:
    """``"a:b:step"`` (inclusive) or a comma-separated list."""
    text = text.strip()
    if not text:
        raise ModelError("empty r grid")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ModelError(f"grid {text!r} must look like start:stop:step")
        a, b, s = (_number(p, text) for p in parts)
        if not s > 0.0 or b < a:
            raise ModelError(f"grid {text!r} needs step > 0 and stop >= start")
        n = int(math.floor((b - a) / s + 1e-9))
        return [round(a + k * s, 12) for k in range(n + 1)]
    return [_number(p, text) for p in text.split(",")]


def _number(item: str, text: str) -> float:
    try:
        v = float(item)
    except ValueError:
        raise ModelError(f"grid {text!r}: {item.strip()!r} is not a number") from None
    if not math.isfinite(v):
        raise ModelError(f"grid {text!r}: {item.strip()!r} is not finite")
    return v


def _window(text: str | None):
    if text is None:
        return None
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise ModelError(f"window {text!r} must be 'lo,hi'") from exc
    return lo, hi


def _outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(out: Path, sub: str, params: dict, tolerances: dict, outputs: list, started: str, warnings: list, extra=None) -> None:
    doc = {
        "subcommand": sub,
        "parameters": params,
        "tolerances": tolerances,
        "version": __version__,
        "started": started,
        "finished": _now(),
        "outputs": [str(p.name) for p in outputs],
        "warnings": list(warnings),
    }
    if extra:
        doc.update(extra)
    for p in outputs:
        if not p.exists():
            raise NumericalError(f"output {p} missing before manifest")
    write_json(out / "manifest.json", doc)


# --- single-point workers (also used by the sweep) ----------------------------


def theta_point(r: float, A: float, tol: float) -> dict:
    from .profile import theta_sweep

    row = theta_sweep([r], A, tol)[0]
    return {"r": row.r, "A": row.A, "theta": row.theta, "theta_r": row.theta_r, "ybar": row.ybar,
            "method_residual": row.method_residual, "error": row.error}


def wave_point(r: float, A: float, xi_end, tol: float, window=None, profile_out=None) -> dict:
    from .wave import extract_tail_law, shoot_wave, write_wave_csv

    params = make_params(r, A)
    prof = shoot_wave(params, xi_end, tol)
    if profile_out is not None:
        write_wave_csv(prof, profile_out)
    fit = extract_tail_law(prof, params, window)
    d = fit.to_dict()
    d.update(r=params.r, A=params.A, coordinate_mismatch=prof.meta["coordinate_mismatch"])
    return d


def front_point(r: float, A: float, t_end: float, dx: float, lam: float, trace_out=None) -> dict:
    from .pde import fit_delay, run_front

    params = make_params(r, A)
    trace = run_front(params, t_end, lam, dx)
    if trace_out is not None:
        write_csv(trace_out, ["t", "X", "delay"], zip(trace.times, trace.positions, trace.delays))
    out = {"r": params.r, "A": params.A, "dx": dx, "lambda": lam, "t_end": t_end,
           "speed_reference": trace.speed_reference, "dt": trace.dt, "max_overshoot": trace.max_overshoot}
    if t_end >= 500.0:
        fit = fit_delay(trace, params)
        out["fit"] = fit.to_dict()
        if params.r < 3.0:
            from .profile import solve_phi_terminal

            _, th = solve_phi_terminal(params)
            out["theta_profile"] = th.theta
            out["theta_relative_difference"] = (fit.coefficient - th.theta) / th.theta
        elif params.r == 3.0:
            out["expected_coefficient"] = params.s_a
        else:
            out["expected_coefficient"] = 1.5
    else:
        out["fit"] = None
        out["fit_skipped"] = "t_end below 500: no decade past t = 50"
    return out


def spectrum_point(A: float, h: float, L: float, k: int, stencil: str) -> dict:
    res = ma_spectrum(A, h, L, k, stencil)
    return {"A": res.A, "h": res.h, "L": res.L, "stencil": stencil, "eigenvalues": res.eigenvalues.tolist(),
            "q_residual": res.q_residual, "ground_state_distance": res.ground_state_distance}


# --- subcommands ---------------------------------------------------------------


def cmd_wave(args, warn) -> int:
    started = _now()
    params = make_params(args.r, args.A)
    out = _outdir(args.out)
    res = wave_point(params.r, params.A, args.xi_end, args.tol, _window(args.window), out / "wave.csv")
    write_json(out / "tailfit.json", res)
    _manifest(out, "wave", {**params.manifest(), "xi_end": args.xi_end}, {"tol": args.tol},
              [out / "wave.csv", out / "tailfit.json"], started, warn.messages)
    print(f"{res['regime']} statistic={res['statistic']:.15g} flatness={res['flatness']:.3g}")
    return 0


def cmd_theta(args, warn) -> int:
    started = _now()
    grid = parse_grid(args.r_grid)
    for r in grid:
        if not 1.0 < r < 3.0:
            raise ModelError(f"grid point r = {r} outside (1, 3)")
    make_params(grid[0], args.A)
    out = _outdir(args.out)
    rows = [theta_point(r, args.A, args.tol) for r in sorted(grid)]
    write_csv(out / "theta.csv", THETA_HEADER, ([row[k] for k in THETA_HEADER] for row in rows))
    failures = [{"r": row["r"], "error": row["error"]} for row in rows if row["error"]]
    _manifest(out, "theta", {"r_grid": grid, "A": args.A}, {"tol": args.tol}, [out / "theta.csv"], started,
              warn.messages, {"failures": failures})
    for row in rows:
        print(f"r={row['r']:.6g} theta={row['theta']:.12g} theta_r={row['theta_r']:.12g}")
    if len(failures) == len(rows):
        raise NumericalError("every grid point failed")
    return 0


def cmd_front(args, warn) -> int:
    started = _now()
    params = make_params(args.r, args.A)
    if not (math.isfinite(args.dx) and args.dx > 0.0):
        raise ModelError(f"dx must be positive, got {args.dx}")
    if not 0.0 < args.lam < 1.0:
        raise ModelError("lambda must lie in (0, 1)")
    out = _outdir(args.out)
    res = front_point(params.r, params.A, args.t_end, args.dx, args.lam, out / "trace.csv")
    write_json(out / "delayfit.json", res)
    _manifest(out, "front", {**params.manifest(), "t_end": args.t_end, "dx": args.dx, "lambda": args.lam},
              {"dt": res["dt"]}, [out / "trace.csv", out / "delayfit.json"], started, warn.messages)
    if res["fit"]:
        print(f"{res['fit']['model']} coefficient={res['fit']['coefficient']:.15g}")
    return 0


def cmd_spectrum(args, warn) -> int:
    started = _now()
    out = _outdir(args.out)
    res = spectrum_point(args.A, args.h, args.L, args.k, args.stencil)
    write_csv(out / "spectrum.csv", ["n", "lambda"], enumerate(res["eigenvalues"]))
    _manifest(out, "spectrum", {"A": args.A, "h": args.h, "L": args.L, "k": args.k, "stencil": args.stencil}, {},
              [out / "spectrum.csv"], started, warn.messages,
              {"q_residual": res["q_residual"], "ground_state_distance": res["ground_state_distance"]})
    print(" ".join(f"{v:.10g}" for v in res["eigenvalues"]))
    return 0


# --- sweep -------------------------------------------------------------------

_RUN_FIELDS = {
    "theta": {"r": float, "A": float, "tol": float},
    "wave": {"r": float, "A": float, "xi_end": float, "tol": float},
    "front": {"r": float, "A": float, "t_end": float, "dx": float, "lambda": float},
    "spectrum": {"A": float, "h": float, "L": float, "k": int, "stencil": str},
}
_RUN_DEFAULTS = {
    "theta": {"A": 1.0, "tol": 1e-9},
    "wave": {"A": 1.0, "xi_end": None, "tol": 1e-12},
    "front": {"A": 1.0, "dx": 0.1, "lambda": 0.5},
    "spectrum": {"h": 0.005, "L": 40.0, "k": 5, "stencil": "consistent"},
}


def load_config(path) -> list[dict]:
    """Parse and validate a sweep config; errors name the line or the field."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelError(f"{path}: cannot read config ({exc.strerror})") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("runs"), list):
        raise ModelError(f"{path}: top level must be an object with a 'runs' array")
    if not doc["runs"]:
        raise ModelError(f"{path}: runs: array is empty")
    runs = []
    for i, spec in enumerate(doc["runs"]):
        where = f"{path}: runs[{i}]"
        if not isinstance(spec, dict):
            raise ModelError(f"{where}: must be an object")
        sub = spec.get("subcommand")
        if sub not in _RUN_FIELDS:
            raise ModelError(f"{where}.subcommand: expected one of {sorted(_RUN_FIELDS)}, got {sub!r}")
        fields = _RUN_FIELDS[sub]
        unknown = sorted(set(spec) - set(fields) - {"subcommand"})
        if unknown:
            raise ModelError(f"{where}.{unknown[0]}: unknown field for {sub}")
        run = {"subcommand": sub, **_RUN_DEFAULTS[sub]}
        for name, kind in fields.items():
            if name not in spec:
                if name not in run:
                    raise ModelError(f"{where}.{name}: required field missing")
                continue
            val = spec[name]
            ok = isinstance(val, str) if kind is str else (
                isinstance(val, (int, float)) and not isinstance(val, bool) and (kind is float or float(val).is_integer())
            )
            if not ok:
                raise ModelError(f"{where}.{name}: expected {kind.__name__}, got {val!r}")
            run[name] = kind(val)
        runs.append(run)
    return runs


def _sweep_key(run: dict) -> tuple:
    fields = _RUN_FIELDS[run["subcommand"]]
    return (run["subcommand"],) + tuple(str(run[k]) if fields[k] is str else float(run[k] if run[k] is not None else -1) for k in fields)


def _execute(run: dict) -> dict:
    """Run one sweep point; never raises."""
    sub = run["subcommand"]
    try:
        if sub == "theta":
            res = theta_point(run["r"], run["A"], run["tol"])
            if res["error"]:
                return {"run": run, "error": res["error"], "result": res}
        elif sub == "wave":
            res = wave_point(run["r"], run["A"], run["xi_end"], run["tol"])
        elif sub == "front":
            res = front_point(run["r"], run["A"], run["t_end"], run["dx"], run["lambda"])
        else:
            res = spectrum_point(run["A"], run["h"], run["L"], run["k"], run["stencil"])
        return {"run": run, "error": "", "result": res}
    except (ModelError, NumericalError) as exc:
        return {"run": run, "error": f"{type(exc).__name__}: {exc}", "result": None}


def _merged_rows(sub: str, outcomes: list[dict]):
    for o in outcomes:
        run, res = o["run"], o["result"]
        if sub == "theta":
            if res is None:
                res = {"r": run["r"], "A": run["A"], "theta": math.nan, "theta_r": math.nan, "ybar": math.nan,
                       "method_residual": math.nan}
            yield [res[k] for k in THETA_HEADER]
        elif res is None:
            continue
        elif sub == "wave":
            yield [res["r"], res["A"], res["regime"], res["statistic"], res["window"][0], res["window"][1], res["flatness"]]
        elif sub == "front":
            fit = res["fit"] or {}
            yield [res["r"], res["A"], res["dx"], res["lambda"], res["t_end"], fit.get("model", ""),
                   fit.get("coefficient", math.nan), fit.get("intercept", math.nan), fit.get("rms", math.nan)]
        else:
            for n, lam in enumerate(res["eigenvalues"]):
                yield [res["A"], res["h"], res["L"], res["stencil"], n, lam]


_MERGED = {"theta": ("theta.csv", THETA_HEADER), "wave": ("tailfit.csv", TAIL_HEADER),
           "front": ("delayfit.csv", DELAY_HEADER), "spectrum": ("spectrum.csv", SPECTRUM_HEADER)}


def cmd_sweep(args, warn) -> int:
    started = _now()
    runs = load_config(args.config)
    if args.jobs < 1:
        raise ModelError("--jobs must be at least 1")
    out = _outdir(args.out)
    runs = sorted(runs, key=_sweep_key)
    if args.jobs == 1 or len(runs) == 1:
        outcomes = [_execute(r) for r in runs]
    else:
        with ProcessPoolExecutor(max_workers=min(args.jobs, len(runs))) as pool:
            # map preserves submission order, so the merge is parameter-sorted
            outcomes = list(pool.map(_execute, runs))
    outputs = []
    for sub, (name, header) in _MERGED.items():
        group = [o for o in outcomes if o["run"]["subcommand"] == sub]
        if group:
            outputs.append(write_csv(out / name, header, _merged_rows(sub, group)))
    failures = [{"run": o["run"], "error": o["error"]} for o in outcomes if o["error"]]
    _manifest(out, "sweep", {"config": str(args.config), "runs": runs}, {}, outputs, started, warn.messages,
              {"failures": failures, "jobs": args.jobs})
    print(f"{len(runs) - len(failures)}/{len(runs)} runs succeeded")
    if len(failures) == len(runs):
        raise NumericalError("every sweep point failed")
    return 0


# --- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="logkpp", description="Fronts of the log-singular Fisher-KPP equation")
    p.add_argument("--version", action="version", version=f"logkpp {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    w = sub.add_parser("wave", help="traveling wave and its tail law")
    w.add_argument("--r", type=float, required=True)
    w.add_argument("--A", type=float, default=1.0)
    w.add_argument("--xi-end", type=float, default=None, help="right end (default by regime)")
    w.add_argument("--tol", type=float, default=1e-12)
    w.add_argument("--window", default=None, help="tail fit window 'lo,hi'")
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_wave)

    t = sub.add_parser("theta", help="critical profile constant over an r grid")
    t.add_argument("--r-grid", required=True, help="start:stop:step or comma list")
    t.add_argument("--A", type=float, default=1.0)
    t.add_argument("--tol", type=float, default=1e-9)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_theta)

    f = sub.add_parser("front", help="Cauchy problem and delay fit")
    f.add_argument("--r", type=float, required=True)
    f.add_argument("--A", type=float, default=1.0)
    f.add_argument("--t-end", type=float, required=True)
    f.add_argument("--dx", type=float, default=0.1)
    f.add_argument("--lambda", dest="lam", type=float, default=0.5)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_front)

    s = sub.add_parser("spectrum", help="lowest eigenvalues of the radial oscillator")
    s.add_argument("--A", type=float, required=True)
    s.add_argument("--h", type=float, default=0.005)
    s.add_argument("--L", type=float, default=40.0)
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--stencil", choices=("consistent", "standard"), default="consistent")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_spectrum)

    b = sub.add_parser("sweep", help="batch of runs from a JSON config")
    b.add_argument("--config", required=True)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_sweep)
    return p


def _fail(code: str, exit_code: int, message: str) -> int:
    msg = " ".join(str(message).split())
    print(f"logkpp: error code={code} exit={exit_code} msg={msg}", file=sys.stderr)
    return exit_code


def main(argv=None) -> int:
    warn = _WarningLog()
    root = logging.getLogger("logkpp")
    root.addHandler(warn)
    try:
        try:
            args = build_parser().parse_args(argv)
        except UsageError as exc:
            return _fail("usage", 1, exc)
        if args.verbose:
            logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(levelname)s %(message)s")
        t0 = time.perf_counter()
        try:
            code = args.func(args, warn)
        except ModelError as exc:
            return _fail("ModelError", 1, exc)
        except NumericalError as exc:
            return _fail(type(exc).__name__, 2, exc)
        except OSError as exc:
            return _fail("OSError", 1, exc)
        logger.info("%s finished in %.2fs", args.command, time.perf_counter() - t0)
        return code
    finally:
        root.removeHandler(warn)


if __name__ == "__main__":
    sys.exit(main())
