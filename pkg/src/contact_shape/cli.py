"""Command-line front end: ``contact-shape <command> [options]``.

A run is configured by an optional JSON file, overridden by flags
(``--set key=value`` for any key). Every run writes its outputs and a
``manifest.json`` into ``--out``; ``rerun`` replays a manifest.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path


from . import __version__, emit
from .estimators import (
    PROXY_CAVEAT,
    RunParams,
    TheoryConstants,
    continuity_scan,
    estimate_mu_direct,
    estimate_mu_subadditive,
    good_growth_probability,
    idem_probability,
    shape_estimate,
)
from .field import box_edges_sized
from .oracle import TinyLattice, mc_vs_oracle
from .sim import SimulationError, SurvivalPolicy, Window, simulate

COMMANDS = ("simulate", "mu", "shape", "scan", "idem", "goodgrowth", "oracle-check")

_HELP = {
    "simulate": "trajectories from the origin: hitting times, lifetimes, final sizes",
    "mu": "time constant along one direction (direct or subadditive form)",
    "shape": "asymptotic shape radii per lambda",
    "scan": "coupled time-constant scan over a lambda grid",
    "idem": "probability that two rates open the same arrows on a box",
    "goodgrowth": "probability of the good growth event",
    "oracle-check": "simulator vs exact law on a small path",
}

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EXHAUSTED = 3

EXHAUSTION_FLAGS = {"replica_cap", "horizon_exhausted", "boundary_retry_cap"}

DEFAULTS = {
    "dimension": 1,
    "lambda": 2.0,
    "lambda_grid": None,
    "lambda_prime": None,
    "lambda0": None,
    "lambda_max": 3.0,
    "base_seed": 0,
    "replicas": 200,
    "target_accepted": None,
    "max_replicas": None,
    "horizon": None,
    "window_radius": None,
    "T_surv": 150.0,
    "window_factor": 4.0,
    "max_steps": 100,
    "M1": 10.0,
    "growth_constant": None,
    "method": "direct",
    "n": 20,
    "n_max": 10,
    "directions": None,
    "t": None,
    "S_box_side": 7,
    "alpha": 0.5,
    "L": 8,
    "N": 5,
    "epsilon": 0.5,
    "t0_step": 0.5,
    "reference_t": 40.0,
    "reference_replicas": 200,
    "path_sites": 5,
    "alpha_level": 1e-3,
    "oracle_lambda": None,
    "threads": None,
    "formats": ["csv", "json", "svg"],
}

_INT_KEYS = {
    "dimension", "base_seed", "replicas", "target_accepted", "max_replicas",
    "window_radius", "max_steps", "n", "n_max", "S_box_side", "L", "N",
    "reference_replicas", "path_sites", "threads",
}


class ConfigError(ValueError):
    pass


def _coerce(key, value):
    if value is None:
        return None
    if key in _INT_KEYS:
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ConfigError(f"{key} must be an integer")
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be an integer") from None
    if key in ("lambda_grid", "formats", "directions"):
        if not isinstance(value, list):
            raise ConfigError(f"{key} must be a list")
        return value
    if key == "method":
        return str(value)
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number") from None


def _parse_set(item: str):
    if "=" not in item:
        raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
    key, raw = item.split("=", 1)
    key = key.strip()
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


COMMAND_DEFAULTS = {
    "oracle-check": {"replicas": 20000, "t": 1.0},
    "idem": {"replicas": 10000},
}


def build_config(file_cfg: dict | None, overrides: dict, command: str | None = None) -> dict:
    """Merge defaults < file < flags and coerce types."""
    cfg = dict(DEFAULTS)
    cfg.update(COMMAND_DEFAULTS.get(command, {}))
    for src in (file_cfg or {}, overrides):
        for k, v in src.items():
            if k not in DEFAULTS:
                raise ConfigError(f"unknown config key {k!r}")
            cfg[k] = v
    return {k: _coerce(k, v) for k, v in cfg.items()}


def validate(command: str, cfg: dict):
    """Reject invalid configurations before any simulation starts."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    lm = cfg["lambda_max"]
    if lm is None or lm <= 0 or lm > 64:
        raise ConfigError("lambda_max must lie in (0, 64]")
    rates = {"lambda": cfg["lambda"], "lambda_prime": cfg["lambda_prime"], "lambda0": cfg["lambda0"],
             "oracle_lambda": cfg["oracle_lambda"]}
    for k, v in rates.items():
        if v is not None and not 0 < v <= lm:
            raise ConfigError(f"{k}={v} must lie in (0, lambda_max={lm}]")
    grid = cfg["lambda_grid"]
    if grid is not None:
        grid = [float(v) for v in grid]
        if any(not 0 < v <= lm for v in grid):
            raise ConfigError(f"lambda_grid entries must lie in (0, lambda_max={lm}]")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("lambda_grid must be strictly increasing")
    if cfg["replicas"] < 1:
        raise ConfigError("replicas must be >= 1")
    if cfg["dimension"] < 1:
        raise ConfigError("dimension must be >= 1")
    if cfg["T_surv"] <= 0 or cfg["window_factor"] <= 0 or cfg["max_steps"] < 1:
        raise ConfigError("invalid survival policy")
    if cfg["M1"] < 0:
        raise ConfigError("M1 must be >= 0")
    if cfg["growth_constant"] is not None and cfg["growth_constant"] <= 0:
        raise ConfigError("growth_constant must be positive")
    for f in cfg["formats"]:
        if f not in ("csv", "json", "svg"):
            raise ConfigError(f"unknown format {f!r}")
    d = cfg["dimension"]
    for x in cfg["directions"] or []:
        if not isinstance(x, list) or len(x) != d:
            raise ConfigError(f"direction {x} must be a list of {d} numbers")
    if command in ("mu", "scan"):
        if cfg["n"] < 1 or cfg["n_max"] < 1:
            raise ConfigError("n and n_max must be >= 1")
        if cfg["method"] not in ("direct", "subadditive"):
            raise ConfigError("method must be 'direct' or 'subadditive'")
    if command == "idem":
        if cfg["lambda_prime"] is None:
            raise ConfigError("idem needs lambda_prime")
        if cfg["t"] is None or cfg["t"] <= 0:
            raise ConfigError("idem needs t > 0")
    if command == "goodgrowth":
        lam0 = cfg["lambda0"] if cfg["lambda0"] is not None else cfg["lambda"]
        if cfg["lambda"] < lam0:
            raise ConfigError("goodgrowth needs lambda >= lambda0")
        if not 0 < cfg["alpha"] < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if cfg["alpha"] * cfg["L"] <= 2:
            raise ConfigError("alpha * L must exceed 2")
    if command == "oracle-check":
        if not 1 <= cfg["path_sites"] <= 12 or cfg["path_sites"] % 2 == 0:
            raise ConfigError("path_sites must be odd and at most 12")
    if command in ("simulate", "shape") and cfg["t"] is not None and cfg["t"] < 0:
        raise ConfigError("t must be >= 0")


def run_params(cfg: dict) -> RunParams:
    return RunParams(
        dimension=cfg["dimension"],
        lambda_max=cfg["lambda_max"],
        base_seed=cfg["base_seed"],
        replicas=cfg["replicas"],
        target_accepted=cfg["target_accepted"],
        max_replicas=cfg["max_replicas"],
        horizon=cfg["horizon"],
        window_radius=cfg["window_radius"],
        policy=SurvivalPolicy(cfg["T_surv"], cfg["window_factor"], cfg["max_steps"]),
        constants=TheoryConstants(cfg["M1"], cfg["growth_constant"]),
        threads=cfg["threads"],
    )


def _directions(cfg, ints=True):
    d = cfg["dimension"]
    if cfg["directions"]:
        return [tuple(int(c) if ints else float(c) for c in x) for x in cfg["directions"]]
    e1 = [0] * d
    e1[0] = 1
    return [tuple(e1)]


@dataclass
class Result:
    files: dict  # name -> text
    flags: set
    summary: dict


def _flags_of(*estimates):
    out = set()
    for e in estimates:
        out.update(e.flags)
    return out


def cmd_simulate(cfg):
    params = run_params(cfg)
    d = cfg["dimension"]
    lam = cfg["lambda"]
    T = cfg["t"] if cfg["t"] is not None else (cfg["horizon"] or 20.0)
    g = params.constants.growth(lam)
    window = Window(cfg["window_radius"] or int(math.ceil(g * T)) + 2)
    rows = []
    flags = set()
    for r in range(cfg["replicas"]):
        traj = simulate(params.field(r), lam, [(0,) * d], window, T)
        if traj.boundary_hit:
            flags.add("boundary_hit")
        rows.append(
            {
                "replica": r,
                "lambda": lam,
                "horizon": T,
                "extinction_time": traj.extinction_time,
                "sites_ever_infected": int(len(traj.hit_sites)),
                "final_size": int(len(traj.final_sites)),
                "boundary_hit": traj.boundary_hit,
            }
        )
    lines = ["replica,lambda,horizon,extinction_time,sites_ever_infected,final_size,boundary_hit\n"]
    for row in rows:
        et = "" if row["extinction_time"] is None else emit.fmt_float(row["extinction_time"])
        lines.append(
            f"{row['replica']},{emit.fmt_float(lam)},{emit.fmt_float(T)},{et},"
            f"{row['sites_ever_infected']},{row['final_size']},{int(row['boundary_hit'])}\n"
        )
    alive = sum(r["extinction_time"] is None for r in rows)
    return Result(
        {"simulate.csv": "".join(lines), "simulate.json": emit.to_json(rows)},
        flags - {"boundary_hit"},
        {"alive_at_horizon": alive, "replicas": len(rows), "boundary_runs": sum(r["boundary_hit"] for r in rows)},
    )


def cmd_mu(cfg):
    params = run_params(cfg)
    lam = cfg["lambda"]
    rows = []
    ests = []
    for x in _directions(cfg):
        if cfg["method"] == "direct":
            e = estimate_mu_direct(lam, x, cfg["n"], params)
        else:
            e = estimate_mu_subadditive(lam, x, cfg["n_max"], params.constants, params)
        ests.append(e)
        rows.append(
            {"lambda": lam, "direction": x, "mu_hat": e.value, "stderr": e.stderr,
             "accepted": e.accepted, "replicas": e.replicas, "flags": ";".join(e.flags)}
        )
    files = _table_files("mu", "scan", rows, cfg, svg=False)
    files["mu.json"] = emit.to_json([{"direction": list(x), **e.to_dict()} for x, e in zip(_directions(cfg), ests)])
    return Result(files, _flags_of(*ests), {"estimates": [e.value for e in ests]})


def _table_files(stem, kind, rows, cfg, svg=True):
    files = {}
    fm = cfg["formats"]
    if "csv" in fm:
        files[f"{stem}.csv"] = emit.emit(kind, rows, "csv")
    if "json" in fm:
        files[f"{stem}_rows.json"] = emit.emit(kind, rows, "json")
    if svg and "svg" in fm:
        files[f"{stem}.svg"] = emit.emit(kind, rows, "svg")
    if "csv" not in fm:
        # CSV is the contract; always keep it
        files[f"{stem}.csv"] = emit.emit(kind, rows, "csv")
    return files


def cmd_scan(cfg):
    params = run_params(cfg)
    grid = cfg["lambda_grid"] or [cfg["lambda"]]
    table = continuity_scan([float(v) for v in grid], _directions(cfg), cfg["n"], params)
    rows = emit.scan_rows(table)
    files = _table_files("scan", "scan", rows, cfg)
    files["scan_diagnostics.json"] = emit.to_json(table.diagnostics)
    flags = set()
    for r in table.rows:
        flags.update(r.estimate.flags)
    return Result(files, flags, {"rows": len(rows), "diagnostics": table.diagnostics})


def cmd_shape(cfg):
    params = run_params(cfg)
    grid = cfg["lambda_grid"] or [cfg["lambda"]]
    t = cfg["t"] if cfg["t"] is not None else 40.0
    dirs = None
    if cfg["directions"]:
        dirs = [tuple(float(c) for c in x) for x in cfg["directions"]]
    shapes = [shape_estimate(float(lam), t, params, dirs) for lam in grid]
    rows = emit.shape_rows(shapes)
    files = _table_files("shape", "shape", rows, cfg, svg=cfg["dimension"] == 2)
    flags = set()
    for s in shapes:
        flags.update(s.flags)
    return Result(files, flags, {"accepted": [s.accepted for s in shapes]})


def _idem_edges(cfg):
    return box_edges_sized(cfg["S_box_side"], cfg["dimension"])


def cmd_idem(cfg):
    params = run_params(cfg)
    S = _idem_edges(cfg)
    est = idem_probability(S, cfg["t"], cfg["lambda"], cfg["lambda_prime"], cfg["replicas"], params)
    rows = [emit.idem_row(est, cfg["lambda"], cfg["lambda_prime"])]
    files = _table_files("idem", "idem", rows, cfg, svg=False)
    files["idem.json"] = emit.to_json(est)
    return Result(files, _flags_of(est), {"p_hat": est.value})


def cmd_goodgrowth(cfg):
    params = run_params(cfg)
    lam = cfg["lambda"]
    lam0 = cfg["lambda0"] if cfg["lambda0"] is not None else lam
    ref_params = replace(params, replicas=cfg["reference_replicas"], target_accepted=None)
    ref = shape_estimate(lam0, cfg["reference_t"], ref_params)
    est = good_growth_probability(
        lam, lam0, ref, cfg["alpha"], cfg["L"], cfg["N"], cfg["epsilon"],
        cfg["replicas"], params, cfg["t0_step"],
    )
    header = "lambda,lambda0,alpha,L,N,epsilon,p_hat,stderr,replicas\n"
    line = ",".join(
        [emit.fmt_float(lam), emit.fmt_float(lam0), emit.fmt_float(cfg["alpha"]), str(cfg["L"]),
         str(cfg["N"]), emit.fmt_float(cfg["epsilon"]), emit.fmt_float(est.value),
         emit.fmt_float(est.stderr), str(est.replicas)]
    ) + "\n"
    files = {
        "goodgrowth.csv": header + line,
        "goodgrowth.json": emit.to_json({"estimate": est, "reference_shape": emit.shape_rows([ref])}),
    }
    return Result(files, _flags_of(est) | set(ref.flags), {"p_hat": est.value})


def cmd_oracle(cfg):
    lattice = TinyLattice.path(cfg["path_sites"])
    t = cfg["t"]
    rep = mc_vs_oracle(
        lattice, cfg["lambda"], t, cfg["replicas"], cfg["alpha_level"],
        cfg["oracle_lambda"], cfg["base_seed"],
    )
    return Result({"oracle.json": emit.to_json(rep)}, set() if rep.valid else {"invalid"},
                  {"p_value": rep.p_value, "passed": rep.passed})


HANDLERS = {
    "simulate": cmd_simulate,
    "mu": cmd_mu,
    "shape": cmd_shape,
    "scan": cmd_scan,
    "idem": cmd_idem,
    "goodgrowth": cmd_goodgrowth,
    "oracle-check": cmd_oracle,
}


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def execute(command: str, cfg: dict, out: Path) -> int:
    """Run a validated command, write outputs and the manifest."""
    out.mkdir(parents=True, exist_ok=True)
    (out / "error.json").unlink(missing_ok=True)
    started = _now()
    res = HANDLERS[command](cfg)
    for name, text in res.files.items():
        (out / name).write_text(text)
    exhausted = sorted(res.flags & EXHAUSTION_FLAGS)
    outputs = sorted(res.files)
    if exhausted:
        _error_record(out, "resource_exhausted", f"caps reached: {', '.join(exhausted)}", EXIT_EXHAUSTED)
        outputs = sorted(outputs + ["error.json"])
    caveats = {"survival_proxy": PROXY_CAVEAT, "flags": sorted(res.flags)}
    if exhausted:
        caveats["partial"] = True
    manifest = {
        "command": command,
        "config": cfg,
        "version": __version__,
        "started": started,
        "finished": _now(),
        "outputs": outputs,
        "caveats": caveats,
        "summary": res.summary,
    }
    (out / "manifest.json").write_text(emit.to_json(manifest))
    if exhausted:
        return EXIT_EXHAUSTED
    return EXIT_OK


def _error_record(out: Path | None, kind: str, message: str, code: int):
    rec = {"error": kind, "message": message, "exit_code": code}
    text = json.dumps(rec, sort_keys=True)
    print(text, file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(text + "\n")
        except OSError:
            pass


_FLAG_KEYS = {
    "dimension": int, "lambda": float, "lambda_max": float, "lambda_prime": float,
    "lambda0": float, "base_seed": int, "replicas": int, "target_accepted": int,
    "max_replicas": int, "horizon": float, "window_radius": int, "T_surv": float,
    "window_factor": float, "max_steps": int, "M1": float, "growth_constant": float,
    "n": int, "n_max": int, "t": float, "alpha": float, "L": int, "N": int,
    "epsilon": float, "threads": int, "method": str,
}


def _parser():
    p = argparse.ArgumentParser(prog="contact-shape", description="Contact-process shape experiments.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=_HELP[name])
        sp.add_argument("--config", type=Path, help="JSON configuration file")
        sp.add_argument("--out", type=Path, default=Path("results") / name, help="output directory")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key (JSON value)")
        for key, typ in _FLAG_KEYS.items():
            sp.add_argument("--" + key.replace("_", "-"), dest="flag_" + key, type=typ, default=None,
                            metavar=typ.__name__.upper())
        sp.add_argument("--lambda-grid", dest="flag_lambda_grid", type=float, nargs="+", default=None,
                        metavar="LAM")
        sp.add_argument("--direction", dest="flag_directions", type=int, nargs="+", action="append",
                        default=None, metavar="C", help="lattice direction (repeatable)")
    rp = sub.add_parser("rerun", help="re-run the configuration stored in a manifest")
    rp.add_argument("manifest", type=Path)
    rp.add_argument("--out", type=Path, required=True)
    rp.add_argument("--check", action="store_true",
                    help="exit 1 unless every CSV matches the original byte for byte")
    return p


def _rerun(args) -> int:
    try:
        manifest = json.loads(args.manifest.read_text())
        command = manifest["command"]
        cfg = build_config(manifest["config"], {}, command)
        validate(command, cfg)
    except (OSError, KeyError, json.JSONDecodeError, ConfigError) as exc:
        _error_record(args.out, "config_error", str(exc), EXIT_CONFIG)
        return EXIT_CONFIG
    code = execute(command, cfg, args.out)
    if args.check:
        src = args.manifest.parent
        for name in manifest["outputs"]:
            if name.endswith(".csv"):
                a = (src / name).read_bytes()
                b = (args.out / name).read_bytes()
                if a != b:
                    print(f"{name}: differs", file=sys.stderr)
                    return 1
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "rerun":
        return _rerun(args)
    out = args.out
    try:
        file_cfg = json.loads(args.config.read_text()) if args.config else {}
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        overrides = {}
        for key in _FLAG_KEYS:
            v = getattr(args, "flag_" + key)
            if v is not None:
                overrides[key] = v
        if args.flag_lambda_grid is not None:
            overrides["lambda_grid"] = args.flag_lambda_grid
        if args.flag_directions is not None:
            overrides["directions"] = args.flag_directions
        for item in args.set:
            k, v = _parse_set(item)
            overrides[k] = v
        cfg = build_config(file_cfg, overrides, args.command)
        validate(args.command, cfg)
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        _error_record(out, "config_error", str(exc), EXIT_CONFIG)
        return EXIT_CONFIG
    try:
        return execute(args.command, cfg, out)
    except (SimulationError, ValueError) as exc:
        _error_record(out, "invalid_request", str(exc), EXIT_CONFIG)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
