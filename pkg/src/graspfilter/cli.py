"""Command line front end: run scenarios, sweep seeds, export trajectories.

Subcommands
-----------
run            integrate one scenario, write trajectory.csv + summary.json
               + config.json + manifest.json into the output directory
montecarlo     sweep random initial estimates, write montecarlo.json
export-piball  convert a trajectory CSV into per-step rotation-vector
               triples (every row has norm <= pi) for 3D scatter plotting
presets        list the shipped scenario names

Exit codes: 0 converged, 2 malformed config or invocation, 3 semantic
validation failure, 4 runtime singularity, 5 stalled, 6 anti-aligned,
7 halted next to the unstable set, 8 out of time before converging.

trajectory.csv, summary.json and config.json are byte-reproducible for a
given (config, seed, version); manifest.json carries wall-clock timestamps
and is exempt.  ``NO_COLOR`` disables the colored status line.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from datetime import datetime, timezone

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .scenarios import (
    ConfigError,
    MalformedConfigError,
    PRESET_NAMES,
    TrajectoryRecord,
    config_digest,
    config_from_dict,
    config_to_dict,
    monte_carlo,
    preset,
    run,
    validate_config,
)
from .so3 import orthonormality_defect, to_axis_angle
from .superquadric import RadialSingularityError

logger = logging.getLogger(__name__)

CSV_SCHEMA_VERSION = 1
CSV_COLUMNS = (
    "t",
    "r11", "r12", "r13", "r21", "r22", "r23", "r31", "r32", "r33",
    "yaw", "pitch", "roll",
    "aa_x", "aa_y", "aa_z",
    "fh1_x", "fh1_y", "fh1_z",
    "fh2_x", "fh2_y", "fh2_z",
    "sigma_x", "sigma_y", "sigma_z",
    "trace_error", "unstable_distance",
)

EXIT_OK = 0
EXIT_MALFORMED = 2
EXIT_VALIDATION = 3
EXIT_SINGULARITY = 4
EXIT_STALLED = 5
EXIT_ANTI_ALIGNED = 6
EXIT_UNSTABLE_SET = 7
EXIT_MAX_TIME = 8

_OUTCOME_EXIT = {
    "converged": EXIT_OK,
    "stalled": EXIT_STALLED,
    "anti_aligned": EXIT_ANTI_ALIGNED,
    "unstable_set_proximity": EXIT_UNSTABLE_SET,
    "max_time": EXIT_MAX_TIME,
}


# ---------------------------------------------------------------------------
# file helpers

def _atomic_write(path: str, data: bytes) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def record_to_csv_bytes(rec: TrajectoryRecord) -> bytes:
    """Serialize the per-step log, 17 significant digits, LF line endings."""
    n = rec.n_rows
    table = np.empty((n, len(CSV_COLUMNS)))
    table[:, 0] = rec.t
    table[:, 1:10] = rec.r_hat.reshape(n, 9)
    table[:, 10:13] = rec.euler
    table[:, 13:16] = rec.axis_angle
    table[:, 16:19] = rec.f_h1
    table[:, 19:22] = rec.f_h2
    table[:, 22:25] = rec.sigma
    table[:, 25] = rec.trace_error
    table[:, 26] = rec.unstable_distance
    lines = [",".join(CSV_COLUMNS)]
    lines.extend(",".join("%.17g" % v for v in row) for row in table)
    return ("\n".join(lines) + "\n").encode()


def load_trajectory_csv(path: str) -> np.ndarray:
    """Read a trajectory written by ``run`` back into a (rows, 27) array."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header.split(",") != list(CSV_COLUMNS):
            raise MalformedConfigError(f"{path}: unexpected trajectory header")
        try:
            table = np.loadtxt(fh, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise MalformedConfigError(f"{path}: {exc}") from exc
    if table.size == 0 or table.shape[1] != len(CSV_COLUMNS):
        raise MalformedConfigError(f"{path}: wrong trajectory shape")
    return table


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def _write_run_outputs(rec: TrajectoryRecord, out_dir: str, started: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    csv_bytes = record_to_csv_bytes(rec)
    summary_bytes = _json_bytes(rec.summary())
    config_bytes = _json_bytes(config_to_dict(rec.config))
    _atomic_write(os.path.join(out_dir, "trajectory.csv"), csv_bytes)
    _atomic_write(os.path.join(out_dir, "summary.json"), summary_bytes)
    _atomic_write(os.path.join(out_dir, "config.json"), config_bytes)
    manifest = {
        "tool": "graspfilter",
        "version": _version(),
        "csv_schema_version": CSV_SCHEMA_VERSION,
        "config_digest": rec.config_digest,
        "seed": rec.config.seed,
        "outcome": rec.outcome,
        "final_trace_error": rec.final_trace_error,
        "started_utc": started,
        "finished_utc": _utc_now(),
        "wall_time_s": rec.wall_time,
        "files": {
            "trajectory.csv": _sha256(csv_bytes),
            "summary.json": _sha256(summary_bytes),
            "config.json": _sha256(config_bytes),
        },
    }
    _atomic_write(os.path.join(out_dir, "manifest.json"), _json_bytes(manifest))


def _version() -> str:
    from . import __version__

    return __version__


# ---------------------------------------------------------------------------
# config ingestion

def _load_config_file(path: str) -> dict:
    try:
        if path.endswith(".toml"):
            with open(path, "rb") as fh:
                return tomllib.load(fh)
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise MalformedConfigError(f"cannot read config {path}: {exc}") from exc
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise MalformedConfigError(f"cannot parse config {path}: {exc}") from exc


def _coerce(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _apply_override(data: dict, item: str) -> None:
    key, sep, raw = item.partition("=")
    if not sep or not key:
        raise MalformedConfigError(f"override {item!r} is not key=value")
    parts = key.split(".")
    cur = data
    try:
        for part in parts[:-1]:
            if isinstance(cur, list):
                cur = cur[int(part)]
            else:
                if cur.get(part) is None:
                    cur[part] = {}
                cur = cur[part]
        last = parts[-1]
        if isinstance(cur, list):
            cur[int(last)] = _coerce(raw)
        else:
            cur[last] = _coerce(raw)
    except (ValueError, IndexError, KeyError, TypeError, AttributeError) as exc:
        raise MalformedConfigError(f"cannot apply override {item!r}: {exc}") from exc


def _config_data(args, apply_seed: bool = True) -> dict:
    if args.preset is not None:
        data = config_to_dict(preset(args.preset))
    else:
        data = _load_config_file(args.config)
    for item in args.set or []:
        _apply_override(data, item)
    if apply_seed and args.seed is not None:
        data["seed"] = args.seed
    return data


# ---------------------------------------------------------------------------
# terminal output

def _color_allowed() -> bool:
    return sys.stdout.isatty() and not os.environ.get("NO_COLOR")


def _status(quiet: bool, outcome: str, text: str) -> None:
    if quiet:
        return
    if _color_allowed():
        code = "32" if outcome == "converged" else "31"
        text = text.replace(outcome, f"\x1b[{code}m{outcome}\x1b[0m", 1)
    print(text)


# ---------------------------------------------------------------------------
# subcommands

def cmd_run(args) -> int:
    cfg = config_from_dict(_config_data(args))
    validate_config(cfg)
    started = _utc_now()
    rec = run(cfg, validate=False)
    _write_run_outputs(rec, args.out, started)
    _status(
        args.quiet,
        rec.outcome,
        f"{cfg.name}: {rec.outcome} ({rec.n_rows} rows, "
        f"final trace error {rec.final_trace_error:.3e}) -> {args.out}",
    )
    return _OUTCOME_EXIT[rec.outcome]


def cmd_montecarlo(args) -> int:
    if args.runs < 1:
        raise MalformedConfigError("--runs must be at least 1")
    cfg = config_from_dict(_config_data(args, apply_seed=False))
    validate_config(cfg)
    sweep_seed = args.seed if args.seed is not None else 0
    started = _utc_now()
    result = monte_carlo(cfg, args.runs, sweep_seed, workers=args.workers)
    os.makedirs(args.out, exist_ok=True)
    payload = {
        "name": cfg.name,
        "config_digest": config_digest(cfg),
        "n_runs": result.n_runs,
        "seed": result.seed,
        "converge_tol": result.converge_tol,
        "converged_fraction": result.converged_fraction,
        "median_settle_time": _none_if_nan(result.median_settle_time),
        "worst_final_error": result.worst_final_error,
        "outcome_counts": result.outcome_counts,
        "runs": [
            {
                "index": s.index,
                "seed": s.seed,
                "outcome": s.outcome,
                "converged": s.converged,
                "settle_time": _none_if_nan(s.settle_time),
                "converge_time": _none_if_nan(s.converge_time),
                "final_trace_error": s.final_trace_error,
                "peak_trace_error": s.peak_trace_error,
            }
            for s in result.runs
        ],
    }
    agg_bytes = _json_bytes(payload)
    _atomic_write(os.path.join(args.out, "montecarlo.json"), agg_bytes)
    manifest = {
        "tool": "graspfilter",
        "version": _version(),
        "config_digest": payload["config_digest"],
        "seed": result.seed,
        "started_utc": started,
        "finished_utc": _utc_now(),
        "files": {"montecarlo.json": _sha256(agg_bytes)},
    }
    _atomic_write(os.path.join(args.out, "manifest.json"), _json_bytes(manifest))
    all_converged = result.converged_fraction == 1.0
    outcome = "converged" if all_converged else "max_time"
    _status(
        args.quiet,
        outcome,
        f"{cfg.name}: {result.n_runs} runs, {result.converged_fraction:.1%} "
        f"converged ({outcome}) -> {args.out}",
    )
    return EXIT_OK if all_converged else EXIT_MAX_TIME


def cmd_export_piball(args) -> int:
    table = load_trajectory_csv(args.trajectory)
    rotations = table[:, 1:10].reshape(-1, 3, 3)
    out = np.empty((table.shape[0], 4))
    out[:, 0] = table[:, 0]
    for i, r in enumerate(rotations):
        if orthonormality_defect(r) > 1e-6:
            raise MalformedConfigError(
                f"{args.trajectory}: row {i} is not a rotation matrix"
            )
        axis, angle = to_axis_angle(r)
        out[i, 1:] = axis * angle
    norms = np.linalg.norm(out[:, 1:], axis=1)
    if float(norms.max(initial=0.0)) > np.pi + 1e-12:
        raise MalformedConfigError("rotation vector exceeded the half-turn ball")
    lines = ["t,aa_x,aa_y,aa_z"]
    lines.extend(",".join("%.17g" % v for v in row) for row in out)
    _atomic_write(args.out, ("\n".join(lines) + "\n").encode())
    if not args.quiet:
        print(f"{out.shape[0]} rotation vectors -> {args.out}")
    return EXIT_OK


def cmd_presets(args) -> int:
    for name in PRESET_NAMES:
        print(name)
    return EXIT_OK


def _none_if_nan(x: float):
    return None if isinstance(x, float) and np.isnan(x) else x


# ---------------------------------------------------------------------------
# entry point

def _add_config_args(p: argparse.ArgumentParser, seed_help: str) -> None:
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--preset", choices=PRESET_NAMES, help="shipped scenario")
    group.add_argument("--config", help="JSON or TOML scenario file")
    p.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="dotted-path config override, repeatable (e.g. gains.k_p=1)",
    )
    p.add_argument("--seed", type=int, help=seed_help)
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--quiet", action="store_true", help="suppress the status line")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graspfilter",
        description="Orientation filter scenario runner for two-arm grasps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate one scenario")
    _add_config_args(p_run, "override the scenario seed")
    p_run.set_defaults(func=cmd_run)

    p_mc = sub.add_parser("montecarlo", help="sweep random initial estimates")
    _add_config_args(p_mc, "sweep seed (default 0)")
    p_mc.add_argument("--runs", type=int, required=True, help="number of runs")
    p_mc.add_argument("--workers", type=int, help="worker processes")
    p_mc.set_defaults(func=cmd_montecarlo)

    p_pb = sub.add_parser(
        "export-piball", help="export rotation vectors from a trajectory CSV"
    )
    p_pb.add_argument("--trajectory", required=True, help="trajectory.csv path")
    p_pb.add_argument("--out", default="piball.csv", help="output CSV path")
    p_pb.add_argument("--quiet", action="store_true")
    p_pb.set_defaults(func=cmd_export_piball)

    p_ls = sub.add_parser("presets", help="list shipped scenarios")
    p_ls.set_defaults(func=cmd_presets)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except MalformedConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RadialSingularityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SINGULARITY
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED


if __name__ == "__main__":
    sys.exit(main())
