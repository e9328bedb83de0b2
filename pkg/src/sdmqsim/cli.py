"""Batch orchestrator.

``run`` loads a scenario file, simulates it end to end and writes the
metrics report, per-figure CSVs and a run manifest.  ``sweep`` repeats a
scenario over a list of values for one recognized parameter and merges the
headline metrics into one CSV.  Logs go to stderr; data only to files.

Exit codes: 0 ok, 2 configuration error, 3 runtime/IO error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    write_counts_vs_phase_csv,
    write_er_by_group_csv,
    write_group_rates_csv,
)
from .config import ConfigError
from .pipeline import RunResult, run_scenario
from .protocol import KeyRateParams, key_rate, write_transcript
from .receiver import export_histogram
from .scenarios import Scenario, load_scenario

OUT_ENV = "SDMQSIM_OUT"

SWEEP_SIM_KEYS = (
    "mu_in",
    "eta",
    "dead_time_ps",
    "p_tb",
    "im_extinction",
    "jitter_sigma_ps",
    "seed",
)
SWEEP_EXP_KEYS = ("n_frames", "phi_b", "visibility_cap", "phase_floor")
SWEEP_SPECIAL = ("keyrate_n",)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _default_out(scenario_name: str, sub: str | None = None) -> Path:
    base = Path(os.environ.get(OUT_ENV, "out"))
    return base / (scenario_name if sub is None else f"{scenario_name}_{sub}")


def _write_manifest(out_dir: Path, scenario_path: Path, scenario: Scenario,
                    overrides: dict) -> None:
    manifest = {
        "scenario_file": str(scenario_path),
        "scenario_echo": scenario_path.read_text(),
        "overrides": overrides,
        "resolved_seed": scenario.cfg.seed,
        "resolved_n_frames": scenario.experiment.n_frames,
        "versions": {
            "sdmqsim": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )


def _write_artifacts(out_dir: Path, result: RunResult) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    result.report.write(out_dir / "report.json")
    for name, hist in result.histograms.items():
        export_histogram(hist, out_dir / f"hist_{name}.csv")
    if result.sweep_points:
        write_counts_vs_phase_csv(out_dir / "counts_vs_phase.csv", result.sweep_points)
    if result.group_rates:
        write_group_rates_csv(out_dir / "group_rates.csv", result.group_rates)
    if result.er_by_group:
        write_er_by_group_csv(out_dir / "er_by_group.csv", result.er_by_group)
    if result.bb84 is not None:
        write_transcript(out_dir / "transcript.csv", result.bb84)


def cmd_run(args) -> int:
    scenario_path = Path(args.scenario)
    scenario = load_scenario(scenario_path)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.frames is not None:
        overrides["n_frames"] = args.frames
    scenario = scenario.with_overrides(seed=args.seed, n_frames=args.frames)
    out_dir = Path(args.out) if args.out else _default_out(scenario.name)
    _log(f"running scenario {scenario.name} ({scenario.experiment.kind}), "
         f"seed={scenario.cfg.seed}, frames={scenario.experiment.n_frames}")
    result = run_scenario(scenario)
    _write_artifacts(out_dir, result)
    _write_manifest(out_dir, scenario_path, scenario, overrides)
    _log(f"artifacts written to {out_dir}")
    return 0


def _sweep_values(raw: str) -> list[float]:
    vals = [float(v) for v in raw.split(",") if v.strip() != ""]
    if not vals:
        raise ConfigError("empty sweep value list")
    return vals


def _apply_sweep(scenario: Scenario, param: str, value: float) -> Scenario:
    if param in SWEEP_SIM_KEYS:
        typ = int if param in ("dead_time_ps", "seed") else float
        return dataclasses.replace(
            scenario, cfg=dataclasses.replace(scenario.cfg, **{param: typ(value)})
        )
    if param in SWEEP_EXP_KEYS:
        typ = int if param == "n_frames" else float
        return dataclasses.replace(
            scenario,
            experiment=dataclasses.replace(scenario.experiment, **{param: typ(value)}),
        )
    raise ConfigError(f"unknown sweep parameter {param!r}")


def _scalar_metrics(result: RunResult) -> dict:
    out = {}
    for k, v in result.report.to_dict().items():
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            out[k] = v
    return out


def cmd_sweep(args) -> int:
    scenario_path = Path(args.scenario)
    scenario = load_scenario(scenario_path)
    if args.seed is not None:
        scenario = scenario.with_overrides(seed=args.seed)
    param = args.param
    if param not in SWEEP_SIM_KEYS + SWEEP_EXP_KEYS + SWEEP_SPECIAL:
        raise ConfigError(f"unknown sweep parameter {param!r}")
    values = _sweep_values(args.values)
    out_dir = Path(args.out) if args.out else _default_out(scenario.name, "sweep")
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    if param == "keyrate_n":
        # formula-level sweep of the finite-key bound against the block size
        for v in values:
            n = int(v)
            r = key_rate(KeyRateParams(n=n))
            rows.append({"keyrate_n": n, "key_rate": r})
    else:
        for v in values:
            sub = _apply_sweep(scenario, param, v)
            _log(f"sweep {param}={v:g}")
            result = run_scenario(sub)
            rows.append({param: v, **_scalar_metrics(result)})

    keys = [param] + sorted({k for row in rows for k in row} - {param})
    lines = [",".join(keys)]
    for row in rows:
        lines.append(",".join(_fmt(row.get(k)) for k in keys))
    (out_dir / "sweep.csv").write_text("\n".join(lines) + "\n")
    _write_manifest(out_dir, scenario_path, scenario,
                    {"sweep_param": param, "values": values})
    _log(f"sweep results written to {out_dir}")
    return 0


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdmqsim",
        description="Photon-level simulator for a mode-multiplexed "
        "time-bin/phase quantum link",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario file")
    p_run.add_argument("scenario", help="path to a scenario .ini file")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--frames", type=int, default=None)
    p_run.add_argument("--out", default=None, help=f"output dir (default ${OUT_ENV}/<name>)")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a scenario over parameter values")
    p_sweep.add_argument("scenario")
    p_sweep.add_argument("--param", required=True)
    p_sweep.add_argument("--values", required=True, help="comma-separated list")
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--out", default=None)
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _log(f"configuration error: {exc}")
        return 2
    except (OSError, RuntimeError, ValueError) as exc:
        _log(f"runtime error: {exc}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
