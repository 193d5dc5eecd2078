"""Command-line entry points: ``gen-gt``, ``train``, ``eval``, ``analyze-rf``, ``synth-data``.

Every subcommand takes an optional ``--config`` JSON file. Its keys are the
subcommand's long option names with dashes replaced by underscores (for
``train`` the file is a full run configuration). Explicit flags override the
file. Failures print one JSON error record to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .config import OUTPUT_ENV, load_json, run_config_from_dict
from .data import load_scene, pad_to_multiple, save_scene
from .density import build_density_map, parse_kernel_mode, sum_pool_downsample
from .errors import ConfigurationError, ContractViolation, DSNetError
from .formats import write_density
from .rf import (
    coverage,
    enumerate_dense_paths,
    gridding_audit,
    rf_size,
    support_1d,
    support_2d,
    write_coverage_pgm,
)
from .train import evaluate, load_scene_dir, synthetic_scenes, train

EXIT_CONFIG = 2
EXIT_RUNTIME = 1

# option defaults per subcommand; None marks "required unless given in --config"
DEFAULTS = {
    "gen-gt": {"scene": None, "kernel": "adaptive", "downsample": 1, "out": None, "out_dir": "runs/gen-gt"},
    "eval": {
        "checkpoint": None,
        "scenes": None,
        "synthetic_count": 16,
        "synthetic_seed": 999,
        "kernel": "fixed:2",
        "out_dir": "runs/eval",
    },
    "analyze-rf": {
        "dilations": None,
        "kernel": 3,
        "connectivity": "dense",
        "blocks": 1,
        "json": False,
        "audit": False,
        "heatmap": None,
        "out_dir": "runs/analyze-rf",
    },
    "synth-data": {
        "count": 64,
        "seed": 0,
        "width": 64,
        "height": 64,
        "count_range": "0,40",
        "gradient": 2.0,
        "out_dir": "runs/synth-data",
    },
}


def _int_list(text) -> list[int]:
    if isinstance(text, list):
        return [int(v) for v in text]
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"expected comma-separated integers, got {text!r}") from None


def _settings(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then the ``--config`` file, then explicit flags."""
    values = dict(DEFAULTS[command])
    if args.config:
        doc = load_json(args.config)
        if not isinstance(doc, dict):
            raise ConfigurationError(f"{args.config}: config document must be an object")
        unknown = sorted(set(doc) - set(values))
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        values.update(doc)
    for key in values:
        given = getattr(args, key, None)
        if given is not None:
            values[key] = given
    env = os.environ.get(OUTPUT_ENV)
    if env:
        values["out_dir"] = env
    return values


def _require(values: dict, *keys):
    missing = [k for k in keys if values.get(k) in (None, "")]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        raise ConfigurationError(f"missing required option(s): {flags}")


def _emit(doc):
    print(json.dumps(doc, indent=2))


# -- subcommands -----------------------------------------------------------


def cmd_gen_gt(args) -> int:
    v = _settings("gen-gt", args)
    _require(v, "scene")
    scene = load_scene(v["scene"])
    factor = int(v["downsample"])
    dmap = build_density_map(scene, parse_kernel_mode(v["kernel"]))
    if factor > 1:
        padded, _ = pad_to_multiple(dmap.grid, factor)
        dmap = sum_pool_downsample(padded, factor)
    out = Path(v["out"]) if v["out"] else Path(v["out_dir"]) / (Path(v["scene"]).stem + ".dmp")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_density(out, dmap.grid)
    _emit({"out": str(out), "shape": list(dmap.shape), "count": dmap.nominal_count, "heads": scene.count})
    return 0


def cmd_train(args) -> int:
    doc = load_json(args.config) if args.config else {}
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{args.config}: config document must be an object")
    overrides = {
        ("iterations",): args.iterations,
        ("seed",): args.seed,
        ("output_dir",): args.out_dir,
        ("optim", "lr"): args.lr,
        ("loss", "lam"): args.lam,
    }
    for path, value in overrides.items():
        if value is None:
            continue
        node = doc
        for key in path[:-1]:
            node = node.setdefault(key, {})
        node[path[-1]] = value
    cfg = run_config_from_dict(doc)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
    result = train(cfg)
    first, last = result.losses[0], result.losses[-1]
    _emit(
        {
            "checkpoint": str(result.checkpoint),
            "loss_log": str(result.log_path),
            "iterations": cfg.iterations,
            "initial_loss": first[3],
            "final_loss": last[3],
        }
    )
    return 0


def cmd_eval(args) -> int:
    v = _settings("eval", args)
    _require(v, "checkpoint")
    if v["scenes"]:
        scenes = load_scene_dir(v["scenes"])
    else:
        scenes = synthetic_scenes(int(v["synthetic_count"]), int(v["synthetic_seed"]))
    result = evaluate(v["checkpoint"], scenes, v["kernel"])
    doc = result.as_dict()
    out = Path(v["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval.json").write_text(json.dumps(doc, indent=2) + "\n")
    _emit(doc)
    return 0


def _rf_text(report, dilations, kernel, connectivity) -> str:
    lines = [f"dilations {list(dilations)}  kernel {kernel}  connectivity {connectivity}"]
    lines.append(f"paths: {len(report.paths)}")
    for path, K in report.paths:
        lines.append(f"  {str(path):<40} K={K}")
    lines.append(f"distinct K: {report.distinct_sizes}  max gap: {report.max_gap}")
    full = report.full_chain
    if full is not None:
        K = rf_size(full)
        c1 = coverage(full, 1)
        c2 = coverage(full, 2)
        lines.append(f"full chain {full}: K={K}")
        lines.append(f"  1-D touched {c1.touched} of {c1.rf_cells}  lost {100 * c1.lost_fraction:.1f}%")
        lines.append(f"  2-D touched {c2.touched} of {c2.rf_cells}  lost {100 * c2.lost_fraction:.1f}%")
    return "\n".join(lines) + "\n"


def cmd_analyze_rf(args) -> int:
    v = _settings("analyze-rf", args)
    _require(v, "dilations")
    dilations = _int_list(v["dilations"])
    kernel = int(v["kernel"])
    report = enumerate_dense_paths(dilations, v["connectivity"], int(v["blocks"]), kernel)
    audit = gridding_audit([dilations], kernel) if v["audit"] else None
    if v["heatmap"] and report.full_chain is not None:
        heatmap = Path(v["heatmap"])
        heatmap.parent.mkdir(parents=True, exist_ok=True)
        write_coverage_pgm(heatmap, support_2d(report.full_chain))
    if v["json"]:
        doc = report.as_dict()
        if report.full_chain is not None:
            c1 = coverage(report.full_chain, 1)
            doc["full_chain_1d"] = {"touched": c1.touched, "cells": c1.rf_cells, "offsets": support_1d(report.full_chain).tolist()}
            c2 = coverage(report.full_chain, 2)
            doc["full_chain_2d"] = {"touched": c2.touched, "cells": c2.rf_cells, "lost_fraction": c2.lost_fraction}
        if audit is not None:
            doc["audit"] = audit.as_dict()
        _emit(doc)
    else:
        sys.stdout.write(_rf_text(report, dilations, kernel, v["connectivity"]))
        if audit is not None:
            sys.stdout.write(audit.text())
    return 0 if audit is None or audit.passed else EXIT_RUNTIME


def cmd_synth_data(args) -> int:
    v = _settings("synth-data", args)
    lo, hi = _int_list(v["count_range"])
    scenes = synthetic_scenes(int(v["count"]), int(v["seed"]), int(v["width"]), int(v["height"]), (lo, hi), float(v["gradient"]))
    out = Path(v["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    for i, scene in enumerate(scenes):
        save_scene(out / f"scene_{i:04d}.json", scene)
    _emit({"out_dir": str(out), "count": len(scenes), "heads": sum(s.count for s in scenes)})
    return 0


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsnet", description="Dense scale network toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="JSON file with option values")
        p.add_argument("--out-dir", help=f"output directory (env {OUTPUT_ENV} overrides)")
        p.set_defaults(func=func)
        return p

    p = add("gen-gt", cmd_gen_gt, "Build a ground-truth density map (DMP1) for one scene file.")
    p.add_argument("--scene", help="scene JSON file")
    p.add_argument("--kernel", help="'adaptive' or 'fixed:<sigma>' (default adaptive)")
    p.add_argument("--downsample", type=int, help="sum-pool factor (default 1)")
    p.add_argument("--out", help="output file (default <out-dir>/<scene>.dmp)")

    p = add("train", cmd_train, "Train a model from a run configuration.")
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lam", type=float, help="consistency-loss weight")

    p = add("eval", cmd_eval, "Whole-image MAE/MSE of a checkpoint.")
    p.add_argument("--checkpoint", help="checkpoint.dsn file")
    p.add_argument("--scenes", help="directory of scene JSON files (default: synthetic scenes)")
    p.add_argument("--synthetic-count", type=int)
    p.add_argument("--synthetic-seed", type=int)
    p.add_argument("--kernel", help="density kernel used for ROI ground truth (default fixed:2)")

    p = add("analyze-rf", cmd_analyze_rf, "Receptive-field sizes and pixel coverage of a dilation stack.")
    p.add_argument("--dilations", help="comma-separated dilation rates, e.g. 3,6")
    p.add_argument("--kernel", type=int, help="kernel size (default 3)")
    p.add_argument("--connectivity", choices=["sequential", "dense", "dense_residual_blocks"])
    p.add_argument("--blocks", type=int, help="block count for dense_residual_blocks")
    p.add_argument("--json", action="store_true", default=None, help="emit JSON instead of text")
    p.add_argument("--audit", action="store_true", default=None, help="append a gridding audit of the block")
    p.add_argument("--heatmap", help="write the full-chain 2-D support as a PGM image")

    p = add("synth-data", cmd_synth_data, "Write a seeded synthetic scene set.")
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--count-range", help="min,max heads per scene (default 0,40)")
    p.add_argument("--gradient", type=float, help="vertical scale gradient (default 2.0)")
    return parser


def _error_record(exc: BaseException) -> dict:
    return {"error": type(exc).__name__, "message": str(exc)}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ContractViolation, FileNotFoundError) as exc:
        print(json.dumps(_error_record(exc)), file=sys.stderr)
        return EXIT_CONFIG
    except (DSNetError, ValueError, OSError) as exc:
        print(json.dumps(_error_record(exc)), file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
