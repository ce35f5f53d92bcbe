"""Command-line front end.

Exit codes: 0 success, 1 invalid config / input files, 2 model build error
(unresolved names, equation order, insufficient derivative order).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .config import ConfigError, dump_config, export_config, load_config
from .framework import (
    CompiledModel,
    ModelBuildError,
    ModelDefinition,
    grid_points,
    load_checkpoint,
    save_checkpoint,
    train,
    write_history_csv,
)
from .networks import CheckpointError
from .problems import PROBLEMS, config_text, evaluate_against_oracle, load_problem, solution_table

logger = logging.getLogger("macrosolve")

EXIT_OK, EXIT_INPUT, EXIT_BUILD = 0, 1, 2


def _load(source: str) -> ModelDefinition:
    """A config path, or the name of a built-in problem."""
    path = Path(source)
    if not path.exists() and source in PROBLEMS:
        return load_problem(source)
    return load_config(path)


def _compile(model: ModelDefinition) -> CompiledModel:
    return CompiledModel(model)


def _parse_grid(text: str | None, model: ModelDefinition) -> list[int]:
    if text is None:
        return list(model.oracle.eval_grid) or [101] * len(model.states)
    try:
        counts = [int(part) for part in text.split(",")]
    except ValueError:
        raise ConfigError(f"--grid expects integers separated by commas, got {text!r}") from None
    if len(counts) == 1:
        counts *= len(model.states)
    if len(counts) != len(model.states) or any(n < 1 for n in counts):
        raise ConfigError(f"--grid needs one positive count per state variable ({len(model.states)})")
    return counts


def cmd_run(args: argparse.Namespace) -> int:
    model = _load(args.config)
    compiled = _compile(model)
    config = model.training
    epochs = config.epochs
    if args.paper_scale and config.paper_epochs is not None:
        epochs = config.paper_epochs
    if args.epochs is not None:
        epochs = args.epochs
    seed = config.seed if args.seed is None else args.seed
    config = replace(config, epochs=epochs, seed=seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def progress(report):
        if report.epoch % max(1, epochs // 10) == 0 or report.epoch == epochs - 1:
            logger.info("epoch %d total %.6e", report.epoch, report.total)

    result = train(compiled, config, run_pretrain=not args.no_pretrain, callback=progress)
    meta = {"model": model.name, "seed": seed, "epochs": epochs}
    save_checkpoint(out / "best.ckpt", result.best_states(), None, {**meta, "epoch": result.best_epoch})
    save_checkpoint(out / "final.ckpt", result.final_states(), result.optimizer_state, meta)
    write_history_csv(out / "losses.csv", result.history, model.loss_labels)
    report = evaluate_against_oracle(compiled, result.final_params, result.history)
    manifest = {
        "model": model.name,
        "seed": seed,
        "epochs": epochs,
        "pretrain": not args.no_pretrain,
        "best_epoch": result.best_epoch,
        "best_loss": result.best_loss,
        "final_loss": result.history[-1].total if result.history else None,
        "oracle": report.lines(),
        "versions": {
            "macrosolve": __version__,
            "python": platform.python_version(),
            "torch": torch.__version__,
            "numpy": np.__version__,
        },
        "config": export_config(model),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    for line in report.lines():
        print(line)
    print(f"wrote best.ckpt, final.ckpt, losses.csv, manifest.json to {out}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    model = _load(args.config)
    compiled = _compile(model)
    states, _ = load_checkpoint(args.checkpoint)
    try:
        params = compiled.params_from_states(states)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"checkpoint does not match the config: {exc}") from exc
    grid = grid_points(model.states, _parse_grid(args.grid, model))
    names, table = solution_table(compiled, params, grid)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in table.tolist():
            writer.writerow(["%.17g" % v for v in row])
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def cmd_examples(args: argparse.Namespace) -> int:
    if args.export:
        name, directory = args.export
        if name not in PROBLEMS:
            raise ConfigError(f"unknown example {name!r}; run with --list to see the available names")
        target = Path(directory)
        target.mkdir(parents=True, exist_ok=True)
        path = target / f"{name}.json"
        path.write_text(config_text(name))
        print(path)
        return EXIT_OK
    for name in PROBLEMS:
        print(name)
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    model = _load(args.config)
    compiled = _compile(model)
    width = max(len(name) for name in compiled.names)
    for name, kind in compiled.names.items():
        print(f"{name:<{width}}  {kind}")
    print(f"ok: {model.name}: {len(compiled.names)} names, {len(model.loss_labels)} loss components, "
          f"{compiled.n_params} parameters")
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    sys.stdout.write(dump_config(_load(args.config)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="macrosolve", description="Train neural solutions of equilibrium models.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train a model")
    p.add_argument("config", help="config file, or a built-in example name")
    p.add_argument("--epochs", type=int, help="override the configured epoch count")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--out-dir", default="run", help="output directory (default: ./run)")
    p.add_argument("--paper-scale", action="store_true", help="use the full epoch count where a reduced default is configured")
    p.add_argument("--no-pretrain", action="store_true", help="skip fitting initial guesses")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a grid and write CSV")
    p.add_argument("checkpoint")
    p.add_argument("config")
    p.add_argument("--grid", help="points per state variable, e.g. 101 or 41,41")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("examples", help="list or export the built-in example configs")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--list", action="store_true", help="list example names (default)")
    g.add_argument("--export", nargs=2, metavar=("NAME", "DIR"), help="write NAME.json into DIR")
    p.set_defaults(func=cmd_examples)

    p = sub.add_parser("check", help="validate a config and print its variable table")
    p.add_argument("config")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("export", help="print a config in normalized form")
    p.add_argument("config")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ModelBuildError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUILD
    except (ConfigError, CheckpointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
