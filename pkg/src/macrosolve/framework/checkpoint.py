"""Model checkpoints (all networks plus optimizer state) and loss CSVs."""

from __future__ import annotations

import csv
import json
from collections.abc import Mapping, Sequence
from pathlib import Path

from ..networks import CHECKPOINT_FORMAT, CheckpointError, NetworkState, state_from_dict, state_to_dict
from .losses import LossReport


def save_checkpoint(
    path: str | Path,
    states: Mapping[str, NetworkState],
    optimizer_state=None,
    extra: Mapping | None = None,
) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "networks": {name: state_to_dict(state) for name, state in states.items()},
        "optimizer": None if optimizer_state is None else optimizer_state.to_dict(),
    }
    if extra:
        doc["meta"] = dict(extra)
    Path(path).write_text(json.dumps(doc, indent=1))


def load_checkpoint(path: str | Path) -> tuple[dict[str, NetworkState], dict | None]:
    """Return ``(networks by name, raw optimizer state dict or None)``."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: missing or unsupported checkpoint format tag")
    networks = doc.get("networks")
    if not isinstance(networks, dict):
        raise CheckpointError(f"{path}: no networks section")
    return {name: state_from_dict(entry) for name, entry in networks.items()}, doc.get("optimizer")


def write_history_csv(path: str | Path, history: Sequence[LossReport], labels: Sequence[str]) -> None:
    """Columns: epoch, one per loss label, total. Floats use ``repr``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", *labels, "total"])
        for report in history:
            writer.writerow([report.epoch, *(repr(report.components[k]) for k in labels), repr(report.total)])


def read_history_csv(path: str | Path) -> tuple[list[str], list[dict[str, float]]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = [{k: float(v) for k, v in row.items()} for row in reader]
        return list(reader.fieldnames or []), rows
