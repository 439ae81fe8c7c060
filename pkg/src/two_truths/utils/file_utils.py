"""File helpers: atomic JSON/CSV output, batch manifests and merge maps"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

DEFAULT_MERGE_MAPS: Dict[str, Dict[str, str]] = {
    "LR": {"LG": "L", "LW": "L", "RG": "R", "RW": "R"},
    "GW": {"LG": "G", "RG": "G", "LW": "W", "RW": "W"},
}


@dataclass(frozen=True)
class ManifestItem:
    graph_path: Path
    label_path: Optional[Path]
    graph_id: str


def _jsonable(value: Any) -> Any:
    """numpy scalars/arrays to Python; non-finite floats to strings"""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, Path):
        return str(value)
    return value


def atomic_write_text(path, text: str) -> Path:
    """Write through a temporary file in the same directory, then rename"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=str(target.parent))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return target


def write_json(path, payload: Any) -> Path:
    """Sorted keys and a trailing newline keep equal payloads byte-identical"""
    return atomic_write_text(path, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format_cell(cell) for cell in row])
    return atomic_write_text(path, buffer.getvalue())


def _format_cell(cell: Any) -> Any:
    if isinstance(cell, np.generic):
        cell = cell.item()
    if isinstance(cell, float):
        return repr(cell) if math.isfinite(cell) else str(cell)
    if cell is None:
        return ""
    return cell


def read_manifest(path) -> List[ManifestItem]:
    """
    Batch manifest: CSV rows "graph_path,label_path,graph_id"

    A header row starting with graph_path is skipped; relative paths resolve
    against the manifest's directory; an empty label_path means no labels.
    """
    base = Path(path).parent
    items: List[ManifestItem] = []
    seen = set()
    with open(path, "r", encoding="utf-8", newline="") as handle:
        for line_number, row in enumerate(csv.reader(handle), start=1):
            row = [cell.strip() for cell in row]
            if not row or not row[0] or row[0].startswith("#"):
                continue
            if line_number == 1 and row[0].lower() == "graph_path":
                continue
            if len(row) < 3:
                raise ValueError(f"{path}:{line_number}: expected graph_path,label_path,graph_id")
            graph_path, label_path, graph_id = row[:3]
            if graph_id in seen:
                raise ValueError(f"{path}:{line_number}: duplicate graph_id {graph_id!r}")
            seen.add(graph_id)
            items.append(
                ManifestItem(
                    graph_path=(base / graph_path),
                    label_path=(base / label_path) if label_path else None,
                    graph_id=graph_id,
                )
            )
    return items


def load_merge_maps(path=None) -> Dict[str, Dict[str, str]]:
    """JSON {"name": {"fine": "coarse"}}; the LR/GW connectome maps when path is None"""
    if path is None:
        return {name: dict(mapping) for name, mapping in DEFAULT_MERGE_MAPS.items()}
    with open(path, "r", encoding="utf-8") as handle:
        data = json.load(handle)
    if not isinstance(data, dict) or not all(isinstance(m, dict) for m in data.values()):
        raise ValueError(f"merge map file {path} must map names to {{fine: coarse}} objects")
    return {str(name): {str(k): str(v) for k, v in mapping.items()} for name, mapping in data.items()}


def applicable_merge_maps(maps: Mapping[str, Mapping[str, str]], alphabet: Sequence[str]) -> Dict[str, Dict[str, str]]:
    """Maps that cover every label of the alphabet"""
    return {name: dict(mapping) for name, mapping in maps.items() if set(alphabet) <= set(mapping)}
