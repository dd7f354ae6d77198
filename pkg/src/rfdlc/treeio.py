"""Plain-text tree documents (YAML) and CSV helpers shared by all file formats.

Floats are written with ``repr`` so every value round-trips bit-exactly.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import yaml

from rfdlc import __version__


def _plain(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def header_line(seed: int | None = None) -> str:
    line = f"rfdlc {__version__}"
    if seed is not None:
        line += f" seed={seed}"
    return line


def dump_tree(doc: dict, path: str | Path | None = None, seed: int | None = None) -> str:
    text = f"# {header_line(seed)}\n" + yaml.safe_dump(_plain(doc), sort_keys=False)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def load_tree(source: str | Path) -> dict:
    """Load a tree document from a path, or from YAML text if it contains a newline."""
    if isinstance(source, Path) or "\n" not in str(source):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = str(source)
    doc = yaml.safe_load(text)
    return {} if doc is None else doc


def fmt(value: Any) -> str:
    if value is None:
        return "NA"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence[Any]],
              seed: int | None = None) -> None:
    buf = io.StringIO()
    buf.write(f"# {header_line(seed)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_csv_rows(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#") and ln.strip()]
    reader = csv.reader(lines)
    header = next(reader)
    return header, [row for row in reader]
