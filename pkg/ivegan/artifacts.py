"""Files the CLI reads and writes: sample CSVs, PGM images, history and
report dumps."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Iterable, List, Mapping, Sequence, Union

import numpy as np

from .errors import SampleFormatError, ShapeError

PathLike = Union[str, Path]


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def format_samples(rows: np.ndarray, prefix: str = "x", width: int | None = None) -> str:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1 and rows.size == 0:
        rows = rows.reshape(0, width or 0)
    if rows.ndim != 2:
        raise ShapeError(f"sample rows must be 2-D, got shape {rows.shape}")
    width = rows.shape[1] if width is None else width
    if rows.shape[1] != width:
        raise ShapeError(f"rows have {rows.shape[1]} columns, header has {width}")
    lines = [",".join(f"{prefix}{i}" for i in range(width))]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_samples(path: PathLike, rows: np.ndarray, prefix: str = "x", width: int | None = None) -> None:
    """Header ``x0,x1,...`` then one row per sample, 17 significant digits."""
    Path(path).write_text(format_samples(rows, prefix, width), encoding="utf-8")


def read_samples(path: PathLike) -> np.ndarray:
    """Parse a sample CSV into an (n, d) array; an empty file gives (0, 0)."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        return np.zeros((0, 0))
    header = [h.strip() for h in lines[0].split(",")]
    if not header or any(not h for h in header):
        raise SampleFormatError(f"{path}:1: malformed header {lines[0]!r}")
    width = len(header)
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != width:
            raise SampleFormatError(f"{path}:{lineno}: expected {width} fields, got {len(fields)}")
        try:
            values = [float(f) for f in fields]
        except ValueError:
            raise SampleFormatError(f"{path}:{lineno}: not a number in {line!r}") from None
        if not all(math.isfinite(v) for v in values):
            raise SampleFormatError(f"{path}:{lineno}: non-finite value in {line!r}")
        rows.append(values)
    return np.array(rows, dtype=np.float64).reshape(len(rows), width)


def check_width(path: PathLike, rows: np.ndarray, width: int) -> np.ndarray:
    if rows.shape[1] != width and rows.shape != (0, 0):
        raise SampleFormatError(f"{path}: rows have {rows.shape[1]} columns, the model expects {width}")
    return rows.reshape(len(rows), width)


def encode_pgm(pixels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels)
    if pixels.ndim != 2 or pixels.dtype != np.uint8:
        raise ShapeError(f"PGM needs a 2-D uint8 array, got {pixels.dtype} {pixels.shape}")
    h, w = pixels.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(pixels).tobytes()


def write_pgm(path: PathLike, pixels: np.ndarray) -> None:
    Path(path).write_bytes(encode_pgm(pixels))


def density_to_pixels(counts: np.ndarray) -> np.ndarray:
    """Log-scale histogram counts to 0..255; empty bins stay black."""
    counts = np.asarray(counts, dtype=np.float64)
    peak = counts.max(initial=0.0)
    if peak <= 0:
        return np.zeros(counts.shape, dtype=np.uint8)
    return np.rint(255.0 * np.log1p(counts) / np.log1p(peak)).astype(np.uint8)


def intensity_to_pixels(images: np.ndarray) -> np.ndarray:
    return np.rint(255.0 * np.clip(images, 0.0, 1.0)).astype(np.uint8)


def tile_images(rows: Sequence[np.ndarray], gap: int = 1) -> np.ndarray:
    """Lay out rows of (n, h, w) images on one sheet with ``gap`` black pixels
    between tiles."""
    if not rows:
        raise ValueError("tile_images: nothing to tile")
    n, h, w = rows[0].shape
    if any(r.shape != (n, h, w) for r in rows):
        raise ShapeError(f"every row must hold {n} images of {h}x{w}")
    sheet = np.zeros((len(rows) * (h + gap) - gap, n * (w + gap) - gap), dtype=np.uint8)
    for i, row in enumerate(rows):
        pixels = intensity_to_pixels(row)
        for j in range(n):
            sheet[i * (h + gap) : i * (h + gap) + h, j * (w + gap) : j * (w + gap) + w] = pixels[j]
    return sheet


def write_history(path: PathLike, history: Iterable[Any]) -> None:
    """One CSV row per training step, columns in report field order."""
    records: List[Mapping[str, Any]] = [r.to_dict() for r in history]
    if not records:
        Path(path).write_text("", encoding="utf-8")
        return
    keys = list(records[0])
    lines = [",".join(keys)]
    for rec in records:
        lines.append(",".join(str(rec[k]) if isinstance(rec[k], int) else _fmt(rec[k]) for k in keys))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_json(path: PathLike, obj: Any) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
