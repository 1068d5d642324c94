"""Readers for the layerkac output formats.

Each loader checks the schema stamp before touching the payload so that
format drift fails with a message naming the version this tool expects,
instead of producing a quietly wrong figure.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SWEEP_SCHEMA = "lk-magnetization-v1"
FIELDS_SCHEMA = "lk-fields-v1"
CENSUS_SCHEMA = "lk-census-v1"


class SchemaError(ValueError):
    """Input file is not in the format this tool understands."""


def _check_stamp(path, first_line: str, expected: str) -> None:
    line = (first_line or "").strip()
    if not line.startswith("# schema="):
        raise SchemaError(f"{path}: missing schema stamp, expected {expected}")
    found = line.split("=", 1)[1].strip()
    if found != expected:
        raise SchemaError(f"{path}: schema is {found}, expected {expected}")


# ---------------------------------------------------------------------------
# magnetization sweep table


@dataclass
class SweepPoint:
    beta: float
    gamma: float
    bc: str
    status: str
    mean: float
    se: float
    target: float


def load_sweep(path) -> list[SweepPoint]:
    """Rows of a magnetization sweep CSV, skipped cells included."""
    path = Path(path)
    with open(path, newline="") as fh:
        stamp = fh.readline()
        _check_stamp(path, stamp, SWEEP_SCHEMA)
        reader = csv.DictReader(fh)
        points = []
        for row in reader:
            try:
                points.append(SweepPoint(
                    beta=float(row["beta"]), gamma=float(row["gamma"]),
                    bc=row["bc"], status=row["status"],
                    mean=float(row["mean"]), se=float(row["se"]),
                    target=float(row["target"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"{path}: malformed row {row}: {exc}")
    return points


# ---------------------------------------------------------------------------
# per-site coarse-field dump


@dataclass
class FieldGrid:
    L: int
    H: int
    block_avg: np.ndarray     # float, (H, L)
    eta: np.ndarray           # int8 labels in {-1, 0, +1}, (H, L)
    theta: np.ndarray
    big_theta: np.ndarray
    phase: np.ndarray


def load_fields(path) -> FieldGrid:
    path = Path(path)
    with open(path, newline="") as fh:
        stamp = fh.readline()
        _check_stamp(path, stamp, FIELDS_SCHEMA)
        reader = csv.DictReader(fh)
        cols = {"x", "layer", "block_avg", "eta", "theta", "big_theta",
                "phase"}
        if reader.fieldnames is None or not cols <= set(reader.fieldnames):
            raise SchemaError(f"{path}: field columns {reader.fieldnames} "
                              f"do not cover {sorted(cols)}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no field rows")
    xs = np.array([int(r["x"]) for r in rows])
    layers = np.array([int(r["layer"]) for r in rows])
    L, H = int(xs.max()) + 1, int(layers.max()) + 1
    if len(rows) != L * H:
        raise SchemaError(f"{path}: {len(rows)} rows for a {L}x{H} grid")
    grid = FieldGrid(L=L, H=H,
                     block_avg=np.zeros((H, L)),
                     eta=np.zeros((H, L), dtype=np.int8),
                     theta=np.zeros((H, L), dtype=np.int8),
                     big_theta=np.zeros((H, L), dtype=np.int8),
                     phase=np.zeros((H, L), dtype=np.int8))
    seen = np.zeros((H, L), dtype=bool)
    for r, x, i in zip(rows, xs, layers):
        if seen[i, x]:
            raise SchemaError(f"{path}: duplicate site ({x}, {i})")
        seen[i, x] = True
        grid.block_avg[i, x] = float(r["block_avg"])
        for name in ("eta", "theta", "big_theta", "phase"):
            v = int(r[name])
            if v not in (-1, 0, 1):
                raise SchemaError(f"{path}: {name}={v} at ({x}, {i})")
            getattr(grid, name)[i, x] = v
    if not seen.all():
        raise SchemaError(f"{path}: grid has holes")
    return grid


# ---------------------------------------------------------------------------
# contour census


@dataclass
class StripeRun:
    layer_lower: int
    k_start: int
    k_end: int            # inclusive, in coarse-block columns
    orientation: str


@dataclass
class Contour:
    sign: int
    support_rle: list     # (layer, k_start, k_len) runs, coarse blocks
    stripes: list[StripeRun] = field(default_factory=list)


@dataclass
class Census:
    status: str
    contours: list[Contour]

    @classmethod
    def empty(cls) -> "Census":
        return cls(status="absent", contours=[])


def load_census(path) -> Census:
    path = Path(path)
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}")
    if not isinstance(doc, dict) or doc.get("schema") != CENSUS_SCHEMA:
        raise SchemaError(f"{path}: schema is {doc.get('schema')!r}, "
                          f"expected {CENSUS_SCHEMA}")
    contours = []
    for c in doc.get("contours", []):
        runs = [(int(a), int(b), int(n)) for a, b, n in c["support_rle"]]
        stripes = [StripeRun(layer_lower=int(s["layer_lower"]),
                             k_start=int(s["k_start"]),
                             k_end=int(s["k_end"]),
                             orientation=str(s["orientation"]))
                   for s in c.get("stripes", [])]
        contours.append(Contour(sign=int(c["sign"]), support_rle=runs,
                                stripes=stripes))
    return Census(status=str(doc.get("status", "ok")), contours=contours)


def finite(x: float) -> bool:
    return math.isfinite(x)
