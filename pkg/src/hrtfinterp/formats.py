"""Text formats for grids and datasets.

Grid file: one ``x y z`` point per line, meters. Dataset file::

    SUBJECT <id>
    ANTHRO <12 floats>
    MEAS <x> <y> <z> <129 floats, dB>
    ...

``#`` starts a comment; fields are whitespace separated. Floats are written
with 17 significant digits so a write/read cycle is lossless.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .geometry import Grid, GeometryError, min_pairwise_distance
from .spectra import (
    DB_FLOOR,
    N_ANTHRO,
    N_BINS,
    Anthropometry,
    Dataset,
    SpectraError,
    SubjectRecord,
    normalize_subjects,
)


class ParseError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


def _fmt(values) -> str:
    return " ".join(f"{v:.17g}" for v in values)


def _lines(path):
    with open(path, encoding="utf-8") as fh:
        for no, raw in enumerate(fh, 1):
            text = raw.split("#", 1)[0].strip()
            if text:
                yield no, text.split()


def _floats(path, no, fields):
    try:
        vals = [float(f) for f in fields]
    except ValueError:
        raise ParseError(path, no, f"not a number in {' '.join(fields)[:60]!r}") from None
    if not all(math.isfinite(v) for v in vals):
        raise ParseError(path, no, "non-finite value")
    return vals


# ---------------------------------------------------------------------------
# grids


def grid_text(grid: Grid) -> str:
    head = f"# grid kind={grid.kind} radius={grid.radius:.17g} points={len(grid)}\n"
    return head + "".join(_fmt(p) + "\n" for p in grid.positions)


def write_grid(path, grid: Grid) -> None:
    Path(path).write_text(grid_text(grid), encoding="utf-8")


def load_grid(path) -> Grid:
    pts, seen = [], {}
    for no, fields in _lines(path):
        if len(fields) != 3:
            raise ParseError(path, no, f"expected 3 coordinates, got {len(fields)}")
        p = tuple(_floats(path, no, fields))
        if p in seen:
            raise ParseError(path, no, f"duplicate point (first on line {seen[p]})")
        if p == (0.0, 0.0, 0.0):
            raise ParseError(path, no, "point at the origin")
        seen[p] = no
        pts.append(p)
    if not pts:
        raise ParseError(path, 0, "no points")
    pos = np.array(pts)
    if min_pairwise_distance(pos) <= 1e-9:
        raise ParseError(path, 0, "points closer than 1e-9 m")
    return Grid(pos, "loaded", float(np.median(np.linalg.norm(pos, axis=1))))


# ---------------------------------------------------------------------------
# datasets


def dataset_text(ds: Dataset) -> str:
    out = [
        "# hrtfinterp dataset v1\n",
        f"# provenance={ds.provenance} grid={ds.grid.kind} points={len(ds.grid)} subjects={len(ds.subjects)}\n",
    ]
    for s in ds.subjects:
        out.append(f"SUBJECT {s.subject_id}\n")
        out.append("ANTHRO " + _fmt(s.anthropometry.features) + "\n")
        for p, h in zip(s.positions, s.hrtfs):
            out.append("MEAS " + _fmt(p) + " " + _fmt(h) + "\n")
    return "".join(out)


def write_dataset(path, ds: Dataset) -> None:
    Path(path).write_text(dataset_text(ds), encoding="utf-8")


def load_dataset(path) -> Dataset:
    """Parse and validate a dataset file; the grid is the union of measured
    positions in order of first appearance."""
    subjects: list[dict] = []
    cur = None
    for no, fields in _lines(path):
        key, rest = fields[0], fields[1:]
        if key == "SUBJECT":
            if len(rest) != 1:
                raise ParseError(path, no, "SUBJECT takes exactly one id")
            if any(s["id"] == rest[0] for s in subjects):
                raise ParseError(path, no, f"subject {rest[0]} defined twice")
            cur = {"id": rest[0], "anthro": None, "pos": [], "hrtf": [], "seen": {}, "line": no}
            subjects.append(cur)
        elif key == "ANTHRO":
            if cur is None:
                raise ParseError(path, no, "ANTHRO before any SUBJECT")
            if cur["anthro"] is not None:
                raise ParseError(path, no, "second ANTHRO line for subject")
            if len(rest) != N_ANTHRO:
                raise ParseError(path, no, f"expected {N_ANTHRO} anthropometric values, got {len(rest)}")
            cur["anthro"] = _floats(path, no, rest)
        elif key == "MEAS":
            if cur is None:
                raise ParseError(path, no, "MEAS before any SUBJECT")
            if len(rest) != 3 + N_BINS:
                raise ParseError(path, no, f"expected 3 coordinates and {N_BINS} bins, got {len(rest)} values")
            vals = _floats(path, no, rest)
            p = tuple(vals[:3])
            if p == (0.0, 0.0, 0.0):
                raise ParseError(path, no, "measurement at the origin")
            if p in cur["seen"]:
                raise ParseError(path, no, f"duplicated position within subject {cur['id']} "
                                           f"(first on line {cur['seen'][p]})")
            if min(vals[3:]) < DB_FLOOR:
                raise ParseError(path, no, f"HRTF value below the {DB_FLOOR:g} dB floor")
            cur["seen"][p] = no
            cur["pos"].append(p)
            cur["hrtf"].append(vals[3:])
        else:
            raise ParseError(path, no, f"unknown record type {key!r}")
    if not subjects:
        raise ParseError(path, 0, "no subjects")
    records = []
    for s in subjects:
        if s["anthro"] is None:
            raise ParseError(path, s["line"], f"subject {s['id']} has no ANTHRO line")
        if not s["pos"]:
            raise ParseError(path, s["line"], f"subject {s['id']} has no measurements")
        try:
            records.append(SubjectRecord(s["id"], Anthropometry(s["anthro"]), s["pos"], s["hrtf"]))
        except SpectraError as e:
            raise ParseError(path, s["line"], str(e)) from None
    order: dict[tuple, int] = {}
    for s in subjects:
        for p in s["pos"]:
            order.setdefault(p, len(order))
    pos = np.array(list(order))
    try:
        grid = Grid(pos, "loaded", float(np.median(np.linalg.norm(pos, axis=1))))
    except GeometryError as e:
        raise ParseError(path, 0, str(e)) from None
    return Dataset(normalize_subjects(records), grid, "ingested")
