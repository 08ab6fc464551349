"""Plane-wise LSD reports, super-resolution evaluation, ablation and
neighborhood studies.

A *predictor* is any callable ``(anthro, ref_positions, ref_hrtfs, targets)
-> (n_targets, K)`` returning NaN rows for targets it cannot reach.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .encoding import assemble_inputs, encode_anthro
from .geometry import PLANE_TOL_DEG, neighborhood_indices, plane_masks, sample_indices
from .network import ModelParams, forward
from .spectra import Anthropometry, Dataset
from .training import TrainConfig, TrainResult, train

PLANES = ("horizontal", "median", "frontal")
COLUMNS = ("All", "Hor.", "Med.", "Fro.")
THREADS_ENV = "HRTF_FIELD_THREADS"


class ModelPredictor:
    """Test-mode model inference: the N closest references within ``delta``."""

    def __init__(self, params: ModelParams, delta: float, batch_size: int = 256):
        self.params = params
        self.delta = delta
        self.batch_size = batch_size
        self.name = f"model-{params.variant}"

    def _anthro_channels(self, anthro: Anthropometry) -> np.ndarray:
        b = self.params.buffers
        if "anthro_mean" in b:
            anthro = anthro.with_stats(b["anthro_mean"], b["anthro_std"])
        return encode_anthro(anthro)

    def __call__(self, anthro, ref_positions, ref_hrtfs, targets) -> np.ndarray:
        n = self.params.n_neighbors
        enc = self._anthro_channels(anthro)
        out = np.full((len(targets), ref_hrtfs.shape[1]), np.nan)
        rows, nidx = [], []
        for r, t in enumerate(targets):
            cand = neighborhood_indices(ref_positions, t, self.delta)
            if len(cand):
                rows.append(r)
                nidx.append(cand[sample_indices(len(cand), n, "test")])
        for s in range(0, len(rows), self.batch_size):
            sel = np.array(rows[s : s + self.batch_size])
            inp = assemble_inputs(ref_positions, ref_hrtfs, enc, targets[sel], np.stack(nidx[s : s + self.batch_size]))
            out[sel] = forward(inp, self.params)
        return out


@dataclass
class EvalReport:
    label: str
    n_neighbors: int | None
    delta: float | None
    downsample: int
    means: dict[str, float]
    counts: dict[str, int]
    per_position: list[tuple[str, int, float]]
    skipped: int
    n_references: int
    n_targets: int
    extra: dict = field(default_factory=dict)

    @property
    def all_mean(self) -> float:
        return self.means["All"]

    def summary_row(self) -> dict:
        row = {
            "label": self.label,
            "N": "" if self.n_neighbors is None else self.n_neighbors,
            "delta": "" if self.delta is None else self.delta,
            "T": self.downsample,
            "references": self.n_references,
            "targets": self.n_targets,
            "skipped": self.skipped,
        }
        for c in COLUMNS:
            row[c] = repr(self.means[c])
            row[f"n_{c}"] = self.counts[c]
        return row

    def to_csv(self) -> str:
        buf = io.StringIO()
        row = self.summary_row()
        w = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
        w.writeheader()
        w.writerow(row)
        return buf.getvalue()

    def positions_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["subject", "grid_index", "lsd"])
        for sid, gi, v in self.per_position:
            w.writerow([sid, gi, repr(v)])
        return buf.getvalue()

    def to_text(self) -> str:
        return format_table([self])


def format_table(reports: list[EvalReport]) -> str:
    """Aligned text table with one row per report and the All/Hor./Med./Fro. columns."""
    labels = ["Direction"] + [r.label for r in reports]
    width = max(len(s) for s in labels) + 2
    lines = ["Direction".ljust(width) + "".join(c.rjust(9) for c in COLUMNS)]
    for r in reports:
        cells = "".join(("n/a" if math.isnan(r.means[c]) else f"{r.means[c]:.3f}").rjust(9) for c in COLUMNS)
        lines.append(r.label.ljust(width) + cells)
    for r in reports:
        if r.skipped:
            lines.append(f"! {r.label}: {r.skipped} of {r.n_targets} targets skipped (no reachable reference)")
    return "\n".join(lines) + "\n"


def reference_mask(dataset: Dataset, subject_id: str, t: int) -> np.ndarray:
    """Which of a subject's measurements survive downsampling the grid by ``t``."""
    if int(t) != t or t < 1:
        raise ValueError("downsample factor must be a positive integer")
    return dataset.grid_indices(subject_id) % int(t) == 0


def evaluate(predictor, dataset: Dataset, downsample: int = 1, *, subjects=None,
             label: str | None = None, n_neighbors: int | None = None, delta: float | None = None,
             plane_tol: float = PLANE_TOL_DEG, leave_one_out: bool = False) -> EvalReport:
    """Score ``predictor`` on every measured position of the chosen subjects.

    References are the measurements on the grid downsampled by
    ``downsample``; targets are all measured positions. With
    ``leave_one_out`` a target's own measurement is withheld from the
    references. Skipped targets are left out of the means and counted.
    """
    ids = list(subjects) if subjects is not None else dataset.subject_ids
    if isinstance(predictor, ModelPredictor):
        if n_neighbors is not None and n_neighbors != predictor.params.n_neighbors:
            raise ValueError(f"checkpoint has N={predictor.params.n_neighbors}, evaluation asked for N={n_neighbors}")
        n_neighbors = predictor.params.n_neighbors
        delta = predictor.delta if delta is None else delta
        if delta != predictor.delta:
            raise ValueError("delta differs from the predictor's delta")

    def one(sid):
        rec = dataset.subject(sid)
        mask = reference_mask(dataset, sid, downsample)
        if leave_one_out:
            preds = np.full(rec.hrtfs.shape, np.nan)
            for i in range(len(rec)):
                keep = mask.copy()
                keep[i] = False
                if keep.any():
                    preds[i] = predictor(rec.anthropometry, rec.positions[keep], rec.hrtfs[keep], rec.positions[i : i + 1])[0]
        else:
            preds = predictor(rec.anthropometry, rec.positions[mask], rec.hrtfs[mask], rec.positions)
        return rec, int(mask.sum()), preds

    threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    if threads > 1 and len(ids) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, ids))
    else:
        results = [one(sid) for sid in ids]

    per_position, values, member = [], [], {p: [] for p in PLANES}
    skipped = n_refs = n_targets = 0
    for sid, (rec, nref, preds) in zip(ids, results):
        n_refs += nref
        n_targets += len(rec)
        gidx = dataset.grid_indices(sid)
        ok = ~np.any(np.isnan(preds), axis=1)
        skipped += int((~ok).sum())
        err = np.sqrt(np.mean((preds[ok] - rec.hrtfs[ok]) ** 2, axis=1))
        masks = plane_masks(rec.positions[ok], plane_tol)
        for gi, e in zip(gidx[ok], err):
            per_position.append((sid, int(gi), float(e)))
        values.append(err)
        for p in PLANES:
            member[p].append(err[masks[p]])
    allv = np.concatenate(values) if values else np.empty(0)
    means = {"All": float(allv.mean()) if len(allv) else math.nan}
    counts = {"All": len(allv)}
    for p, col in zip(PLANES, COLUMNS[1:]):
        v = np.concatenate(member[p])
        means[col] = float(v.mean()) if len(v) else math.nan
        counts[col] = len(v)
    name = label or getattr(predictor, "name", "predictor")
    return EvalReport(name, n_neighbors, delta, int(downsample), means, counts, per_position,
                      skipped, n_refs, n_targets)


def cross_validated_report(result: TrainResult, dataset: Dataset, downsample: int = 1,
                           label: str | None = None) -> EvalReport:
    """Pool the evaluation of each fold's best model on that fold's validation subjects."""
    cfg = result.config
    parts = [
        evaluate(ModelPredictor(f.params, cfg.delta), dataset, downsample, subjects=f.split.val_subjects)
        for f in result.folds
    ]
    return merge_reports(parts, label or f"{result.variant}, N={cfg.n_neighbors}, delta={cfg.delta:g}")


def merge_reports(parts: list[EvalReport], label: str) -> EvalReport:
    per = [row for r in parts for row in r.per_position]
    vals = np.array([v for _, _, v in per])
    means, counts = {}, {}
    for c in COLUMNS:
        n = sum(r.counts[c] for r in parts)
        s = sum(r.means[c] * r.counts[c] for r in parts if r.counts[c])
        means[c] = s / n if n else math.nan
        counts[c] = n
    means["All"] = float(vals.mean()) if len(vals) else math.nan
    first = parts[0]
    return EvalReport(label, first.n_neighbors, first.delta, first.downsample, means, counts, per,
                      sum(r.skipped for r in parts), sum(r.n_references for r in parts),
                      sum(r.n_targets for r in parts))


def ablation_run(dataset: Dataset, cfg: TrainConfig, downsample: int = 1, fold_indices=None,
                 variants=("a", "b", "c1", "c2")) -> dict[str, EvalReport]:
    """Train every variant with the same config and seed; report cross-validated LSD."""
    return {
        v: cross_validated_report(train(dataset, v, cfg, fold_indices), dataset, downsample, label=v)
        for v in variants
    }


def ablation_table(reports: dict[str, EvalReport]) -> str:
    names = {"a": "PC", "b": "PC + FiLM", "c1": "PC + FiLM + FiLM Layer", "c2": "PC + FiLM + HyperConv"}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant", "model", "lsd"])
    for v, r in reports.items():
        w.writerow([v, names.get(v, v), repr(r.all_mean)])
    return buf.getvalue()


def neighborhood_study(dataset: Dataset, n_list, delta_list, cfg: TrainConfig, variant: str = "c2",
                       downsample: int = 1, fold_indices=None) -> np.ndarray:
    """All-direction LSD for each (N, delta) cell; rows follow ``n_list``."""
    n_list, delta_list = list(n_list), list(delta_list)
    if not n_list or not delta_list:
        raise ValueError("N and delta lists must be nonempty")
    out = np.empty((len(n_list), len(delta_list)))
    for i, n in enumerate(n_list):
        for j, d in enumerate(delta_list):
            res = train(dataset, variant, cfg.updated(n_neighbors=int(n), delta=float(d)), fold_indices)
            out[i, j] = cross_validated_report(res, dataset, downsample).all_mean
    return out


def study_csv(matrix: np.ndarray, n_list, delta_list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["N"] + [f"delta={d:g}" for d in delta_list])
    for n, row in zip(n_list, matrix):
        w.writerow([n] + [repr(float(v)) for v in row])
    return buf.getvalue()
