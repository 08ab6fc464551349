"""Plot data for magnitude maps: angle-sorted dB matrices, CSV, binary PGM
images and matplotlib figures."""

from __future__ import annotations

import csv
import io

import numpy as np

from .geometry import PLANE_TOL_DEG, plane_masks
from .spectra import N_BINS, SAMPLE_RATE

# in-plane angle axes: 0 deg is front (median, horizontal) or left (frontal)
_PLANE_AXES = {"median": (0, 2), "horizontal": (0, 1), "frontal": (1, 2)}


class EmptySelection(ValueError):
    pass


def plane_angles(positions: np.ndarray, plane: str) -> np.ndarray:
    """In-plane angle of each position in degrees, in [0, 360)."""
    a, b = _PLANE_AXES[plane]
    pos = np.asarray(positions, dtype=float)
    return np.degrees(np.arctan2(pos[:, b], pos[:, a])) % 360.0


def plane_matrix(positions, hrtfs, plane: str = "median", tol: float = PLANE_TOL_DEG):
    """Select the positions in ``plane`` and sort them by angle.

    Returns ``(angles, matrix, index)`` with ``matrix`` of shape
    ``(n_bins, n_angles)``; ``index`` maps columns back to input rows.
    """
    if plane not in _PLANE_AXES:
        raise ValueError(f"unknown plane {plane!r}")
    positions = np.asarray(positions, dtype=float)
    sel = np.flatnonzero(plane_masks(positions, tol)[plane])
    if not len(sel):
        raise EmptySelection(f"no positions in the {plane} plane")
    ang = plane_angles(positions[sel], plane)
    order = np.argsort(ang, kind="stable")
    idx = sel[order]
    return ang[order], np.asarray(hrtfs, dtype=float)[idx].T, idx


def bin_frequencies(n_bins: int = N_BINS, sample_rate: float = SAMPLE_RATE) -> np.ndarray:
    return np.linspace(0.0, sample_rate / 2.0, n_bins)


def matrix_csv(matrix: np.ndarray, angles: np.ndarray) -> str:
    """One row per frequency bin, one column per angle."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["freq_hz"] + [f"{a:.6g}" for a in angles])
    for f, row in zip(bin_frequencies(matrix.shape[0]), matrix):
        w.writerow([f"{f:.6g}"] + [repr(float(v)) for v in row])
    return buf.getvalue()


def db_range(*matrices: np.ndarray) -> tuple[float, float]:
    vals = np.concatenate([np.ravel(m) for m in matrices])
    return float(vals.min()), float(vals.max())


def pgm_bytes(matrix: np.ndarray, lo: float | None = None, hi: float | None = None) -> bytes:
    """Binary P5 image, highest frequency on the top row; ``[lo, hi]`` dB maps to 0..255."""
    m = np.asarray(matrix, dtype=float)
    if lo is None or hi is None:
        lo, hi = db_range(m)
    if hi > lo:
        px = np.rint((np.clip(m, lo, hi) - lo) / (hi - lo) * 255.0)
    else:
        px = np.zeros_like(m)
    img = px[::-1].astype(np.uint8)
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def read_pgm(data: bytes) -> np.ndarray:
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5" or len(parts) < 4:
        raise ValueError("not a binary PGM")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8, count=w * h).reshape(h, w)


# ---------------------------------------------------------------------------
# figures


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def magnitude_png(path, panels: list[tuple[str, np.ndarray]], angles: np.ndarray,
                  lo: float | None = None, hi: float | None = None, plane: str = "median") -> None:
    """Side-by-side frequency/angle maps sharing one color scale."""
    plt = _pyplot()
    if lo is None or hi is None:
        lo, hi = db_range(*(m for _, m in panels))
    freqs = bin_frequencies(panels[0][1].shape[0]) / 1000.0
    fig, axes = plt.subplots(1, len(panels), figsize=(4.2 * len(panels), 3.6), squeeze=False, sharey=True)
    for ax, (title, m) in zip(axes[0], panels):
        im = ax.pcolormesh(angles, freqs, m, vmin=lo, vmax=hi, shading="nearest", cmap="viridis")
        ax.set_title(title)
        ax.set_xlabel(f"{plane} angle (deg)")
    axes[0][0].set_ylabel("frequency (kHz)")
    fig.colorbar(im, ax=axes[0].tolist(), label="dB")
    fig.savefig(path, dpi=120)
    plt.close(fig)


def report_png(path, reports) -> None:
    """Grouped bars of per-plane mean LSD, one group per report."""
    from .evaluation import COLUMNS

    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    width = 0.8 / max(1, len(reports))
    x = np.arange(len(COLUMNS))
    for i, r in enumerate(reports):
        ax.bar(x + i * width, [r.means[c] for c in COLUMNS], width, label=r.label)
    ax.set_xticks(x + width * (len(reports) - 1) / 2, COLUMNS)
    ax.set_ylabel("LSD (dB)")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def heatmap_png(path, matrix: np.ndarray, n_list, delta_list) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(1.2 + 0.9 * len(delta_list), 1.0 + 0.7 * len(n_list)))
    im = ax.imshow(matrix, cmap="magma_r", aspect="auto")
    ax.set_xticks(range(len(delta_list)), [f"{d:g}" for d in delta_list])
    ax.set_yticks(range(len(n_list)), [str(n) for n in n_list])
    ax.set_xlabel("delta (m)")
    ax.set_ylabel("N")
    for (i, j), v in np.ndenumerate(matrix):
        ax.text(j, i, f"{v:.2f}", ha="center", va="center", fontsize="small", color="w")
    fig.colorbar(im, ax=ax, label="LSD (dB)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def loss_png(path, rows) -> None:
    """Train/validation LSD per epoch, one line pair per fold."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    rows = np.array([r[:4] for r in rows], dtype=float)
    for fold in np.unique(rows[:, 1]):
        r = rows[rows[:, 1] == fold]
        (line,) = ax.plot(r[:, 0], r[:, 2], label=f"fold {int(fold)} train")
        ax.plot(r[:, 0], r[:, 3], "--", color=line.get_color(), label=f"fold {int(fold)} val")
    ax.set_xlabel("epoch")
    ax.set_ylabel("LSD (dB)")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
