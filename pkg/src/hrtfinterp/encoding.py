"""Sinusoidal encodings of positions and anthropometry into K-length channels."""

from __future__ import annotations

import numpy as np

from .network import ModelInput
from .spectra import N_BINS, Anthropometry, SpectraError

ENCODING_BASE = 10000.0
POSITION_SCALE = 2.0  # meters

_PAIRS = (N_BINS + 1) // 2
OMEGA = ENCODING_BASE ** (-2.0 * np.arange(_PAIRS) / N_BINS)


def sin_encode(s) -> np.ndarray:
    """Encode scalar(s) as ``(sin(s w_0), cos(s w_0), sin(s w_1), ...)``, length 129.

    With an odd length the last frequency contributes its sine only.
    Works elementwise on arrays, appending the encoding axis.
    """
    s = np.asarray(s, dtype=float)
    arg = s[..., None] * OMEGA
    out = np.empty(s.shape + (2 * _PAIRS,))
    out[..., 0::2] = np.sin(arg)
    out[..., 1::2] = np.cos(arg)
    return out[..., :N_BINS]


def sin_encode_derivative(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    arg = s[..., None] * OMEGA
    out = np.empty(s.shape + (2 * _PAIRS,))
    out[..., 0::2] = OMEGA * np.cos(arg)
    out[..., 1::2] = -OMEGA * np.sin(arg)
    return out[..., :N_BINS]


def encode_position(v) -> np.ndarray:
    """``(..., 3)`` meters -> ``(..., 3, K)``, one row per Cartesian component."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != 3:
        raise ValueError(f"expected 3-vectors, got trailing dim {v.shape[-1]}")
    return sin_encode(v / POSITION_SCALE)


def encode_offsets(offsets) -> np.ndarray:
    """``(..., N, 3)`` neighbor offsets -> ``(..., 3N, K)``, rows ordered neighbor-major."""
    enc = encode_position(offsets)
    return enc.reshape(enc.shape[:-3] + (enc.shape[-3] * 3, N_BINS))


def encode_anthro(a: Anthropometry) -> np.ndarray:
    if not a.has_stats:
        raise SpectraError("anthropometry is missing normalization statistics")
    return sin_encode(a.normalized())


def assemble_inputs(positions, hrtfs, anthro_channels, targets, neighbor_idx):
    """Stack model inputs for a batch of targets.

    ``positions`` ``(M, 3)`` and ``hrtfs`` ``(M, K)`` are the available
    measurements, ``targets`` ``(B, 3)`` the query positions and
    ``neighbor_idx`` ``(B, N)`` rows into the measurements. ``anthro_channels``
    is one ``(12, K)`` encoding shared by the batch or a ``(B, 12, K)`` stack.
    """
    positions = np.asarray(positions, dtype=float)
    targets = np.asarray(targets, dtype=float)
    neighbor_idx = np.asarray(neighbor_idx)
    bsz = len(targets)
    offsets = positions[neighbor_idx] - targets[:, None, :]
    anthro_channels = np.asarray(anthro_channels)
    if anthro_channels.ndim == 2:
        anthro_channels = np.broadcast_to(anthro_channels, (bsz,) + anthro_channels.shape)
    return ModelInput(
        np.asarray(hrtfs)[neighbor_idx],
        encode_offsets(offsets),
        encode_position(targets),
        np.ascontiguousarray(anthro_channels),
    )
