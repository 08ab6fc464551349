"""Linear interpolation between the two closest samples in a plane of equal
elevation (preferred) or equal azimuth, on dB spectra."""

from __future__ import annotations

import numpy as np

from .geometry import PLANE_TOL_DEG, cart_to_sph_array


class BaselineError(ValueError):
    pass


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def great_circle_deg(u, v) -> np.ndarray:
    """Angle in degrees between directions (broadcasting over leading axes)."""
    u, v = _unit(u), _unit(v)
    # atan2 form stays accurate for tiny and near-antipodal angles
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    dot = np.sum(u * v, axis=-1)
    return np.degrees(np.arctan2(cross, dot))


def _blend(hrtfs, idx, dist):
    (i, j), (di, dj) = idx, dist
    if di == 0:
        return hrtfs[i].copy()
    if dj == 0:
        return hrtfs[j].copy()
    wi = dj / (di + dj)
    return wi * hrtfs[i] + (1.0 - wi) * hrtfs[j]


def linear_interp(positions, hrtfs, p, tol: float = PLANE_TOL_DEG, _sph=None) -> np.ndarray:
    """Baseline estimate of the HRTF at ``p`` from measured ``(positions, hrtfs)``.

    Picks the two closest (great-circle) measurements sharing ``p``'s
    elevation; with fewer than two, the two closest sharing its azimuth
    (measurements at a pole belong to every azimuth); failing both, the two
    closest overall. Spectra are mixed with weights inversely proportional
    to angular distance, so a coincident measurement is returned as is.
    """
    positions = np.asarray(positions, dtype=float)
    hrtfs = np.asarray(hrtfs, dtype=float)
    if len(positions) < 2:
        raise BaselineError("linear interpolation needs at least two measurements")
    p = np.asarray(p, dtype=float)
    az, el, _ = _sph if _sph is not None else cart_to_sph_array(positions)
    paz, pel, _ = cart_to_sph_array(p[None])
    gc = great_circle_deg(positions, p)

    same_el = np.flatnonzero(np.abs(el - pel[0]) <= tol)
    if len(same_el) >= 2:
        cand = same_el
    else:
        daz = np.abs((az - paz[0] + 180.0) % 360.0 - 180.0)
        at_pole = np.abs(el) >= 90.0 - 1e-9
        cand = np.flatnonzero((daz <= tol) | at_pole)
        if len(cand) < 2:
            d = np.linalg.norm(positions - p, axis=1)
            best = np.argsort(d, kind="stable")[:2]
            return _blend(hrtfs, best, gc[best])
    order = cand[np.argsort(gc[cand], kind="stable")[:2]]
    return _blend(hrtfs, order, gc[order])


class LinearBaseline:
    """Evaluation adapter: predicts every target from the reference measurements."""

    name = "linear"

    def __init__(self, tol: float = PLANE_TOL_DEG):
        self.tol = tol

    def __call__(self, anthro, ref_positions, ref_hrtfs, targets) -> np.ndarray:
        sph = cart_to_sph_array(ref_positions)
        return np.stack([linear_interp(ref_positions, ref_hrtfs, t, self.tol, sph) for t in targets])
