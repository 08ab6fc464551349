"""Differentiable layers and the four interpolator variants.

Every layer is a pair of functions: ``*_forward`` returns the output and a
cache, ``*_backward`` maps the output gradient and the cache to the input
gradient(s) and a dict of parameter gradients. Activations carry a batch
axis, shape ``(B, C, K)``.

Variants:

``a``   pointwise convolution (PC) over the neighbor HRTFs only.
``b``   PC plus a five-block FiLM residual trunk conditioned on a 1xK
        projection of the encoded offsets, target and anthropometry.
``c1``  as ``b``, with the offset channels first modulated by a
        kernel-size-1 FiLM residual block conditioned on target/anthropometry.
``c2``  as ``b``, with the offset channels modulated by a hyper-convolution
        whose weights are generated from target/anthropometry.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .spectra import DB_FLOOR, N_ANTHRO, N_BINS

VARIANTS = ("a", "b", "c1", "c2")
TRUNK_BLOCKS = 5
TRUNK_KERNEL = 3
HYPER_KERNEL = 3
HYPER_HIDDEN = 32
WIDTH_FACTOR = 4
DB_SCALE = 20.0  # trunk works on dB / 20
OUTPUT_RANGE = (DB_FLOOR, 60.0)


class ShapeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# parameters


@dataclass(eq=False)
class ModelParams:
    """Named learnable tensors of one variant.

    The flat view concatenates ``tensors`` in insertion order, which is the
    order :func:`init_params` creates them in. ``buffers`` hold fixed
    non-learned arrays (anthropometry normalization) that travel with the
    checkpoint.
    """

    variant: str
    n_neighbors: int
    tensors: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray] = field(default_factory=dict)
    n_bins: int = N_BINS

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ShapeError(f"unknown variant {self.variant!r}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    @property
    def names(self) -> list[str]:
        return list(self.tensors)

    @property
    def size(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def flat(self) -> np.ndarray:
        return np.concatenate([t.ravel() for t in self.tensors.values()])

    def flat_grad(self, grads: dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate([grads[n].ravel() for n in self.tensors])

    def with_flat(self, vec: np.ndarray) -> "ModelParams":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.size,):
            raise ShapeError(f"flat vector has {vec.size} entries, expected {self.size}")
        out, i = {}, 0
        for name, t in self.tensors.items():
            out[name] = vec[i : i + t.size].reshape(t.shape).copy()
            i += t.size
        return ModelParams(self.variant, self.n_neighbors, out, dict(self.buffers), self.n_bins)

    def copy(self) -> "ModelParams":
        return self.with_flat(self.flat())

    def slices(self) -> dict[str, slice]:
        out, i = {}, 0
        for name, t in self.tensors.items():
            out[name] = slice(i, i + t.size)
            i += t.size
        return out

    def equals(self, other: "ModelParams") -> bool:
        return (
            self.variant == other.variant
            and self.n_neighbors == other.n_neighbors
            and self.names == other.names
            and all(np.array_equal(self.tensors[n], other.tensors[n]) for n in self.tensors)
            and sorted(self.buffers) == sorted(other.buffers)
            and all(np.array_equal(self.buffers[n], other.buffers[n]) for n in self.buffers)
        )


def trunk_channels(n_neighbors: int) -> list[tuple[int, int]]:
    wide = WIDTH_FACTOR * n_neighbors
    return [(n_neighbors, wide)] + [(wide, wide)] * (TRUNK_BLOCKS - 2) + [(wide, 1)]


def cond_channels(n_neighbors: int) -> int:
    return 3 * n_neighbors + 3 + N_ANTHRO


def init_params(variant: str, n_neighbors: int, seed: int = 0, n_bins: int = N_BINS) -> ModelParams:
    """Fresh parameters.

    PC starts at the neighbor mean; the trunk's last block (conv, FiLM shift
    and skip projection) starts at zero, so every variant initially outputs
    the PC interpolant. FiLM scales start near 1 and shifts near 0.
    """
    if variant not in VARIANTS:
        raise ShapeError(f"unknown variant {variant!r}")
    if n_neighbors < 1:
        raise ShapeError("need at least one neighbor")
    rng = np.random.default_rng(seed)
    n, k = n_neighbors, n_bins

    def unif(bound, shape):
        return rng.uniform(-bound, bound, shape)

    t: dict[str, np.ndarray] = {
        "pc.w": np.full((1, n), 1.0 / n),
        "pc.b": np.zeros(1),
    }
    if variant == "a":
        return ModelParams(variant, n, t, n_bins=n_bins)

    n_off = 3 * n
    if variant == "c1":
        t["mod.cond.w"] = unif(np.sqrt(1.0 / (3 + N_ANTHRO)), (1, 3 + N_ANTHRO))
        t["mod.cond.b"] = np.zeros(1)
        _init_block(t, "mod.block", n_off, n_off, 1, k, unif)
    elif variant == "c2":
        c_hyp = 3 + N_ANTHRO
        n_gen = n_off * n_off * HYPER_KERNEL
        t["mod.hw.w1"] = unif(np.sqrt(1.0 / c_hyp), (HYPER_HIDDEN, c_hyp))
        t["mod.hw.b1"] = unif(np.sqrt(1.0 / c_hyp), HYPER_HIDDEN)
        t["mod.hw.w2"] = unif(0.1 * np.sqrt(1.0 / HYPER_HIDDEN), (n_gen, HYPER_HIDDEN))
        t["mod.hw.b2"] = unif(np.sqrt(1.0 / (n_off * HYPER_KERNEL)), n_gen)
        t["mod.hb.w1"] = unif(np.sqrt(1.0 / c_hyp), (HYPER_HIDDEN, c_hyp))
        t["mod.hb.b1"] = unif(np.sqrt(1.0 / c_hyp), HYPER_HIDDEN)
        t["mod.hb.w2"] = unif(0.1 * np.sqrt(1.0 / HYPER_HIDDEN), (n_off, HYPER_HIDDEN))
        t["mod.hb.b2"] = np.zeros(n_off)

    c_cond = cond_channels(n)
    t["cond.w"] = unif(np.sqrt(1.0 / c_cond), (1, c_cond))
    t["cond.b"] = np.zeros(1)
    for i, (cin, cout) in enumerate(trunk_channels(n)):
        _init_block(t, f"trunk.{i}", cin, cout, TRUNK_KERNEL, k, unif)
    last = f"trunk.{TRUNK_BLOCKS - 1}"
    for suffix in ("conv.w", "conv.b", "film.beta_w", "film.beta_b", "skip.w", "skip.b"):
        t[f"{last}.{suffix}"] = np.zeros_like(t[f"{last}.{suffix}"])
    return ModelParams(variant, n, t, n_bins=n_bins)


def _init_block(t, prefix, cin, cout, kappa, k, unif):
    t[f"{prefix}.conv.w"] = unif(np.sqrt(1.0 / (cin * kappa)), (cout, cin, kappa))
    t[f"{prefix}.conv.b"] = unif(np.sqrt(1.0 / (cin * kappa)), cout)
    t[f"{prefix}.film.gamma_w"] = unif(0.1 * np.sqrt(1.0 / k), (cout, k))
    t[f"{prefix}.film.gamma_b"] = np.ones(cout)
    t[f"{prefix}.film.beta_w"] = unif(0.1 * np.sqrt(1.0 / k), (cout, k))
    t[f"{prefix}.film.beta_b"] = np.zeros(cout)
    if cin != cout:
        t[f"{prefix}.skip.w"] = unif(np.sqrt(1.0 / cin), (cout, cin))
        t[f"{prefix}.skip.b"] = np.zeros(cout)


# ---------------------------------------------------------------------------
# layers


def _check3(x, name="x"):
    if x.ndim != 3:
        raise ShapeError(f"{name} must be (B, C, K), got shape {x.shape}")


def pointwise_forward(x, w, b):
    _check3(x)
    if w.ndim != 2 or w.shape[1] != x.shape[1] or b.shape != (w.shape[0],):
        raise ShapeError(f"pointwise weights {w.shape}/{b.shape} do not fit {x.shape[1]} channels")
    return np.matmul(w, x) + b[:, None], x


def pointwise_backward(dy, x, w):
    dw = np.tensordot(dy, x, axes=([0, 2], [0, 2]))
    db = dy.sum(axis=(0, 2))
    dx = np.matmul(w.T, dy)
    return dx, dw, db


def _im2col(x, kappa):
    pad = kappa // 2
    k = x.shape[2]
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    return np.stack([xp[:, :, t : t + k] for t in range(kappa)], axis=2)


def _col2im(dcols):
    b, c, kappa, k = dcols.shape
    pad = kappa // 2
    dxp = np.zeros((b, c, k + 2 * pad))
    for t in range(kappa):
        dxp[:, :, t : t + k] += dcols[:, :, t, :]
    return dxp[:, :, pad : pad + k]


def conv1d_forward(x, w, b):
    """Zero-padded 'same' cross-correlation; ``w`` is ``(C_out, C_in, kappa)``, kappa odd."""
    _check3(x)
    if w.ndim != 3 or w.shape[1] != x.shape[1] or w.shape[2] % 2 != 1 or b.shape != (w.shape[0],):
        raise ShapeError(f"conv kernel {w.shape}/{b.shape} does not fit input {x.shape}")
    cols = _im2col(x, w.shape[2])
    bsz, cin, kappa, k = cols.shape
    flat = cols.reshape(bsz, cin * kappa, k)
    y = np.matmul(w.reshape(w.shape[0], -1), flat) + b[:, None]
    return y, flat


def conv1d_backward(dy, flat, w):
    cout, cin, kappa = w.shape
    dw = np.tensordot(dy, flat, axes=([0, 2], [0, 2])).reshape(w.shape)
    db = dy.sum(axis=(0, 2))
    dflat = np.matmul(w.reshape(cout, -1).T, dy)
    dx = _col2im(dflat.reshape(dy.shape[0], cin, kappa, dy.shape[2]))
    return dx, dw, db


def film_forward(y, c, gw, gb, bw, bb):
    """Per-channel affine modulation ``z_j = gamma_j(c) * y_j + beta_j(c)``.

    ``gamma`` and ``beta`` are linear maps of the 1xK condition ``c``.
    """
    _check3(y, "y")
    _check3(c, "c")
    if c.shape[1] != 1 or c.shape[2] != gw.shape[1] or gw.shape[0] != y.shape[1]:
        raise ShapeError(f"FiLM condition {c.shape} / maps {gw.shape} do not fit input {y.shape}")
    c0 = c[:, 0, :]
    gamma = c0 @ gw.T + gb
    beta = c0 @ bw.T + bb
    return gamma[:, :, None] * y + beta[:, :, None], (y, c0, gamma)


def film_backward(dz, cache, gw, bw):
    y, c0, gamma = cache
    dgamma = np.einsum("bok,bok->bo", dz, y)
    dbeta = dz.sum(axis=2)
    dy = gamma[:, :, None] * dz
    grads = {
        "gamma_w": dgamma.T @ c0,
        "gamma_b": dgamma.sum(axis=0),
        "beta_w": dbeta.T @ c0,
        "beta_b": dbeta.sum(axis=0),
    }
    dc = (dgamma @ gw + dbeta @ bw)[:, None, :]
    return dy, dc, grads


def film_block_forward(x, c, p: dict, prefix: str):
    """conv -> FiLM -> tanh, plus identity or pointwise-projected skip."""
    w = p[f"{prefix}.conv.w"]
    y, conv_cache = conv1d_forward(x, w, p[f"{prefix}.conv.b"])
    z, film_cache = film_forward(
        y, c, p[f"{prefix}.film.gamma_w"], p[f"{prefix}.film.gamma_b"],
        p[f"{prefix}.film.beta_w"], p[f"{prefix}.film.beta_b"],
    )
    h = np.tanh(z)
    if f"{prefix}.skip.w" in p:
        s, _ = pointwise_forward(x, p[f"{prefix}.skip.w"], p[f"{prefix}.skip.b"])
    else:
        if w.shape[0] != x.shape[1]:
            raise ShapeError("identity skip needs equal channel counts")
        s = x
    return h + s, (x, conv_cache, film_cache, h)


def film_block_backward(dout, cache, p: dict, prefix: str):
    x, conv_cache, film_cache, h = cache
    dz = dout * (1.0 - h * h)
    dy, dc, fg = film_backward(dz, film_cache, p[f"{prefix}.film.gamma_w"], p[f"{prefix}.film.beta_w"])
    dx, dw, db = conv1d_backward(dy, conv_cache, p[f"{prefix}.conv.w"])
    grads = {f"{prefix}.conv.w": dw, f"{prefix}.conv.b": db}
    grads.update({f"{prefix}.film.{k}": v for k, v in fg.items()})
    if f"{prefix}.skip.w" in p:
        dxs, dsw, dsb = pointwise_backward(dout, x, p[f"{prefix}.skip.w"])
        dx = dx + dxs
        grads[f"{prefix}.skip.w"] = dsw
        grads[f"{prefix}.skip.b"] = dsb
    else:
        dx = dx + dout
    return dx, dc, grads


def _columns(x):
    """(B, C, K) -> (C, B*K)."""
    return np.ascontiguousarray(x.transpose(1, 0, 2)).reshape(x.shape[1], -1)


def _uncolumns(x, bsz):
    """(C, B*K) -> (B, C, K)."""
    return np.ascontiguousarray(x.reshape(x.shape[0], bsz, -1).transpose(1, 0, 2))


def _hypernet_forward(c, w1, b1, w2, b2):
    hid = np.tanh(w1 @ c + b1[:, None])
    return w2 @ hid + b2[:, None], (c, hid)


def _hypernet_backward(dout, cache, w1, w2):
    c, hid = cache
    dw2 = dout @ hid.T
    db2 = dout.sum(axis=1)
    dpre = (w2.T @ dout) * (1.0 - hid * hid)
    dw1 = dpre @ c.T
    db1 = dpre.sum(axis=1)
    dc = w1.T @ dpre
    return dc, {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}


def hyper_conv_forward(x, c, p: dict, prefix: str, kappa: int = HYPER_KERNEL):
    """Convolution whose per-bin kernel and bias are generated from ``c[:, :, k]``.

    ``z[:, o, k] = sum_{i,t} W(c_k)[o, i, t] * x[:, i, k + t - kappa//2] + bias(c_k)[o]``
    with zero padding; the weight and bias generators are two-layer
    kernel-size-1 convolutions with a tanh in between.
    """
    _check3(x)
    _check3(c, "c")
    if kappa % 2 != 1:
        raise ShapeError("hyper-convolution kernel size must be odd")
    bsz, cin, k = x.shape
    n_gen = p[f"{prefix}.hw.w2"].shape[0]
    cout = p[f"{prefix}.hb.w2"].shape[0]
    if n_gen != cout * cin * kappa or c.shape[2] != k or c.shape[1] != p[f"{prefix}.hw.w1"].shape[1]:
        raise ShapeError(f"hyper-convolution parameters do not fit input {x.shape} / condition {c.shape}")
    ccols = _columns(c)
    wgen, hw_cache = _hypernet_forward(ccols, *(p[f"{prefix}.hw.{n}"] for n in ("w1", "b1", "w2", "b2")))
    bias, hb_cache = _hypernet_forward(ccols, *(p[f"{prefix}.hb.{n}"] for n in ("w1", "b1", "w2", "b2")))
    wgen = wgen.reshape(cout, cin * kappa, -1)
    xcols = _columns(_im2col(x, kappa).reshape(bsz, cin * kappa, k))
    z = np.einsum("oin,in->on", wgen, xcols) + bias
    return _uncolumns(z, bsz), (xcols, wgen, hw_cache, hb_cache, cin, kappa, bsz)


def hyper_conv_backward(dz, cache, p: dict, prefix: str):
    xcols, wgen, hw_cache, hb_cache, cin, kappa, bsz = cache
    cout = wgen.shape[0]
    dz = _columns(dz)
    dwgen = dz[:, None, :] * xcols[None]
    dxcols = np.einsum("oin,on->in", wgen, dz)
    k = dz.shape[1] // bsz
    dx = _col2im(_uncolumns(dxcols, bsz).reshape(bsz, cin, kappa, k))
    dc_w, gw = _hypernet_backward(dwgen.reshape(cout * cin * kappa, -1), hw_cache,
                                  p[f"{prefix}.hw.w1"], p[f"{prefix}.hw.w2"])
    dc_b, gb = _hypernet_backward(dz, hb_cache, p[f"{prefix}.hb.w1"], p[f"{prefix}.hb.w2"])
    grads = {f"{prefix}.hw.{n}": v for n, v in gw.items()}
    grads.update({f"{prefix}.hb.{n}": v for n, v in gb.items()})
    return dx, _uncolumns(dc_w + dc_b, bsz), grads


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True, eq=False)
class ModelInput:
    """Encoded inputs for one sample (``(C, K)`` arrays) or a batch (``(B, C, K)``)."""

    hrtf_stack: np.ndarray
    offset_channels: np.ndarray
    target_channels: np.ndarray
    anthro_channels: np.ndarray

    def batched(self) -> "ModelInput":
        if self.hrtf_stack.ndim == 3:
            return self
        return ModelInput(*(a[None] for a in self._arrays()))

    def _arrays(self):
        return (self.hrtf_stack, self.offset_channels, self.target_channels, self.anthro_channels)

    def __len__(self):
        return len(self.hrtf_stack) if self.hrtf_stack.ndim == 3 else 1

    def take(self, idx) -> "ModelInput":
        return ModelInput(*(a[idx] for a in self.batched()._arrays()))


def stack_inputs(items) -> ModelInput:
    items = [it.batched() for it in items]
    return ModelInput(*(np.concatenate(parts) for parts in zip(*(it._arrays() for it in items))))


def _check_input(inp: ModelInput, params: ModelParams):
    n, k = params.n_neighbors, params.n_bins
    expect = {
        "hrtf_stack": (n, k),
        "offset_channels": (3 * n, k),
        "target_channels": (3, k),
        "anthro_channels": (N_ANTHRO, k),
    }
    for name, shape in expect.items():
        got = getattr(inp, name).shape[1:]
        if got != shape:
            raise ShapeError(f"{name} has shape {got}, variant {params.variant} with N={n} expects {shape}")


def forward_batch(inp: ModelInput, params: ModelParams, keep_cache: bool = False):
    """Raw (unclamped) model output ``(B, K)`` plus the backward cache if requested."""
    inp = inp.batched()
    _check_input(inp, params)
    p = params.tensors
    cache: dict = {}
    pc, _ = pointwise_forward(inp.hrtf_stack, p["pc.w"], p["pc.b"])
    cache["pc"] = inp.hrtf_stack
    if params.variant == "a":
        out = pc[:, 0, :]
        return (out, cache) if keep_cache else out

    target_anthro = np.concatenate([inp.target_channels, inp.anthro_channels], axis=1)
    offs = inp.offset_channels
    if params.variant == "c1":
        cm, _ = pointwise_forward(target_anthro, p["mod.cond.w"], p["mod.cond.b"])
        offs, cache["mod"] = film_block_forward(offs, cm, p, "mod.block")
        cache["mod.cond"] = target_anthro
    elif params.variant == "c2":
        offs, cache["mod"] = hyper_conv_forward(offs, target_anthro, p, "mod")

    stacked = np.concatenate([offs, target_anthro], axis=1)
    c, _ = pointwise_forward(stacked, p["cond.w"], p["cond.b"])
    cache["cond"] = stacked
    h = inp.hrtf_stack / DB_SCALE
    for i in range(TRUNK_BLOCKS):
        h, cache[f"trunk.{i}"] = film_block_forward(h, c, p, f"trunk.{i}")
    out = pc[:, 0, :] + DB_SCALE * h[:, 0, :]
    return (out, cache) if keep_cache else out


def backward_batch(dout: np.ndarray, cache: dict, params: ModelParams) -> dict[str, np.ndarray]:
    """Parameter gradients given ``dL/d(output)`` of shape ``(B, K)``."""
    p = params.tensors
    grads: dict[str, np.ndarray] = {}
    d = dout[:, None, :]
    _, grads["pc.w"], grads["pc.b"] = pointwise_backward(d, cache["pc"], p["pc.w"])
    if params.variant == "a":
        return grads

    dh = DB_SCALE * d
    dc = np.zeros_like(d)
    for i in reversed(range(TRUNK_BLOCKS)):
        dh, dci, g = film_block_backward(dh, cache[f"trunk.{i}"], p, f"trunk.{i}")
        dc += dci
        grads.update(g)
    dstacked, grads["cond.w"], grads["cond.b"] = pointwise_backward(dc, cache["cond"], p["cond.w"])
    n_off = 3 * params.n_neighbors
    doffs = dstacked[:, :n_off]
    if params.variant == "c1":
        _, dcm, g = film_block_backward(doffs, cache["mod"], p, "mod.block")
        grads.update(g)
        _, grads["mod.cond.w"], grads["mod.cond.b"] = pointwise_backward(dcm, cache["mod.cond"], p["mod.cond.w"])
    elif params.variant == "c2":
        _, _, g = hyper_conv_backward(doffs, cache["mod"], p, "mod")
        grads.update(g)
    return grads


def forward(inp: ModelInput, params: ModelParams) -> np.ndarray:
    """Predicted HRTF(s), clamped to the emitted dB range."""
    single = inp.hrtf_stack.ndim == 2
    out = np.clip(forward_batch(inp, params), *OUTPUT_RANGE)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_MAGIC = b"HRTFCKPT"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def checkpoint_bytes(params: ModelParams) -> bytes:
    """Binary container: magic, version, variant, N, K, then named float64 tensors.

    Each tensor is stored as ``u32 name length, name, u32 rank, u32 dims...,
    little-endian float64 data``. Buffers are stored after the parameters
    with a ``buffer.`` name prefix.
    """
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    tag = params.variant.encode()
    parts.append(struct.pack("<I", len(tag)) + tag)
    parts.append(struct.pack("<III", params.n_neighbors, params.n_bins,
                             len(params.tensors) + len(params.buffers)))
    items = list(params.tensors.items()) + [(f"buffer.{k}", v) for k, v in params.buffers.items()]
    for name, t in items:
        nb = name.encode()
        parts.append(struct.pack("<I", len(nb)) + nb)
        parts.append(struct.pack("<I", t.ndim) + struct.pack(f"<{t.ndim}I", *t.shape))
        parts.append(np.ascontiguousarray(t, dtype="<f8").tobytes())
    return b"".join(parts)


def params_from_bytes(data: bytes) -> ModelParams:
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError(f"truncated checkpoint at byte {pos}")
        out = view[pos : pos + n]
        pos += n
        return out

    def u32():
        return struct.unpack("<I", take(4))[0]

    if bytes(take(len(CHECKPOINT_MAGIC))) != CHECKPOINT_MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version = u32()
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    variant = bytes(take(u32())).decode()
    if variant not in VARIANTS:
        raise CheckpointError(f"unknown variant {variant!r}")
    n, k, count = u32(), u32(), u32()
    tensors, buffers = {}, {}
    for _ in range(count):
        name = bytes(take(u32())).decode()
        rank = u32()
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(take(8 * size), dtype="<f8").astype(float).reshape(shape)
        if name.startswith("buffer."):
            buffers[name[len("buffer."):]] = arr
        else:
            tensors[name] = arr
    if pos != len(view):
        raise CheckpointError(f"{len(view) - pos} trailing bytes in checkpoint")
    expected = init_params(variant, n, 0, k)
    if expected.names != list(tensors) or any(
        expected.tensors[nm].shape != tensors[nm].shape for nm in tensors
    ):
        raise CheckpointError(f"tensor layout does not match variant {variant} with N={n}")
    for nm, t in tensors.items():
        if not np.all(np.isfinite(t)):
            raise CheckpointError(f"non-finite values in tensor {nm}")
    return ModelParams(variant, n, tensors, buffers, k)


def save_checkpoint(path, params: ModelParams) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(params))


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        return params_from_bytes(fh.read())
