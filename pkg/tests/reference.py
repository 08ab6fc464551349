"""Straight-line single-sample evaluation of every variant, written with
explicit loops and no shared code with the package's layers."""

import math

import numpy as np

BLOCKS = 5


def pointwise(x, w, b):
    cout, cin = w.shape
    k = x.shape[1]
    out = np.zeros((cout, k))
    for o in range(cout):
        for i in range(cin):
            out[o] += w[o, i] * x[i]
        out[o] += b[o]
    return out


def conv(x, w, b):
    cout, cin, kappa = w.shape
    k = x.shape[1]
    half = kappa // 2
    out = np.zeros((cout, k))
    for o in range(cout):
        for i in range(cin):
            for t in range(kappa):
                for n in range(k):
                    src = n + t - half
                    if 0 <= src < k:
                        out[o, n] += w[o, i, t] * x[i, src]
        out[o] += b[o]
    return out


def film(y, c, gw, gb, bw, bb):
    out = np.zeros_like(y)
    for j in range(y.shape[0]):
        gamma = sum(gw[j, k] * c[k] for k in range(len(c))) + gb[j]
        beta = sum(bw[j, k] * c[k] for k in range(len(c))) + bb[j]
        out[j] = gamma * y[j] + beta
    return out


def block(x, c, p, prefix):
    y = conv(x, p[prefix + ".conv.w"], p[prefix + ".conv.b"])
    z = film(y, c, p[prefix + ".film.gamma_w"], p[prefix + ".film.gamma_b"],
             p[prefix + ".film.beta_w"], p[prefix + ".film.beta_b"])
    h = np.vectorize(math.tanh)(z)
    if prefix + ".skip.w" in p:
        return h + pointwise(x, p[prefix + ".skip.w"], p[prefix + ".skip.b"])
    return h + x


def hypernet(col, w1, b1, w2, b2):
    hid = [math.tanh(sum(w1[h, j] * col[j] for j in range(len(col))) + b1[h]) for h in range(len(b1))]
    return np.array([sum(w2[o, h] * hid[h] for h in range(len(hid))) + b2[o] for o in range(len(b2))])


def hyper_conv(x, c, p, prefix, kappa=3):
    cin, k = x.shape
    cout = len(p[prefix + ".hb.b2"])
    half = kappa // 2
    out = np.zeros((cout, k))
    hw = [p[f"{prefix}.hw.{n}"] for n in ("w1", "b1", "w2", "b2")]
    hb = [p[f"{prefix}.hb.{n}"] for n in ("w1", "b1", "w2", "b2")]
    for n in range(k):
        wk = hypernet(c[:, n], *hw).reshape(cout, cin, kappa)
        bk = hypernet(c[:, n], *hb)
        for o in range(cout):
            acc = bk[o]
            for i in range(cin):
                for t in range(kappa):
                    src = n + t - half
                    if 0 <= src < k:
                        acc += wk[o, i, t] * x[i, src]
            out[o, n] = acc
    return out


def model(variant, p, hrtfs, offsets, target, anthro):
    """Unclamped output for one sample; inputs are (C, K) arrays."""
    pc = pointwise(hrtfs, p["pc.w"], p["pc.b"])[0]
    if variant == "a":
        return pc
    ta = np.vstack([target, anthro])
    offs = offsets
    if variant == "c1":
        cm = pointwise(ta, p["mod.cond.w"], p["mod.cond.b"])[0]
        offs = block(offsets, cm, p, "mod.block")
    elif variant == "c2":
        offs = hyper_conv(offsets, ta, p, "mod")
    c = pointwise(np.vstack([offs, ta]), p["cond.w"], p["cond.b"])[0]
    h = hrtfs / 20.0
    for i in range(BLOCKS):
        h = block(h, c, p, f"trunk.{i}")
    return pc + 20.0 * h[0]
