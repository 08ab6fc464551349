import numpy as np
import pytest

import reference
from gradcheck import LAYERS, fd_check, random_layer_case, random_model_input, random_params, variant_gradient_error
from hrtfinterp.network import (
    VARIANTS,
    CheckpointError,
    ModelInput,
    ShapeError,
    checkpoint_bytes,
    conv1d_forward,
    film_block_forward,
    film_forward,
    forward,
    forward_batch,
    hyper_conv_forward,
    init_params,
    load_checkpoint,
    params_from_bytes,
    pointwise_forward,
    save_checkpoint,
)

K = 129


# --- layers -----------------------------------------------------------------


def test_pointwise_mean_and_one_hot(rng):
    x = rng.normal(size=(1, 4, K))
    mean, _ = pointwise_forward(x, np.full((1, 4), 0.25), np.zeros(1))
    np.testing.assert_allclose(mean[0, 0], x[0].mean(axis=0), atol=1e-12)
    pick, _ = pointwise_forward(x, np.array([[0.0, 0, 1, 0]]), np.zeros(1))
    np.testing.assert_array_equal(pick[0, 0], x[0, 2])


def test_pointwise_matches_oracle(rng):
    x, w, b = rng.normal(size=(1, 5, K)), rng.normal(size=(3, 5)), rng.normal(size=3)
    np.testing.assert_allclose(pointwise_forward(x, w, b)[0][0], reference.pointwise(x[0], w, b), atol=1e-12)


def test_conv_identity_and_constant(rng):
    x = rng.normal(size=(2, 3, K))
    ident = np.zeros((3, 3, 3))
    for i in range(3):
        ident[i, i, 1] = 1.0
    np.testing.assert_array_equal(conv1d_forward(x, ident, np.zeros(3))[0], x)
    y, _ = conv1d_forward(x, np.zeros((2, 3, 3)), np.array([1.5, -2.0]))
    np.testing.assert_array_equal(y[:, 0], 1.5)
    np.testing.assert_array_equal(y[:, 1], -2.0)


@pytest.mark.parametrize("kappa", [1, 3, 5])
def test_conv_matches_loop_oracle(rng, kappa):
    x, w, b = rng.normal(size=(1, 3, 20)), rng.normal(size=(4, 3, kappa)), rng.normal(size=4)
    np.testing.assert_allclose(conv1d_forward(x, w, b)[0][0], reference.conv(x[0], w, b), atol=1e-12)


def test_conv_shape_errors(rng):
    with pytest.raises(ShapeError):
        conv1d_forward(rng.normal(size=(1, 3, K)), rng.normal(size=(4, 2, 3)), np.zeros(4))
    with pytest.raises(ShapeError):
        conv1d_forward(rng.normal(size=(1, 3, K)), rng.normal(size=(4, 3, 2)), np.zeros(4))


def film_params(rng, c=4):
    return rng.normal(size=(c, K)), rng.normal(size=c), rng.normal(size=(c, K)), rng.normal(size=c)


def test_film_identity_and_zero_scale(rng):
    y, c = rng.normal(size=(2, 4, K)), rng.normal(size=(2, 1, K))
    z, _ = film_forward(y, c, np.zeros((4, K)), np.ones(4), np.zeros((4, K)), np.zeros(4))
    np.testing.assert_array_equal(z, y)
    bb = rng.normal(size=4)
    z, _ = film_forward(y, c, np.zeros((4, K)), np.zeros(4), np.zeros((4, K)), bb)
    np.testing.assert_array_equal(z, np.broadcast_to(bb[None, :, None], z.shape))


def test_film_matches_oracle(rng):
    y, c = rng.normal(size=(1, 4, K)), rng.normal(size=(1, 1, K))
    gw, gb, bw, bb = film_params(rng)
    np.testing.assert_allclose(film_forward(y, c, gw, gb, bw, bb)[0][0],
                               reference.film(y[0], c[0, 0], gw, gb, bw, bb), atol=1e-11)


def block_params(rng, cin, cout, kappa=3):
    p = {"b.conv.w": rng.normal(size=(cout, cin, kappa)), "b.conv.b": rng.normal(size=cout)}
    p["b.film.gamma_w"], p["b.film.gamma_b"], p["b.film.beta_w"], p["b.film.beta_b"] = film_params(rng, cout)
    p["b.film.gamma_w"] *= 0.1
    p["b.film.beta_w"] *= 0.1
    if cin != cout:
        p["b.skip.w"], p["b.skip.b"] = rng.normal(size=(cout, cin)), rng.normal(size=cout)
    return p


def test_block_residual_identity(rng):
    x, c = rng.normal(size=(1, 4, K)), rng.normal(size=(1, 1, K))
    p = block_params(rng, 4, 4)
    p["b.conv.w"][:] = 0
    p["b.conv.b"][:] = 0
    p["b.film.beta_w"][:] = 0
    p["b.film.beta_b"][:] = 0
    np.testing.assert_array_equal(film_block_forward(x, c, p, "b")[0], x)


def test_block_zero_input_zero_biases(rng):
    p = block_params(rng, 4, 6)
    for name in ("b.conv.b", "b.film.beta_b", "b.skip.b"):
        p[name][:] = 0
    p["b.film.beta_w"][:] = 0
    out, _ = film_block_forward(np.zeros((1, 4, K)), rng.normal(size=(1, 1, K)), p, "b")
    np.testing.assert_array_equal(out, 0.0)


@pytest.mark.parametrize("cin,cout", [(4, 4), (3, 6)])
def test_block_matches_oracle(rng, cin, cout):
    x, c = rng.normal(size=(1, cin, 30)), rng.normal(size=(1, 1, 30))
    p = block_params(rng, cin, cout)
    p["b.film.gamma_w"] = p["b.film.gamma_w"][:, :30]
    p["b.film.beta_w"] = p["b.film.beta_w"][:, :30]
    np.testing.assert_allclose(film_block_forward(x, c, p, "b")[0][0], reference.block(x[0], c[0, 0], p, "b"),
                               atol=1e-11)


def hyper_params(rng, cin, cout, cc, hid=5, kappa=3):
    return {
        "h.hw.w1": rng.normal(size=(hid, cc)), "h.hw.b1": rng.normal(size=hid),
        "h.hw.w2": rng.normal(size=(cout * cin * kappa, hid)), "h.hw.b2": rng.normal(size=cout * cin * kappa),
        "h.hb.w1": rng.normal(size=(hid, cc)), "h.hb.b1": rng.normal(size=hid),
        "h.hb.w2": rng.normal(size=(cout, hid)), "h.hb.b2": rng.normal(size=cout),
    }


def test_hyper_conv_with_constant_hypernets_is_conv(rng):
    cin, cout = 3, 4
    p = hyper_params(rng, cin, cout, 6)
    for n in ("h.hw.w1", "h.hb.w1", "h.hw.w2", "h.hb.w2"):
        p[n][:] = 0
    x, c = rng.normal(size=(2, cin, K)), rng.normal(size=(2, 6, K))
    z, _ = hyper_conv_forward(x, c, p, "h")
    y, _ = conv1d_forward(x, p["h.hw.b2"].reshape(cout, cin, 3), p["h.hb.b2"])
    assert np.max(np.abs(z - y)) <= 1e-12


def test_hyper_conv_zero_weight_net_gives_bias_field(rng):
    p = hyper_params(rng, 3, 2, 4)
    p["h.hw.w2"][:] = 0
    p["h.hw.b2"][:] = 0
    x, c = rng.normal(size=(1, 3, 20)), rng.normal(size=(1, 4, 20))
    z, _ = hyper_conv_forward(x, c, p, "h")
    for k in range(20):
        np.testing.assert_allclose(z[0, :, k], reference.hypernet(c[0, :, k], *(p[f"h.hb.{n}"] for n in ("w1", "b1", "w2", "b2"))),
                                   atol=1e-12)


def test_hyper_conv_matches_oracle(rng):
    p = hyper_params(rng, 3, 2, 4)
    x, c = rng.normal(size=(1, 3, 25)), rng.normal(size=(1, 4, 25))
    np.testing.assert_allclose(hyper_conv_forward(x, c, p, "h")[0][0], reference.hyper_conv(x[0], c[0], p, "h"),
                               atol=1e-11)


@pytest.mark.parametrize("layer", LAYERS)
def test_layer_gradients(rng, layer):
    arrays, fn, grads = random_layer_case(layer, rng)
    assert fd_check(fn, arrays, grads, 200, rng) < 1e-5


# --- model --------------------------------------------------------------------


def test_variant_a_mean_weights_is_mean(rng):
    inp = random_model_input(4, 3, rng)
    out = forward(inp, init_params("a", 4))
    np.testing.assert_allclose(out, inp.hrtf_stack.mean(axis=1), atol=1e-12)


@pytest.mark.parametrize("variant", ["b", "c1", "c2"])
def test_zero_trunk_equals_variant_a(rng, variant):
    inp = random_model_input(3, 4, rng)
    pa = init_params("a", 3, 5)
    pv = init_params(variant, 3, 5)
    assert np.max(np.abs(forward_batch(inp, pv) - forward_batch(inp, pa))) <= 1e-12


@pytest.mark.parametrize("variant", VARIANTS)
def test_forward_matches_reference_interpreter(rng, variant):
    n = 2
    params = random_params(variant, n, rng)
    inp = random_model_input(n, 2, rng)
    got = forward_batch(inp, params)
    for b in range(2):
        want = reference.model(variant, params.tensors, inp.hrtf_stack[b], inp.offset_channels[b],
                               inp.target_channels[b], inp.anthro_channels[b])
        assert np.max(np.abs(got[b] - want)) <= 1e-10


@pytest.mark.parametrize("variant", VARIANTS)
def test_full_model_gradients(rng, variant):
    assert variant_gradient_error(variant, rng) < 1e-4


def test_neighbor_permutation_symmetry_variant_a(rng):
    params = random_params("a", 4, rng)
    inp = random_model_input(4, 1, rng)
    perm = np.array([2, 0, 3, 1])
    off_perm = (3 * perm[:, None] + np.arange(3)).ravel()
    pinp = ModelInput(inp.hrtf_stack[:, perm], inp.offset_channels[:, off_perm], inp.target_channels, inp.anthro_channels)
    pp = params.copy()
    pp.tensors["pc.w"] = params["pc.w"][:, perm]
    np.testing.assert_allclose(forward(pinp, pp), forward(inp, params), atol=1e-12)


def test_output_is_clamped(rng):
    params = init_params("a", 2)
    params.tensors["pc.b"][:] = 1e4
    assert np.all(forward(random_model_input(2, 1, rng), params) == 60.0)


def test_shape_mismatch_is_rejected(rng):
    with pytest.raises(ShapeError):
        forward(random_model_input(3, 1, rng), init_params("c2", 4))
    with pytest.raises(ShapeError):
        init_params("d", 4)


def test_flat_view_round_trip(rng):
    p = random_params("c1", 3, rng)
    assert p.with_flat(p.flat()).equals(p)
    sl = p.slices()
    np.testing.assert_array_equal(p.flat()[sl["cond.w"]], p["cond.w"].ravel())


# --- checkpoints --------------------------------------------------------------


@pytest.mark.parametrize("variant", VARIANTS)
def test_checkpoint_round_trip(tmp_path, rng, variant):
    p = random_params(variant, 3, rng)
    p.buffers["anthro_mean"] = rng.normal(size=12)
    save_checkpoint(tmp_path / "m.ckpt", p)
    q = load_checkpoint(tmp_path / "m.ckpt")
    assert q.equals(p)
    assert checkpoint_bytes(q) == checkpoint_bytes(p)


def test_checkpoint_rejects_damage(rng):
    data = checkpoint_bytes(random_params("b", 2, rng))
    with pytest.raises(CheckpointError, match="magic"):
        params_from_bytes(b"X" + data[1:])
    with pytest.raises(CheckpointError, match="truncated"):
        params_from_bytes(data[:-3])
    with pytest.raises(CheckpointError, match="trailing"):
        params_from_bytes(data + b"\0")
    bad = bytearray(data)
    bad[-8:] = np.array([np.nan]).tobytes()
    with pytest.raises(CheckpointError, match="non-finite"):
        params_from_bytes(bytes(bad))
