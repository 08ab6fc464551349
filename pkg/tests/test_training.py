import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gradcheck import fd_check, random_model_input, random_params
from hrtfinterp.geometry import make_quasi_uniform_grid
from hrtfinterp.network import forward_batch, init_params
from hrtfinterp.spectra import make_synthetic_dataset
from hrtfinterp.training import (
    FoldSplit,
    NumericError,
    OptimizerState,
    TrainConfig,
    TrainingError,
    adamw_step,
    backward,
    fit_fold,
    loss_lsd,
    lr_schedule,
    make_folds,
    train,
)

K = 129


@pytest.fixture(scope="module")
def tiny():
    return make_synthetic_dataset(make_quasi_uniform_grid(40, 1.47), 3, 11)


def tiny_cfg(**kw):
    base = dict(batch_size=16, lr0=1e-3, max_epochs=2, delta=0.9, n_neighbors=3, seed=5, folds=3)
    base.update(kw)
    return TrainConfig(**base)


# --- loss -------------------------------------------------------------------


def test_loss_zero_at_minimum(rng):
    x = rng.normal(size=K)
    value, grad = loss_lsd(x, x)
    assert value == 0.0
    np.testing.assert_array_equal(grad, 0.0)


@given(st.floats(-50, 50).filter(lambda d: abs(d) > 1e-3), st.integers(0, K - 1))
def test_loss_single_bin(d, k):
    pred = np.zeros(K)
    pred[k] = d
    value, grad = loss_lsd(pred, np.zeros(K))
    assert value == pytest.approx(abs(d) / math.sqrt(K), rel=1e-12)
    assert np.sign(grad[k]) == np.sign(d)


def test_loss_gradient_matches_differences(rng):
    for _ in range(20):
        a = {"p": rng.normal(size=K) * 5}
        t = rng.normal(size=K) * 5
        _, g = loss_lsd(a["p"], t)
        assert fd_check(lambda: loss_lsd(a["p"], t)[0], a, {"p": g}, 30, rng, step=1e-3, fourth_order=True) < 1e-6


def test_backward_zero_at_neighbor_mean(rng):
    params = init_params("c2", 3)
    inp = random_model_input(3, 2, rng)
    loss, g = backward(inp, params, inp.hrtf_stack.mean(axis=1))
    assert loss == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_array_equal(g[params.slices()["pc.w"]], 0.0)


def test_batch_gradient_is_mean_of_samples(rng):
    params = random_params("c1", 2, rng)
    inp = random_model_input(2, 2, rng)
    tgt = rng.uniform(-30, 10, (2, K))
    loss, g = backward(inp, params, tgt)
    parts = [backward(inp.take(np.array([b])), params, tgt[b : b + 1]) for b in range(2)]
    assert loss == pytest.approx((parts[0][0] + parts[1][0]) / 2, abs=1e-12)
    np.testing.assert_allclose(g, (parts[0][1] + parts[1][1]) / 2, atol=1e-12)


def test_nonfinite_loss_names_parameter(rng):
    params = init_params("b", 2)
    params.tensors["pc.b"][0] = np.nan
    with pytest.raises(NumericError) as err:
        backward(random_model_input(2, 1, rng), params, np.zeros((1, K)))
    assert err.value.parameter == "pc.b"


# --- optimizer --------------------------------------------------------------


def test_adamw_zero_gradient_no_decay_is_identity(rng):
    w = rng.normal(size=10)
    cfg = TrainConfig(weight_decay=0.0)
    w1, st1 = adamw_step(w, np.zeros(10), OptimizerState.zeros(10), cfg)
    np.testing.assert_array_equal(w1, w)
    assert st1.step == 1


def test_adamw_single_step_value():
    cfg = TrainConfig(lr0=1e-4, weight_decay=0.01)
    w1, _ = adamw_step(np.array([1.0]), np.array([1.0]), OptimizerState.zeros(1), cfg)
    lr, eps, wd = Fraction(1, 10**4), Fraction(1, 10**8), Fraction(1, 100)
    exact = 1 - lr * (1 / (1 + eps) + wd)
    assert abs(w1[0] - float(exact)) <= 1e-12
    assert w1[0] == pytest.approx(0.999899000001, abs=1e-12)


def test_adamw_deterministic(rng):
    cfg = TrainConfig(lr0=1e-2)
    grads = rng.normal(size=(10, 6))
    runs = []
    for _ in range(2):
        w, s = np.ones(6), OptimizerState.zeros(6)
        for g in grads:
            w, s = adamw_step(w, g, s, cfg)
        runs.append(w)
    assert runs[0].tobytes() == runs[1].tobytes()


@pytest.mark.filterwarnings("ignore:overflow")
def test_adamw_rejects_nonfinite():
    with pytest.raises(NumericError):
        adamw_step(np.array([1e308]), np.array([1.0]), OptimizerState.zeros(1), TrainConfig(lr0=1.0, weight_decay=1e10))


# --- schedule ---------------------------------------------------------------


def trace(history, **kw):
    cfg = TrainConfig(lr0=1.0, **kw)
    return [lr_schedule(history[: i + 1], cfg) for i in range(len(history))]


def test_schedule_decreasing_history():
    assert trace([5, 4, 3, 2, 1, 0.5]) == [1.0] * 6


def test_schedule_flat_history_halves_at_fourth_epoch():
    assert trace([1.0, 1.0, 1.0, 1.0]) == [1.0, 1.0, 1.0, 0.5]


def test_schedule_resets_on_improvement():
    assert trace([1.0, 0.9, 1.0, 1.0, 1.0, 0.8]) == [1.0, 1.0, 1.0, 1.0, 0.5, 0.5]


def test_schedule_tolerance_and_repeat_halving():
    assert trace([1.0] + [1.0 - 1e-10] * 6) == [1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.25]


@given(st.lists(st.floats(0, 10), max_size=30))
def test_schedule_is_power_of_half(history):
    lr = lr_schedule(history, TrainConfig(lr0=1.0))
    h = -math.log2(lr)
    assert h == int(h) and 0 <= h <= len(history) // 3


# --- folds ------------------------------------------------------------------


def test_folds_93_subjects():
    splits = make_folds([f"s{i}" for i in range(93)], 5, 0)
    assert sorted(len(s.val_subjects) for s in splits) == [18, 18, 19, 19, 19]


@given(st.integers(2, 40), st.integers(2, 8), st.integers(0, 2**31))
def test_fold_partition(n, f, seed):
    if n < f:
        with pytest.raises(ValueError):
            make_folds(range(n), f, seed)
        return
    ids = [f"s{i}" for i in range(n)]
    splits = make_folds(ids, f, seed)
    vals = [v for s in splits for v in s.val_subjects]
    assert sorted(vals) == sorted(ids)
    for s in splits:
        assert not set(s.train_subjects) & set(s.val_subjects)
        assert set(s.train_subjects) | set(s.val_subjects) == set(ids)
        assert len(s.val_subjects) in (n // f, -(-n // f))
    assert splits == make_folds(ids, f, seed)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(folds=1)
    with pytest.raises(ValueError):
        TrainConfig(beta1=1.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


# --- loop ---------------------------------------------------------------------


def test_training_is_deterministic(tiny):
    a = train(tiny, "c2", tiny_cfg(), [0])
    b = train(tiny, "c2", tiny_cfg(), [0])
    assert a.rows == b.rows
    assert a.folds[0].params.equals(b.folds[0].params)
    assert a.folds[0].final_params.flat().tobytes() == b.folds[0].final_params.flat().tobytes()


def test_zero_learning_rate_keeps_parameters(tiny):
    cfg = tiny_cfg(lr0=0.0, max_epochs=1)
    res = train(tiny, "c1", cfg, [0]).folds[0]
    init = init_params("c1", cfg.n_neighbors, cfg.seed)
    np.testing.assert_array_equal(res.final_params.flat(), init.flat())
    assert res.rows[1][3] == res.rows[0][3]


def test_validation_subjects_get_no_gradients(tiny):
    res = train(tiny, "b", tiny_cfg(), [1]).folds[0]
    for sid in res.split.val_subjects:
        assert res.gradient_counts[sid] == 0
    assert all(res.gradient_counts[s] > 0 for s in res.split.train_subjects)


def test_log_rows_and_best_selection(tiny):
    res = train(tiny, "a", tiny_cfg(max_epochs=3), [0]).folds[0]
    assert [r[0] for r in res.rows] == [0, 1, 2, 3]
    vals = [r[3] for r in res.rows]
    assert res.best_epoch == int(np.argmin(vals))


def test_zero_epochs_returns_initialization(tiny):
    cfg = tiny_cfg(max_epochs=0)
    res = train(tiny, "c2", cfg, [0]).folds[0]
    init = init_params("c2", cfg.n_neighbors, cfg.seed)
    np.testing.assert_array_equal(res.params.flat(), init.flat())
    assert res.params.buffers["anthro_mean"].shape == (12,)


def test_epoch_zero_output_is_pc_interpolant(rng):
    inp = random_model_input(4, 3, rng)
    base = forward_batch(inp, init_params("a", 4))
    for v in ("b", "c1", "c2"):
        np.testing.assert_array_equal(forward_batch(inp, init_params(v, 4)), base)


def test_sparse_targets_are_skipped(tiny):
    res = train(tiny, "a", tiny_cfg(delta=0.75, max_epochs=1), [0]).folds[0]
    assert res.skipped_targets > 0


def test_no_trainable_targets_is_an_error(tiny):
    with pytest.raises(TrainingError):
        fit_fold(tiny, FoldSplit(0, tuple(tiny.subject_ids[:1]), ()), "a", tiny_cfg(delta=1e-3))
