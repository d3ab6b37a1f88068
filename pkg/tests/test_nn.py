import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st

from surge_extrap import _kernels
from surge_extrap.errors import ShapeError, StateError
from surge_extrap.nn import (
    Adam, BiGRU, Dense, GRU, bce, bce_grad, mae, mse, mse_grad, numerical_grad,
    relative_error, rmse,
)
from surge_extrap.oracles import (
    oracle_adam_trace, oracle_bce, oracle_gru, oracle_mae, oracle_matmul, oracle_mse,
    oracle_rmse,
)


def _scalar_loss(layer, x, w):
    out, _ = layer.forward(x)
    return float((out * w).sum())


def _check_layer_grads(layer, x, rng):
    out, cache = layer.forward(x)
    w = rng.normal(size=out.shape)
    dx, grads = layer.backward(w, cache)
    f = lambda: _scalar_loss(layer, x, w)
    for name, arr in layer.params.items():
        assert relative_error(grads[name], numerical_grad(f, arr)) <= 1e-4, name
    assert relative_error(dx, numerical_grad(f, x)) <= 1e-4


# dense

def test_dense_zero_weights_sigmoid_is_half(rng):
    layer = Dense(3, 4, "sigmoid", rng)
    for arr in layer.params.values():
        arr[...] = 0.0
    out, _ = layer.forward(rng.normal(size=(5, 3)))
    npt.assert_array_equal(out, 0.5)


def test_dense_identity():
    layer = Dense(3, 3, "none", 0)
    layer.params["W"][...] = np.eye(3)
    x = np.arange(6.0).reshape(2, 3)
    out, _ = layer.forward(x)
    npt.assert_array_equal(out, x)


def test_dense_matches_loop_matmul(rng):
    layer = Dense(3, 4, "none", rng)
    layer.params["b"][...] = rng.normal(size=4)
    x = rng.normal(size=(2, 3))
    out, _ = layer.forward(x)
    ref = oracle_matmul(x.tolist(), layer.params["W"].tolist())
    ref = np.array(ref) + layer.params["b"]
    npt.assert_allclose(out, ref, atol=1e-12, rtol=0)


def test_dense_sigmoid_range(rng):
    layer = Dense(4, 3, "sigmoid", rng)
    out, _ = layer.forward(rng.normal(scale=10, size=(20, 4)))
    assert ((out > 0) & (out < 1)).all()


def test_dense_shape_mismatch(rng):
    with pytest.raises(ShapeError):
        Dense(3, 2, rng=rng).forward(np.zeros((2, 4)))


def test_dense_mse_closed_form_gradient(rng):
    layer = Dense(3, 1, "none", rng)
    x = rng.normal(size=(1, 3))
    y = rng.normal(size=(1, 1))
    yhat, cache = layer.forward(x)
    _, grads = layer.backward(mse_grad(y, yhat), cache)
    n = y.size
    npt.assert_allclose(grads["W"], 2.0 / n * x.T @ (yhat - y), atol=1e-14)


def test_backward_without_forward():
    with pytest.raises(StateError):
        Dense(2, 2, rng=0).backward(np.zeros((1, 2)), None)
    with pytest.raises(StateError):
        GRU(2, 2, rng=0).backward(np.zeros((1, 3, 2)), None)


# GRU

def test_gru_zero_weights_zero_output(rng):
    layer = GRU(3, 4, rng=rng)
    for arr in layer.params.values():
        arr[...] = 0.0
    out, _ = layer.forward(rng.normal(size=(7, 3)))
    npt.assert_array_equal(out, 0.0)


def test_gru_full_width_shape():
    layer = GRU(25, 256, rng=0)
    out, _ = layer.forward(np.zeros((5, 25)))
    assert out.shape == (5, 256)


def test_gru_last_mode_shape(rng):
    out, _ = GRU(3, 4, "last", rng).forward(rng.normal(size=(2, 6, 3)))
    assert out.shape == (2, 1, 4)


@pytest.mark.parametrize("jit", ["0", "2"])
def test_gru_matches_scalar_oracle(rng, monkeypatch, jit):
    monkeypatch.setenv("SURGE_EXTRAP_JIT", jit)
    layer = GRU(2, 3, rng=rng)
    for g in "zrh":
        layer.params["b" + g][...] = rng.normal(size=3)
    x = rng.normal(size=(4, 2))
    out, _ = layer.forward(x)
    ref = oracle_gru(x.tolist(), {k: v.tolist() for k, v in layer.params.items()})
    npt.assert_allclose(out, ref, atol=1e-12, rtol=0)


def test_gru_input_width_mismatch(rng):
    with pytest.raises(ShapeError):
        GRU(3, 2, rng=rng).forward(np.zeros((4, 2)))


def test_bigru_shapes(rng):
    x = rng.normal(size=(2, 5, 3))
    seq, _ = BiGRU(3, 4, "sequence", rng).forward(x)
    last, _ = BiGRU(3, 4, "last", rng).forward(x)
    assert seq.shape == (2, 5, 8)
    assert last.shape == (2, 1, 8)


def test_bigru_last_concatenates_direction_endpoints(rng):
    layer = BiGRU(3, 4, "last", rng)
    x = rng.normal(size=(5, 3))
    out, _ = layer.forward(x)
    fwd, _ = layer.fwd.forward(x)
    bwd, _ = layer.bwd.forward(x[::-1])
    npt.assert_array_equal(out[0, :4], fwd[-1])
    npt.assert_array_equal(out[0, 4:], bwd[-1])


@pytest.mark.parametrize("mode", ["sequence", "last"])
@pytest.mark.parametrize("jit", ["0", "2"])
def test_gru_gradients(rng, monkeypatch, mode, jit):
    monkeypatch.setenv("SURGE_EXTRAP_JIT", jit)
    layer = GRU(3, 5, mode, rng)
    for g in "zrh":
        layer.params["b" + g][...] = rng.normal(scale=0.5, size=5)
    _check_layer_grads(layer, rng.normal(size=(2, 4, 3)), rng)


@pytest.mark.parametrize("mode", ["sequence", "last"])
def test_bigru_gradients(rng, mode):
    _check_layer_grads(BiGRU(2, 3, mode, rng), rng.normal(size=(2, 5, 2)), rng)


@pytest.mark.parametrize("act", ["none", "sigmoid"])
def test_dense_gradients(rng, act):
    layer = Dense(4, 3, act, rng)
    layer.params["b"][...] = rng.normal(size=3)
    _check_layer_grads(layer, rng.normal(size=(2, 5, 4)), rng)


def test_parameter_without_influence_has_zero_grad(rng):
    # zero recurrent gates + single step: Uz/Ur/Uh act on h0 = 0 only
    layer = GRU(2, 3, rng=rng)
    out, cache = layer.forward(rng.normal(size=(1, 1, 2)))
    _, grads = layer.backward(np.ones_like(out), cache)
    for k in ("Uz", "Ur", "Uh"):
        npt.assert_array_equal(grads[k], 0.0)


def test_kernels_numba_matches_numpy(rng):
    if not _kernels.HAS_NUMBA:
        pytest.skip("numba not installed")
    T, B, H = 5, 3, 7
    xs = [rng.normal(size=(T, B, H)) for _ in range(3)]
    Us = [rng.normal(scale=0.4, size=(H, H)) for _ in range(3)]
    a = _kernels.gru_forward_numpy(*xs, *Us)
    b = _kernels.gru_forward_numba(*xs, *Us)
    for u, v in zip(a, b):
        npt.assert_allclose(u, v, atol=1e-12, rtol=0)
    d = rng.normal(size=(T, B, H))
    for u, v in zip(_kernels.gru_backward_numpy(d, *a, *Us), _kernels.gru_backward_numba(d, *a, *Us)):
        npt.assert_allclose(u, v, atol=1e-12, rtol=0)


def test_forward_deterministic(rng):
    layer = BiGRU(3, 4, "sequence", 7)
    x = rng.normal(size=(2, 5, 3))
    a, _ = layer.forward(x)
    b, _ = layer.forward(x)
    assert a.tobytes() == b.tobytes()
    c, _ = BiGRU(3, 4, "sequence", 7).forward(x)
    assert a.tobytes() == c.tobytes()


# losses

def test_mse_examples():
    assert mse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert mse([0.0, 0.0], [1.0, 3.0]) == 5.0


def test_rmse_mae_examples():
    assert rmse([0, 0], [1, 3]) == pytest.approx(math.sqrt(5), abs=1e-12)
    assert mae([0, 0], [1, 3]) == 2.0
    assert rmse([1, 2], [1, 2]) == 0.0 and mae([1, 2], [1, 2]) == 0.0


def test_bce_examples():
    assert bce([1.0], [1.0 - 1e-7]) == pytest.approx(0.0, abs=1e-6)
    assert bce([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-12)


def test_loss_errors():
    with pytest.raises(ShapeError):
        mse([1, 2], [1])
    with pytest.raises(ValueError):
        mse([], [])
    with pytest.raises(ShapeError):
        bce([1, 0], [0.5])


def test_losses_match_loop_oracles(rng):
    for _ in range(200):
        n = int(rng.integers(1, 30))
        y = rng.normal(size=n)
        yh = rng.normal(size=n)
        assert abs(mse(y, yh) - oracle_mse(y.tolist(), yh.tolist())) <= 1e-12
        assert abs(rmse(y, yh) - oracle_rmse(y.tolist(), yh.tolist())) <= 1e-12
        assert abs(mae(y, yh) - oracle_mae(y.tolist(), yh.tolist())) <= 1e-12
        lab = rng.integers(0, 2, n).astype(float)
        p = rng.uniform(0, 1, n)
        assert abs(bce(lab, p) - oracle_bce(lab.tolist(), p.tolist())) <= 1e-12


@pytest.mark.parametrize("fn,grad", [(mse, mse_grad), (bce, bce_grad)])
def test_loss_gradients(rng, fn, grad):
    y = rng.integers(0, 2, size=(3, 4)).astype(float)
    p = rng.uniform(0.05, 0.95, size=(3, 4))
    num = numerical_grad(lambda: fn(y, p), p)
    assert relative_error(grad(y, p), num) <= 1e-4


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20), st.data())
def test_losses_nonnegative_and_zero_iff_equal(y, data):
    yh = data.draw(st.lists(st.floats(-1e3, 1e3), min_size=len(y), max_size=len(y)))
    assert mse(y, yh) >= 0 and mae(y, yh) >= 0
    if y == yh:
        assert mse(y, yh) == 0 and mae(y, yh) == 0
    if mse(y, yh) == 0:
        # a zero mse only arises when every square underflows
        assert np.abs(np.subtract(y, yh)).max() < math.sqrt(np.finfo(float).tiny * len(y))


# Adam

def test_adam_zero_grad_no_change(rng):
    p = {"w": rng.normal(size=(3, 2))}
    before = p["w"].copy()
    opt = Adam(p, lr=0.1)
    for _ in range(3):
        opt.step({"w": np.zeros((3, 2))})
    npt.assert_array_equal(p["w"], before)
    assert opt.step_count == 3


def test_adam_first_step_is_lr_sign(rng):
    g = rng.normal(size=10)
    p = {"w": np.zeros(10)}
    Adam(p, lr=0.01).step({"w": g})
    npt.assert_allclose(p["w"], -0.01 * np.sign(g), rtol=1e-6)


def test_adam_quadratic_trace():
    p = {"w": np.array([1.0])}
    opt = Adam(p, lr=0.1)
    trace = []
    for _ in range(10):
        opt.step({"w": 2.0 * p["w"]})
        trace.append(float(p["w"][0]))
    ref = oracle_adam_trace(1.0, lambda w: 2.0 * w, 10, lr=0.1)
    npt.assert_allclose(trace, ref, atol=1e-14, rtol=0)
    mags = [1.0] + [abs(w) for w in trace]
    assert all(b < a for a, b in zip(mags, mags[1:]))


def test_adam_shape_mismatch():
    opt = Adam({"w": np.zeros(3)})
    with pytest.raises(ShapeError):
        opt.step({"w": np.zeros(4)})


def test_adam_rejects_bad_betas():
    with pytest.raises(ValueError):
        Adam({"w": np.zeros(1)}, beta1=1.0)
