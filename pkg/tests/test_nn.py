import numpy as np
import pytest

from vcwe.errors import ShapeError
from vcwe.tensor.autograd import Tensor, backward, mul, tensor_sum
from vcwe.tensor.nn import (
    BatchNormState, LstmParams, batchnorm2d, conv2d, linear, lstm_cell, maxpool2d,
)

from fdcheck import assert_grads_close, numeric_grad


def leaf(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


# -- linear ---------------------------------------------------------------

def test_linear_identity():
    x = Tensor(np.array([[1.0, 0.0]]))
    w = Tensor(np.eye(2))
    b = Tensor(np.zeros(2))
    np.testing.assert_allclose(linear(x, w, b).data, [[1.0, 0.0]])


def test_linear_ones():
    x = Tensor(np.array([[1.0, 1.0]]))
    w = Tensor(np.array([[1.0], [1.0]]))
    b = Tensor(np.array([1.0]))
    np.testing.assert_allclose(linear(x, w, b).data, [[3.0]])


def test_linear_matches_triple_loop(rng):
    x, w, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2)), rng.standard_normal(2)
    expected = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                expected[i, j] += x[i, k] * w[k, j]
            expected[i, j] += b[j]
    got = linear(Tensor(x), Tensor(w), Tensor(b)).data
    np.testing.assert_allclose(got, expected, rtol=1e-12)


# -- conv2d ---------------------------------------------------------------

def conv_oracle(x, kernels, bias, stride=1, padding=0):
    """Direct 6-nested-loop cross-correlation."""
    c_in, h, w = x.shape
    c_out, _, kh, kw = kernels.shape
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((c_out, h_out, w_out))
    for o in range(c_out):
        for a in range(h_out):
            for b in range(w_out):
                acc = 0.0
                for c in range(c_in):
                    for i in range(kh):
                        for j in range(kw):
                            acc += xp[c, a * stride + i, b * stride + j] * kernels[o, c, i, j]
                out[o, a, b] = acc + bias[o]
    return out


def test_conv2d_identity_kernel(rng):
    x = rng.standard_normal((1, 5, 5))
    kernels = np.ones((1, 1, 1, 1))
    out = conv2d(Tensor(x), Tensor(kernels), Tensor(np.zeros(1))).data
    np.testing.assert_allclose(out, x)


def test_conv2d_allones_on_constant():
    x = np.full((1, 4, 4), 3.0)
    kernels = np.ones((1, 1, 2, 2))
    out = conv2d(Tensor(x), Tensor(kernels), Tensor(np.zeros(1))).data
    np.testing.assert_allclose(out, np.full((1, 3, 3), 12.0))


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1)])
def test_conv2d_matches_nested_loops(rng, stride, padding):
    size = 7 if stride == 2 else 8  # keep (H + 2p - kh) divisible by stride
    x = rng.standard_normal((1, size, size))
    kernels = rng.standard_normal((2, 1, 3, 3))
    bias = rng.standard_normal(2)
    got = conv2d(Tensor(x), Tensor(kernels), Tensor(bias), stride, padding).data
    np.testing.assert_allclose(got, conv_oracle(x, kernels, bias, stride, padding),
                               rtol=1e-12, atol=1e-12)


def test_conv2d_batched_consistent_with_single(rng):
    x = rng.standard_normal((3, 2, 6, 6))
    kernels = rng.standard_normal((4, 2, 3, 3))
    bias = rng.standard_normal(4)
    batched = conv2d(Tensor(x), Tensor(kernels), Tensor(bias)).data
    for n in range(3):
        single = conv2d(Tensor(x[n]), Tensor(kernels), Tensor(bias)).data
        np.testing.assert_allclose(batched[n], single, rtol=1e-12, atol=1e-12)


def test_conv2d_rejects_nonintegral_output(rng):
    x = Tensor(rng.standard_normal((1, 8, 8)))
    kernels = Tensor(rng.standard_normal((1, 1, 3, 3)))
    with pytest.raises(ShapeError):
        conv2d(x, kernels, Tensor(np.zeros(1)), stride=4)


def test_conv2d_gradients_pass_fd(rng):
    x = leaf(rng, 1, 6, 6)
    kernels = leaf(rng, 2, 1, 3, 3)
    bias = leaf(rng, 2)
    probe = Tensor(rng.standard_normal((2, 4, 4)))

    backward(tensor_sum(mul(conv2d(x, kernels, bias), probe)))

    def f():
        out = conv2d(Tensor(x.data), Tensor(kernels.data), Tensor(bias.data))
        return float(tensor_sum(mul(out, probe)).data)

    assert_grads_close([x.grad, kernels.grad, bias.grad],
                       numeric_grad(f, [x.data, kernels.data, bias.data]))


# -- maxpool2d --------------------------------------------------------------

def pool_oracle(x, k, stride):
    c, h, w = x.shape
    h_out = (h - k) // stride + 1
    w_out = (w - k) // stride + 1
    out = np.zeros((c, h_out, w_out))
    for ci in range(c):
        for a in range(h_out):
            for b in range(w_out):
                out[ci, a, b] = x[ci, a * stride:a * stride + k,
                                  b * stride:b * stride + k].max()
    return out


def test_maxpool_constant_image():
    x = np.full((2, 4, 4), 7.0)
    out, _ = maxpool2d(Tensor(x), 2)
    np.testing.assert_allclose(out.data, np.full((2, 2, 2), 7.0))


def test_maxpool_2x2_basic():
    x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    out, argmax = maxpool2d(Tensor(x), 2)
    np.testing.assert_allclose(out.data, [[[4.0]]])
    assert argmax[0, 0, 0] == 3  # flat index of (1,1) in a 2x2 image


@pytest.mark.parametrize("k,stride", [(2, 2), (3, 2), (2, 1)])
def test_maxpool_matches_bruteforce(rng, k, stride):
    x = rng.standard_normal((4, 6, 6))
    out, _ = maxpool2d(Tensor(x), k, stride)
    np.testing.assert_allclose(out.data, pool_oracle(x, k, stride))


def test_maxpool_window_too_large(rng):
    with pytest.raises(ShapeError):
        maxpool2d(Tensor(rng.standard_normal((1, 3, 3))), 4)


def test_maxpool_gradient_routes_to_argmax(rng):
    x = leaf(rng, 2, 4, 4)
    out, argmax = maxpool2d(x, 2, 2)
    backward(tensor_sum(out))
    # each window contributes exactly one gradient unit at its argmax
    assert x.grad.sum() == pytest.approx(out.data.size)
    flat = x.grad.reshape(2, -1)
    for c in range(2):
        marked = np.zeros(16)
        np.add.at(marked, argmax[c].ravel(), 1.0)
        np.testing.assert_allclose(flat[c], marked)


def test_maxpool_gradient_passes_fd(rng):
    # generic continuous input: argmax ties have probability zero
    x = leaf(rng, 1, 4, 4)
    probe = Tensor(rng.standard_normal((1, 2, 2)))
    out, _ = maxpool2d(x, 2, 2)
    backward(tensor_sum(mul(out, probe)))

    def f():
        o, _ = maxpool2d(Tensor(x.data), 2, 2)
        return float(tensor_sum(mul(o, probe)).data)

    assert_grads_close([x.grad], numeric_grad(f, [x.data]))


# -- batchnorm2d -------------------------------------------------------------

def test_batchnorm_train_normalizes(rng):
    x = rng.standard_normal((4, 3, 5, 5)) * 3.0 + 2.0
    state = BatchNormState.fresh(3)
    out = batchnorm2d(Tensor(x), Tensor(np.ones(3)), Tensor(np.zeros(3)), state).data
    np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=(0, 2, 3)), 1.0, atol=1e-4)  # eps effect
    # direct statistics oracle
    mu = x.mean(axis=(0, 2, 3), keepdims=True)
    var = x.var(axis=(0, 2, 3), keepdims=True)
    np.testing.assert_allclose(out, (x - mu) / np.sqrt(var + 1e-5), atol=1e-6)


def test_batchnorm_gamma_zero_gives_beta():
    x = np.random.default_rng(0).standard_normal((2, 2, 3, 3))
    state = BatchNormState.fresh(2)
    beta = np.array([1.5, -2.0])
    out = batchnorm2d(Tensor(x), Tensor(np.zeros(2)), Tensor(beta), state).data
    np.testing.assert_allclose(out, np.broadcast_to(beta[None, :, None, None], out.shape))


def test_batchnorm_eval_is_affine_and_batch_independent(rng):
    state = BatchNormState(mean=np.array([0.5]), var=np.array([2.0]))
    gamma, beta = Tensor(np.array([1.3])), Tensor(np.array([0.2]))
    x1 = rng.standard_normal((2, 1, 3, 3))
    x2 = np.concatenate([x1, rng.standard_normal((2, 1, 3, 3))])
    out1 = batchnorm2d(Tensor(x1), gamma, beta, state, mode="eval").data
    out2 = batchnorm2d(Tensor(x2), gamma, beta, state, mode="eval").data
    np.testing.assert_array_equal(out1, out2[:2])  # same input rows -> same output
    expected = 1.3 * (x1 - 0.5) / np.sqrt(2.0 + 1e-5) + 0.2
    np.testing.assert_allclose(out1, expected, rtol=1e-12)


def test_batchnorm_rejects_single_element_train():
    state = BatchNormState.fresh(1)
    with pytest.raises(ShapeError):
        batchnorm2d(Tensor(np.ones((1, 1, 1, 1))), Tensor(np.ones(1)),
                    Tensor(np.zeros(1)), state)


def test_batchnorm_updates_running_stats(rng):
    x = rng.standard_normal((4, 2, 3, 3)) + 5.0
    state = BatchNormState.fresh(2)
    batchnorm2d(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), state,
                momentum=0.1)
    m = 4 * 3 * 3
    np.testing.assert_allclose(state.mean, 0.1 * x.mean(axis=(0, 2, 3)))
    np.testing.assert_allclose(
        state.var, 0.9 * 1.0 + 0.1 * x.var(axis=(0, 2, 3)) * m / (m - 1))


@pytest.mark.parametrize("mode", ["train", "eval"])
def test_batchnorm_gradients_pass_fd(rng, mode):
    x = leaf(rng, 2, 2, 3, 3)
    gamma = Tensor(rng.standard_normal(2) + 1.0, requires_grad=True)
    beta = Tensor(rng.standard_normal(2), requires_grad=True)
    probe = Tensor(rng.standard_normal((2, 2, 3, 3)))
    state = BatchNormState(mean=rng.standard_normal(2),
                           var=rng.uniform(0.5, 2.0, 2))

    out = batchnorm2d(x, gamma, beta, state, mode=mode)
    backward(tensor_sum(mul(out, probe)))

    def f():
        o = batchnorm2d(Tensor(x.data), Tensor(gamma.data), Tensor(beta.data),
                        BatchNormState(state.mean.copy(), state.var.copy()), mode=mode)
        return float(tensor_sum(mul(o, probe)).data)

    assert_grads_close([x.grad, gamma.grad, beta.grad],
                       numeric_grad(f, [x.data, gamma.data, beta.data]))


# -- lstm_cell ----------------------------------------------------------------

def lstm_oracle(x, h_prev, c_prev, w_x, w_h, b):
    """Step-by-step formula evaluation with plain numpy."""
    hidden = h_prev.shape[0]
    z = w_x @ x + w_h @ h_prev + b
    sig = lambda t: 1.0 / (1.0 + np.exp(-t))
    i = sig(z[:hidden])
    f = sig(z[hidden:2 * hidden])
    g = np.tanh(z[2 * hidden:3 * hidden])
    o = sig(z[3 * hidden:])
    c = f * c_prev + i * g
    return o * np.tanh(c), c


def zero_params(d_in, hidden):
    return LstmParams(Tensor(np.zeros((4 * hidden, d_in)), requires_grad=True),
                      Tensor(np.zeros((4 * hidden, hidden)), requires_grad=True),
                      Tensor(np.zeros(4 * hidden), requires_grad=True))


def test_lstm_all_zero_gives_zero_state():
    params = zero_params(3, 4)
    h, c = lstm_cell(Tensor(np.zeros(3)), Tensor(np.zeros(4)), Tensor(np.zeros(4)), params)
    np.testing.assert_allclose(h.data, 0.0)
    np.testing.assert_allclose(c.data, 0.0)


def test_lstm_forget_saturation_preserves_cell():
    params = zero_params(3, 4)
    params.b.data[4:8] = 60.0    # forget gate saturated open
    params.b.data[0:4] = -60.0   # input gate saturated closed
    c_prev = np.array([1.0, -2.0, 0.5, 3.0])
    _, c = lstm_cell(Tensor(np.zeros(3)), Tensor(np.zeros(4)), Tensor(c_prev), params)
    np.testing.assert_allclose(c.data, c_prev, rtol=1e-12)


def test_lstm_matches_formula_oracle(rng):
    d_in, hidden = 3, 4
    params = LstmParams.init(rng, d_in, hidden)
    x = rng.standard_normal(d_in)
    h_prev = rng.standard_normal(hidden)
    c_prev = rng.standard_normal(hidden)
    h, c = lstm_cell(Tensor(x), Tensor(h_prev), Tensor(c_prev), params)
    eh, ec = lstm_oracle(x, h_prev, c_prev, params.w_x.data, params.w_h.data, params.b.data)
    np.testing.assert_allclose(h.data, eh, atol=1e-10)
    np.testing.assert_allclose(c.data, ec, atol=1e-10)


def test_lstm_gradients_pass_fd(rng):
    d_in, hidden = 3, 4
    params = LstmParams.init(rng, d_in, hidden)
    x = leaf(rng, d_in)
    h_prev = leaf(rng, hidden)
    c_prev = leaf(rng, hidden)
    probe_h = Tensor(rng.standard_normal(hidden))
    probe_c = Tensor(rng.standard_normal(hidden))

    h, c = lstm_cell(x, h_prev, c_prev, params)
    backward(tensor_sum(mul(h, probe_h)) + tensor_sum(mul(c, probe_c)))

    arrays = [x.data, h_prev.data, c_prev.data,
              params.w_x.data, params.w_h.data, params.b.data]
    analytic = [x.grad, h_prev.grad, c_prev.grad,
                params.w_x.grad, params.w_h.grad, params.b.grad]

    def f():
        p = LstmParams(Tensor(params.w_x.data), Tensor(params.w_h.data), Tensor(params.b.data))
        hh, cc = lstm_cell(Tensor(x.data), Tensor(h_prev.data), Tensor(c_prev.data), p)
        return float((tensor_sum(mul(hh, probe_h)) + tensor_sum(mul(cc, probe_c))).data)

    assert_grads_close(analytic, numeric_grad(f, arrays))


def test_lstm_shape_errors(rng):
    params = LstmParams.init(rng, 3, 4)
    with pytest.raises(ShapeError):
        lstm_cell(Tensor(np.zeros(5)), Tensor(np.zeros(4)), Tensor(np.zeros(4)), params)
    with pytest.raises(ShapeError):
        lstm_cell(Tensor(np.zeros(3)), Tensor(np.zeros(2)), Tensor(np.zeros(4)), params)
