import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leadsheet.tensor import (
    RNN,
    Adam,
    BatchNorm,
    GraphError,
    ShapeError,
    Tensor,
    concat,
    conv2d,
    conv_transpose2d,
    fold,
    grad,
    gradient_check,
    leaky_relu,
    load_checkpoint,
    matmul,
    no_grad,
    reduce_sum,
    relative_error,
    relu,
    reshape,
    save_checkpoint,
    tanh,
    unfold,
)
from leadsheet.tensor.checkpoint import CheckpointError, dump_checkpoint, parse_checkpoint
from leadsheet.tensor.optim import OptimizerState, adam_step


def naive_conv2d(x, w, b, stride):
    n, h, wd, cin = x.shape
    kh, kw, _, cout = w.shape
    sh, sw = stride
    ho, wo = (h - kh) // sh + 1, (wd - kw) // sw + 1
    out = np.zeros((n, ho, wo, cout))
    for i in range(ho):
        for j in range(wo):
            patch = x[:, i * sh : i * sh + kh, j * sw : j * sw + kw, :]
            out[:, i, j, :] = np.einsum("nhwc,hwco->no", patch, w)
    return out + b


def naive_conv_transpose2d(x, w, b, stride):
    n, h, wd, cin = x.shape
    _, kh, kw, cout = w.shape
    sh, sw = stride
    out = np.zeros((n, (h - 1) * sh + kh, (wd - 1) * sw + kw, cout))
    for i in range(h):
        for j in range(wd):
            out[:, i * sh : i * sh + kh, j * sw : j * sw + kw, :] += np.einsum("nc,chwo->nhwo", x[:, i, j, :], w)
    return out + b


def t64(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


class TestForward:
    @pytest.mark.parametrize("kernel,stride", [((1, 12), (1, 12)), ((4, 1), (2, 1)), ((3, 2), (1, 1)), ((2, 3), (2, 2))])
    def test_conv_matches_loops(self, rng, kernel, stride):
        x = rng.standard_normal((2, 9, 24, 3))
        w = rng.standard_normal(kernel + (3, 4))
        b = rng.standard_normal(4)
        y = conv2d(Tensor(x), Tensor(w), Tensor(b), stride)
        np.testing.assert_allclose(y.data, naive_conv2d(x, w, b, stride), atol=1e-10)

    @pytest.mark.parametrize("kernel,stride", [((1, 12), (1, 12)), ((2, 1), (2, 1)), ((1, 7), (1, 1)), ((3, 2), (2, 1))])
    def test_transposed_conv_matches_loops(self, rng, kernel, stride):
        x = rng.standard_normal((2, 4, 3, 5))
        w = rng.standard_normal((5,) + kernel + (2,))
        b = rng.standard_normal(2)
        y = conv_transpose2d(Tensor(x), Tensor(w), Tensor(b), stride)
        np.testing.assert_allclose(y.data, naive_conv_transpose2d(x, w, b, stride), atol=1e-10)

    def test_fold_is_adjoint_of_unfold(self, rng):
        x = rng.standard_normal((2, 7, 6, 3))
        p = unfold(Tensor(x), (3, 2), (2, 1))
        q = rng.standard_normal(p.shape)
        lhs = np.sum(p.data * q)
        rhs = np.sum(x * fold(Tensor(q), (2, 1), (7, 6)).data)
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_leaky_relu_slope_validated(self):
        with pytest.raises(ValueError):
            leaky_relu(Tensor(np.ones(2)), 1.5)

    def test_batchnorm_eval_uses_running_stats(self, rng):
        bn = BatchNorm(3, dtype=np.float64)
        x = rng.standard_normal((8, 3)) * 2 + 5
        z = rng.standard_normal((8, 3)) - 1
        bn(Tensor(x))
        np.testing.assert_allclose(bn.running_mean, x.mean(axis=0))
        bn(Tensor(z))
        expected_mean = (0.9 * 0.1 * x.mean(axis=0) + 0.1 * z.mean(axis=0)) / (1 - 0.9**2)
        np.testing.assert_allclose(bn.running_mean, expected_mean)
        bn.eval()
        y = bn(Tensor(x)).data
        expected = (x - bn.running_mean) / np.sqrt(bn.running_var + bn.eps)
        np.testing.assert_allclose(y, expected)

    def test_batchnorm_untrained_eval_uses_batch_stats(self, rng):
        bn = BatchNorm(3, dtype=np.float64).eval()
        x = rng.standard_normal((8, 3)) * 2 + 5
        y = bn(Tensor(x)).data
        np.testing.assert_allclose(y, (x - x.mean(axis=0)) / np.sqrt(x.var(axis=0) + bn.eps))
        assert bn.updates[0] == 0


class TestGraph:
    def test_non_scalar_output_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(GraphError):
            grad(x * 2.0, [x])

    def test_untracked_output_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            y = reduce_sum(x * 2.0)
        with pytest.raises(GraphError):
            grad(y, [x])

    def test_unused_input_gets_zero(self):
        x = Tensor(np.ones(3), requires_grad=True)
        z = Tensor(np.ones(2), requires_grad=True)
        gx, gz = grad(reduce_sum(x * x), [x, z])
        np.testing.assert_array_equal(gx.data, 2 * np.ones(3))
        np.testing.assert_array_equal(gz.data, np.zeros(2))

    def test_backward_accumulates_on_leaves(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        reduce_sum(x * x).backward()
        reduce_sum(x * 3.0).backward()
        np.testing.assert_allclose(x.grad, [5.0, 7.0])

    def test_second_derivative(self):
        x = Tensor(np.array([0.3, -1.2]), requires_grad=True)
        (g,) = grad(reduce_sum(tanh(x)), [x], create_graph=True)
        (h,) = grad(reduce_sum(g), [x])
        t = np.tanh(x.data)
        np.testing.assert_allclose(h.data, -2 * t * (1 - t**2))

    def test_matmul_shape_error_names_node(self):
        with pytest.raises(ShapeError) as info:
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))
        assert "matmul" in str(info.value)

    def test_concat_shape_mismatch(self):
        with pytest.raises(ShapeError):
            concat([Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3)))], axis=-1)


class TestGradients:
    """Smaller companions of the acceptance gradient sweep."""

    def test_conv(self, rng):
        x, w, b = t64(rng, 2, 4, 6, 2), t64(rng, 2, 3, 2, 3), t64(rng, 3)
        errs = gradient_check(lambda: reduce_sum(tanh(conv2d(x, w, b, (2, 3)))), {"x": x, "w": w, "b": b})
        assert max(errs.values()) < 1e-6

    def test_transposed_conv(self, rng):
        x, w, b = t64(rng, 2, 2, 3, 2), t64(rng, 2, 2, 3, 3), t64(rng, 3)
        errs = gradient_check(lambda: reduce_sum(tanh(conv_transpose2d(x, w, b, (2, 1)))), {"x": x, "w": w, "b": b})
        assert max(errs.values()) < 1e-6

    def test_rnn(self, rng):
        net = RNN(3, 4, 2, 2, rng, dtype=np.float64)
        x = t64(rng, 2, 3)
        params = {"x": x, **net.named_parameters()}
        errs = gradient_check(lambda: reduce_sum(net(x, 3) ** 2), params)
        assert max(errs.values()) < 1e-5

    def test_relu_away_from_kink(self, rng):
        x = Tensor(rng.choice([-1, 1], size=6) * rng.uniform(0.1, 1, size=6), requires_grad=True)
        assert gradient_check(lambda: reduce_sum(relu(x) * x), {"x": x})["x"] < 1e-8


def test_relative_error_definition():
    assert relative_error(np.array([1.0, 2.0]), np.array([1.0, 2.2])) == pytest.approx(0.2 / 2.2)
    assert relative_error(np.zeros(3), np.full(3, 1e-12)) == 0.0


class TestAdam:
    def test_first_step_moves_by_lr(self):
        p = Tensor(np.array([1.0, -1.0]), requires_grad=True)
        state = OptimizerState(lr=0.1)
        adam_step({"p": p}, {"p": np.array([3.0, -0.5])}, state)
        # bias-corrected first step is lr * sign(g) up to eps
        np.testing.assert_allclose(p.data, [0.9, -0.9], atol=1e-7)

    def test_against_reference_recursion(self, rng):
        p = Tensor(rng.standard_normal(4), requires_grad=True)
        ref = p.data.copy()
        m = v = np.zeros(4)
        opt = Adam({"p": p}, lr=1e-2, beta1=0.5, beta2=0.9)
        for t in range(1, 6):
            g = rng.standard_normal(4)
            opt.step({"p": g})
            m = 0.5 * m + 0.5 * g
            v = 0.9 * v + 0.1 * g * g
            ref = ref - 1e-2 * (m / (1 - 0.5**t)) / (np.sqrt(v / (1 - 0.9**t)) + 1e-8)
        np.testing.assert_allclose(p.data, ref, rtol=1e-12)

    def test_shape_mismatch(self):
        p = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ShapeError):
            adam_step({"p": p}, {"p": np.ones(2)}, OptimizerState())


class TestCheckpoint:
    def test_round_trip(self, tmp_path, rng):
        arrays = {"a/w": rng.standard_normal((3, 4)).astype(np.float32), "b": np.float32([1.5]), "s": np.zeros((0, 2), np.float32)}
        save_checkpoint(tmp_path / "m.ckpt", "demo", arrays, {"iteration": 7})
        model_id, loaded, meta = load_checkpoint(tmp_path / "m.ckpt")
        assert model_id == "demo" and meta == {"iteration": 7}
        for k in arrays:
            np.testing.assert_array_equal(loaded[k], arrays[k])
            assert loaded[k].shape == arrays[k].shape

    def test_bad_magic_and_truncation(self):
        blob = dump_checkpoint("m", {"x": np.ones(3, np.float32)})
        with pytest.raises(CheckpointError):
            parse_checkpoint(b"garbage" + blob)
        with pytest.raises(CheckpointError):
            parse_checkpoint(blob[:-2])


@settings(max_examples=30, deadline=None)
@given(
    h=st.integers(1, 6),
    w=st.integers(1, 6),
    kh=st.integers(1, 3),
    kw=st.integers(1, 3),
    sh=st.integers(1, 3),
    sw=st.integers(1, 3),
)
def test_transposed_conv_output_size(h, w, kh, kw, sh, sw):
    x = Tensor(np.ones((1, h, w, 2)))
    y = conv_transpose2d(x, Tensor(np.ones((2, kh, kw, 1))), None, (sh, sw))
    assert y.shape == (1, (h - 1) * sh + kh, (w - 1) * sw + kw, 1)


@settings(max_examples=30, deadline=None)
@given(shape=st.lists(st.integers(1, 4), min_size=1, max_size=4), seed=st.integers(0, 2**16))
def test_reshape_gradient_is_identity(shape, seed):
    data = np.random.default_rng(seed).standard_normal(shape)
    x = Tensor(data, requires_grad=True)
    (g,) = grad(reduce_sum(reshape(x, (-1,)) * 2.0), [x])
    np.testing.assert_array_equal(g.data, np.full(shape, 2.0))
