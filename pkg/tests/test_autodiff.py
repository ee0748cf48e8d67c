import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsadv import autodiff as ad
from tsadv.errors import DimensionError, GraphError

from conftest import finite_diff, rel_error


class TestForwardExamples:
    def test_conv1d_identity_kernel(self):
        out = ad.conv1d(ad.constant([1.0, 2.0, 3.0]),
                        ad.constant([[[0.0, 1.0, 0.0]]]), ad.constant([0.0]))
        np.testing.assert_array_equal(out.values, [[1.0, 2.0, 3.0]])

    def test_conv1d_hand_convolution_zero_padding(self):
        out = ad.conv1d(ad.constant([1.0, 1.0, 1.0]),
                        ad.constant([[[1.0, 1.0, 1.0]]]), ad.constant([0.0]))
        np.testing.assert_array_equal(out.values, [[2.0, 3.0, 2.0]])

    def test_conv1d_zero_input_gives_bias(self):
        out = ad.conv1d(ad.constant(np.zeros(5)),
                        ad.constant([[[0.3, -1.0, 2.0]]]), ad.constant([0.7]))
        np.testing.assert_array_equal(out.values, np.full((1, 5), 0.7))

    def test_conv1d_shape_errors_name_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 1, 3\)"):
            ad.conv1d(ad.constant(np.zeros((3, 8))),
                      ad.constant(np.zeros((2, 1, 3))), ad.constant(np.zeros(2)))

    def test_conv1d_even_width_rejected(self):
        with pytest.raises(DimensionError, match="odd"):
            ad.conv1d(ad.constant(np.zeros(8)),
                      ad.constant(np.zeros((1, 1, 4))), ad.constant(np.zeros(1)))

    def test_relu(self):
        np.testing.assert_array_equal(ad.relu(ad.constant([-1.0, 2.0])).values, [0.0, 2.0])

    def test_log_softmax_symmetry(self):
        out = ad.log_softmax(ad.constant([0.0, 0.0]))
        np.testing.assert_allclose(out.values, [np.log(0.5)] * 2, rtol=0, atol=1e-15)

    def test_global_avg_pool(self):
        out = ad.global_avg_pool(ad.constant([[2.0, 4.0], [0.0, 0.0]]))
        np.testing.assert_array_equal(out.values, [3.0, 0.0])

    def test_empty_input_rejected(self):
        with pytest.raises(DimensionError):
            ad.log_softmax(ad.constant(np.array([])))
        with pytest.raises(DimensionError):
            ad.relu(ad.constant(np.array([])))


class TestBackward:
    def test_sum_gradient_is_ones(self):
        x = ad.Tensor([1.0, 2.0, 3.0], requires_grad=True)
        ad.backward(ad.tsum(x))
        np.testing.assert_array_equal(x.grad, [1.0, 1.0, 1.0])

    def test_square_gradient(self):
        x = ad.Tensor([3.0], requires_grad=True)
        ad.backward(ad.tsum(ad.mul(x, x)))
        np.testing.assert_array_equal(x.grad, [6.0])

    def test_non_scalar_root_rejected(self):
        x = ad.Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(GraphError):
            ad.backward(ad.square(x))

    def test_repeated_backward_accumulates(self):
        x = ad.Tensor([2.0], requires_grad=True)
        root = ad.tsum(ad.square(x))
        ad.backward(root)
        ad.backward(root)
        np.testing.assert_array_equal(x.grad, [8.0])
        x.zero_grad()
        ad.backward(root)
        np.testing.assert_array_equal(x.grad, [4.0])

    def test_no_influence_gives_zero_gradient(self):
        x = ad.Tensor([1.0, 2.0], requires_grad=True)
        root = ad.tsum(ad.mul(x, ad.constant([0.0, 0.0])))
        ad.backward(root)
        np.testing.assert_array_equal(x.grad, [0.0, 0.0])

    def test_diamond_graph_gradient(self):
        # y = sum(x*x + x*x): both paths must contribute
        x = ad.Tensor([1.5], requires_grad=True)
        sq = ad.square(x)
        ad.backward(ad.tsum(ad.add(sq, sq)))
        np.testing.assert_allclose(x.grad, [6.0])


def _op_cases(rng):
    """(name, scalar function of flat input, input) per op kind."""
    v5 = rng.normal(0.0, 1.0, 5)
    v25 = rng.normal(0.0, 1.0, 25)
    kern = rng.normal(0.0, 1.0, (2, 1, 3))
    bias = rng.normal(0.0, 1.0, 2)
    dw = rng.normal(0.0, 1.0, (3, 5))
    db = rng.normal(0.0, 1.0, 3)
    other = rng.normal(0.0, 1.0, 5)
    weights = rng.normal(0.0, 1.0, 5)

    proj = {shape: rng.normal(0.0, 1.0, shape)
            for shape in [(2, 5), (5,), (3,)]}

    def scalar(expr):
        return expr if expr.values.size == 1 else ad.tsum(ad.mul(
            expr, ad.constant(proj[expr.values.shape])))

    return [
        ("add", lambda t: ad.tsum(ad.add(t, ad.constant(other))), v5),
        ("sub", lambda t: ad.tsum(ad.sub(t, ad.constant(other))), v5),
        ("mul", lambda t: ad.tsum(ad.mul(t, ad.constant(other))), v5),
        ("scale", lambda t: ad.tsum(ad.scale(t, -2.5)), v5),
        ("sum", lambda t: ad.tsum(t), v5),
        ("abs", lambda t: ad.tsum(ad.tabs(t)), v5 + np.sign(v5) * 0.1),
        ("square", lambda t: ad.tsum(ad.square(t)), v5),
        ("sqrt", lambda t: ad.tsqrt(ad.tsum(ad.square(t))), v5 + np.sign(v5) * 0.1),
        ("relu", lambda t: ad.tsum(ad.mul(ad.relu(t), ad.constant(weights))),
         v5 + np.sign(v5) * 0.1),
        ("successive_diff",
         lambda t: ad.tsum(ad.tabs(ad.successive_diff(t))),
         np.cumsum(np.sign(rng.normal(size=5)) * (0.5 + rng.random(5)))),
        ("conv1d",
         lambda t: scalar(ad.conv1d(t, ad.constant(kern), ad.constant(bias))), v5),
        ("global_avg_pool",
         lambda t: scalar(ad.global_avg_pool(
             ad.Tensor(t.values.reshape(5, 5), requires_grad=t.requires_grad,
                       _parents=(t,), _backward=lambda g, push: push(t, g.ravel())))),
         v25),
        ("dense",
         lambda t: scalar(ad.dense(t, ad.constant(dw), ad.constant(db))), v5),
        ("log_softmax",
         lambda t: scalar(ad.log_softmax(t)), v5),
    ]


def test_gradcheck_every_op_kind():
    """Analytic vs central-difference gradients, 100 random tensors per op."""
    rng = np.random.default_rng(42)
    for trial in range(100):
        for name, build, x0 in _op_cases(rng):
            t = ad.Tensor(x0, requires_grad=True)
            root = build(t)
            ad.backward(root)

            def f(flat, build=build):
                return float(build(ad.constant(flat)).values)

            num = finite_diff(f, np.asarray(x0, dtype=np.float64))
            err = rel_error(t.grad, num)
            assert err < 1e-4, f"{name} (trial {trial}): rel err {err}"


@given(st.lists(st.floats(min_value=-1e3, max_value=1e3,
                          allow_nan=False, allow_infinity=False),
                min_size=2, max_size=8))
@settings(max_examples=200, deadline=None)
def test_log_softmax_normalizes(v):
    out = ad.log_softmax(ad.constant(v))
    assert abs(np.exp(out.values).sum() - 1.0) <= 1e-12


def test_forward_values_finite_on_finite_inputs():
    rng = np.random.default_rng(0)
    x = ad.constant(rng.normal(0.0, 100.0, 32))
    k = ad.constant(rng.normal(0.0, 10.0, (4, 1, 7)))
    b = ad.constant(rng.normal(size=4))
    h = ad.relu(ad.conv1d(x, k, b))
    out = ad.log_softmax(ad.global_avg_pool(h))
    assert np.all(np.isfinite(out.values))
