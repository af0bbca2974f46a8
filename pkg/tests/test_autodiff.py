import numpy as np
import pytest

import graph_jepa.autodiff as ad
from graph_jepa.autodiff import AdamState, Tensor, adam_step, smooth_l1, stop_gradient

from conftest import assert_grads_close, finite_difference_grad


def check_op_gradient(make_scalar, shape, seed, low=-1.0, high=1.0):
    """Compare reverse-mode grads against central differences elementwise."""
    rng = np.random.default_rng(seed)
    x0 = rng.uniform(low, high, size=shape)

    def f(x):
        return float(make_scalar(Tensor(x)).data)

    t = Tensor(x0.copy(), requires_grad=True)
    out = make_scalar(t)
    out.backward()
    assert_grads_close(t.grad, finite_difference_grad(f, x0.copy()))


# weight the output so the gradient isn't a trivial constant
def _weighted_sum(t, seed=0):
    rng = np.random.default_rng(seed + 1234)
    w = Tensor(rng.uniform(-1, 1, size=t.shape))
    return ad.tsum(t * w)


UNARY_OPS = {
    "relu": lambda t: _weighted_sum(ad.relu(t)),
    "gelu": lambda t: _weighted_sum(ad.gelu(t)),
    "exp": lambda t: _weighted_sum(ad.exp(t)),
    "cosh": lambda t: _weighted_sum(ad.cosh(t)),
    "sinh": lambda t: _weighted_sum(ad.sinh(t)),
    "softmax": lambda t: _weighted_sum(ad.softmax(t, axis=-1)),
    "layer_norm": lambda t: _weighted_sum(ad.layer_norm(t)),
    "mean": lambda t: ad.tmean(t) * 3.0,
    "sum_axis": lambda t: _weighted_sum(ad.tsum(t, axis=0)),
    "mean_axis": lambda t: _weighted_sum(ad.tmean(t, axis=1)),
    "max_axis": lambda t: _weighted_sum(ad.tmax(t, axis=1)),
    "clamp_max": lambda t: _weighted_sum(ad.clamp_max(t, 0.3)),
}


@pytest.mark.parametrize("name", sorted(UNARY_OPS))
def test_unary_gradients(name):
    for seed in range(5):
        check_op_gradient(UNARY_OPS[name], (3, 4), seed)


def test_log_sqrt_acosh_gradients():
    check_op_gradient(lambda t: _weighted_sum(ad.log(t)), (3, 4), 0, low=0.2, high=2.0)
    check_op_gradient(lambda t: _weighted_sum(ad.sqrt(t)), (3, 4), 1, low=0.2, high=2.0)
    check_op_gradient(lambda t: _weighted_sum(ad.acosh(t)), (3, 4), 2, low=1.5, high=3.0)


def test_binary_gradients():
    rng = np.random.default_rng(0)
    other = Tensor(rng.uniform(0.5, 1.5, size=(3, 4)))
    check_op_gradient(lambda t: _weighted_sum(t + other), (3, 4), 3)
    check_op_gradient(lambda t: _weighted_sum(t - other), (3, 4), 4)
    check_op_gradient(lambda t: _weighted_sum(t * other), (3, 4), 5)
    check_op_gradient(lambda t: _weighted_sum(t / other), (3, 4), 6)
    # broadcasting over the leading axis
    row = Tensor(rng.uniform(-1, 1, size=(1, 4)))
    check_op_gradient(lambda t: _weighted_sum(t + row), (3, 4), 7)


def test_matmul_gradient():
    rng = np.random.default_rng(1)
    b = Tensor(rng.uniform(-1, 1, size=(4, 2)))
    check_op_gradient(lambda t: _weighted_sum(t @ b), (3, 4), 8)


def test_concat_index_scatter_gradients():
    rng = np.random.default_rng(2)
    other = Tensor(rng.uniform(-1, 1, size=(2, 4)))
    check_op_gradient(lambda t: _weighted_sum(ad.concat([t, other], axis=0)), (3, 4), 9)
    idx = np.array([2, 0, 0, 1])
    check_op_gradient(lambda t: _weighted_sum(ad.index_select(t, idx)), (3, 4), 10)
    seg = np.array([1, 0, 1])
    check_op_gradient(lambda t: _weighted_sum(ad.scatter_add(t, seg, 2)), (3, 4), 11)


class TestForwardValues:
    def test_cosh_zero(self):
        assert ad.cosh(Tensor(0.0)).item() == 1.0

    def test_layer_norm_constant_vector(self):
        out = ad.layer_norm(Tensor(np.full((1, 8), 3.7)))
        np.testing.assert_allclose(out.data, 0.0, atol=1e-12)

    def test_scatter_add_accumulates(self):
        src = Tensor(np.array([[1.0, 2.0], [10.0, 20.0]]))
        out = ad.scatter_add(src, np.array([0, 0]), 1)
        np.testing.assert_allclose(out.data, [[11.0, 22.0]])

    def test_shape_mismatch_raises(self):
        with pytest.raises(ad.DimensionError) as exc:
            Tensor(np.zeros((2, 3))) @ Tensor(np.zeros((2, 3)))
        assert "2, 3" in str(exc.value)


class TestSmoothL1:
    def test_zero_at_equality(self):
        x = Tensor(np.array([1.0, -2.0]))
        assert smooth_l1(x, x).item() == 0.0

    def test_linear_tail(self):
        out = smooth_l1(Tensor(np.array([2.0])), Tensor(np.array([0.0])), beta=1.0)
        assert out.item() == pytest.approx(1.5)

    def test_quadratic_region(self):
        out = smooth_l1(Tensor(np.array([0.5])), Tensor(np.array([0.0])), beta=1.0)
        assert out.item() == pytest.approx(0.125)

    def test_rejects_nonpositive_beta(self):
        with pytest.raises(ValueError):
            smooth_l1(Tensor(np.zeros(2)), Tensor(np.zeros(2)), beta=0.0)

    def test_gradient(self):
        rng = np.random.default_rng(3)
        target = Tensor(rng.uniform(-2, 2, size=(3, 4)))
        check_op_gradient(lambda t: smooth_l1(t, target, beta=0.7), (3, 4), 12)


class TestBackward:
    def test_sum_of_squares(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        loss = ad.tsum(x * x)
        loss.backward()
        np.testing.assert_allclose(x.grad, [2.0, 4.0])

    def test_cosh_at_zero(self):
        x = Tensor(np.array(0.0), requires_grad=True)
        ad.cosh(x).backward()
        np.testing.assert_allclose(x.grad, 0.0)

    def test_fanin_accumulates(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        loss = ad.tsum(x + x)
        loss.backward()
        np.testing.assert_allclose(x.grad, [2.0, 2.0])

    def test_non_scalar_loss_rejected(self):
        x = Tensor(np.zeros((2, 2)), requires_grad=True)
        with pytest.raises(ad.DimensionError):
            (x * 2.0).backward()

    def test_three_layer_mlp_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        sizes = [(5, 8), (8, 8), (8, 1)]
        weights = [rng.uniform(-1, 1, size=s) for s in sizes]
        x0 = rng.uniform(-1, 1, size=(3, 5))

        def forward(ws, x):
            h = Tensor(x)
            for i, w in enumerate(ws[:-1]):
                h = ad.relu(h @ w if isinstance(w, Tensor) else h @ Tensor(w))
            last = ws[-1]
            h = h @ (last if isinstance(last, Tensor) else Tensor(last))
            return ad.tmean(h * h)

        for wi in range(3):
            ws = [Tensor(w.copy(), requires_grad=(i == wi)) for i, w in enumerate(weights)]
            loss = forward(ws, x0)
            loss.backward()

            def f(w):
                ws2 = [Tensor(weights[i].copy()) for i in range(3)]
                ws2[wi] = Tensor(w)
                return float(forward(ws2, x0).data)

            assert_grads_close(ws[wi].grad, finite_difference_grad(f, weights[wi].copy()))


class TestStopGradient:
    def test_blocks_gradient(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        ad.tsum(stop_gradient(x)).backward()
        assert x.grad is None

    def test_partial_block(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        ad.tsum(x + stop_gradient(x)).backward()
        np.testing.assert_allclose(x.grad, [1.0, 1.0])

    def test_detached_duplicate_leaves_context_grads_unchanged(self):
        rng = np.random.default_rng(5)
        w = rng.uniform(-1, 1, size=(4, 4))

        def run(with_detached_branch):
            wt = Tensor(w.copy(), requires_grad=True)
            x = Tensor(rng.standard_normal((2, 4)))
            out = ad.tsum(ad.relu(Tensor(x.data) @ wt))
            if with_detached_branch:
                out = out + ad.tsum(stop_gradient(ad.relu(Tensor(x.data) @ wt)))
            out.backward()
            return wt.grad

        rng = np.random.default_rng(5)
        g1 = run(False)
        rng = np.random.default_rng(5)
        g2 = run(True)
        np.testing.assert_allclose(g1, g2)


class TestAdam:
    def test_no_grad_no_change(self):
        params = {"w": Tensor(np.ones(3), requires_grad=True)}
        state = AdamState(params, lr=0.1)
        for _ in range(5):
            adam_step(params, state)
        np.testing.assert_allclose(params["w"].data, 1.0)

    def test_first_step_magnitude(self):
        params = {"w": Tensor(np.zeros(4), requires_grad=True)}
        state = AdamState(params, lr=0.05)
        params["w"].grad = np.full(4, 0.3)
        adam_step(params, state)
        np.testing.assert_allclose(np.abs(params["w"].data), 0.05, rtol=1e-6)

    def test_equal_grads_equal_updates(self):
        params = {
            "a": Tensor(np.array([1.0]), requires_grad=True),
            "b": Tensor(np.array([1.0]), requires_grad=True),
        }
        state = AdamState(params, lr=0.01)
        for _ in range(3):
            params["a"].grad = np.array([0.5])
            params["b"].grad = np.array([0.5])
            adam_step(params, state)
        np.testing.assert_allclose(params["a"].data, params["b"].data)


class TestDebugNan:
    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_rejects_nan_when_enabled(self):
        ad.set_debug_nan(True)
        try:
            with pytest.raises(FloatingPointError):
                ad.log(Tensor(np.array([-1.0])))
        finally:
            ad.set_debug_nan(False)


def test_determinism():
    def run():
        rng = np.random.default_rng(42)
        x = Tensor(rng.uniform(-1, 1, size=(4, 4)), requires_grad=True)
        w = Tensor(rng.uniform(-1, 1, size=(4, 4)), requires_grad=True)
        loss = ad.tmean(ad.gelu(x @ w) * ad.softmax(x, axis=-1))
        loss.backward()
        return loss.data.copy(), x.grad.copy(), w.grad.copy()

    a = run()
    b = run()
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
