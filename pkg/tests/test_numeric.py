import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from doclayout_gnn.numeric import AdamState, NumericFailure, ParamStore, Rng, Tensor, adam_step, backward, finite_diff_check, no_grad
from doclayout_gnn.numeric import tensor as T

OP_TOL = 1e-6


def _check(store, f, h=1e-5):
    return finite_diff_check(f, store, h)


def _rand_store(seed, **shapes):
    rng = Rng(seed)
    store = ParamStore()
    for name, shape in shapes.items():
        store.add(name, rng.normal(int(np.prod(shape))).reshape(shape))
    return store


class TestRng:
    def test_splitmix_reference_stream(self):
        # published SplitMix64 outputs for seed 0
        r = Rng(0)
        assert [r.next_u64() for _ in range(3)] == [
            0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]

    def test_seed_42_first_five_uniforms_pinned(self):
        expected = [0.7415648787718233, 0.1599103928769201, 0.27860113025513866,
                    0.34419071652363753, 0.03803016854024621]
        assert Rng(42).uniform(5).tolist() == expected

    def test_scalar_and_vector_streams_agree(self):
        a, b = Rng(9), Rng(9)
        vec = a.u64_array(17)
        assert [int(v) for v in vec] == [b.next_u64() for _ in range(17)]
        assert a.state == b.state

    def test_normal_is_box_muller_on_uniform_pairs(self):
        u = Rng(5).uniform(2)
        z = Rng(5).normal(2)
        r = math.sqrt(-2.0 * math.log(1.0 - u[0]))
        assert z[0] == pytest.approx(r * math.cos(2 * math.pi * u[1]), abs=1e-15)
        assert z[1] == pytest.approx(r * math.sin(2 * math.pi * u[1]), abs=1e-15)

    def test_normal_moments(self):
        z = Rng(3).normal(20000)
        assert abs(z.mean()) < 0.03
        assert abs(z.std() - 1.0) < 0.03

    def test_permutation_is_a_permutation(self):
        assert sorted(Rng(1).permutation(50)) == list(range(50))
        assert Rng(1).permutation(50) == Rng(1).permutation(50)


class TestElementwise:
    def test_affine_examples(self):
        x = np.array([[1.0, 2.0]])
        assert T.affine(x, np.array([[1.0], [1.0]]), np.array([0.0])).data.tolist() == [[3.0]]
        xs = Rng(0).normal(6).reshape(3, 2)
        assert np.array_equal(T.affine(xs, np.eye(2), np.zeros(2)).data, xs)

    def test_affine_shape_error_names_both_shapes(self):
        with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 2\)"):
            T.affine(np.zeros((2, 3)), np.zeros((2, 2)), np.zeros(2))

    def test_relu_and_sigmoid_values(self):
        assert T.relu(np.array([0.0, -3.0, 2.0])).data.tolist() == [0.0, 0.0, 2.0]
        assert T.sigmoid(np.array(0.0)).item() == 0.5
        big = T.sigmoid(np.array([-800.0, 800.0])).data
        assert np.all(np.isfinite(big))

    def test_nan_propagates(self):
        nan = np.array([np.nan])
        for out in (T.relu(nan), T.minimum(nan, 1.0), T.maximum(nan, 0.0),
                    T.minimum(1.0, nan), T.sigmoid(nan)):
            assert np.isnan(out.data).all()

    def test_relu_subgradient_at_zero_is_zero(self):
        store = ParamStore()
        x = store.add("x", [0.0, 1.0, -1.0])
        backward(T.sum(T.relu(x)))
        assert x.grad.tolist() == [0.0, 1.0, 0.0]

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_affine_gradient(self, seed):
        s = _rand_store(seed, x=(4, 3), W=(3, 5), b=(5,))
        assert _check(s, lambda: T.sum(T.affine(s["x"], s["W"], s["b"]))) < OP_TOL

    def test_sigmoid_gradient(self):
        s = _rand_store(4, x=(3, 4))
        assert _check(s, lambda: T.sum(T.mul(T.sigmoid(s["x"]), s["x"]))) < OP_TOL

    def test_relu_gradient_away_from_kink(self):
        s = _rand_store(5, x=(20,))
        s["x"].data[np.abs(s["x"].data) < 1e-3] += 0.01  # nudge off the kink
        assert _check(s, lambda: T.sum(T.mul(T.relu(s["x"]), s["x"]))) < OP_TOL

    def test_exp_log_softmax_gradients(self):
        s = _rand_store(6, x=(3, 4), w=(3, 4))
        assert _check(s, lambda: T.sum(T.mul(T.softmax_rows(s["x"]), s["w"]))) < OP_TOL
        assert _check(s, lambda: T.sum(T.log(T.exp(s["x"]) + 1.0))) < OP_TOL

    def test_structural_op_gradients(self):
        s = _rand_store(7, x=(5, 3), y=(2, 3))
        idx = np.array([0, 2, 2, 4])

        def f():
            g = T.gather_rows(s["x"], idx)
            seg = T.segment_sum(g, np.array([1, 0, 1, 1]), 2)
            c = T.concat([seg, s["y"]], axis=0)
            r = T.reshape(c, (3, 4))
            return T.sum(T.mul(r, r)) + T.sum(T.mul(s["x"][1:3], s["x"][1:3]))

        assert _check(s, f) < OP_TOL

    def test_softmax_rows_sum_to_one(self):
        p = T.softmax_rows(Rng(1).normal(40).reshape(5, 8) * 30).data
        assert np.max(np.abs(p.sum(axis=1) - 1.0)) <= 1e-12


class TestLosses:
    def test_mse_identity(self):
        x = Rng(2).normal(6)
        assert T.mse(x, x).item() == 0.0

    def test_bce_half_is_ln2(self):
        assert T.bce(np.array(0.5), 1.0).item() == pytest.approx(math.log(2), abs=1e-12)

    def test_bce_clamps_extremes(self):
        v = T.bce(np.array([0.0, 1.0]), np.array([1.0, 0.0])).item()
        assert v == pytest.approx(-math.log(1e-7), rel=1e-9)

    def test_loss_gradients(self):
        s = _rand_store(8, x=(3, 4))
        y = Rng(11).normal(12).reshape(3, 4)
        target = (Rng(9).uniform(12).reshape(3, 4) > 0.5).astype(float)
        assert _check(s, lambda: T.mse(s["x"], y)) < OP_TOL
        assert _check(s, lambda: T.bce(T.sigmoid(s["x"]), target)) < OP_TOL
        assert _check(s, lambda: T.bce(T.sigmoid(s["x"]), target, reduction="sum")) < OP_TOL

    def test_kl_closed_forms(self):
        assert T.kl_diag_gaussian(np.zeros(3), np.zeros(3)).item() == 0.0
        assert T.kl_diag_gaussian(np.array([1.0]), np.array([0.0])).item() == 0.5
        assert T.kl_diag_gaussian(np.array([0.0]), np.array([math.log(4)])).item() == pytest.approx(
            0.80685, abs=1e-5)

    def test_kl_gradient(self):
        s = _rand_store(10, mu=(2, 3), lv=(2, 3))
        assert _check(s, lambda: T.kl_diag_gaussian(s["mu"], s["lv"])) < OP_TOL

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.floats(-20, 20), st.floats(-20, 20)), min_size=1, max_size=8))
    def test_kl_nonnegative(self, pairs):
        mu, lv = np.array(pairs).T
        assert T.kl_diag_gaussian(mu, lv).item() >= 0.0


class TestBackward:
    def test_sum_gives_ones(self):
        s = _rand_store(0, W=(3, 2))
        backward(T.sum(s["W"]))
        assert np.array_equal(s["W"].grad, np.ones((3, 2)))

    def test_square_at_three(self):
        s = ParamStore()
        w = s.add("w", [[3.0]])
        backward(T.sum(w * w))
        assert w.grad.tolist() == [[6.0]]

    def test_repeated_backward_accumulates(self):
        s = ParamStore()
        w = s.add("w", [2.0])
        backward(T.sum(w * w))
        backward(T.sum(w * w))
        assert w.grad.tolist() == [8.0]

    def test_non_scalar_raises(self):
        s = ParamStore()
        w = s.add("w", [1.0, 2.0])
        with pytest.raises(ValueError, match="scalar"):
            backward(w * 2.0)

    def test_no_grad_records_nothing(self):
        s = ParamStore()
        w = s.add("w", [1.0])
        with no_grad():
            out = w * 3.0
        assert not out.requires_grad

    def test_shared_subexpression(self):
        s = ParamStore()
        w = s.add("w", [1.5])
        y = w * w
        backward(T.sum(y * y + y))
        # d/dw (w^4 + w^2) = 4w^3 + 2w
        assert w.grad[0] == pytest.approx(4 * 1.5 ** 3 + 2 * 1.5, abs=1e-12)


class TestFiniteDiff:
    def test_quadratic(self):
        s = ParamStore()
        s.add("w", [3.0])
        assert finite_diff_check(lambda: T.sum(s["w"] * s["w"]), s, 1e-5) < 1e-8

    def test_leaves_grads_zeroed(self):
        s = _rand_store(1, w=(4,))
        finite_diff_check(lambda: T.sum(s["w"] * s["w"]), s)
        assert not s["w"].grad.any()


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        s = _rand_store(1, w=(3,))
        before = s["w"].data.copy()
        state = AdamState.fresh(s, ["w"])
        adam_step(s, state)
        assert np.array_equal(s["w"].data, before)
        assert state.t == 1

    def test_first_step_moves_by_lr(self):
        s = ParamStore()
        w = s.add("w", [0.0])
        w.grad[...] = 1.0
        state = AdamState.fresh(s, ["w"], lr=1e-3)
        adam_step(s, state)
        assert w.data[0] == pytest.approx(-1e-3, rel=1e-6)
        assert w.grad[0] == 0.0

    def test_nan_gradient_is_numeric_failure(self):
        s = ParamStore()
        w = s.add("w", [0.0])
        w.grad[...] = np.nan
        with pytest.raises(NumericFailure, match="numeric failure"):
            adam_step(s, AdamState.fresh(s, ["w"]))

    def test_deterministic(self):
        def run():
            s = _rand_store(3, w=(5,))
            state = AdamState.fresh(s, ["w"])
            for _ in range(10):
                backward(T.sum(T.mul(s["w"], s["w"])))
                adam_step(s, state)
            return s["w"].data
        assert np.array_equal(run(), run())

    def test_tensor_wraps_float64(self):
        assert Tensor([1, 2]).data.dtype == np.float64
