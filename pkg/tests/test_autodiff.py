import math

import numpy as np
import pytest

from ivegan.autodiff import (
    Tape,
    Tensor,
    add,
    add_bias,
    backward,
    concat,
    finite_difference_grad,
    lrelu,
    matmul,
    mean_all,
    neg,
    scale,
    sigmoid_act,
    softplus,
    tanh_act,
    transpose,
)
from ivegan.errors import NonFiniteError, ShapeError, TapeError

UNARY = ("tanh", "sigmoid", "lrelu", "softplus", "neg", "scale")


def _unary(name, v):
    if name == "tanh":
        return tanh_act(v)
    if name == "sigmoid":
        return sigmoid_act(v)
    if name == "lrelu":
        return lrelu(v, 0.2)
    if name == "softplus":
        return softplus(v)
    if name == "neg":
        return neg(v)
    return scale(v, 0.7)


def _composition(plan, x, w, b, y):
    """mean(u2(u1(x @ w + b) joined with y)) on a fresh tape. y is
    concatenated or added depending on plan[2]."""
    tape = Tape()
    xv, wv, bv, yv = (tape.param(t) for t in (x, w, b, y))
    h = _unary(plan[0], add_bias(matmul(xv, wv), bv))
    h = concat(h, yv) if plan[2] else add(h, transpose(transpose(yv)))
    h = _unary(plan[1], h)
    return tape, (xv, wv, bv, yv), mean_all(h)


def _rel_err(analytic, numeric):
    denom = max(float(np.abs(analytic).max()), 1e-8)
    return float(np.abs(analytic - numeric).max()) / denom


def test_softplus_at_zero_is_ln2():
    tape = Tape()
    out = softplus(tape.constant(np.zeros((1, 1))))
    assert out.value.item() == pytest.approx(math.log(2.0), abs=1e-15)


def test_softplus_stays_finite_at_extremes():
    tape = Tape()
    out = softplus(tape.constant(np.array([[-800.0, 800.0]]))).value.data
    assert out[0, 0] == pytest.approx(0.0, abs=1e-300)
    assert out[0, 1] == 800.0


@pytest.mark.parametrize("trial", range(100))
def test_random_compositions_match_central_differences(trial):
    gen = np.random.default_rng(trial)
    n, p, q = gen.integers(2, 5, size=3)
    plan = (gen.choice(UNARY), gen.choice(UNARY), bool(gen.integers(2)))
    x = Tensor(gen.standard_normal((n, p)))
    w = Tensor(gen.standard_normal((p, q)) * 0.5)
    b = Tensor(gen.standard_normal(q) * 0.1)
    y = Tensor(gen.standard_normal((n, q)))
    args = [x, w, b, y]

    tape, leaves, loss = _composition(plan, *args)
    grads = backward(tape, loss)
    for i, leaf in enumerate(leaves):
        def f(t, i=i):
            trial_args = list(args)
            trial_args[i] = t
            return _composition(plan, *trial_args)[2]

        numeric = finite_difference_grad(f, args[i], h=1e-6).data
        analytic = grads[leaf].data
        assert analytic.shape == args[i].shape
        assert _rel_err(analytic, numeric) < 1e-5


def test_leaf_used_twice_accumulates():
    tape = Tape()
    x = tape.param(np.array([[1.0, -2.0]]))
    loss = mean_all(add(x, x))
    np.testing.assert_allclose(backward(tape, loss)[x].data, [[1.0, 1.0]])


def test_unreachable_leaf_gets_zero_gradient():
    tape = Tape()
    x = tape.param(np.ones((2, 2)))
    unused = tape.param(np.ones((3, 1)))
    grads = backward(tape, mean_all(tanh_act(x)))
    assert np.array_equal(grads[unused].data, np.zeros((3, 1)))


def test_constants_get_no_gradient_entry():
    tape = Tape()
    c = tape.constant(np.ones((2, 2)))
    w = tape.param(np.ones((2, 2)))
    grads = backward(tape, mean_all(matmul(c, w)))
    assert c not in grads
    assert w in grads


def test_bias_gradient_sums_over_batch():
    tape = Tape()
    a = tape.constant(np.zeros((4, 3)))
    b = tape.param(np.zeros(3))
    grads = backward(tape, mean_all(add_bias(a, b)))
    np.testing.assert_allclose(grads[b].data, np.full(3, 4 / 12))


def test_lrelu_subgradient_at_zero_is_one():
    tape = Tape()
    x = tape.param(np.zeros((1, 1)))
    assert backward(tape, mean_all(lrelu(x, 0.2)))[x].item() == 1.0


def test_lrelu_rejects_bad_slope():
    tape = Tape()
    with pytest.raises(ValueError):
        lrelu(tape.constant(np.ones((1, 1))), 1.5)


def test_loss_from_another_tape_is_rejected():
    t1, t2 = Tape(), Tape()
    loss = mean_all(t2.param(np.ones((2, 2))))
    with pytest.raises(TapeError):
        backward(t1, loss)


def test_mixing_tapes_in_one_op_is_rejected():
    t1, t2 = Tape(), Tape()
    with pytest.raises(TapeError):
        matmul(t1.constant(np.ones((2, 2))), t2.constant(np.ones((2, 2))))


def test_non_scalar_loss_is_rejected():
    tape = Tape()
    x = tape.param(np.ones((2, 2)))
    with pytest.raises(ShapeError):
        backward(tape, tanh_act(x))


def test_shape_errors():
    tape = Tape()
    a = tape.constant(np.ones((2, 3)))
    with pytest.raises(ShapeError):
        matmul(a, a)
    with pytest.raises(ShapeError):
        concat(a, tape.constant(np.ones((3, 3))))
    with pytest.raises(ShapeError):
        add_bias(a, tape.constant(np.ones(2)))
    with pytest.raises(ShapeError):
        mean_all(tape.constant(np.zeros((0, 3))))


def test_tensor_rejects_non_finite_and_high_rank():
    with pytest.raises(NonFiniteError):
        Tensor([[1.0, np.nan]])
    with pytest.raises(ShapeError):
        Tensor(np.zeros((2, 2, 2)))


def test_tensor_is_immutable_copy():
    src = np.ones((2, 2))
    t = Tensor(src)
    src[0, 0] = 5.0
    assert t.data[0, 0] == 1.0
    with pytest.raises(ValueError):
        t.data[0, 0] = 3.0


def test_overflow_reports_the_op():
    tape = Tape()
    big = tape.constant(np.array([[1e300]]))
    with np.errstate(over="ignore"), pytest.raises(NonFiniteError) as info:
        matmul(big, big)
    assert info.value.diagnostics["op"] == "matmul"


def test_replay_reproduces_every_node():
    gen = np.random.default_rng(0)
    tape = Tape()
    x = tape.constant(gen.standard_normal((5, 3)))
    w = tape.param(gen.standard_normal((3, 2)))
    mean_all(softplus(tanh_act(matmul(x, w))))
    tape.replay()


def test_finite_difference_needs_positive_step():
    with pytest.raises(ValueError):
        finite_difference_grad(lambda t: 0.0, Tensor([1.0]), h=0.0)


def test_var_operators():
    tape = Tape()
    a = tape.param(np.array([[1.0, 2.0]]))
    b = tape.param(np.array([[3.0, 5.0]]))
    out = mean_all((a - b) * 2.0 + -a)
    assert out.value.item() == pytest.approx(((1 - 3) * 2 - 1 + (2 - 5) * 2 - 2) / 2)
    grads = backward(tape, out)
    np.testing.assert_allclose(grads[a].data, [[0.5, 0.5]])
    np.testing.assert_allclose(grads[b].data, [[-1.0, -1.0]])
