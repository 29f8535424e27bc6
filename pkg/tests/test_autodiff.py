import math

import numpy as np
import pytest

from helpers import finite_diff_grads, max_rel_error
from mdaforge.autodiff import ShapeError, Tape
from mdaforge.optim import AdamWHyper, AdamWState, adamw_step

PRIMITIVE_TOL = 1e-6
FD_H = 1e-5


def _check_primitive(build, params, seeds=range(5), tol=PRIMITIVE_TOL, h=FD_H):
    """Gradient-check ``build`` against central differences for several seeds.

    ``build(tape, nodes)`` must return a scalar node given parameter leaves.
    ``params(rng)`` returns the named arrays for one trial.
    """
    for seed in seeds:
        arrays = params(np.random.default_rng(seed))

        def forward():
            tape = Tape()
            nodes = {name: tape.parameter(arr) for name, arr in arrays.items()}
            return tape, nodes, build(tape, nodes)

        tape, nodes, loss = forward()
        grad_map = tape.backward(loss)
        got = {name: grad_map[node] for name, node in nodes.items()}
        want = finite_diff_grads(lambda: forward()[2].value[0, 0], arrays, h)
        assert max_rel_error(got, want) < tol, f"seed {seed}"


def test_matmul_gradient_matches_finite_differences():
    _check_primitive(
        lambda t, n: t.sum(t.matmul(n["a"], n["b"])),
        lambda rng: {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(4, 2))},
    )


def test_add_and_row_bias_gradients():
    _check_primitive(
        lambda t, n: t.sum(t.add(n["a"], n["b"])),
        lambda rng: {"a": rng.normal(size=(3, 3)), "b": rng.normal(size=(3, 3))},
    )
    _check_primitive(
        lambda t, n: t.sum(t.tanh(t.add_row_bias(n["x"], n["b"]))),
        lambda rng: {"x": rng.normal(size=(4, 3)), "b": rng.normal(size=(1, 3))},
    )


def test_tanh_relu_gradients():
    _check_primitive(
        lambda t, n: t.sum(t.tanh(n["x"])),
        lambda rng: {"x": rng.normal(size=(3, 5))},
    )
    # keep entries away from the relu kink where finite differences lie
    _check_primitive(
        lambda t, n: t.sum(t.relu(n["x"])),
        lambda rng: {"x": rng.normal(size=(3, 5)) + np.sign(rng.normal(size=(3, 5))) * 0.5},
    )


def test_tanh_at_zero():
    tape = Tape()
    x = tape.parameter([[0.0]])
    out = tape.tanh(x)
    assert out.value[0, 0] == 0.0
    tape.backward(tape.sum(out))
    assert x.grad[0, 0] == 1.0


def test_log_softmax_uniform_row():
    tape = Tape()
    x = tape.constant(np.zeros((1, 8)))
    out = tape.log_softmax_rows(x)
    assert np.allclose(out.value, math.log(1 / 8), atol=1e-15)


def test_log_softmax_gradient_and_stability():
    _check_primitive(
        lambda t, n: t.mean_all(t.log_softmax_rows(n["x"])),
        lambda rng: {"x": rng.normal(size=(4, 6)) * 3.0},
    )
    # masked by a one-hot constant, the backward matches fd as well
    onehot = np.eye(4)[[0, 2, 1, 3]]
    _check_primitive(
        lambda t, n: t.sum(t.scale(t.log_softmax_rows(n["x"]), onehot)),
        lambda rng: {"x": rng.normal(size=(4, 4))},
    )
    # huge logits stay finite thanks to max subtraction
    tape = Tape()
    out = tape.log_softmax_rows(tape.constant([[1e6, 0.0, -1e6]]))
    assert np.isfinite(out.value).all()


def test_scale_sum_mean_neg_gradients():
    _check_primitive(
        lambda t, n: t.scale(t.sum(n["x"]), 2.5),
        lambda rng: {"x": rng.normal(size=(2, 3))},
    )
    _check_primitive(
        lambda t, n: t.mean_all(t.scale(n["x"], np.arange(6.0).reshape(2, 3) - 2.0)),
        lambda rng: {"x": rng.normal(size=(2, 3))},
    )
    _check_primitive(
        lambda t, n: t.neg(t.mean_all(n["x"])),
        lambda rng: {"x": rng.normal(size=(3, 2))},
    )


def test_gather_and_concat_gradients():
    _check_primitive(
        lambda t, n: t.sum(t.tanh(t.gather_rows(n["x"], [0, 2, 2]))),
        lambda rng: {"x": rng.normal(size=(4, 3))},
    )
    _check_primitive(
        lambda t, n: t.sum(t.tanh(t.concat_rows([n["a"], n["b"]]))),
        lambda rng: {"a": rng.normal(size=(2, 3)), "b": rng.normal(size=(4, 3))},
    )


def test_gaussian_kernel_mean_gradient():
    _check_primitive(
        lambda t, n: t.gaussian_kernel_mean(n["a"], n["b"], sigma=0.9),
        lambda rng: {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(5, 4))},
        tol=1e-5,  # exp curvature eats a little of the fd budget
    )
    # same node on both sides: gradient of f(x, x) accumulates both roles
    _check_primitive(
        lambda t, n: t.gaussian_kernel_mean(n["a"], n["a"], sigma=1.1),
        lambda rng: {"a": rng.normal(size=(4, 3))},
        tol=1e-5,
    )


def test_shape_errors_name_both_shapes():
    tape = Tape()
    a = tape.parameter(np.zeros((2, 3)))
    b = tape.parameter(np.zeros((2, 3)))
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        tape.matmul(a, b)
    with pytest.raises(ShapeError, match="add_row_bias"):
        tape.add_row_bias(a, tape.parameter(np.zeros((1, 2))))
    with pytest.raises(ShapeError, match="1-d"):
        tape.gather_rows(a, [[0]])


def test_forward_rejects_non_finite():
    tape = Tape()
    with pytest.raises(FloatingPointError):
        tape.constant([[np.inf]])


def test_backward_requires_scalar_loss():
    tape = Tape()
    x = tape.parameter(np.ones((2, 2)))
    with pytest.raises(ShapeError, match="1x1"):
        tape.backward(x)


def test_backward_sum_is_all_ones_and_unreachable_is_zero():
    tape = Tape()
    w = tape.parameter(np.ones((2, 3)))
    unused = tape.parameter(np.ones((4, 4)))
    grads = tape.backward(tape.sum(w))
    assert np.array_equal(grads[w], np.ones((2, 3)))
    assert np.array_equal(grads[unused], np.zeros((4, 4)))


def test_backward_repeatable():
    rng = np.random.default_rng(0)
    tape = Tape()
    a = tape.parameter(rng.normal(size=(3, 3)))
    b = tape.parameter(rng.normal(size=(3, 3)))
    loss = tape.mean_all(tape.tanh(tape.matmul(a, b)))
    first = {k: v.copy() for k, v in tape.backward(loss).items()}
    second = tape.backward(loss)
    for node in first:
        assert np.array_equal(first[node], second[node])


def test_shared_subexpression_accumulates():
    # loss = sum(x) + mean(x): gradient = 1 + 1/size
    tape = Tape()
    x = tape.parameter(np.ones((2, 2)))
    loss = tape.add(tape.sum(x), tape.mean_all(x))
    grads = tape.backward(loss)
    assert np.allclose(grads[x], 1.25)


# ---- gradient reversal -----------------------------------------------------


def test_grl_forward_is_bitwise_identity():
    rng = np.random.default_rng(1)
    tape = Tape()
    x = tape.parameter(rng.normal(size=(3, 4)))
    out = tape.grl(x, 0.7)
    assert out.value is x.value  # same buffer, trivially bit-exact
    assert out.value.tobytes() == x.value.tobytes()


@pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
def test_grl_backward_scales_and_negates(lam):
    tape = Tape()
    x = tape.parameter(np.arange(6.0).reshape(2, 3))
    grads = tape.backward(tape.sum(tape.grl(x, lam)))
    # loss = sum has unit upstream gradient, so d/dx must be exactly -lam
    assert np.array_equal(grads[x], np.full((2, 3), -lam))


def test_grl_rejects_negative_lambda():
    tape = Tape()
    x = tape.parameter(np.zeros((1, 1)))
    with pytest.raises(ValueError, match="lambda"):
        tape.grl(x, -0.1)


# ---- optimizer ---------------------------------------------------------------


def test_adamw_zero_gradient_no_decay_keeps_params():
    params = {"w": np.ones((2, 2))}
    state = AdamWState(params)
    hyper = AdamWHyper(lr=0.1, weight_decay=0.0)
    adamw_step(params, {"w": np.zeros((2, 2))}, state, hyper)
    assert np.array_equal(params["w"], np.ones((2, 2)))


def test_adamw_single_step_hand_trace():
    # theta=1, g=1, lr=0.1, wd=0: m_hat = v_hat = 1, update = 0.1/(1+eps)
    params = {"w": np.array([[1.0]])}
    state = AdamWState(params)
    hyper = AdamWHyper(lr=0.1, weight_decay=0.0)
    adamw_step(params, {"w": np.array([[1.0]])}, state, hyper)
    expected = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8))
    assert params["w"][0, 0] == pytest.approx(expected, abs=1e-15)
    assert params["w"][0, 0] == pytest.approx(0.9, abs=1e-8)


def test_adamw_symmetry_identical_params():
    params = {"a": np.full((2, 2), 0.5), "b": np.full((2, 2), 0.5)}
    state = AdamWState(params)
    hyper = AdamWHyper(lr=1e-3)
    for _ in range(5):
        g = np.full((2, 2), 0.3)
        adamw_step(params, {"a": g.copy(), "b": g.copy()}, state, hyper)
    assert np.array_equal(params["a"], params["b"])


def test_adamw_decoupled_weight_decay():
    # with zero gradients the only movement is -lr * wd * theta
    params = {"w": np.array([[2.0]])}
    state = AdamWState(params)
    adamw_step(params, {"w": np.zeros((1, 1))}, state,
               AdamWHyper(lr=0.5, weight_decay=0.01))
    assert params["w"][0, 0] == pytest.approx(2.0 - 0.5 * 0.01 * 2.0, abs=1e-15)


def test_adamw_rejects_non_finite_gradient():
    params = {"w": np.ones((1, 1))}
    state = AdamWState(params)
    with pytest.raises(FloatingPointError, match="'w'"):
        adamw_step(params, {"w": np.array([[np.nan]])}, state, AdamWHyper())
    # fail fast: parameter untouched
    assert params["w"][0, 0] == 1.0


def test_adamw_partial_update_tracks_per_parameter_steps():
    params = {"a": np.ones((1, 1)), "b": np.ones((1, 1))}
    state = AdamWState(params)
    hyper = AdamWHyper(lr=0.1, weight_decay=0.0)
    adamw_step(params, {"a": np.ones((1, 1))}, state, hyper)
    adamw_step(params, {"b": np.ones((1, 1))}, state, hyper)
    assert state.steps == {"a": 1, "b": 1}
    assert params["a"] == pytest.approx(params["b"])
