import numpy as np
import pytest

from chive import autodiff as ad
from chive.gradcheck import grad_check, relative_error
from chive.nn import LSTMStack, ParameterStore, cell_step, make_lstm_layer


def numeric_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + eps
        up = f()
        x[idx] = old - eps
        dn = f()
        x[idx] = old
        g[idx] = (up - dn) / (2 * eps)
    return g


def check_primitive(build, *shapes, seed=0):
    rng = np.random.default_rng(seed)
    values = [rng.uniform(-1, 1, s) for s in shapes]
    params = [ad.parameter(v) for v in values]
    out = build(*params)
    w = rng.standard_normal(out.shape)
    loss = ad.sum(out * w)
    loss.backward()
    for p, v in zip(params, values):
        num = numeric_grad(lambda: float(np.sum(build(*[ad.tensor(q.value) for q in params]).value * w)), p.value)
        err = np.abs(p.grad - num) / np.maximum(1e-8, np.abs(p.grad) + np.abs(num))
        assert err.max() < 1e-6, err.max()


@pytest.mark.parametrize("name,build,shapes", [
    ("add", lambda a, b: a + b, [(3, 4), (4,)]),
    ("sub", lambda a, b: a - b, [(3, 4), (3, 4)]),
    ("mul", lambda a, b: a * b, [(3, 4), (1, 4)]),
    ("matmul", lambda a, b: a @ b, [(3, 4), (4, 2)]),
    ("vecmat", lambda a, b: a @ b, [(4,), (4, 2)]),
    ("affine", lambda x, w, b: ad.affine(x, w, b), [(5, 3), (3, 2), (2,)]),
    ("affine_vec", lambda x, w, b: ad.affine(x, w, b), [(3,), (3, 2), (2,)]),
    ("tanh", ad.tanh, [(3, 4)]),
    ("sigmoid", ad.sigmoid, [(6,)]),
    ("exp", ad.exp, [(2, 3)]),
    ("square", ad.square, [(5,)]),
    ("concat", lambda a, b: ad.concat([a, b]), [(3, 2), (3, 4)]),
    ("getitem", lambda a: a[1:3], [(5, 2)]),
    ("take_rows", lambda a: ad.take_rows(a, [0, 2, 2, 1]), [(3, 2)]),
    ("take_rows_vec", lambda a: ad.take_rows(a, [0, 0, 0]), [(4,)]),
    ("reshape", lambda a: ad.reshape(a, (6,)), [(2, 3)]),
    ("sse", lambda a: ad.sum_squared_error(a, np.linspace(0, 1, 4)) * 1.0, [(4,)]),
])
def test_primitive_gradients(name, build, shapes):
    check_primitive(build, *shapes)


def test_recurrence_gradient_with_resets_and_initial_state():
    rng = np.random.default_rng(3)
    resets = np.array([False, False, True, False, False, True, False])
    check_primitive(lambda xw, w, h0, c0: ad.lstm_recurrence(xw, w, resets, h0, c0), (7, 12), (3, 12), (3,), (3,))


def test_simple_algebra():
    a, b = ad.tensor([1.0, 2.0]), ad.tensor([3.0])
    assert ad.concat([a, b]).shape == (3,)
    x = ad.tensor(np.arange(3.0))
    np.testing.assert_array_equal(ad.affine(x, np.eye(3), np.zeros(3)).value, x.value)
    p = ad.parameter(np.arange(4.0))
    ad.sum(p).backward()
    np.testing.assert_array_equal(p.grad, np.ones(4))


def test_shape_errors():
    with pytest.raises(ValueError):
        ad.matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ValueError):
        ad.affine(np.ones(3), np.ones((4, 2)), np.zeros(2))
    with pytest.raises(ValueError, match="length mismatch"):
        ad.sum_squared_error(ad.tensor(np.ones(3)), np.ones(4))
    with pytest.raises(ValueError):
        ad.tensor(np.ones((2, 2, 2)))


def test_nonfinite_forward_raises():
    with pytest.raises(ad.NonFiniteError):
        ad.exp(ad.tensor([1000.0]))
    with pytest.raises(ad.NonFiniteError):
        ad.tensor([np.nan])


def test_no_grad_records_nothing():
    p = ad.parameter(np.ones(3))
    with ad.no_grad():
        y = ad.tanh(p * 2.0)
    assert y.parents == () and y.backward_fn is None


def test_gradient_accumulates_over_shared_use():
    p = ad.parameter(np.array([2.0]))
    ad.sum(p * p + p).backward()
    np.testing.assert_allclose(p.grad, [5.0])


def test_deep_graph_backward_is_iterative():
    p = ad.parameter(np.array([1.0]))
    x = p
    for _ in range(5000):
        x = x + 0.0
    ad.sum(x).backward()
    assert p.grad[0] == 1.0


# recurrent cell ----------------------------------------------------------


def zero_layer(n_in, hidden):
    store = ParameterStore()
    layer = make_lstm_layer(store, "l", n_in, hidden, np.random.default_rng(0))
    for t in (layer.w_ih, layer.w_hh, layer.bias):
        t.value[...] = 0.0
    return layer


def test_cell_step_zero_params_zero_state():
    layer = zero_layer(2, 3)
    (c, h), out = cell_step((np.zeros(3), np.zeros(3)), np.ones(2), layer)
    np.testing.assert_array_equal(c.value, 0.0)
    np.testing.assert_array_equal(h.value, 0.0)


def test_cell_step_zero_params_unit_cell():
    # gates all sigmoid(0) = 0.5, candidate tanh(0) = 0 -> c' = 0.5, h' = 0.5 tanh(0.5)
    layer = zero_layer(2, 3)
    (c, h), out = cell_step((np.ones(3), np.zeros(3)), np.ones(2), layer)
    np.testing.assert_allclose(c.value, 0.5, rtol=0, atol=1e-15)
    np.testing.assert_allclose(h.value, 0.5 * np.tanh(0.5), rtol=0, atol=1e-15)
    assert out is h


def test_cell_step_dimension_mismatch():
    layer = zero_layer(2, 3)
    with pytest.raises(ValueError):
        cell_step((np.zeros(3), np.zeros(3)), np.ones(4), layer)


def test_forget_bias_init():
    store = ParameterStore()
    layer = make_lstm_layer(store, "l", 5, 4, np.random.default_rng(0))
    np.testing.assert_array_equal(layer.bias.value[4:8], 1.0)
    k = 1 / np.sqrt(5)
    assert np.all(np.abs(layer.w_ih.value) <= k)


def test_fused_stack_matches_composed_cells():
    rng = np.random.default_rng(1)
    store = ParameterStore()
    stack = LSTMStack(store, "s", 3, 5, 2, rng)
    x = rng.standard_normal((9, 3))
    resets = np.zeros(9, dtype=bool)
    resets[4] = True
    fused = stack(x, resets).value
    states = [(np.zeros(5), np.zeros(5)) for _ in stack.layers]
    ref = []
    for t in range(9):
        if resets[t]:
            states = [(np.zeros(5), np.zeros(5)) for _ in stack.layers]
        inp = x[t]
        for k, layer in enumerate(stack.layers):
            states[k], out = cell_step(states[k], inp, layer)
            states[k] = (states[k][0].value, states[k][1].value)
            inp = out.value
        ref.append(inp)
    np.testing.assert_allclose(fused, np.array(ref), rtol=0, atol=1e-14)


def test_stateful_run_matches_full_sequence():
    rng = np.random.default_rng(2)
    stack = LSTMStack(ParameterStore(), "s", 3, 4, 2, rng)
    x = rng.standard_normal((10, 3))
    full = stack(x).value
    a, st = stack.run_stateful(x[:6], None)
    b, _ = stack.run_stateful(x[6:], st)
    np.testing.assert_allclose(np.vstack([a, b]), full, atol=1e-14)


def test_extended_precision_forward_agrees_with_float64():
    rng = np.random.default_rng(4)
    stack = LSTMStack(ParameterStore(), "s", 3, 4, 2, rng)
    x = rng.standard_normal((8, 3))
    lo = stack(x).value
    with ad.extended_precision():
        hi = stack(x).value
    assert hi.dtype == np.longdouble
    np.testing.assert_allclose(lo, hi.astype(np.float64), atol=1e-14)


# gradient checker --------------------------------------------------------


def test_relative_error_definition():
    assert relative_error(1.0, 1.0) == 0.0
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1.0, 3.0) == pytest.approx(0.5)
    assert relative_error(1e-12, 0.0) == pytest.approx(1e-4)


def test_grad_check_quadratic():
    store = ParameterStore()
    w = store.add("w", np.random.default_rng(0).standard_normal((3, 4)))
    res = grad_check(lambda: ad.sum(ad.square(w)), store, samples=12, extended=False)
    assert res.max_relative_error < 1e-9
    assert res.checked == 12


def test_grad_check_recurrent_stack():
    rng = np.random.default_rng(0)
    store = ParameterStore()
    stack = LSTMStack(store, "s", 3, 8, 2, rng)
    x = rng.standard_normal((5, 3))
    target = rng.standard_normal((5, 8))
    res = grad_check(lambda: ad.sum_squared_error(stack(x), target), store, epsilon=1e-5, samples=6, rng=rng)
    assert res.max_relative_error < 1e-6


def test_grad_check_detects_wrong_gradient():
    store = ParameterStore()
    w = store.add("w", np.array([0.3, -0.7]))

    def bad_square(x):
        return ad._make(x.value ** 2, (x,), lambda g: (3.0 * g * x.value,))

    res = grad_check(lambda: ad.sum(bad_square(w)), store, samples=2, extended=False)
    assert res.max_relative_error > 0.1


def test_grad_check_rejects_nonfinite_loss():
    store = ParameterStore()
    store.add("w", np.ones(2))

    class Bad:
        value = np.array(np.inf)

    with pytest.raises(ad.NonFiniteError):
        grad_check(lambda: Bad(), store)


def test_parameter_store_owner_and_order():
    store = ParameterStore()
    store.add("b.x", np.zeros(2))
    store.add("a.y", np.zeros(3), owner="a")
    assert list(store.values()) == ["b.x", "a.y"]
    assert store.owner("a.y") == "a"
    assert store.num_values() == 5
    with pytest.raises((KeyError, ValueError)):
        store.add("b.x", np.zeros(2))
