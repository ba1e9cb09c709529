import numpy as np
import pytest
from hypothesis import given, strategies as st

from gesturediff import autodiff as ad
from gradcheck import numeric_grad, rel_error


def check(fn, *shapes, seed=0, tol=1e-6):
    rng = np.random.default_rng(seed)
    ts = [ad.Tensor(rng.standard_normal(s), requires_grad=True) for s in shapes]
    out = fn(*ts)
    out.backward()
    for t in ts:
        num = numeric_grad(lambda: float(fn(*ts).data), t.data)
        # central differences carry ~1e-11 absolute roundoff, so entries far
        # below the tensor's gradient scale are compared against that scale
        floor = max(1e-6, 1e-4 * np.abs(num).max())
        assert rel_error(t.grad, num, floor) < tol, fn


def test_square_norm_gradient():
    p = ad.Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    ad.square_norm(p).backward()
    np.testing.assert_array_equal(p.grad, 2 * p.data)


def test_constant_loss_zero_gradient():
    p = ad.Tensor(np.ones(3), requires_grad=True)
    ((p * 0.0).sum() + 5.0).backward()
    np.testing.assert_array_equal(p.grad, np.zeros(3))


@pytest.mark.parametrize("fn,shapes", [
    (lambda a, b: (a + b).sum(), [(3, 4), (4,)]),
    (lambda a, b: (a - b * 2.0).sum(), [(3, 1), (3, 4)]),
    (lambda a, b: (a * b).sum(), [(2, 3), (2, 3)]),
    (lambda a, b: (a / (b * b + 1.0)).sum(), [(2, 3), (3,)]),
    (lambda a: (a ** 3).sum(), [(4,)]),
    (lambda a, b: ad.tanh(a @ b).sum(), [(3, 4), (4, 2)]),
    (lambda a, b: (a @ b).sum(), [(4,), (4, 2)]),
    (lambda a, b: (a @ b).sum(), [(3, 4), (4,)]),
    (lambda a: ad.sigmoid(a).sum(), [(5,)]),
    (lambda a: ad.silu(a).mean(), [(2, 5)]),
    (lambda a: ad.exp(a).sum(), [(3,)]),
    (lambda a: (a.reshape(6, 2).transpose() * 1.5).sum(), [(3, 4)]),
    (lambda a: ad.square_norm(a, axis=-1).mean(), [(4, 3)]),
    (lambda a, b: ad.square_norm(ad.concatenate([a, b], axis=-1)), [(2, 3), (2, 2)]),
    (lambda a, b: ad.square_norm(ad.stack([a, b], axis=1)), [(2, 3), (2, 3)]),
    (lambda a: ad.square_norm(a[1:, ::2]) + ad.square_norm(a[np.array([0, 0, 2])]), [(3, 4)]),
    (lambda a: (a.sum(axis=0, keepdims=True) * a).sum(), [(3, 2)]),
    (lambda a: (-a).mean(axis=1).sum(), [(3, 2)]),
    (lambda a: (1.0 - a).sum() + (2.0 / (a * a + 1.0)).sum(), [(3,)]),
])
def test_primitive_gradients(fn, shapes):
    check(fn, *shapes)


def test_lstm_cell_gradient():
    def fn(z, c):
        hc = ad.lstm_cell(z, c)
        return ad.square_norm(hc * ad.Tensor(np.linspace(0.5, 2.0, 6)))
    check(fn, (2, 12), (2, 3))


def test_lstm_cell_matches_gate_equations(rng):
    z, c = rng.standard_normal(8), rng.standard_normal(2)
    sig = lambda v: 1 / (1 + np.exp(-v))
    i, f, g, o = sig(z[:2]), sig(z[2:4]), np.tanh(z[4:6]), sig(z[6:])
    c_new = f * c + i * g
    out = ad.lstm_cell(ad.Tensor(z), ad.Tensor(c)).data
    np.testing.assert_allclose(out, np.concatenate([o * np.tanh(c_new), c_new]), atol=1e-12)


def test_shared_subexpression_accumulates():
    x = ad.Tensor(np.array([2.0]), requires_grad=True)
    y = x * x
    (y + y * 3.0).sum().backward()
    np.testing.assert_allclose(x.grad, [16.0])


def test_leaf_grads_accumulate_across_calls():
    x = ad.Tensor(np.array([1.0, 2.0]), requires_grad=True)
    (x * 3.0).sum().backward()
    (x * 3.0).sum().backward()
    np.testing.assert_allclose(x.grad, [6.0, 6.0])


def test_cycle_detected():
    a = ad.Tensor(np.ones(2), requires_grad=True)
    b = a * 2.0
    c = b * 3.0
    b._parents = (c,)  # forge a cycle
    with pytest.raises(ad.GraphError, match="cycle"):
        ad.backward(c.sum())


def test_unsupported_primitive():
    a = ad.Tensor(np.ones(2), requires_grad=True)
    bad = ad.Tensor(a.data * 2, requires_grad=True, _parents=(a,), _backward=None, op="mystery")
    with pytest.raises(ad.GraphError, match="unsupported"):
        bad.sum().backward()


def test_non_scalar_root_needs_grad():
    a = ad.Tensor(np.ones(2), requires_grad=True)
    with pytest.raises(ad.GraphError):
        (a * 2.0).backward()


def test_no_grad_records_nothing():
    a = ad.Tensor(np.ones(2), requires_grad=True)
    with ad.no_grad():
        b = a * 2.0
        assert not ad.grad_enabled()
    assert ad.grad_enabled()
    assert not b.requires_grad and b._parents == ()


def test_deep_chain_no_recursion_limit():
    a = ad.Tensor(np.array([1.0]), requires_grad=True)
    x = a
    for _ in range(5000):
        x = x * 1.0
    x.sum().backward()
    assert a.grad[0] == 1.0


@given(rows=st.integers(1, 4), cols=st.integers(1, 4), k=st.integers(1, 4),
       seed=st.integers(0, 10_000))
def test_matmul_tanh_property(rows, cols, k, seed):
    check(lambda a, b: ad.square_norm(ad.tanh(a @ b)), (rows, k), (k, cols), seed=seed, tol=1e-5)
