import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import central_diff, rel_err
from sgil.numerics import (AdamState, CsrMatrix, NumericalError, ShapeError, Tape, adam_step, init_mlp2,
                           load_tensors, mlp2_forward, save_tensors, spmm, symmetric_normalize, value_of)
from sgil.numerics import ops

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def grad_of(fn, *values):
    """Analytic gradients of scalar ``fn`` via the tape."""
    tape = Tape()
    ts = [tape.param(v, f"x{i}") for i, v in enumerate(values)]
    out = fn(*ts)
    tape.backward(out)
    return [tape.grads()[f"x{i}"] for i in range(len(values))]


def check_fd(fn, *values, tol=1e-6):
    analytic = grad_of(fn, *values)
    for i, v in enumerate(values):
        v = np.array(v, dtype=np.float64)
        args = list(values)
        args[i] = v

        def f():
            return float(value_of(fn(*args)))

        assert rel_err(analytic[i], central_diff(f, v, 1e-5)) < tol


def test_self_add_gradient_is_two():
    (g,) = grad_of(lambda x: ops.total(ops.add(x, x)), np.array([1.5, -2.0]))
    assert np.array_equal(g, [2.0, 2.0])


def test_untracked_ops_return_arrays():
    out = ops.matmul(np.ones((2, 3)), np.ones((3, 1)))
    assert isinstance(out, np.ndarray) and out.shape == (2, 1)


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        ops.matmul(np.ones((2, 3)), np.ones((2, 3)))


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (3, 4), elements=finite), arrays(np.float64, (4, 2), elements=finite))
def test_matmul_relu_chain_fd(a, b):
    # keep away from the relu kink
    pre = a @ b
    if np.abs(pre).min() < 1e-3:
        return
    check_fd(lambda x, y: ops.sum_squares(ops.relu(ops.matmul(x, y))), a, b)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (3, 2), elements=finite), arrays(np.float64, (1, 2), elements=finite))
def test_broadcast_mul_sub_fd(a, b):
    check_fd(lambda x, y: ops.total(ops.mul(ops.sub(x, y), ops.sigmoid(x))), a, b)


def test_log_sigmoid_stable_and_fd():
    x = np.array([-800.0, -3.0, 0.0, 2.0, 800.0])
    out = ops.log_sigmoid(x)
    assert np.all(np.isfinite(out))
    assert out[0] == pytest.approx(-800.0) and out[-1] == pytest.approx(0.0, abs=1e-300)
    check_fd(lambda v: ops.total(ops.log_sigmoid(v)), np.array([-3.0, 0.1, 2.0]))


def test_minimum_gradient_zero_where_clamped():
    (g,) = grad_of(lambda x: ops.total(ops.minimum(x, 1.0)), np.array([0.5, 1.5]))
    assert np.array_equal(g, [1.0, 0.0])


def test_concat_take_slice_fd():
    a, b = np.arange(6.0).reshape(3, 2) / 7, np.arange(4.0).reshape(2, 2) / 5
    idx = np.array([4, 0, 0, 2])
    check_fd(lambda x, y: ops.sum_squares(ops.take_rows(ops.concat([x, y]), idx)), a, b)
    check_fd(lambda x: ops.sum_squares(ops.slice_rows(x, 1, 3)), a)
    check_fd(lambda x, y: ops.sum_squares(ops.concat([x, y], axis=1)), a, a + 1)


@given(st.lists(st.integers(0, 5), min_size=1, max_size=20))
def test_scatter_rows_matches_add_at(idx):
    idx = np.array(idx)
    g = np.arange(len(idx) * 2, dtype=np.float64).reshape(-1, 2)
    expect = np.zeros((6, 2))
    np.add.at(expect, idx, g)
    assert np.array_equal(ops.scatter_rows(g, idx, 6), expect)


def test_variance_population_and_single_env():
    assert float(ops.variance(np.array([0.0, 1.0]))) == 0.25
    tape = Tape()
    v = tape.param([3.7], "v")
    out = ops.variance(ops.stack([ops.reshape(v, ())]))
    tape.backward(out)
    assert float(value_of(out)) == 0.0 and tape.grads()["v"][0] == 0.0
    check_fd(lambda x: ops.variance(x), np.array([0.3, -1.0, 2.0, 0.5]))


def test_row_normalize_fd():
    x = np.array([[1.0, 2.0, -0.5], [0.1, 0.0, 0.3]])
    check_fd(lambda v: ops.total(ops.mul(ops.row_normalize(v), np.array([[1.0, -2.0, 0.5]]))), x)
    assert np.allclose(np.linalg.norm(ops.row_normalize(x), axis=1), 1.0)


def test_softmax_cross_entropy_single_candidate_is_zero():
    assert float(ops.softmax_cross_entropy(np.array([[4.2]]), np.array([0]))) == 0.0


def test_softmax_cross_entropy_fd_and_oracle():
    logits = np.array([[0.2, -1.0, 3.0], [1.0, 1.0, 0.5]])
    targets = np.array([2, 0])
    direct = np.mean([-np.log(np.exp(l[t]) / np.exp(l).sum()) for l, t in zip(logits, targets)])
    assert float(ops.softmax_cross_entropy(logits, targets)) == pytest.approx(direct, rel=1e-14)
    check_fd(lambda v: ops.softmax_cross_entropy(v, targets), logits)
    mask = np.array([[True, False, False], [False, False, True]])
    check_fd(lambda v: ops.softmax_cross_entropy(v, targets, mask), logits)


# ------------------------------------------------------------------ sparse

def random_csr(rng, n, density=0.4):
    dense = (rng.random((n, n)) < density) * rng.random((n, n))
    rows, cols = np.nonzero(dense)
    m, order = CsrMatrix.from_coo(n, rows, cols, dense[rows, cols])
    return m, dense


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 7), st.integers(0, 10_000))
def test_spmm_matches_dense(n, seed):
    rng = np.random.default_rng(seed)
    m, dense = random_csr(rng, n)
    x = rng.normal(size=(n, 3))
    assert np.allclose(spmm(m, x), dense @ x, atol=1e-14)
    assert np.array_equal(m.to_dense(), dense)


def test_spmm_gradients_fd():
    rng = np.random.default_rng(1)
    m, _ = random_csr(rng, 5, 0.6)
    x = rng.normal(size=(5, 2))
    w = m.weights.copy()
    proj = rng.normal(size=(5, 2))
    check_fd(lambda ww, xx: ops.total(ops.mul(spmm(m.with_weights(ww), xx), proj)), w, x)


def test_symmetric_normalize_dense_oracle_and_fd():
    rng = np.random.default_rng(2)
    m, dense = random_csr(rng, 6, 0.5)
    d = dense.sum(axis=1)
    r = np.where(d > 0, 1.0 / np.sqrt(np.where(d > 0, d, 1.0)), 0.0)
    expect = r[:, None] * dense * r[None, :]
    assert np.allclose(symmetric_normalize(m).to_dense(), expect, atol=1e-15)
    x = rng.normal(size=(6, 2))
    check_fd(lambda ww: ops.sum_squares(spmm(symmetric_normalize(m.with_weights(ww)), x)), m.weights.copy())


def test_zero_degree_rows_vanish():
    m, _ = CsrMatrix.from_coo(3, [0, 1], [1, 0], [2.0, 2.0])
    out = symmetric_normalize(m).to_dense()
    assert np.array_equal(out[2], np.zeros(3)) and np.array_equal(out[:, 2], np.zeros(3))


def test_csr_rejects_bad_input():
    with pytest.raises(ShapeError):
        CsrMatrix.from_coo(3, [0, 0], [1, 1])
    with pytest.raises(ShapeError):
        CsrMatrix.from_coo(3, [0], [3])
    with pytest.raises(ShapeError):
        spmm(CsrMatrix.from_coo(3, [0], [1])[0], np.ones((4, 2)))
    with pytest.raises(ShapeError):
        CsrMatrix(2, np.array([0, 2, 1]), np.array([0]), np.ones(1))


def test_to_scipy_roundtrip():
    m, dense = random_csr(np.random.default_rng(3), 4)
    assert np.array_equal(m.to_scipy().toarray(), sp.csr_matrix(dense).toarray())


# ------------------------------------------------------------- mlp / adam

def test_mlp_shapes_and_fd():
    p = init_mlp2(np.random.default_rng(0), 4, 3)
    assert p["W1"].shape == (4, 3) and p["W2"].shape == (3, 1) and not p["b1"].any()
    x = np.random.default_rng(1).normal(size=(5, 4))
    assert mlp2_forward(x, p).shape == (5,)
    w1 = p["W1"].copy()
    check_fd(lambda w: ops.total(mlp2_forward(x, {**p, "W1": w}, "sigmoid")), w1)


def test_adam_matches_recurrence():
    state = AdamState(lr=0.1)
    params = {"w": np.array([1.0, -2.0])}
    grads = [np.array([0.5, -1.0]), np.array([0.2, 0.3]), np.array([-0.4, 0.0])]
    w, m, v = params["w"].copy(), np.zeros(2), np.zeros(2)
    for t, g in enumerate(grads, 1):
        adam_step(state, params, {"w": g})
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w = w - 0.1 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        assert np.allclose(params["w"], w, rtol=0, atol=1e-15)
    assert state.step == 3


def test_adam_first_step_moves_by_lr():
    params = {"w": np.array([0.0, 0.0])}
    adam_step(AdamState(lr=0.01), params, {"w": np.array([3.0, -0.002])})
    assert np.allclose(params["w"], [-0.01, 0.01], atol=1e-8)


def test_adam_rejects_non_finite_without_mutation():
    state = AdamState(lr=0.1)
    params = {"a": np.ones(2), "b": np.ones(2)}
    with pytest.raises(NumericalError, match="'b'.*step 1"):
        adam_step(state, params, {"a": np.ones(2), "b": np.array([np.nan, 0.0])})
    assert state.step == 0 and np.array_equal(params["a"], np.ones(2))


# --------------------------------------------------------------- container

def test_container_roundtrip_and_deterministic(tmp_path):
    tensors = {"b": np.arange(6.0).reshape(2, 3), "a": np.array(3.5), "c": np.zeros((0, 4))}
    save_tensors(tmp_path / "x.sgt", tensors)
    save_tensors(tmp_path / "y.sgt", dict(reversed(list(tensors.items()))))
    assert (tmp_path / "x.sgt").read_bytes() == (tmp_path / "y.sgt").read_bytes()
    back = load_tensors(tmp_path / "x.sgt")
    assert sorted(back) == ["a", "b", "c"]
    for k, v in tensors.items():
        assert back[k].shape == v.shape and np.array_equal(back[k], v)
