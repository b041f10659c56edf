import numpy as np
import pytest

from delexpara import tensorcore as tc
from _oracles import OPS, gradcheck, op_case

SEEDS = range(10)


@pytest.mark.parametrize("op", OPS)
@pytest.mark.parametrize("seed", SEEDS)
def test_op_gradients_match_finite_differences(op, seed):
    build, arrays = op_case(op, np.random.default_rng([seed, OPS.index(op)]))
    gradcheck(build, arrays, seed=seed)


def test_forward_values_on_small_examples():
    a = tc.Tensor([[1.0, -2.0], [3.0, 0.5]])
    b = tc.Tensor([[2.0], [1.0]])
    np.testing.assert_allclose(tc.matmul(a, b).data, [[0.0], [6.5]])
    np.testing.assert_allclose(tc.relu(a).data, [[1.0, 0.0], [3.0, 0.5]])
    np.testing.assert_allclose(tc.softmax(tc.Tensor([0.0, np.log(3.0)])).data, [0.25, 0.75], rtol=1e-6)
    ce = tc.cross_entropy(tc.Tensor([[0.0, np.log(3.0)]]), [1])
    assert ce.item() == pytest.approx(-np.log(0.75), rel=1e-6)
    # width-3 kernel of ones over [1, 2, 3] with zero padding
    x = tc.Tensor(np.array([[1.0], [2.0], [3.0]]))
    y = tc.conv1d(x, tc.Tensor(np.ones((3, 1, 1))), tc.Tensor(np.zeros(1)))
    np.testing.assert_allclose(y.data[:, 0], [3.0, 6.0, 5.0])


def test_grad_accumulates_over_shared_inputs():
    x = tc.Tensor(np.array([2.0]), requires_grad=True)
    y = tc.tensor_sum(tc.mul(x, x))
    tc.backward(y)
    np.testing.assert_allclose(x.grad, [4.0])


@pytest.mark.parametrize("scale", [1.0, 1e3, 1e6, -1e6])
def test_softmax_is_stable(scale):
    rng = np.random.default_rng(0)
    p = tc.softmax(tc.Tensor(rng.normal(size=(6, 9)) * scale)).data
    assert np.all(np.isfinite(p)) and np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-6)


@pytest.mark.parametrize("length", range(1, 9))
def test_conv1d_keeps_length(length):
    x = tc.Tensor(np.ones((2, length, 3)))
    y = tc.conv1d(x, tc.Tensor(np.ones((3, 3, 5))), tc.Tensor(np.zeros(5)))
    assert y.shape == (2, length, 5)


def test_init_and_dropout_are_seeded():
    a = tc.xavier_uniform(np.random.default_rng(3), (4, 5), 4, 5).data
    b = tc.xavier_uniform(np.random.default_rng(3), (4, 5), 4, 5).data
    assert a.tobytes() == b.tobytes()
    x = tc.Tensor(np.ones((6, 6)))
    m1 = tc.dropout(x, 0.5, np.random.default_rng(9), True).data
    m2 = tc.dropout(x, 0.5, np.random.default_rng(9), True).data
    assert m1.tobytes() == m2.tobytes()
    assert tc.dropout(x, 0.5, None, False) is x


def test_shape_errors():
    with pytest.raises(tc.ShapeError):
        tc.matmul(tc.Tensor(np.ones((2, 3))), tc.Tensor(np.ones((2, 3))))
    with pytest.raises(tc.ShapeError):
        tc.add(tc.Tensor(np.ones((2, 3))), tc.Tensor(np.ones((4,))))
    with pytest.raises(tc.ShapeError):
        tc.embedding_lookup(tc.Tensor(np.ones((3, 2))), [3])


def test_backward_misuse():
    x = tc.Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(tc.UsageError):
        tc.backward(tc.relu(x))  # not a scalar
    with pytest.raises(tc.UsageError):
        tc.backward(tc.Tensor(1.0))
    with tc.no_grad():
        y = tc.tensor_sum(x)
    assert not y.requires_grad


def test_noam_schedule():
    d, warm, base = 128, 100, 0.35
    peak = tc.noam_rate(warm, warm, base, d)
    assert peak == pytest.approx(base * d ** -0.5 * warm ** -0.5)
    assert tc.noam_rate(50, warm, base, d) == pytest.approx(peak / 2)
    assert tc.noam_rate(400, warm, base, d) == pytest.approx(peak / 2)
    assert max(tc.noam_rate(s, warm, base, d) for s in range(1, 1000)) == pytest.approx(peak)
    with pytest.raises(ValueError):
        tc.noam_rate(0, warm, base, d)


def test_adam_matches_hand_computation():
    p = tc.Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = tc.Adam([p], beta1=0.9, beta2=0.98, eps=1e-9)
    grads = [np.array([0.5, -1.0]), np.array([0.1, 0.3])]
    m = v = np.zeros(2)
    expected = np.array([1.0, -2.0])
    for t, g in enumerate(grads, 1):
        p.grad = g.copy()
        opt.step(0.01)
        m = 0.9 * m + 0.1 * g
        v = 0.98 * v + 0.02 * g * g
        expected = expected - 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.98 ** t)) + 1e-9)
    np.testing.assert_allclose(p.data, expected, rtol=1e-12)


def test_adam_minimises_a_quadratic():
    p = tc.Tensor(np.array([3.0, -4.0]), requires_grad=True)
    opt = tc.Adam([p])
    for _ in range(500):
        opt.zero_grad()
        tc.backward(tc.tensor_sum(tc.mul(p, p)))
        opt.step(0.05)
    assert np.abs(p.data).max() < 1e-2


def test_checkpoint_roundtrip(tmp_path):
    params = {"b": np.arange(6, dtype=np.float32).reshape(2, 3), "a": np.array([1.5], dtype=np.float32)}
    tc.save_checkpoint(tmp_path, params, {"seed": 1})
    back, meta = tc.load_checkpoint(tmp_path)
    assert meta["seed"] == 1 and [t["name"] for t in meta["tensors"]] == ["a", "b"]
    for k in params:
        assert back[k].tobytes() == params[k].tobytes()
