import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jointsearch.autodiff import (
    Rng,
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    UnknownOpError,
    backward,
    cross_entropy,
    gumbel_softmax_sample,
    parameter,
    primitive_forward,
    relaxed_bernoulli,
    softmax_temperature,
)
from jointsearch.autodiff import primitives as P
from jointsearch.autodiff.gradcheck import check_gradients

SEEDS = range(5)
GRAD_TOL = 1e-2


def _param(rng, *shape, low=-1.0, high=1.0):
    return parameter(rng.uniform(low, high, size=shape).astype(np.float32))


def _away_from_zero(rng, *shape, margin=0.05):
    x = rng.uniform(margin, 1.0, size=shape) * rng.choice([-1.0, 1.0], size=shape)
    return parameter(x.astype(np.float32))


def _theta_off_kinks(rng, size, margin=0.02):
    """Random near-identity affine map whose sample points all sit at least
    ``margin`` px away from pixel boundaries, where bilinear sampling has kinks."""
    c = (size - 1) / 2
    v, u = np.mgrid[0:size, 0:size] - c
    while True:
        theta = np.array([[0.93, 0.21, 0.37], [-0.18, 1.07, -0.41]]) + rng.uniform(-0.05, 0.05, (2, 3))
        gx = theta[0, 0] * u + theta[0, 1] * v + theta[0, 2] + c
        gy = theta[1, 0] * u + theta[1, 1] * v + theta[1, 2] + c
        frac = np.concatenate([gx.ravel(), gy.ravel()]) % 1.0
        if np.min(np.minimum(frac, 1 - frac)) > margin:
            return theta.astype(np.float32)


# --------------------------------------------------------------- examples


def test_add_example():
    out = primitive_forward("add", [Tensor([1, 2]), Tensor([3, 4])])
    np.testing.assert_array_equal(out.data, [4, 6])


def test_conv2d_identity_kernel():
    x = Tensor(np.random.default_rng(0).standard_normal((2, 3, 5, 4)))
    w = np.zeros((3, 3, 1, 1), dtype=np.float32)
    w[np.arange(3), np.arange(3)] = 1.0
    np.testing.assert_array_equal(P.conv2d(x, Tensor(w)).data, x.data)


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((2, 3)).astype(np.float32)
    b = rng.standard_normal((3, 2)).astype(np.float32)
    expected = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            for k in range(3):
                expected[i, j] += float(a[i, k]) * float(b[k, j])
    np.testing.assert_allclose(P.matmul(Tensor(a), Tensor(b)).data, expected, rtol=1e-6)


def test_shape_mismatch_names_dims():
    with pytest.raises(ShapeError, match=r"a.shape\[1\]=3 vs b.shape\[0\]=4"):
        P.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))
    with pytest.raises(ShapeError, match="dim -1"):
        P.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 4))))
    with pytest.raises(ShapeError, match="channels"):
        P.conv2d(Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.zeros((2, 4, 3, 3))))


def test_unknown_op_kind():
    with pytest.raises(UnknownOpError):
        primitive_forward("fft", [Tensor([1.0])])


def test_softmax_examples():
    np.testing.assert_allclose(softmax_temperature(Tensor(np.zeros(4)), 1.0).data, [0.25] * 4)
    e = math.e
    np.testing.assert_allclose(
        softmax_temperature(Tensor([1.0, 0.0]), 1.0).data, [e / (e + 1), 1 / (e + 1)], rtol=1e-6
    )
    with pytest.raises(ValueError):
        softmax_temperature(Tensor([1.0, 0.0]), 0.0)
    with pytest.raises(ValueError):
        softmax_temperature(Tensor([1.0, 0.0]), -1.0)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=20),
    st.floats(0.01, 100.0),
)
def test_softmax_sums_to_one(z, eta):
    out = softmax_temperature(Tensor(z), eta).data
    assert np.all(out >= 0)
    assert abs(float(np.sum(out, dtype=np.float64)) - 1.0) <= 1e-6


def test_gumbel_softmax_determinism():
    a = gumbel_softmax_sample(Tensor(np.zeros(3)), 1.0, Rng(123)).data
    b = gumbel_softmax_sample(Tensor(np.zeros(3)), 1.0, Rng(123)).data
    assert a.tobytes() == b.tobytes()
    assert abs(a.sum() - 1.0) < 1e-6
    with pytest.raises(ValueError):
        gumbel_softmax_sample(Tensor(np.zeros(3)), 0.0, Rng(1))


def test_gumbel_softmax_low_temperature_is_nearly_one_hot():
    rng = Rng(11)
    z = Tensor(np.zeros(3))
    peaked = sum(gumbel_softmax_sample(z, 0.01, rng).data.max() > 0.99 for _ in range(1000))
    assert peaked >= 950


def test_gumbel_softmax_high_temperature_is_nearly_uniform():
    rng = Rng(12)
    z = Tensor(np.zeros(3))
    mean = np.mean([gumbel_softmax_sample(z, 100.0, rng).data for _ in range(1000)], axis=0)
    assert np.all(np.abs(mean - 1 / 3) < 0.02)


def test_gumbel_softmax_gradient_reaches_logits():
    z = parameter(np.array([0.3, -0.2, 0.1], dtype=np.float32))
    with Tape():
        out = gumbel_softmax_sample(z, 1.0, Rng(4))
        grads = backward((out * Tensor([1.0, 2.0, 3.0])).sum())
    assert np.any(grads[z] != 0)


def test_relaxed_bernoulli_mean_at_half():
    rng = Rng(21)
    draws = relaxed_bernoulli(Tensor(np.full(10_000, 0.5)), 0.5, rng).data
    assert 0.48 <= draws.mean() <= 0.52
    assert np.all((draws > 0) & (draws < 1))


def test_relaxed_bernoulli_near_certain():
    rng = Rng(22)
    draws = relaxed_bernoulli(Tensor(np.ones(10_000)), 1.0, rng).data
    assert np.mean(draws > 0.99) >= 0.99


def test_relaxed_bernoulli_determinism_and_gradient():
    p = parameter(np.float32(0.3))
    a = relaxed_bernoulli(p, 1.0, Rng(5))
    b = relaxed_bernoulli(Tensor(0.3), 1.0, Rng(5))
    assert a.data.tobytes() == b.data.tobytes()
    grads = backward(a)
    assert grads[p] > 0


def test_cross_entropy_examples():
    assert abs(cross_entropy(Tensor(np.zeros((3, 10))), [0, 4, 9]).item() - math.log(10)) < 1e-6
    logits = np.eye(4, dtype=np.float32) * 1000
    assert cross_entropy(Tensor(logits), [0, 1, 2, 3]).item() < 1e-4
    with pytest.raises(ValueError, match="out of range"):
        cross_entropy(Tensor(np.zeros((2, 3))), [0, 3])


def test_cross_entropy_matches_log_sum_exp():
    rng = np.random.default_rng(9)
    logits = rng.standard_normal((4, 3))
    labels = [2, 0, 1, 1]
    expected = np.mean(
        [math.log(sum(math.exp(v) for v in row)) - row[y] for row, y in zip(logits, labels)]
    )
    assert abs(cross_entropy(Tensor(logits), labels).item() - expected) < 1e-5


# --------------------------------------------------------------- backward


def test_backward_sum_gives_ones():
    x = parameter(np.random.default_rng(0).standard_normal((2, 3, 4)))
    grads = backward(x.sum())
    np.testing.assert_array_equal(grads[x], np.ones((2, 3, 4)))


def test_disconnected_leaf_gets_zero_gradient():
    x = parameter(np.ones(3))
    y = parameter(np.ones(2))
    grads = backward((x * 2.0).sum())
    np.testing.assert_array_equal(grads[y], np.zeros(2))
    assert y.grad is None


def test_constant_never_receives_gradient():
    x = Tensor(np.ones(3))
    w = parameter(np.ones(3))
    backward((x * w).sum())
    assert x.grad is None


def test_backward_rejects_non_scalar_and_double_sweep():
    x = parameter(np.ones(3))
    with Tape():
        y = x * 2.0
        with pytest.raises(ShapeError):
            backward(y)
        loss = y.sum()
        backward(loss)
        with pytest.raises(TapeError):
            backward(loss)
        with pytest.raises(TapeError):
            x * 3.0


def test_backward_visits_each_node_once():
    x = parameter(np.ones((2, 2)))
    with Tape() as tape:
        h = P.relu(x * 3.0) + x
        loss = (h * h).sum()
        backward(loss)
    assert len(tape) > 0
    assert all(node.visits == 1 for node in tape.nodes)
    assert tape.frozen


def test_tensor_from_other_tape_rejected():
    x = parameter(np.ones(2))
    with Tape():
        y = x * 2.0
    with Tape():
        with pytest.raises(TapeError):
            y + 1.0


def test_tape_determinism():
    def run():
        rng = np.random.default_rng(7)
        w = parameter(rng.standard_normal((4, 3, 3, 3)))
        x = Tensor(rng.standard_normal((2, 3, 6, 6)))
        with Tape():
            out = P.max_pool(P.relu(P.conv2d(x, w, padding=1)), 3, 2, 1)
            loss = gumbel_softmax_sample(out.mean(axis=(0, 2, 3)), 1.0, Rng(3)).sum() + out.mean()
            grads = backward(loss)
        return out.data.tobytes(), grads[w].tobytes()

    assert run() == run()


# --------------------------------------------------------- gradient oracle


def _max_err(errors):
    return max(errors.values())


PRIMITIVE_CASES = {
    "add": lambda r: (lambda a, b: P.add(a, b), [_param(r, 3, 4), _param(r, 4)]),
    "sub": lambda r: (lambda a, b: P.sub(a, b), [_param(r, 2, 3), _param(r, 2, 1)]),
    "mul": lambda r: (lambda a, b: P.mul(a, b), [_param(r, 3, 4), _param(r, 3, 4)]),
    "div": lambda r: (lambda a, b: P.div(a, b), [_param(r, 3), _param(r, 3, low=0.5, high=2.0)]),
    "scalar_mul": lambda r: (lambda a: P.scalar_mul(a, -2.5), [_param(r, 5)]),
    "scalar_add": lambda r: (lambda a: P.scalar_add(a, 0.7) * a, [_param(r, 5)]),
    "matmul": lambda r: (lambda a, b: P.matmul(a, b), [_param(r, 3, 4), _param(r, 4, 2)]),
    "conv2d": lambda r: (
        lambda x, w: P.conv2d(x, w, stride=2, padding=1),
        [_param(r, 2, 3, 5, 5), _param(r, 2, 3, 3, 3)],
    ),
    "conv2d_dilated": lambda r: (
        lambda x, w: P.conv2d(x, w, padding=2, dilation=2),
        [_param(r, 1, 2, 5, 5), _param(r, 2, 2, 3, 3)],
    ),
    "conv2d_pointwise": lambda r: (lambda x, w: P.conv2d(x, w), [_param(r, 2, 3, 3, 3), _param(r, 4, 3, 1, 1)]),
    "depthwise_conv2d": lambda r: (
        lambda x, w: P.depthwise_conv2d(x, w, stride=1, padding=1),
        [_param(r, 2, 3, 4, 4), _param(r, 3, 1, 3, 3)],
    ),
    "avg_pool": lambda r: (lambda x: P.avg_pool(x, 3, 2, 1), [_param(r, 2, 2, 5, 5)]),
    "max_pool": lambda r: (
        lambda x: P.max_pool(x, 3, 1, 1),
        [parameter(r.permutation(2 * 2 * 4 * 4).reshape(2, 2, 4, 4).astype(np.float32) * 0.1)],
    ),
    "relu": lambda r: (lambda x: P.relu(x), [_away_from_zero(r, 4, 5)]),
    "sigmoid": lambda r: (lambda x: P.sigmoid(x), [_param(r, 6, low=-3, high=3)]),
    "clamp": lambda r: (
        lambda x: P.clamp(x, -0.5, 0.5),
        [parameter(r.choice([-1, 1], size=8) * r.uniform(0.05, 0.45, size=8) + r.choice([0, 0.9, -0.9], size=8))],
    ),
    "concat": lambda r: (lambda a, b: P.concat([a, b], axis=1), [_param(r, 2, 3), _param(r, 2, 2)]),
    "global_avg_pool": lambda r: (lambda x: P.global_avg_pool(x), [_param(r, 2, 3, 4, 4)]),
    "affine_grid_sample": lambda r: (
        lambda x, t: P.affine_grid_sample(x, t),
        [_param(r, 2, 2, 6, 6, low=0, high=1), parameter(_theta_off_kinks(r, 6))],
    ),
    "linear_blend": lambda r: (
        lambda a, b, w: P.linear_blend(a, b, w),
        [_param(r, 2, 3), _param(r, 2, 3), _param(r, 1, low=0, high=1)],
    ),
    "log": lambda r: (lambda x: P.log(x), [_param(r, 5, low=0.5, high=2.0)]),
    "exp": lambda r: (lambda x: P.exp(x), [_param(r, 5)]),
    "sin": lambda r: (lambda x: P.sin(x), [_param(r, 5, low=-3, high=3)]),
    "cos": lambda r: (lambda x: P.cos(x), [_param(r, 5, low=-3, high=3)]),
    "sum": lambda r: (lambda x: P.sum(x, axis=1), [_param(r, 3, 4)]),
    "mean": lambda r: (lambda x: P.mean(x, axis=(0, 2)), [_param(r, 2, 3, 4)]),
    "reshape": lambda r: (lambda x: P.reshape(x, (6, 2)) * P.reshape(x, (6, 2)), [_param(r, 3, 4)]),
    "flip": lambda r: (lambda x: P.flip(x, -1) * x, [_param(r, 2, 5)]),
    "getitem": lambda r: (lambda x: x[np.array([2, 0, 2]), 1:] * 1.5, [_param(r, 3, 4)]),
    "softmax": lambda r: (lambda x: P.softmax(x, axis=-1), [_param(r, 2, 5, low=-2, high=2)]),
    "cross_entropy": lambda r: (
        lambda x: cross_entropy(x, [0, 2, 1, 2]),
        [_param(r, 4, 3, low=-2, high=2)],
    ),
    "batch_norm": lambda r: (
        lambda x, g, b: P.batch_norm(x, g, b),
        [_param(r, 3, 2, 3, 3), _param(r, 2, low=0.5, high=1.5), _param(r, 2)],
    ),
}


@pytest.mark.parametrize("case", sorted(PRIMITIVE_CASES))
@pytest.mark.parametrize("seed", SEEDS)
def test_primitive_gradients_match_finite_differences(case, seed):
    fn, inputs = PRIMITIVE_CASES[case](np.random.default_rng(seed))
    errors = check_gradients(fn, inputs, step=1e-3, seed=seed)
    assert _max_err(errors) < GRAD_TOL, errors


@pytest.mark.parametrize("seed", SEEDS)
def test_softmax_temperature_gradient(seed):
    r = np.random.default_rng(seed)
    errors = check_gradients(lambda z: softmax_temperature(z, 0.7), [_param(r, 6)], seed=seed)
    assert _max_err(errors) < GRAD_TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_gumbel_softmax_gradient(seed):
    r = np.random.default_rng(seed)
    errors = check_gradients(lambda z: gumbel_softmax_sample(z, 1.0, Rng(seed)), [_param(r, 5)], seed=seed)
    assert _max_err(errors) < GRAD_TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_relaxed_bernoulli_gradient(seed):
    r = np.random.default_rng(seed)
    errors = check_gradients(
        lambda p: relaxed_bernoulli(p, 1.0, Rng(seed)), [_param(r, 6, low=0.1, high=0.9)], seed=seed
    )
    assert _max_err(errors) < GRAD_TOL
