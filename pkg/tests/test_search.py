import numpy as np
import pytest

from jointsearch.arch import DiscreteCell, NetworkConfig, discretize
from jointsearch.augment import Policy
from jointsearch.autodiff import Rng, Tensor
from jointsearch.data import PreprocessConfig, make_color_vs_shape, split
from jointsearch.search import (
    SGD,
    Adam,
    JointState,
    NonFiniteLossError,
    SearchConfig,
    SeparationError,
    SeparationMonitor,
    TrainConfig,
    check_artifacts,
    checksum,
    clip_grad_norm,
    cosine_lr,
    evaluate,
    final_train,
    load_checkpoint,
    save_checkpoint,
    search,
    train_step,
    val_step,
)

TINY_NET = NetworkConfig(n_cells=2, init_channels=4, n_classes=2, n_nodes=4)
TINY_PRE = PreprocessConfig(pad=2, cutout_size=4)
TINY_OPS = ("invert", "rotate", "brightness", "solarize")


def tiny_config(**overrides):
    base = dict(epochs=1, batch_size=16, L=2, K=1, aug_ops=TINY_OPS, seed=3)
    base.update(overrides)
    return SearchConfig(**base)


@pytest.fixture(scope="module")
def tiny_data():
    ds = make_color_vs_shape(n=96, seed=7)
    return split(ds, (0.4, 0.4), seed=0)


# ---------------------------------------------------------------- optimizers


def test_sgd_matches_hand_recurrence():
    w = Tensor(np.array([1.0, -2.0], np.float32))
    opt = SGD([w], lr=0.1, momentum=0.9, weight_decay=0.01)
    g = np.array([0.5, 0.25], np.float32)
    ref, v = np.array([1.0, -2.0]), np.zeros(2)
    for _ in range(3):
        opt.step([g])
        v = 0.9 * v + g + 0.01 * ref
        ref = ref - 0.1 * v
    np.testing.assert_allclose(w.data, ref, rtol=1e-6)


def test_adam_matches_hand_recurrence_and_skips_missing():
    a = Tensor(np.array([0.3], np.float32))
    b = Tensor(np.array([0.7], np.float32))
    opt = Adam([a, b], lr=0.01, betas=(0.5, 0.999), weight_decay=0.0)
    m = v = 0.0
    ref = 0.3
    for t in range(1, 4):
        g = 2.0 * t
        opt.step([np.array([g], np.float32), None])
        m = 0.5 * m + 0.5 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 0.01 * (m / (1 - 0.5**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    assert a.data[0] == pytest.approx(ref, rel=1e-5)
    assert b.data[0] == np.float32(0.7)


def test_clip_grad_norm_bounds_and_reports():
    rng = np.random.default_rng(0)
    for _ in range(20):
        grads = [rng.standard_normal(5).astype(np.float32) * 10, None, rng.standard_normal((2, 3)).astype(np.float32)]
        before = np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads if g is not None))
        reported = clip_grad_norm(grads, 5.0)
        after = np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads if g is not None))
        assert reported == pytest.approx(before, rel=1e-5)
        assert after <= 5.0 * (1 + 1e-5)
    small = [np.array([0.1, 0.2], np.float32)]
    clip_grad_norm(small, 5.0)
    np.testing.assert_array_equal(small[0], np.array([0.1, 0.2], np.float32))


def test_cosine_schedule_endpoints():
    assert cosine_lr(0.025, 0.0, 0, 10) == pytest.approx(0.025)
    assert cosine_lr(0.025, 0.001, 5, 10) == pytest.approx(0.013)
    lrs = [cosine_lr(1.0, 0.0, e, 8) for e in range(8)]
    assert all(a > b for a, b in zip(lrs, lrs[1:]))


def test_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(epochs=0)
    with pytest.raises(ValueError):
        SearchConfig(eta=0)
    with pytest.raises(ValueError):
        TrainConfig(lr=-1)


# ------------------------------------------------------------ separation


def _batch(ds, n=16):
    return ds.images[:n], ds.labels[:n]


def test_val_step_touches_only_search_parameters(tiny_data):
    train, val, _ = tiny_data
    state = JointState(tiny_config(), TINY_NET, TINY_PRE)
    w_sum, s_sum = checksum(state.weights()), checksum(state.search_parameters())
    buffers = [b.copy() for _, b in state.net.named_buffers()]
    val_step(state, *_batch(val), Rng(1))
    assert checksum(state.weights()) == w_sum
    assert checksum(state.search_parameters()) != s_sum
    # search mode normalizes with batch statistics but leaves running stats alone
    for before, (_, after) in zip(buffers, state.net.named_buffers()):
        np.testing.assert_array_equal(before, after)
    alphas_moved = any(np.any(a.data != 0) for a in state.net.alphas())
    z_moved = any(np.any(s.z.data != 0) for _, _, s in state.policy.stages())
    assert alphas_moved and z_moved


def test_train_step_touches_only_weights(tiny_data):
    train, _, _ = tiny_data
    state = JointState(tiny_config(), TINY_NET, TINY_PRE)
    w_sum, s_sum = checksum(state.weights()), checksum(state.search_parameters())
    train_step(state, *_batch(train), Rng(2))
    assert checksum(state.search_parameters()) == s_sum
    assert checksum(state.weights()) != w_sum


def test_monitor_counts_one_backward_per_step(tiny_data):
    train, val, _ = tiny_data
    monitor = SeparationMonitor()
    search(tiny_config(epochs=2), train, val, TINY_NET, TINY_PRE, monitor=monitor)
    steps_per_epoch = -(-len(train) // 16)
    assert monitor.steps == 2 * 2 * steps_per_epoch
    assert monitor.backwards == monitor.steps


def test_monitor_detects_violation(tiny_data):
    state = JointState(tiny_config(), TINY_NET, TINY_PRE)
    monitor = SeparationMonitor()
    monitor.before("val", state)
    state.weights()[0].data[...] += 1.0
    with pytest.raises(SeparationError, match="modified the weights"):
        monitor.after("val", state)


# ------------------------------------------------------------ search loop


def test_search_is_deterministic(tiny_data):
    train, val, _ = tiny_data
    a = search(tiny_config(), train, val, TINY_NET, TINY_PRE)
    b = search(tiny_config(), train, val, TINY_NET, TINY_PRE)
    assert a.policy.to_json() == b.policy.to_json()
    assert checksum(a.state.weights()) == checksum(b.state.weights())
    assert a.log.records[0].train_loss == b.log.records[0].train_loss
    c = search(tiny_config(seed=4), train, val, TINY_NET, TINY_PRE)
    assert c.policy.to_json() != a.policy.to_json()


def test_single_epoch_log_and_genotype(tiny_data):
    train, val, _ = tiny_data
    seen = []
    result = search(tiny_config(), train, val, TINY_NET, TINY_PRE, on_epoch=lambda s, r: seen.append(r.epoch))
    assert seen == [0] and len(result.log) == 1
    rec = result.log.records[0]
    assert np.isfinite([rec.train_loss, rec.search_val_loss, rec.val_loss]).all()
    assert 0.0 <= rec.val_accuracy <= 1.0
    assert rec.z.shape == (2, len(TINY_OPS))
    np.testing.assert_allclose(rec.policy_dist.sum(axis=1), 1.0, atol=1e-12)
    # the snapshot is taken before any update of the epoch
    np.testing.assert_array_equal(rec.z, 0.0)
    assert len(result.genotype) == 2 and all(isinstance(c, DiscreteCell) for c in result.genotype)
    assert result.genotype == discretize(result.state.net.specs)


def test_checkpoint_resume_matches_uninterrupted_run(tiny_data, tmp_path):
    train, val, _ = tiny_data
    straight = search(tiny_config(epochs=2), train, val, TINY_NET, TINY_PRE)
    first = search(tiny_config(epochs=1), train, val, TINY_NET, TINY_PRE)
    path = tmp_path / "ckpt.npz"
    save_checkpoint(path, first.state)
    state = load_checkpoint(path)
    state.config.epochs = 2
    resumed = search(state.config, train, val, state=state)
    assert checksum(resumed.state.weights()) == checksum(straight.state.weights())
    assert checksum(resumed.state.search_parameters()) == checksum(straight.state.search_parameters())
    assert [r.train_loss for r in resumed.log.records] == [r.train_loss for r in straight.log.records]
    assert resumed.log.initial_val_loss == straight.log.initial_val_loss


def test_checkpoint_rejects_foreign_archive(tmp_path):
    path = tmp_path / "other.npz"
    np.savez(path, x=np.zeros(2))
    with pytest.raises(ValueError, match="not a search checkpoint"):
        load_checkpoint(path)


def test_non_finite_loss_aborts_with_context(tiny_data):
    train, _, _ = tiny_data
    state = JointState(tiny_config(), TINY_NET, TINY_PRE)
    state.net.weights()[-1].data[...] = np.nan
    with pytest.raises(FloatingPointError, match="non-finite"):
        train_step(state, *_batch(train), Rng(0), epoch=2, batch=5)


def test_non_finite_loss_error_names_position():
    err = NonFiniteLossError("non-finite training loss (nan) at epoch 2 batch 5; seed 3")
    assert isinstance(err, FloatingPointError)


def test_overfit_small_batch_quickly():
    ds = make_color_vs_shape(n=16, seed=11)
    state = JointState(tiny_config(), TINY_NET, PreprocessConfig(pad=0, hflip_prob=0.0, cutout_size=0))
    for t in state.policy.parameters():
        if t.name == "p":
            t.data[...] = 0.0
    losses = [train_step(state, ds.images, ds.labels, Rng(0, (k,))) for k in range(25)]
    assert losses[-1] < 0.5 * losses[0]


# ---------------------------------------------------------- final training


def _inert_policy(ops=TINY_OPS):
    policy = Policy(1, 1, ops)
    policy.sub_policies[0].stages[0].p.data[...] = 0.0
    return policy


def test_final_train_with_inert_policy(tiny_data):
    train, val, test = tiny_data
    result = search(tiny_config(), train, val, TINY_NET, TINY_PRE)
    _, metrics = final_train(result.genotype, _inert_policy(), TrainConfig(epochs=2, batch_size=16, seed=1),
                             train, test, TINY_NET, TINY_PRE)
    assert set(metrics) >= {"test_accuracy", "train_loss_curve", "epochs", "seed"}
    assert len(metrics["train_loss_curve"]) == 2 and metrics["seed"] == 1
    assert 0.0 <= metrics["test_accuracy"] <= 1.0


def test_artifact_op_mismatch_is_rejected(tiny_data):
    train, val, _ = tiny_data
    result = search(tiny_config(), train, val, TINY_NET, TINY_PRE)
    with pytest.raises(ValueError, match="outside the configured op set"):
        check_artifacts(result.genotype, result.policy, ("zero",), TINY_OPS)
    with pytest.raises(ValueError, match="differing ops: color"):
        check_artifacts(result.genotype, result.policy, result.state.config.arch_ops, TINY_OPS[:-1] + ("color",))
    with pytest.raises(ValueError, match="different order"):
        check_artifacts(result.genotype, result.policy, result.state.config.arch_ops, TINY_OPS[::-1])


def test_evaluate_reports_loss_and_accuracy(tiny_data):
    _, val, _ = tiny_data
    state = JointState(tiny_config(), TINY_NET, TINY_PRE)
    loss, acc = evaluate(state.net, val, TINY_PRE, batch_size=7)
    full_loss, full_acc = evaluate(state.net, val, TINY_PRE, batch_size=256)
    assert loss == pytest.approx(full_loss, rel=1e-5) and acc == full_acc
