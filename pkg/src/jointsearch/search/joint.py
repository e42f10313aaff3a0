"""Alternating first-order search over augmentation policy, architecture and weights.

Each iteration takes one validation minibatch and one training minibatch:

* validation step: augment with the relaxed policy, one backward, Adam update
  of (alpha, z, p, mu); network weights are frozen;
* training step: augment with the relaxed policy (still stochastic), one
  backward, clipped momentum-SGD update of the weights only.

The weight response to the search parameters is ignored (the current weights
stand in for the inner optimum), so no second-order term is ever formed.
"""

import hashlib
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..arch import DEFAULT_ARCH_OPS, DiscreteNetwork, NetworkConfig, SearchNetwork, alpha_snapshot, discretize
from ..augment import DEFAULT_OP_SET, Policy, policy_distribution_snapshot
from ..autodiff import Rng, Tape, Tensor, backward, backward_calls, cross_entropy, no_grad
from ..data import Pipeline, PreprocessConfig, baseline_preprocess, batch_indices
from .optim import SGD, Adam, clip_grad_norm, cosine_lr

STREAM_INIT, STREAM_ORDER, STREAM_VAL_ORDER, STREAM_VAL, STREAM_TRAIN, STREAM_FINAL = 1, 2, 3, 4, 5, 6


class NonFiniteLossError(FloatingPointError):
    pass


class SeparationError(AssertionError):
    pass


@dataclass
class SearchConfig:
    epochs: int = 5
    batch_size: int = 64
    w_lr: float = 0.025
    w_lr_min: float = 0.0
    w_momentum: float = 0.9
    w_weight_decay: float = 3e-4
    search_lr: float = 3e-4
    search_betas: tuple = (0.5, 0.999)
    search_weight_decay: float = 1e-3
    eta: float = 1.0
    L: int = 10
    K: int = 2
    grad_clip: float = 5.0
    seed: int = 0
    aug_ops: tuple = DEFAULT_OP_SET
    arch_ops: tuple = DEFAULT_ARCH_OPS
    per_image_noise: bool = False
    eval_batch_size: int = 256

    def __post_init__(self):
        self.search_betas = tuple(self.search_betas)
        self.aug_ops, self.arch_ops = tuple(self.aug_ops), tuple(self.arch_ops)
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.w_lr <= 0 or self.search_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size < 1 or self.L < 1 or self.K < 1:
            raise ValueError("batch_size, L and K must be >= 1")
        if self.eta <= 0:
            raise ValueError(f"eta must be positive, got {self.eta}")


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    lr: float = 0.025
    lr_min: float = 0.0
    momentum: float = 0.9
    weight_decay: float = 3e-4
    grad_clip: float = 5.0
    seed: int = 0
    eval_batch_size: int = 256

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")


# ---------------------------------------------------------------------- log


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    search_val_loss: float
    val_loss: float
    val_accuracy: float
    z: np.ndarray  # (L*K) x #O selection logits at the start of the epoch
    policy_dist: np.ndarray  # softmax(z / eta) of the same snapshot
    alpha: list  # alpha_snapshot rows at the start of the epoch
    seconds: float = 0.0


@dataclass
class SearchLog:
    initial_val_loss: float = float("nan")
    initial_val_accuracy: float = float("nan")
    records: list = field(default_factory=list)

    def append(self, record):
        if self.records and record.epoch != self.records[-1].epoch + 1:
            raise ValueError("search log records must be appended in epoch order")
        self.records.append(record)

    def __len__(self):
        return len(self.records)


# -------------------------------------------------------------------- state


class JointState:
    def __init__(self, config, network_config=None, preprocess=None):
        self.config = config
        self.network_config = network_config or NetworkConfig()
        self.preprocess = preprocess or PreprocessConfig()
        init = Rng(config.seed).child(STREAM_INIT)
        self.net = SearchNetwork(self.network_config, init, op_set=config.arch_ops)
        self.policy = Policy(config.L, config.K, config.aug_ops, config.eta, config.per_image_noise)
        self.w_opt = SGD(self.weights(), config.w_lr, config.w_momentum, config.w_weight_decay)
        self.search_opt = Adam(self.search_parameters(), config.search_lr, config.search_betas,
                               config.search_weight_decay)
        self.epoch = 0
        self.log = SearchLog()

    def weights(self):
        return self.net.parameters()

    def search_parameters(self):
        return self.net.alphas() + self.policy.parameters()

    def set_trainable(self, which):
        search = which == "search"
        for t in self.weights():
            t.requires_grad = not search
        for t in self.search_parameters():
            t.requires_grad = search


def checksum(tensors):
    h = hashlib.sha256()
    for t in tensors:
        h.update(t.data.tobytes())
    return h.hexdigest()


def _finite_loss(loss, phase, state, epoch, batch):
    value = float(loss.item())
    if not np.isfinite(value):
        raise NonFiniteLossError(
            f"non-finite {phase} loss ({value}) at epoch {epoch} batch {batch}; seed {state.config.seed}"
        )
    return value


def val_step(state, images, labels, rng, epoch=0, batch=0):
    """Update (alpha, z, p, mu) on a validation minibatch; weights stay fixed."""
    state.set_trainable("search")
    state.net.set_mode("search")
    pipe = Pipeline(state.preprocess, state.policy, "search")
    with Tape():
        x, _ = pipe(images, rng)
        loss = cross_entropy(state.net(x), labels)
        value = _finite_loss(loss, "validation", state, epoch, batch)
        grads = backward(loss)
    state.search_opt.step([grads.get(t) for t in state.search_parameters()])
    return value


def train_step(state, images, labels, rng, epoch=0, batch=0):
    """Clipped momentum-SGD step on the weights; search parameters stay fixed."""
    state.set_trainable("weights")
    state.net.set_mode("train")
    pipe = Pipeline(state.preprocess, state.policy, "search")
    with Tape():
        x, _ = pipe(images, rng)
        loss = cross_entropy(state.net(x), labels)
        value = _finite_loss(loss, "training", state, epoch, batch)
        grads = backward(loss)
    g = [grads[t] for t in state.weights()]
    clip_grad_norm(g, state.config.grad_clip)
    state.w_opt.step(g)
    return value


def evaluate(net, dataset, preprocess, batch_size=256):
    """Mean cross-entropy and accuracy on un-augmented inputs, running BN statistics."""
    net.set_mode("eval")
    total_loss, correct = 0.0, 0
    with no_grad():
        for start in range(0, len(dataset), batch_size):
            images = dataset.images[start:start + batch_size]
            labels = dataset.labels[start:start + batch_size]
            x = Tensor(baseline_preprocess(images, preprocess, None, training=False))
            logits = net(x)
            total_loss += float(cross_entropy(logits, labels).item()) * len(labels)
            correct += int((logits.data.argmax(axis=1) == labels).sum())
    return total_loss / len(dataset), correct / len(dataset)


class SeparationMonitor:
    """Checks that validation steps leave the weights untouched, training steps
    leave the search parameters untouched, and each step runs one backward."""

    def __init__(self):
        self.steps = 0
        self.backwards = 0

    def before(self, kind, state):
        self._kind = kind
        self._frozen = checksum(state.weights() if kind == "val" else state.search_parameters())
        self._calls = backward_calls()

    def after(self, kind, state):
        frozen = checksum(state.weights() if kind == "val" else state.search_parameters())
        if frozen != self._frozen:
            what = "weights" if kind == "val" else "search parameters"
            raise SeparationError(f"{kind} step modified the {what}")
        delta = backward_calls() - self._calls
        self.steps += 1
        self.backwards += delta
        if delta != 1:
            raise SeparationError(f"{kind} step ran {delta} backward passes")


@dataclass
class SearchResult:
    policy: Policy
    genotype: list
    log: SearchLog
    state: JointState


def search(config, train_set, val_set, network_config=None, preprocess=None, state=None,
           on_epoch=None, monitor=None):
    """Run (or resume) the alternating search for ``config.epochs`` epochs."""
    if state is None:
        state = JointState(config, network_config, preprocess)
    root = Rng(config.seed)
    bs = config.batch_size
    if state.epoch == 0 and not state.log.records:
        state.log.initial_val_loss, state.log.initial_val_accuracy = evaluate(
            state.net, val_set, state.preprocess, config.eval_batch_size)
    while state.epoch < config.epochs:
        e = state.epoch
        started = time.perf_counter()
        state.w_opt.lr = cosine_lr(config.w_lr, config.w_lr_min, e, config.epochs)
        z = np.stack([stage.z.data.astype(np.float64) for _, _, stage in state.policy.stages()])
        dist = policy_distribution_snapshot(state.policy)
        alphas = alpha_snapshot(state.net.specs)
        train_order = batch_indices(len(train_set), bs, root.child(STREAM_ORDER, e))
        val_order = batch_indices(len(val_set), bs, root.child(STREAM_VAL_ORDER, e))
        train_losses, val_losses = [], []
        for b, idx in enumerate(train_order):
            vidx = val_order[b % len(val_order)]
            if monitor:
                monitor.before("val", state)
            val_losses.append(val_step(state, val_set.images[vidx], val_set.labels[vidx],
                                       root.child(STREAM_VAL, e, b), e, b))
            if monitor:
                monitor.after("val", state)
                monitor.before("train", state)
            train_losses.append(train_step(state, train_set.images[idx], train_set.labels[idx],
                                           root.child(STREAM_TRAIN, e, b), e, b))
            if monitor:
                monitor.after("train", state)
        val_loss, val_acc = evaluate(state.net, val_set, state.preprocess, config.eval_batch_size)
        record = EpochRecord(e, float(np.mean(train_losses)), float(np.mean(val_losses)), val_loss, val_acc,
                             z, dist, alphas, time.perf_counter() - started)
        state.log.append(record)
        state.epoch += 1
        if on_epoch:
            on_epoch(state, record)
    return SearchResult(state.policy, discretize(state.net.specs), state.log, state)


# ------------------------------------------------------------ final training


def check_artifacts(genotype, policy, arch_ops, aug_ops):
    unknown = sorted({op for cell in genotype for op in cell.ops()} - set(arch_ops))
    if unknown:
        raise ValueError(f"genotype uses ops outside the configured op set: {', '.join(unknown)}")
    if tuple(policy.op_set) != tuple(aug_ops):
        extra = sorted(set(policy.op_set) ^ set(aug_ops))
        detail = f"differing ops: {', '.join(extra)}" if extra else "same ops in a different order"
        raise ValueError(f"policy op set does not match the configured augmentation ops ({detail})")


def final_train(genotype, policy, config, train_set, test_set, network_config=None, preprocess=None,
                arch_ops=DEFAULT_ARCH_OPS, aug_ops=None, on_epoch=None):
    """Train a discrete network with the learned policy and cutout; returns (net, metrics)."""
    check_artifacts(genotype, policy, arch_ops, policy.op_set if aug_ops is None else aug_ops)
    network_config = network_config or NetworkConfig()
    preprocess = preprocess or PreprocessConfig()
    root = Rng(config.seed)
    net = DiscreteNetwork(network_config, genotype, root.child(STREAM_INIT))
    opt = SGD(net.parameters(), config.lr, config.momentum, config.weight_decay)
    pipe = Pipeline(preprocess, policy, "final")
    curve = []
    for e in range(config.epochs):
        opt.lr = cosine_lr(config.lr, config.lr_min, e, config.epochs)
        net.set_mode("train")
        losses = []
        for b, idx in enumerate(batch_indices(len(train_set), config.batch_size, root.child(STREAM_ORDER, e))):
            x, _ = pipe(train_set.images[idx], root.child(STREAM_FINAL, e, b))
            with Tape():
                loss = cross_entropy(net(x), train_set.labels[idx])
                value = float(loss.item())
                if not np.isfinite(value):
                    raise NonFiniteLossError(
                        f"non-finite training loss ({value}) at epoch {e} batch {b}; seed {config.seed}")
                grads = backward(loss)
            g = [grads[t] for t in net.parameters()]
            clip_grad_norm(g, config.grad_clip)
            opt.step(g)
            losses.append(value)
        curve.append(float(np.mean(losses)))
        if on_epoch:
            on_epoch(e, curve[-1])
    test_loss, test_acc = evaluate(net, test_set, preprocess, config.eval_batch_size)
    metrics = {
        "test_accuracy": test_acc,
        "test_loss": test_loss,
        "train_loss_curve": curve,
        "epochs": config.epochs,
        "seed": config.seed,
    }
    return net, metrics


def config_dict(config):
    return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(config).items()}
