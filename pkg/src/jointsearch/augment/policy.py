"""Learnable augmentation policy: L sub-policies of K relaxed operation stages.

A stage holds three length-#O vectors: selection logits ``z``, application
probabilities ``p`` and magnitudes ``mu``. During search a stage outputs

    X' = sum_n w_n * (b_n * O_n(X; mu_n) + (1 - b_n) * X)

with ``w`` a Gumbel-softmax sample of ``z`` and ``b_n`` a relaxed Bernoulli
sample of ``p_n``. At inference one op per stage is drawn from
Cat(softmax(z / eta)) and applied with probability ``p``.

``p`` and ``mu`` are stored unconstrained and clamped to [0, 1] when read;
gradients are zeroed outside the open interval.
"""

import json

import numpy as np

from ..autodiff import primitives as P
from ..autodiff.functional import gumbel_softmax_sample, relaxed_bernoulli
from ..autodiff.tensor import Tensor, as_tensor, no_grad, parameter
from .ops import DEFAULT_OP_SET, apply_image_op, get_op


class OperationStage:
    def __init__(self, n_ops, z=None, p=None, mu=None):
        def vec(values, fill, name):
            data = np.full(n_ops, fill, dtype=np.float32) if values is None else np.asarray(values, np.float32)
            if data.shape != (n_ops,):
                raise ValueError(f"stage {name} must have length {n_ops}, got shape {data.shape}")
            return parameter(data.copy(), name=name)

        self.z = vec(z, 0.0, "z")
        self.p = vec(p, 0.5, "p")
        self.mu = vec(mu, 0.5, "mu")

    def parameters(self):
        return [self.z, self.p, self.mu]

    def probability(self):
        return P.clamp(self.p, 0.0, 1.0, inclusive=False)

    def magnitude(self):
        return P.clamp(self.mu, 0.0, 1.0, inclusive=False)


class SubPolicy:
    def __init__(self, stages):
        self.stages = list(stages)

    def __len__(self):
        return len(self.stages)

    def parameters(self):
        return [t for s in self.stages for t in s.parameters()]


class Policy:
    """L x K grid of operation stages over a fixed op set.

    The learnable search space is continuous, ``(#O x [0,1] x [0,1])^(K L)``
    for the (op choice, probability, magnitude) of every stage, and it is
    carried by exactly ``K * L * #O * 3`` scalars.
    """

    def __init__(self, n_sub_policies=10, n_stages=2, op_set=DEFAULT_OP_SET, eta=1.0,
                 per_image_noise=False, sub_policies=None):
        if not eta > 0:
            raise ValueError(f"eta must be positive, got {eta}")
        self.op_set = tuple(op_set)
        if "cutout" in self.op_set:
            raise ValueError("cutout is applied outside the policy and cannot be searched")
        self.ops = [get_op(name) for name in self.op_set]
        self.eta = float(eta)
        self.per_image_noise = per_image_noise
        if sub_policies is None:
            if n_sub_policies < 1 or n_stages < 1:
                raise ValueError("a policy needs at least one sub-policy and one stage")
            sub_policies = [
                SubPolicy(OperationStage(len(self.ops)) for _ in range(n_stages))
                for _ in range(n_sub_policies)
            ]
        if not sub_policies:
            raise ValueError("a policy needs at least one sub-policy")
        self.sub_policies = list(sub_policies)

    @property
    def L(self):
        return len(self.sub_policies)

    @property
    def K(self):
        return len(self.sub_policies[0])

    def parameters(self):
        return [t for sp in self.sub_policies for t in sp.parameters()]

    def num_parameters(self):
        return sum(t.size for t in self.parameters())

    def stages(self):
        for l, sp in enumerate(self.sub_policies):
            for k, stage in enumerate(sp.stages):
                yield l, k, stage

    # ----------------------------------------------------------- JSON

    def to_dict(self):
        return {
            "eta": self.eta,
            "op_set": list(self.op_set),
            "sub_policies": [
                [
                    {key: [float(v) for v in getattr(stage, key).data] for key in ("z", "p", "mu")}
                    for stage in sp.stages
                ]
                for sp in self.sub_policies
            ],
        }

    def to_json(self):
        # float32 -> float64 is exact and repr() round-trips, so the text is lossless
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, doc):
        try:
            op_set = doc["op_set"]
            subs = [
                SubPolicy(OperationStage(len(op_set), st["z"], st["p"], st["mu"]) for st in sp)
                for sp in doc["sub_policies"]
            ]
            return cls(op_set=op_set, eta=doc["eta"], sub_policies=subs)
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed policy document: {exc}") from None

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _column(values, n, batch):
    """Per-op scalar (shared noise) or per-image column reshaped for broadcasting."""
    if values.ndim == 1:
        return values[n]
    return P.reshape(values[:, n], (batch, 1, 1, 1))


def apply_stage_train(x, stage, ops, eta, rng, per_image_noise=False):
    x = as_tensor(x)
    batch = x.shape[0]
    n_ops = len(ops)
    z, p = stage.z, stage.probability()
    if per_image_noise:
        z = P.reshape(z, (1, n_ops)) + Tensor(np.zeros((batch, n_ops), np.float32))
        p = P.reshape(p, (1, n_ops)) + Tensor(np.zeros((batch, n_ops), np.float32))
    weights = gumbel_softmax_sample(z, eta, rng)
    gates = relaxed_bernoulli(p, eta, rng)
    mu = stage.magnitude()
    out = None
    for n, op in enumerate(ops):
        transformed = apply_image_op(op, x, mu[n], rng=rng)
        gated = P.linear_blend(x, transformed, _column(gates, n, batch))
        term = gated * _column(weights, n, batch)
        out = term if out is None else out + term
    return out


def apply_subpolicy_train(x, sub_policy, ops, eta, rng, per_image_noise=False):
    for stage in sub_policy.stages:
        x = apply_stage_train(x, stage, ops, eta, rng, per_image_noise)
    return x


def apply_policy_train(x, policy, rng):
    """Relaxed policy transform; one sub-policy drawn uniformly per minibatch.

    Returns the transformed batch and the chosen sub-policy index.
    """
    if policy.L < 1:
        raise ValueError("empty policy")
    index = int(rng.integers(policy.L))
    out = apply_subpolicy_train(
        x, policy.sub_policies[index], policy.ops, policy.eta, rng, policy.per_image_noise
    )
    return out, index


def _softmax_rows(z, eta):
    z = np.asarray(z, dtype=np.float64) / eta
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def apply_policy_infer(x, policy, rng):
    """Hard policy transform, sampled independently per image; no gradients."""
    x = as_tensor(x)
    batch = x.shape[0]
    out = x.data.copy()
    with no_grad():
        for i in range(batch):
            img = Tensor(out[i:i + 1])
            sub = policy.sub_policies[int(rng.integers(policy.L))]
            for stage in sub.stages:
                probs = _softmax_rows(stage.z.data, policy.eta)
                n = int(rng.choice(len(policy.ops), p=probs))
                apply_p = min(max(float(stage.p.data[n]), 0.0), 1.0)
                if rng.uniform() < apply_p:
                    mu = min(max(float(stage.mu.data[n]), 0.0), 1.0)
                    j = int(rng.integers(batch))
                    partner = Tensor(x.data[j:j + 1])
                    img = apply_image_op(policy.ops[n], img, Tensor(np.float32(mu)), partner=partner)
            out[i] = img.data[0]
    return Tensor(out)


def policy_distribution_snapshot(policy):
    """(L*K) x #O matrix of noise-free selection probabilities softmax(z / eta)."""
    rows = [stage.z.data for _, _, stage in policy.stages()]
    return _softmax_rows(np.stack(rows), policy.eta)


def stage_parameter_count(n_stages, n_sub_policies, n_ops):
    return n_stages * n_sub_policies * n_ops * 3


__all__ = [
    "OperationStage",
    "Policy",
    "SubPolicy",
    "apply_policy_infer",
    "apply_policy_train",
    "apply_stage_train",
    "apply_subpolicy_train",
    "policy_distribution_snapshot",
    "stage_parameter_count",
]
