"""Fixed preprocessing around the learned policy: crop/flip, normalize, cutout."""

from dataclasses import dataclass

import numpy as np

from ..augment.policy import apply_policy_infer, apply_policy_train
from ..autodiff.tensor import Tensor

# child-stream keys, one per randomized pipeline stage
STAGE_BASELINE, STAGE_POLICY, STAGE_CUTOUT = 0, 1, 2


@dataclass
class PreprocessConfig:
    pad: int = 4
    crop: tuple = None  # (H, W); defaults to the input size
    hflip_prob: float = 0.5
    mean: tuple = (0.5, 0.5, 0.5)
    std: tuple = (0.5, 0.5, 0.5)
    cutout_size: int = 16

    def __post_init__(self):
        if self.pad < 0:
            raise ValueError(f"pad must be >= 0, got {self.pad}")
        if not 0.0 <= self.hflip_prob <= 1.0:
            raise ValueError(f"hflip_prob must lie in [0, 1], got {self.hflip_prob}")
        if len(self.mean) != len(self.std) or any(s <= 0 for s in self.std):
            raise ValueError("mean and std need one entry per channel and std > 0")
        if self.cutout_size < 0:
            raise ValueError(f"cutout_size must be >= 0, got {self.cutout_size}")


def baseline_preprocess(batch, config, rng, training, normalize=True):
    """uint8 B x C x H x W -> float32 in [0, 1] (or normalized)."""
    batch = np.asarray(batch)
    if batch.dtype != np.uint8:
        raise TypeError(f"baseline preprocessing expects uint8 pixels, got {batch.dtype}")
    x = batch.astype(np.float32) / np.float32(255)
    if training:
        x = _crop_flip(x, config, rng)
    return normalize_batch(x, config) if normalize else x


def _crop_flip(x, config, rng):
    B, C, H, W = x.shape
    ch, cw = config.crop or (H, W)
    p = config.pad
    if ch > H + 2 * p or cw > W + 2 * p:
        raise ValueError(f"crop {ch}x{cw} larger than padded image {H + 2 * p}x{W + 2 * p}")
    padded = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    oy = rng.integers(0, H + 2 * p - ch + 1, size=B)
    ox = rng.integers(0, W + 2 * p - cw + 1, size=B)
    flips = rng.uniform(size=B) < config.hflip_prob
    out = np.empty((B, C, ch, cw), dtype=np.float32)
    for b in range(B):
        img = padded[b, :, oy[b]:oy[b] + ch, ox[b]:ox[b] + cw]
        out[b] = img[..., ::-1] if flips[b] else img
    return out


def _channel_constants(config, C):
    if len(config.mean) != C:
        raise ValueError(f"normalization has {len(config.mean)} channels, batch has {C}")
    mean = np.asarray(config.mean, np.float32).reshape(1, C, 1, 1)
    std = np.asarray(config.std, np.float32).reshape(1, C, 1, 1)
    return mean, std


def normalize_batch(x, config):
    """Works on arrays and on Tensors (keeping the graph)."""
    mean, std = _channel_constants(config, x.shape[1])
    if isinstance(x, Tensor):
        return (x - Tensor(mean)) * Tensor(1 / std)
    return ((x - mean) * (1 / std)).astype(np.float32)


def cutout_mask(shape, size, rng):
    B, C, H, W = shape
    if size < 0 or size > min(H, W):
        raise ValueError(f"cutout size {size} outside [0, {min(H, W)}]")
    mask = np.ones((B, 1, H, W), dtype=np.float32)
    if size == 0:
        return mask
    cy = rng.integers(0, H, size=B)
    cx = rng.integers(0, W, size=B)
    for b in range(B):
        y0, x0 = cy[b] - size // 2, cx[b] - size // 2
        mask[b, :, max(y0, 0):max(y0 + size, 0), max(x0, 0):max(x0 + size, 0)] = 0
    return mask


def cutout(batch, size, rng):
    """Zero one size x size square per image, centre uniform, clipped at borders."""
    data = batch.data if isinstance(batch, Tensor) else np.asarray(batch)
    mask = cutout_mask(data.shape, size, rng)
    if isinstance(batch, Tensor):
        return batch * Tensor(mask)
    return data * mask


def expected_cutout_area(H, W, size):
    """Closed-form mean zeroed-pixel count for a uniformly placed, clipped square."""

    def mean_extent(n):
        centers = np.arange(n)
        lo = np.maximum(centers - size // 2, 0)
        hi = np.minimum(centers - size // 2 + size, n)
        return np.maximum(hi - lo, 0).mean()

    return float(mean_extent(H) * mean_extent(W)) if size else 0.0


class Pipeline:
    """baseline -> policy -> normalize (-> cutout in final training).

    ``mode='search'`` uses the relaxed, differentiable policy transform;
    ``mode='final'`` samples discrete ops per image and adds cutout.
    ``hooks`` is an optional callable receiving each stage name as it runs.
    """

    def __init__(self, config, policy=None, mode="search", hooks=None):
        if mode not in ("search", "final", "eval"):
            raise ValueError(f"unknown pipeline mode {mode!r}")
        self.config, self.policy, self.mode, self.hooks = config, policy, mode, hooks

    def _mark(self, stage):
        if self.hooks is not None:
            self.hooks(stage)

    def __call__(self, images, rng):
        """Returns (network input Tensor, sub-policy index or None)."""
        if self.mode == "eval":
            self._mark("baseline")
            self._mark("normalize")
            return Tensor(baseline_preprocess(images, self.config, rng, training=False)), None
        self._mark("baseline")
        x = Tensor(baseline_preprocess(images, self.config, rng.child(STAGE_BASELINE), True, normalize=False))
        index = None
        if self.policy is not None:
            self._mark("policy")
            prng = rng.child(STAGE_POLICY)
            if self.mode == "search":
                x, index = apply_policy_train(x, self.policy, prng)
            else:
                x = apply_policy_infer(x, self.policy, prng)
        self._mark("normalize")
        x = normalize_batch(x, self.config)
        if self.mode == "final" and self.config.cutout_size:
            self._mark("cutout")
            x = cutout(x, self.config.cutout_size, rng.child(STAGE_CUTOUT))
        return x, index


__all__ = [
    "Pipeline", "PreprocessConfig", "baseline_preprocess", "cutout", "cutout_mask",
    "expected_cutout_area", "normalize_batch",
]
