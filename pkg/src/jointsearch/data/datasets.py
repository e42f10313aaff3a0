"""Dataset containers, the raw-binary and PNG-directory formats, and a synthetic task."""

import colorsys
import hashlib
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from ..autodiff.rng import Rng

MAGIC = b"DSET1"
_HEADER = struct.Struct("<5I")  # N, C, H, W, n_classes; little-endian uint32

# stream keys keep dataset generation and splitting independent of training draws
STREAM_SYNTHETIC, STREAM_SPLIT = 101, 102


class DatasetError(ValueError):
    pass


class BadMagicError(DatasetError):
    pass


class TruncatedError(DatasetError):
    pass


class LabelRangeError(DatasetError):
    pass


@dataclass
class Dataset:
    images: np.ndarray  # uint8, N x C x H x W
    labels: np.ndarray  # int64, N
    n_classes: int
    split_id: str = "full"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.images = np.asarray(self.images)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.dtype != np.uint8 or self.images.ndim != 4:
            raise DatasetError(f"images must be uint8 N x C x H x W, got {self.images.dtype} {self.images.shape}")
        if len(self.labels) != len(self.images):
            raise DatasetError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.n_classes < 2:
            raise DatasetError(f"need at least 2 classes, got {self.n_classes}")
        _check_labels(self.labels, self.n_classes)

    def __len__(self):
        return len(self.labels)

    @property
    def image_shape(self):
        return self.images.shape[1:]

    def subset(self, indices, split_id):
        indices = np.asarray(indices, dtype=np.int64)
        prov = dict(self.provenance, split=split_id, n=len(indices))
        return Dataset(self.images[indices], self.labels[indices], self.n_classes, split_id, prov)


def _check_labels(labels, n_classes):
    bad = np.flatnonzero((labels < 0) | (labels >= n_classes))
    if bad.size:
        raise LabelRangeError(
            f"label {int(labels[bad[0]])} at index {int(bad[0])} is outside [0, {n_classes})"
        )


# ------------------------------------------------------------------ raw binary


def write_raw(path, dataset):
    N, C, H, W = dataset.images.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(N, C, H, W, dataset.n_classes))
        fh.write(np.ascontiguousarray(dataset.images).tobytes())
        fh.write(dataset.labels.astype(np.uint8).tobytes())


def load_raw(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {blob[:len(MAGIC)]!r}, expected {MAGIC!r}")
    head_end = len(MAGIC) + _HEADER.size
    if len(blob) < head_end:
        raise TruncatedError(f"{path}: truncated header, expected {head_end} bytes, got {len(blob)}")
    N, C, H, W, n_classes = _HEADER.unpack_from(blob, len(MAGIC))
    n_pix = N * C * H * W
    expected = head_end + n_pix + N
    if len(blob) < expected:
        raise TruncatedError(f"{path}: truncated file, expected {expected} bytes, got {len(blob)}")
    if len(blob) > expected:
        raise DatasetError(f"{path}: {len(blob) - expected} unexpected trailing bytes (expected {expected})")
    images = np.frombuffer(blob, np.uint8, n_pix, head_end).reshape(N, C, H, W).copy()
    labels = np.frombuffer(blob, np.uint8, N, head_end + n_pix).astype(np.int64)
    _check_labels(labels, n_classes)
    prov = {"source": os.path.basename(str(path)), "sha256": hashlib.sha256(blob).hexdigest()}
    return Dataset(images, labels, n_classes, provenance=prov)


# ---------------------------------------------------------------- png folders


def load_png_dir(root):
    from PIL import Image

    entries = []
    for name in sorted(os.listdir(root)):
        full = os.path.join(root, name)
        if os.path.isdir(full):
            if not name.isdigit():
                raise DatasetError(f"{full}: class directories must be named by class index")
            for fname in sorted(os.listdir(full)):
                if fname.lower().endswith(".png"):
                    entries.append((int(name), os.path.join(full, fname)))
    if not entries:
        raise DatasetError(f"{root}: no <class_index>/<name>.png files found")
    digest = hashlib.sha256()
    images = []
    for _, fname in entries:
        with open(fname, "rb") as fh:
            digest.update(fh.read())
        with Image.open(fname) as im:
            arr = np.asarray(im.convert("L" if im.mode in ("1", "L", "I;16") else "RGB"))
        images.append(arr[None] if arr.ndim == 2 else arr.transpose(2, 0, 1))
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise DatasetError(f"{root}: images differ in shape: {sorted(shapes)}")
    labels = np.array([label for label, _ in entries])
    n_classes = max(int(labels.max()) + 1, 2)
    prov = {"source": os.path.basename(os.path.normpath(str(root))), "sha256": digest.hexdigest()}
    return Dataset(np.stack(images).astype(np.uint8), labels, n_classes, provenance=prov)


def write_png_dir(root, dataset):
    from PIL import Image

    for k, (img, label) in enumerate(zip(dataset.images, dataset.labels)):
        folder = os.path.join(root, str(int(label)))
        os.makedirs(folder, exist_ok=True)
        arr = img[0] if img.shape[0] == 1 else img.transpose(1, 2, 0)
        Image.fromarray(arr).save(os.path.join(folder, f"{k:06d}.png"))


# ------------------------------------------------------------ synthetic task


def make_color_vs_shape(n=512, seed=7, size=16, bar=4):
    """Two classes on a noisy background.

    Class 0 is a warm-coloured horizontal bar, class 1 a cool-coloured vertical
    bar, at a random offset; either hue or orientation alone identifies the class.
    """
    if size < bar + 2:
        raise ValueError(f"image size {size} too small for a {bar}-pixel bar")
    rng = Rng(seed, (STREAM_SYNTHETIC,))
    labels = rng.permutation(np.arange(n) % 2)
    images = np.empty((n, 3, size, size), dtype=np.float64)
    for k in range(n):
        img = rng.uniform(0.0, 0.35, size=(3, size, size))
        hue = rng.uniform(0.0, 0.1) if labels[k] == 0 else rng.uniform(0.55, 0.7)
        rgb = colorsys.hsv_to_rgb(hue, rng.uniform(0.7, 1.0), rng.uniform(0.75, 1.0))
        offset = int(rng.integers(1, size - bar))
        start = int(rng.integers(0, 3))
        length = size - start - int(rng.integers(0, 3))
        for c in range(3):
            if labels[k] == 0:
                img[c, offset:offset + bar, start:start + length] = rgb[c]
            else:
                img[c, start:start + length, offset:offset + bar] = rgb[c]
        images[k] = img
    images = np.clip(np.rint(images * 255), 0, 255).astype(np.uint8)
    prov = {"source": f"builtin:color-vs-shape(n={n},seed={seed},size={size})"}
    return Dataset(images, labels, 2, provenance=prov)


BUILTIN = {"color-vs-shape": make_color_vs_shape}
FORMATS = ("raw-binary", "png-directory", "builtin-synthetic")


def load_dataset(path, format="raw-binary", **options):  # noqa: A002
    """``path`` names the builtin generator when ``format='builtin-synthetic'``."""
    if format == "raw-binary":
        return load_raw(path)
    if format == "png-directory":
        return load_png_dir(path)
    if format == "builtin-synthetic":
        try:
            return BUILTIN[path](**options)
        except KeyError:
            raise DatasetError(f"unknown builtin dataset {path!r}; known: {', '.join(BUILTIN)}") from None
    raise DatasetError(f"unknown dataset format {format!r}; expected one of {', '.join(FORMATS)}")


def split(dataset, fractions, seed):
    """Stratified, seeded split into (train, val, test); test takes the remainder."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 2:
        raise ValueError(f"expected (train, val) fractions, got {fractions}")
    if any(f < 0 or f > 1 for f in fractions) or sum(fractions) > 1 + 1e-9:
        raise ValueError(f"fractions must lie in [0, 1] and sum to at most 1, got {fractions}")
    bounds = np.cumsum(fractions)
    rng = Rng(seed, (STREAM_SPLIT,))
    parts = ([], [], [])
    for c in range(dataset.n_classes):
        members = np.flatnonzero(dataset.labels == c)
        members = members[rng.permutation(len(members))]
        cut = [min(int(round(b * len(members))), len(members)) for b in bounds]
        parts[0].append(members[: cut[0]])
        parts[1].append(members[cut[0]: cut[1]])
        parts[2].append(members[cut[1]:])
    names = ("train", "val", "test")
    out = []
    for name, chunks in zip(names, parts):
        idx = np.sort(np.concatenate(chunks))
        sub = dataset.subset(idx, name)
        sub.provenance["split_seed"] = seed
        sub.indices = idx
        out.append(sub)
    return tuple(out)


def batch_indices(n, batch_size, rng, shuffle=True, drop_last=False):
    order = rng.permutation(n) if shuffle else np.arange(n)
    stop = n - n % batch_size if drop_last else n
    return [order[i:i + batch_size] for i in range(0, stop, batch_size)]
