"""Compiled vs numpy kernel timings, plus one training step under each backend.

    python benchmarks/bench_kernels.py [--repeat 20] [--no-step]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from jointsearch.kernels import compiled_backend, numpy_backend

STEP_SNIPPET = """
import time
from jointsearch.arch import NetworkConfig
from jointsearch.autodiff import Rng
from jointsearch.data import PreprocessConfig, make_color_vs_shape
from jointsearch.kernels import BACKEND
from jointsearch.search import JointState, SearchConfig, train_step
ds = make_color_vs_shape(n=64, seed=7)
state = JointState(SearchConfig(L=2, K=2), NetworkConfig(n_classes=2), PreprocessConfig(pad=2, cutout_size=8))
train_step(state, ds.images, ds.labels, Rng(0, (0,)))
t = time.perf_counter()
for k in range(1, 3):
    train_step(state, ds.images, ds.labels, Rng(0, (k,)))
print(BACKEND, (time.perf_counter() - t) / 2)
"""


def cases(rng):
    x = rng.standard_normal((64, 16, 16, 16)).astype(np.float32)
    cols = numpy_backend.im2col(x, 3, 3, 1, 1, 1)
    pooled, lin = numpy_backend.maxpool_forward(x, 3, 1, 1)
    img = rng.uniform(0, 1, (64, 3, 16, 16)).astype(np.float32)
    gy, gx = np.meshgrid(np.arange(16, dtype=np.float32), np.arange(16, dtype=np.float32), indexing="ij")
    gx = np.broadcast_to(gx + 0.37, (64, 16, 16)).copy()
    gy = np.broadcast_to(gy - 0.21, (64, 16, 16)).copy()
    grad = np.ones_like(img)
    return {
        "im2col 3x3": lambda b: b.im2col(x, 3, 3, 1, 1, 1),
        "col2im 3x3": lambda b: b.col2im(cols, 16, 16, 1, 1, 1),
        "im2col 5x5 dil 2": lambda b: b.im2col(x, 5, 5, 1, 4, 2),
        "maxpool fwd": lambda b: b.maxpool_forward(x, 3, 1, 1),
        "maxpool bwd": lambda b: b.maxpool_backward(np.ones_like(pooled), lin, 16, 16),
        "grid_sample fwd": lambda b: b.grid_sample_forward(img, gx, gy),
        "grid_sample bwd": lambda b: b.grid_sample_backward(img, gx, gy, grad, True),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--no-step", action="store_true", help="skip the end-to-end step timing")
    args = parser.parse_args()
    if compiled_backend is None:
        print("compiled kernels unavailable; build with `pip install -e . --no-build-isolation`")
        return 1
    print(f"{'kernel':<20}{'numpy ms':>10}{'compiled ms':>13}{'speedup':>9}")
    for name, fn in cases(np.random.default_rng(0)).items():
        t_np = min(timeit.repeat(lambda: fn(numpy_backend), number=1, repeat=args.repeat)) * 1e3
        t_c = min(timeit.repeat(lambda: fn(compiled_backend), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<20}{t_np:>10.2f}{t_c:>13.2f}{t_np / t_c:>8.1f}x")
    if not args.no_step:
        print("\nsearch-network train_step, batch 64 at 16x16:")
        for pure in ("1", ""):
            env = dict(os.environ, JOINTSEARCH_PURE_PYTHON=pure)
            out = subprocess.run([sys.executable, "-c", STEP_SNIPPET], env=env, capture_output=True, text=True)
            if out.returncode:
                print(out.stderr)
                return 1
            backend, seconds = out.stdout.split()
            print(f"  {backend:<10}{float(seconds):.2f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
