"""End-to-end acceptance checks, one verdict line per criterion.

The verdicts are collected in ``conftest.VERDICTS`` and printed in the pytest
terminal summary; each line is also printed inline (visible with ``-s``).
The desk-scale run takes roughly ten minutes on a laptop CPU.
"""

import csv
import json
import os
import re
import subprocess
import sys
import time

import numpy as np
import pytest
from conftest import VERDICTS

from jointsearch import cli
from jointsearch.arch import DEFAULT_ARCH_OPS, NetworkConfig, enumerate_search_space, search_space_size
from jointsearch.augment import DEFAULT_OP_SET, OPS, Policy, apply_image_op, stage_parameter_count
from jointsearch.autodiff import Rng, Tensor
from jointsearch.autodiff import primitives as P
from jointsearch.data import Pipeline, PreprocessConfig, baseline_preprocess, cutout, make_color_vs_shape, split
from jointsearch.search import JointState, SearchConfig, SeparationMonitor, search, train_step

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DESK_CONFIG = os.path.join(ROOT, "configs", "desk_scale.cfg")
REFERENCE_SEED = 0


def verdict(key, ok, detail):
    VERDICTS[key] = (bool(ok), detail)
    print(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ------------------------------------------------------------------ fixtures


@pytest.fixture(scope="module")
def toy_search():
    """Two-epoch search on a small network, recording every softmax mixture."""
    ds = make_color_vs_shape(n=160, seed=7)
    train, val, _ = split(ds, (0.4, 0.4), seed=0)
    config = SearchConfig(epochs=2, batch_size=16, L=2, K=2, seed=5)
    net = NetworkConfig(n_cells=2, init_channels=4, n_classes=2, n_nodes=6)
    widths = {len(config.arch_ops), len(config.aug_ops)}
    sums, original = [], P.softmax

    def recording_softmax(x, axis=-1):
        out = original(x, axis=axis)
        if out.shape[axis] in widths:
            sums.append(out.data.astype(np.float64).sum(axis=axis).ravel())
        return out

    monitor = SeparationMonitor()
    P.softmax = recording_softmax
    try:
        result = search(config, train, val, net, PreprocessConfig(pad=2, cutout_size=8), monitor=monitor)
    finally:
        P.softmax = original
    return result, monitor, np.concatenate(sums), -(-len(train) // config.batch_size)


def _cli_search(out_dir, run_name, seed, extra):
    args = ["search", "--config", DESK_CONFIG, "--seed", str(seed), "--run-name", run_name, "--quiet",
            "--set", f"output_dir={out_dir}"]
    for item in extra:
        args += ["--set", item]
    assert cli.main(args) == 0
    return os.path.join(out_dir, run_name)


@pytest.fixture(scope="module")
def twin_runs(tmp_path_factory):
    out = tmp_path_factory.mktemp("twins")
    small = ["synthetic_n=160", "n_cells=2", "init_channels=4", "batch_size=32", "epochs=2"]
    return [_cli_search(out, name, 11, small) for name in ("a", "b")]


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk")
    started = time.perf_counter()
    search_dir = _cli_search(out, "search", REFERENCE_SEED, [])
    search_seconds = time.perf_counter() - started
    code = cli.main(["train", "--config", DESK_CONFIG, "--seed", str(REFERENCE_SEED), "--run-name", "train",
                     "--quiet", "--set", f"output_dir={out}",
                     "--genotype", os.path.join(search_dir, "genotype.json"),
                     "--policy", os.path.join(search_dir, "policy.json")])
    assert code == 0
    return search_dir, os.path.join(out, "train"), search_seconds, time.perf_counter() - started


# ----------------------------------------------------------------- criteria


def test_criterion_1_gradient_oracles():
    files = [os.path.join(ROOT, "tests", f) for f in ("test_autodiff.py", "test_augment.py", "test_arch.py")]
    started = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *files,
         "-k", "gradient or finite_differences or fine_step"],
        cwd=ROOT, capture_output=True, text=True,
    )
    seconds = time.perf_counter() - started
    passed = re.search(r"(\d+) passed", proc.stdout)
    n_passed = int(passed.group(1)) if passed else 0
    ok = proc.returncode == 0 and n_passed > 0 and seconds < 300
    verdict(1, ok, f"{n_passed} gradient checks passed in {seconds:.0f}s (limit 300s); exit {proc.returncode}")


def test_criterion_2_mixture_weights_normalized(toy_search, twin_runs):
    result, _, sums, _ = toy_search
    worst = float(np.max(np.abs(sums - 1)))
    for record in result.log.records:
        worst = max(worst, float(np.max(np.abs(record.policy_dist.sum(axis=1) - 1))))
        worst = max(worst, max(abs(float(w.sum()) - 1) for *_, w in record.alpha))
    rows = 0
    for run in twin_runs:
        for row in read_csv(os.path.join(run, "policy_dist.csv")):
            probs = [float(row[name]) for name in DEFAULT_OP_SET]
            worst = max(worst, abs(sum(probs) - 1))
            rows += 1
    verdict(2, worst <= 1e-6 and rows > 0,
            f"{sums.size} sampled mixtures + {rows} policy_dist rows; max |sum - 1| = {worst:.2e} (tol 1e-6)")


def test_criterion_3_search_space_oracle():
    mismatches = [
        (n, f) for n in (4, 5, 6) for f in (1, 2, 3)
        if search_space_size(n, f) != enumerate_search_space(n, f)
    ]
    big = search_space_size(7, 8)
    verdict(3, not mismatches and big == 11520,
            f"closed form = enumeration on 9 grids (mismatches: {mismatches or 'none'}); size(7, 8) = {big}")


def test_criterion_4_step_separation(toy_search):
    result, monitor, _, steps_per_epoch = toy_search
    expected = 2 * len(result.log) * steps_per_epoch
    ok = monitor.steps == expected and monitor.backwards == monitor.steps
    verdict(4, ok, f"{monitor.steps} steps checksummed (expected {expected}), {monitor.backwards} backward passes")


def test_criterion_5_identity_magnitudes_and_inert_policy():
    worst = 0.0
    checked = [name for name in DEFAULT_OP_SET if OPS[name].identity_mu is not None]
    for seed in range(5):
        x = np.random.default_rng(seed).uniform(0, 1, (2, 3, 9 + seed, 11)).astype(np.float32)
        for name in checked:
            out = apply_image_op(name, Tensor(x), np.float32(OPS[name].identity_mu), partner=Tensor(x[::-1].copy()))
            worst = max(worst, float(np.max(np.abs(out.data - x))))
    images = make_color_vs_shape(n=32, seed=3).images
    config = PreprocessConfig(pad=2, cutout_size=8)
    policy = Policy(2, 2)
    for _, _, stage in policy.stages():
        stage.p.data[:] = 0.0
    same = True
    for seed in range(5):
        rng = Rng(seed, (6, 0))
        out, _ = Pipeline(config, policy, "final")(images, rng)
        expected = cutout(baseline_preprocess(images, config, rng.child(0), True), 8, rng.child(2))
        same &= out.data.tobytes() == expected.tobytes()
    verdict(5, worst <= 1e-5 and same,
            f"{len(checked)} ops at identity: max deviation {worst:.1e} (tol 1e-5); "
            f"inert policy == baseline + cutout: {same}")


def test_criterion_6_desk_scale_search(desk_run):
    search_dir, train_dir, search_seconds, total_seconds = desk_run
    with open(os.path.join(search_dir, "summary.json")) as fh:
        summary = json.load(fh)
    log = read_csv(os.path.join(search_dir, "search_log.csv"))
    with open(os.path.join(train_dir, "metrics.json")) as fh:
        metrics = json.load(fh)
    first, last = float(log[0]["train_loss"]), float(log[-1]["train_loss"])
    drop = 1 - last / first
    checks = {
        "search < 30 min": search_seconds < 1800,
        "val acc improves": summary["final_val_accuracy"] > summary["initial_val_accuracy"],
        "train loss drop >= 30%": drop >= 0.30,
        "test acc >= 0.90": metrics["test_accuracy"] >= 0.90,
    }
    failed = [k for k, v in checks.items() if not v]
    verdict(6, not failed,
            f"seed {REFERENCE_SEED}: search {search_seconds / 60:.1f} min, val acc "
            f"{summary['initial_val_accuracy']:.3f} -> {summary['final_val_accuracy']:.3f}, train loss drop "
            f"{drop:.1%}, test acc {metrics['test_accuracy']:.3f} after {metrics['epochs']} epochs "
            f"(total {total_seconds / 60:.1f} min){'; failed: ' + ', '.join(failed) if failed else ''}")


def test_criterion_7_determinism(twin_runs):
    a, b = twin_runs
    differing = []
    for name in ("policy_dist.csv", "genotype.json", "policy.json"):
        with open(os.path.join(a, name), "rb") as fa, open(os.path.join(b, name), "rb") as fb:
            if fa.read() != fb.read():
                differing.append(name)
    verdict(7, not differing, f"two seeded runs; differing artifacts: {differing or 'none'}")


def test_criterion_8_overfit_smoke():
    ds = make_color_vs_shape(n=1280, seed=7)
    train, _, _ = split(ds, (0.4, 0.4), seed=0)
    state = JointState(SearchConfig(L=2, K=2, seed=0), NetworkConfig(n_classes=2),
                       PreprocessConfig(pad=2, cutout_size=8))
    images, labels = train.images[:16], train.labels[:16]
    losses = [train_step(state, images, labels, Rng(0, (8, k))) for k in range(50)]
    drop = 1 - losses[-1] / losses[0]
    verdict(8, drop >= 0.5, f"L_train {losses[0]:.4f} -> {losses[-1]:.4f} over 50 steps ({drop:.1%} drop, need 50%)")


def test_criterion_9_parameter_count():
    policy = Policy(n_sub_policies=10, n_stages=2, op_set=DEFAULT_OP_SET)
    count = policy.num_parameters()
    formula = stage_parameter_count(2, 10, len(DEFAULT_OP_SET))
    verdict(9, count == formula == 960, f"K=2, L=10, #O=16: {count} learnable values, formula gives {formula}")


def test_desk_config_matches_defaults():
    values = cli.resolve_config(DESK_CONFIG)
    assert values["arch_ops"] == DEFAULT_ARCH_OPS
    assert values["aug_ops"] == DEFAULT_OP_SET
