"""Command-line front end: search, train, eval, export-dist, space.

Configuration is a flat ``key = value`` text file (``#`` starts a comment)
plus ``--set key=value`` overrides. Exit codes: 0 success, 2 usage or
configuration error, 3 numerical abort.
"""

import argparse
import csv
import datetime
import difflib
import io
import json
import os
import sys
from dataclasses import fields

import numpy as np

from .arch import (
    DEFAULT_ARCH_OPS,
    DiscreteNetwork,
    GenotypeError,
    NetworkConfig,
    genotype_parse,
    genotype_serialize,
    search_space_size,
)
from .augment import DEFAULT_OP_SET, Policy, stage_parameter_count
from .autodiff import Rng
from .data import Dataset, DatasetError, PreprocessConfig, load_dataset, split
from .search import (
    JointState,
    SearchConfig,
    TrainConfig,
    evaluate,
    final_train,
    load_checkpoint,
    save_checkpoint,
    search,
)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

# Magnitudes quoted in the literature for the separate and combined search spaces.
REFERENCE_COUNTS = {
    "enas": ("ENAS architecture space", "1.3e11"),
    "autoaugment": ("AutoAugment policy space", "2.9e32"),
    "joint": ("ENAS x AutoAugment combined", "3.8e43"),
}


class UsageError(Exception):
    pass


# --------------------------------------------------------------- config schema


def _str_tuple(text):
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _num_tuple(cast):
    def parse(text):
        return tuple(cast(t) for t in _str_tuple(text))

    return parse


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


_CASTS = {int: int, float: float, bool: _bool, str: str}

# key -> (parser, default, owner). Owners map keys onto the config objects.
SCHEMA = {}


def _add(owner, key, parser, default, attr=None):
    SCHEMA[key] = (parser, default, owner, attr or key)


for f in fields(SearchConfig):
    if f.name in ("seed", "aug_ops", "arch_ops"):
        continue
    default = getattr(SearchConfig(), f.name)
    parser = _num_tuple(float) if f.name == "search_betas" else _CASTS[type(default)]
    _add("search", f.name, parser, default)
_add("search", "aug_ops", _str_tuple, DEFAULT_OP_SET)
_add("search", "arch_ops", _str_tuple, DEFAULT_ARCH_OPS)

for f in fields(TrainConfig):
    if f.name == "seed":
        continue
    default = getattr(TrainConfig(), f.name)
    _add("train", f"train_{f.name}", _CASTS[type(default)], default, f.name)

_add("network", "n_cells", int, 4)
_add("network", "init_channels", int, 16)
_add("network", "n_nodes", int, 6)
_add("network", "reduction_positions", _num_tuple(int), None)
_add("network", "stem_multiplier", int, 3)

_add("preprocess", "pad", int, 4)
_add("preprocess", "crop", _num_tuple(int), None)
_add("preprocess", "hflip_prob", float, 0.5)
_add("preprocess", "mean", _num_tuple(float), (0.5, 0.5, 0.5))
_add("preprocess", "std", _num_tuple(float), (0.5, 0.5, 0.5))
_add("preprocess", "cutout_size", int, 16)

_add("data", "dataset", str, "color-vs-shape")
_add("data", "dataset_format", str, "builtin-synthetic")
_add("data", "synthetic_n", int, 1280)
_add("data", "synthetic_seed", int, 7)
_add("data", "synthetic_size", int, 16)
_add("data", "split_train", float, 0.4)
_add("data", "split_val", float, 0.4)
_add("data", "split_seed", int, 0)

_add("run", "output_dir", str, "runs")


def _unknown_key(key):
    close = difflib.get_close_matches(key, SCHEMA, n=1)
    hint = f" (did you mean {close[0]!r}?)" if close else ""
    return UsageError(f"unknown config key {key!r}{hint}")


def _parse_value(key, text):
    parser = SCHEMA[key][0]
    if text.strip().lower() in ("", "none", "default") and SCHEMA[key][1] is None:
        return None
    try:
        return parser(text)
    except ValueError as exc:
        raise UsageError(f"bad value for {key!r}: {exc}") from None


def read_config_text(text, source="<config>"):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{source} line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise UsageError(f"{source} line {lineno}: {_unknown_key(key)}")
        values[key] = _parse_value(key, value)
    return values


def resolve_config(config_path=None, overrides=()):
    values = {key: spec[1] for key, spec in SCHEMA.items()}
    if config_path:
        try:
            with open(config_path) as fh:
                values.update(read_config_text(fh.read(), config_path))
        except OSError as exc:
            raise UsageError(f"cannot read config {config_path}: {exc.strerror}") from None
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        if key not in SCHEMA:
            raise _unknown_key(key)
        values[key] = _parse_value(key, value)
    return values


def format_config(values, seed=None):
    out = io.StringIO()
    if seed is not None:
        out.write(f"seed = {seed}\n")
    for key, value in values.items():
        if isinstance(value, tuple):
            value = ", ".join(str(v) for v in value)
        out.write(f"{key} = {'none' if value is None else value}\n")
    return out.getvalue()


def _section(values, owner):
    return {spec[3]: values[key] for key, spec in SCHEMA.items() if spec[2] == owner}


def build_configs(values, seed, n_classes, image_shape):
    try:
        search_cfg = SearchConfig(seed=seed, **_section(values, "search"))
        train_cfg = TrainConfig(seed=seed, **_section(values, "train"))
        net = _section(values, "network")
        net_cfg = NetworkConfig(n_classes=n_classes, in_channels=image_shape[0], **net)
        pre = {k: v for k, v in _section(values, "preprocess").items()}
        if len(pre["mean"]) != image_shape[0]:
            raise ValueError(f"mean/std have {len(pre['mean'])} channels but images have {image_shape[0]}")
        pre_cfg = PreprocessConfig(**pre)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None
    return search_cfg, train_cfg, net_cfg, pre_cfg


def load_splits(values):
    fmt = values["dataset_format"]
    try:
        if fmt == "builtin-synthetic":
            ds = load_dataset(values["dataset"], fmt, n=values["synthetic_n"], seed=values["synthetic_seed"],
                              size=values["synthetic_size"])
        else:
            ds = load_dataset(values["dataset"], fmt)
        return ds, split(ds, (values["split_train"], values["split_val"]), values["split_seed"])
    except FileNotFoundError as exc:
        raise UsageError(f"dataset not found: {exc.filename}") from None
    except (DatasetError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def make_run_dir(values, command, run_name=None):
    name = run_name or f"{command}-{datetime.datetime.now().strftime('%Y%m%d-%H%M%S-%f')}"
    path = os.path.join(values["output_dir"], name)
    os.makedirs(path, exist_ok=True)
    return path


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


# ---------------------------------------------------------------- CSV writers


def _csv_text(header, rows):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return out.getvalue()


def search_log_csv(log):
    rows = [[r.epoch, repr(r.train_loss), repr(r.search_val_loss), repr(r.val_loss), repr(r.val_accuracy)]
            for r in log.records]
    return _csv_text(["epoch", "train_loss", "search_val_loss", "val_loss", "val_accuracy"], rows)


def z_trace_csv(log, policy):
    rows = []
    for r in log.records:
        for row, (l, k, _) in zip(r.z, policy.stages()):
            rows.append([r.epoch, l, k, repr(policy.eta)] + [repr(float(v)) for v in row])
    return _csv_text(["epoch", "sub_policy", "stage", "eta"] + list(policy.op_set), rows)


def alpha_log_csv(log, op_set):
    rows = [[r.epoch, c, i, j] + [repr(float(v)) for v in w] for r in log.records for c, i, j, w in r.alpha]
    return _csv_text(["epoch", "cell", "from", "to"] + list(op_set), rows)


def timings_csv(log):
    return _csv_text(["epoch", "seconds"], [[r.epoch, f"{r.seconds:.3f}"] for r in log.records])


def export_dist(z_trace_text, source="z_trace.csv"):
    """Selection probabilities softmax(z / eta) for every logged (epoch, sub-policy, stage)."""
    lines = z_trace_text.splitlines()
    if not lines:
        raise UsageError(f"{source}: empty log")
    header = next(csv.reader([lines[0]]))
    if header[:4] != ["epoch", "sub_policy", "stage", "eta"] or len(header) < 5:
        raise UsageError(f"{source} line 1: unexpected header {lines[0]!r}")
    ops = header[4:]
    rows = []
    for lineno, fields_ in enumerate(csv.reader(lines[1:]), 2):
        if len(fields_) != len(header):
            raise UsageError(f"{source} line {lineno}: expected {len(header)} fields, got {len(fields_)}")
        try:
            epoch, sub, stage = (int(v) for v in fields_[:3])
            eta = float(fields_[3])
            z = np.array([float(v) for v in fields_[4:]], dtype=np.float64)
        except ValueError as exc:
            raise UsageError(f"{source} line {lineno}: {exc}") from None
        if not (eta > 0 and np.all(np.isfinite(z))):
            raise UsageError(f"{source} line {lineno}: non-finite logits or non-positive eta")
        e = np.exp((z - z.max()) / eta)
        rows.append([epoch, sub, stage] + [repr(float(v)) for v in e / e.sum()])
    return _csv_text(["epoch", "sub_policy", "stage"] + ops, rows)


# ------------------------------------------------------------------ commands


def _save_weights(path, net):
    arrays = {f"w/{n}": t.data for n, t in net.named_parameters()}
    arrays.update({f"buf/{n}": b for n, b in net.named_buffers()})
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def _load_weights(path, net):
    try:
        with np.load(path) as archive:
            arrays = {k: archive[k] for k in archive.files}
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read weights {path}: {exc}") from None
    items = [(f"w/{n}", t.data) for n, t in net.named_parameters()]
    items += [(f"buf/{n}", b) for n, b in net.named_buffers()]
    for key, target in items:
        if key not in arrays or arrays[key].shape != target.shape:
            raise UsageError(f"weights {path} do not match the genotype/config (at {key})")
        target[...] = arrays[key]


def _read_text(path, what):
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {what} {path}: {exc.strerror}") from None


def cmd_search(args):
    values = resolve_config(args.config, args.set)
    if args.resume:
        state = load_checkpoint(args.resume)
        if state.config.seed != args.seed:
            raise UsageError(f"--seed {args.seed} differs from the checkpoint seed {state.config.seed}")
    ds, (train_set, val_set, _) = load_splits(values)
    search_cfg, _, net_cfg, pre_cfg = build_configs(values, args.seed, ds.n_classes, ds.image_shape)
    if args.resume:
        state.config.epochs = max(search_cfg.epochs, state.epoch)
        search_cfg = state.config
    else:
        state = JointState(search_cfg, net_cfg, pre_cfg)
    run_dir = make_run_dir(values, "search", args.run_name)
    _write(os.path.join(run_dir, "config.txt"), format_config(values, args.seed))

    def flush(st):
        _write(os.path.join(run_dir, "search_log.csv"), search_log_csv(st.log))
        z_text = z_trace_csv(st.log, st.policy)
        _write(os.path.join(run_dir, "z_trace.csv"), z_text)
        _write(os.path.join(run_dir, "policy_dist.csv"), export_dist(z_text))
        _write(os.path.join(run_dir, "alpha_log.csv"), alpha_log_csv(st.log, st.config.arch_ops))
        _write(os.path.join(run_dir, "timings.csv"), timings_csv(st.log))

    def on_epoch(st, record):
        flush(st)
        save_checkpoint(os.path.join(run_dir, "checkpoint.npz"), st)
        if not args.quiet:
            print(f"epoch {record.epoch}: train_loss {record.train_loss:.4f} val_loss {record.val_loss:.4f} "
                  f"val_acc {record.val_accuracy:.4f} ({record.seconds:.1f}s)", flush=True)

    try:
        result = search(search_cfg, train_set, val_set, net_cfg, pre_cfg, state=state, on_epoch=on_epoch)
    except FloatingPointError as exc:
        dump = os.path.join(run_dir, "abort_state.npz")
        save_checkpoint(dump, state)
        print(f"numerical abort: {exc}; state written to {dump}", file=sys.stderr)
        return EXIT_NUMERIC
    flush(result.state)
    _write(os.path.join(run_dir, "policy.json"), result.policy.to_json())
    _write(os.path.join(run_dir, "genotype.json"), genotype_serialize(result.genotype))
    summary = {
        "initial_val_loss": result.log.initial_val_loss,
        "initial_val_accuracy": result.log.initial_val_accuracy,
        "final_val_loss": result.log.records[-1].val_loss,
        "final_val_accuracy": result.log.records[-1].val_accuracy,
        "epochs": len(result.log),
        "seed": args.seed,
    }
    _write(os.path.join(run_dir, "summary.json"), json.dumps(summary, indent=1))
    print(run_dir)
    return EXIT_OK


def _load_artifacts(args, values):
    genotype_text = _read_text(args.genotype, "genotype")
    try:
        genotype = genotype_parse(genotype_text)
    except GenotypeError as exc:
        raise UsageError(f"{args.genotype}: {exc}") from None
    policy = None
    if getattr(args, "policy", None):
        try:
            policy = Policy.from_json(_read_text(args.policy, "policy"))
        except (ValueError, KeyError) as exc:
            raise UsageError(f"{args.policy}: {exc}") from None
    return genotype, policy


def _merge(a, b, split_id):
    return Dataset(np.concatenate([a.images, b.images]), np.concatenate([a.labels, b.labels]), a.n_classes,
                   split_id, dict(a.provenance, split=split_id))


def cmd_train(args):
    values = resolve_config(args.config, args.set)
    genotype, policy = _load_artifacts(args, values)
    ds, (train_set, val_set, test_set) = load_splits(values)
    search_cfg, train_cfg, net_cfg, pre_cfg = build_configs(values, args.seed, ds.n_classes, ds.image_shape)
    run_dir = make_run_dir(values, "train", args.run_name)
    _write(os.path.join(run_dir, "config.txt"), format_config(values, args.seed))

    def on_epoch(e, loss):
        if not args.quiet:
            print(f"epoch {e}: train_loss {loss:.4f}", flush=True)

    try:
        net, metrics = final_train(genotype, policy, train_cfg, _merge(train_set, val_set, "train+val"), test_set,
                                   net_cfg, pre_cfg, search_cfg.arch_ops, search_cfg.aug_ops, on_epoch)
    except FloatingPointError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _save_weights(os.path.join(run_dir, "weights.npz"), net)
    _write(os.path.join(run_dir, "metrics.json"), json.dumps(metrics, indent=1))
    print(f"test_accuracy {metrics['test_accuracy']:.4f}")
    print(run_dir)
    return EXIT_OK


def cmd_eval(args):
    values = resolve_config(args.config, args.set)
    genotype, _ = _load_artifacts(args, values)
    ds, (_, _, test_set) = load_splits(values)
    _, _, net_cfg, pre_cfg = build_configs(values, 0, ds.n_classes, ds.image_shape)
    try:
        net = DiscreteNetwork(net_cfg, genotype, Rng(0))
    except (ValueError, KeyError) as exc:
        raise UsageError(str(exc)) from None
    _load_weights(args.weights, net)
    if len(test_set) == 0:
        raise UsageError("the configured split leaves no test examples")
    try:
        loss, acc = evaluate(net, test_set, pre_cfg)
    except FloatingPointError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps({"test_accuracy": acc, "test_loss": loss, "n": len(test_set)}))
    return EXIT_OK


def cmd_export_dist(args):
    log_dir = args.log_dir
    source = os.path.join(log_dir, "z_trace.csv") if os.path.isdir(log_dir) else log_dir
    text = export_dist(_read_text(source, "search log"), source)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        out = args.out or os.path.join(os.path.dirname(source), "policy_dist.csv")
        _write(out, text)
        print(out)
    return EXIT_OK


def cmd_space(args):
    try:
        arch = search_space_size(args.nodes, args.ops)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(f"architecture wirings x op pairs (N={args.nodes}, |F|={args.ops}): {arch}")
    params = stage_parameter_count(args.stages, args.sub_policies, args.aug_ops)
    print(f"policy parameters (K={args.stages}, L={args.sub_policies}, #O={args.aug_ops}): {params}")
    if args.reference:
        for label, value in REFERENCE_COUNTS.values():
            print(f"reference: {label}: about {value}")
    return EXIT_OK


# ------------------------------------------------------------------- parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser():
    parser = _Parser(prog="jointsearch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed_required):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--seed", type=int, required=seed_required)
        p.add_argument("--run-name", help="output subdirectory (default: timestamped)")
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("search", help="joint policy + architecture search")
    common(p, True)
    p.add_argument("--resume", help="checkpoint.npz to continue from")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("train", help="train the derived architecture with the learned policy")
    common(p, True)
    p.add_argument("--genotype", required=True)
    p.add_argument("--policy", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="test accuracy of trained weights")
    common(p, False)
    p.add_argument("--genotype", required=True)
    p.add_argument("--weights", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-dist", help="policy selection probabilities per epoch as CSV")
    p.add_argument("log_dir", help="search run directory or z_trace.csv")
    p.add_argument("--out", help="output path, '-' for stdout")
    p.set_defaults(func=cmd_export_dist)

    p = sub.add_parser("space", help="search-space and parameter counts")
    p.add_argument("--nodes", type=int, default=6)
    p.add_argument("--ops", type=int, default=len(DEFAULT_ARCH_OPS))
    p.add_argument("--sub-policies", type=int, default=10)
    p.add_argument("--stages", type=int, default=2)
    p.add_argument("--aug-ops", type=int, default=len(DEFAULT_OP_SET))
    p.add_argument("--reference", action="store_true", help="also print literature magnitudes")
    p.set_defaults(func=cmd_space)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
