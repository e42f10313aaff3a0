"""Single-file checkpoints of a JointState (numpy .npz archive)."""

import json

import numpy as np

from ..arch import NetworkConfig
from ..data import PreprocessConfig
from .joint import EpochRecord, JointState, SearchConfig, config_dict

FORMAT_VERSION = 1


def _record_to_json(r):
    return {
        "epoch": r.epoch, "train_loss": r.train_loss, "search_val_loss": r.search_val_loss,
        "val_loss": r.val_loss, "val_accuracy": r.val_accuracy, "seconds": r.seconds,
        "z": r.z.tolist(), "policy_dist": r.policy_dist.tolist(),
        "alpha": [[c, i, j, w.tolist()] for c, i, j, w in r.alpha],
    }


def _record_from_json(d):
    alpha = [(c, i, j, np.asarray(w)) for c, i, j, w in d["alpha"]]
    return EpochRecord(d["epoch"], d["train_loss"], d["search_val_loss"], d["val_loss"], d["val_accuracy"],
                       np.asarray(d["z"]), np.asarray(d["policy_dist"]), alpha, d["seconds"])


def save_checkpoint(path, state):
    meta = {
        "format_version": FORMAT_VERSION,
        "epoch": state.epoch,
        "search_config": config_dict(state.config),
        "network_config": config_dict(state.network_config),
        "preprocess": config_dict(state.preprocess),
        "log": {
            "initial_val_loss": state.log.initial_val_loss,
            "initial_val_accuracy": state.log.initial_val_accuracy,
            "records": [_record_to_json(r) for r in state.log.records],
        },
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for name, t in state.net.named_parameters():
        arrays[f"w/{name}"] = t.data
    for name, buf in state.net.named_buffers():
        arrays[f"buf/{name}"] = buf
    for k, t in enumerate(state.search_parameters()):
        arrays[f"s/{k}"] = t.data
    for name, a in state.w_opt.state_arrays().items():
        arrays[f"sgd/{name}"] = a
    for name, a in state.search_opt.state_arrays().items():
        arrays[f"adam/{name}"] = a
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    with np.load(path) as archive:
        arrays = {k: archive[k] for k in archive.files}
    if "meta" not in arrays:
        raise ValueError(f"{path}: not a search checkpoint (no header)")
    meta = json.loads(arrays["meta"].tobytes().decode())
    if meta.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {meta.get('format_version')}")
    state = JointState(SearchConfig(**meta["search_config"]), NetworkConfig(**meta["network_config"]),
                       PreprocessConfig(**meta["preprocess"]))

    def fill(target, key):
        if key not in arrays:
            raise ValueError(f"{path}: missing array {key!r}")
        if arrays[key].shape != target.shape:
            raise ValueError(f"{path}: {key} has shape {arrays[key].shape}, expected {target.shape}")
        target[...] = arrays[key]

    for name, t in state.net.named_parameters():
        fill(t.data, f"w/{name}")
    for name, buf in state.net.named_buffers():
        fill(buf, f"buf/{name}")
    for k, t in enumerate(state.search_parameters()):
        fill(t.data, f"s/{k}")
    state.w_opt.load_state_arrays({k[4:]: v for k, v in arrays.items() if k.startswith("sgd/")})
    state.search_opt.load_state_arrays({k[5:]: v for k, v in arrays.items() if k.startswith("adam/")})
    state.epoch = meta["epoch"]
    log = meta["log"]
    state.log.initial_val_loss = log["initial_val_loss"]
    state.log.initial_val_accuracy = log["initial_val_accuracy"]
    state.log.records = [_record_from_json(r) for r in log["records"]]
    return state
