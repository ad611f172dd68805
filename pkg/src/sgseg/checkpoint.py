"""Checkpoint archive: one .npz file holding parameters, optimizer state and config.

Schema (all keys inside a single uncompressed NumPy .npz archive):

  meta/format             "sgseg-checkpoint-v1"
  meta/network_config     network config as a JSON string
  meta/train_state        JSON string: epoch, global_step, best_val_dsc
  param/<name>            one array per parameter, named by its state-dict key
  adam/<name>/step        Adam per-parameter step counters (present after training)
  adam/<name>/exp_avg     first-moment estimate
  adam/<name>/exp_avg_sq  second-moment estimate

Arrays round-trip bit-exactly, so reloading a checkpoint reproduces forward
passes and resumed optimization exactly in deterministic mode.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import numpy as np
import torch

from .network import NetworkConfig, SegNet3d, build_network

FORMAT_TAG = "sgseg-checkpoint-v1"


@dataclass
class Checkpoint:
    config: NetworkConfig
    params: Dict[str, np.ndarray]
    adam: Optional[Dict[str, Dict[str, np.ndarray]]] = None
    train_state: dict = field(default_factory=dict)


def save_checkpoint(
    path: Path | str,
    net: SegNet3d,
    optimizer: Optional[torch.optim.Adam] = None,
    train_state: Optional[dict] = None,
) -> None:
    arrays: Dict[str, np.ndarray] = {
        "meta/format": np.str_(FORMAT_TAG),
        "meta/network_config": np.str_(net.cfg.to_json()),
        "meta/train_state": np.str_(json.dumps(train_state or {}, sort_keys=True)),
    }
    for name, p in net.state_dict().items():
        arrays[f"param/{name}"] = p.detach().cpu().numpy()
    if optimizer is not None:
        names = [n for n, _ in net.named_parameters()]
        state = optimizer.state_dict()["state"]
        for idx, name in enumerate(names):
            if idx not in state:
                continue
            entry = state[idx]
            arrays[f"adam/{name}/step"] = np.asarray(entry["step"].detach().cpu())
            arrays[f"adam/{name}/exp_avg"] = entry["exp_avg"].detach().cpu().numpy()
            arrays[f"adam/{name}/exp_avg_sq"] = entry["exp_avg_sq"].detach().cpu().numpy()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: Path | str) -> Checkpoint:
    with np.load(path) as archive:
        if str(archive["meta/format"]) != FORMAT_TAG:
            raise ValueError(
                f"{path}: not a {FORMAT_TAG} archive (found {archive['meta/format']!r})"
            )
        config = NetworkConfig.from_json(str(archive["meta/network_config"]))
        train_state = json.loads(str(archive["meta/train_state"]))
        params: Dict[str, np.ndarray] = {}
        adam: Dict[str, Dict[str, np.ndarray]] = {}
        for key in archive.files:
            if key.startswith("param/"):
                params[key[len("param/") :]] = archive[key]
            elif key.startswith("adam/"):
                name, kind = key[len("adam/") :].rsplit("/", 1)
                adam.setdefault(name, {})[kind] = archive[key]
    return Checkpoint(
        config=config, params=params, adam=adam or None, train_state=train_state
    )


def restore_network(ckpt: Checkpoint) -> SegNet3d:
    """Materialize the stored network; parameters match the archive bit for bit."""
    net = build_network(ckpt.config, seed=0)
    tensors = {k: torch.from_numpy(np.array(v)) for k, v in ckpt.params.items()}
    net.load_state_dict(tensors)
    return net


def restore_optimizer(
    ckpt: Checkpoint, net: SegNet3d, optimizer: torch.optim.Adam
) -> None:
    """Load Adam moments/steps saved by name back into a freshly built optimizer."""
    if ckpt.adam is None:
        return
    names = [n for n, _ in net.named_parameters()]
    state_dict = optimizer.state_dict()
    for idx, name in enumerate(names):
        saved = ckpt.adam.get(name)
        if saved is None:
            continue
        state_dict["state"][idx] = {
            "step": torch.from_numpy(np.array(saved["step"])),
            "exp_avg": torch.from_numpy(np.array(saved["exp_avg"])),
            "exp_avg_sq": torch.from_numpy(np.array(saved["exp_avg_sq"])),
        }
    optimizer.load_state_dict(state_dict)
