"""Training harness: data loading, optimization schedule, logging, checkpoints.

Runs Adam with a stepped learning-rate decay (divide by a fixed factor every
few epochs down to a floor). Per-iteration losses go to a CSV log; one
checkpoint is written per epoch plus a running best-validation checkpoint
selected by mean validation Dice. With the deterministic flag the whole run
is single-threaded and bit-reproducible from the seed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import torch

from .boundary import BoundaryTargets, OrganTaxonomy, SoftenConfig, extract_contours, make_targets
from .checkpoint import load_checkpoint, restore_network, restore_optimizer, save_checkpoint
from .config import ExperimentConfig, learning_rate
from .losses import LossConfig, total_loss
from .metrics import dsc
from .mhd import read_mhd
from .network import SegNet3d, build_network, predict_labels

TRAIN_LOG_COLUMNS = ("step", "epoch", "lr", "total", "seg", "clear", "blurry", "aux")


def set_determinism(seed: int, deterministic: bool) -> None:
    torch.manual_seed(seed)
    if deterministic:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)


@dataclass
class Case:
    case_id: str
    image: torch.Tensor  # (1, H, W, T) float32
    label: torch.Tensor  # (H, W, T) int64
    hard: torch.Tensor  # (1, H, W, T) float32
    soft: torch.Tensor  # (1, H, W, T) float32
    spacing: tuple[float, float, float]


def load_cases(
    manifest_path: Path | str,
    split: str,
    taxonomy: OrganTaxonomy,
    soften: SoftenConfig,
    use_soft_contour: bool = True,
) -> List[Case]:
    """Load one split into memory with its boundary supervision maps.

    With ``use_soft_contour`` off, the blurry-organ head is supervised with
    the raw (hard) contour map instead of the Gaussian-softened one.
    """
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    cases: List[Case] = []
    for entry in manifest["samples"]:
        if entry["split"] != split:
            continue
        image, spacing = read_mhd(manifest_path.parent / entry["image"])
        label, _ = read_mhd(manifest_path.parent / entry["label"])
        targets = make_targets(label, taxonomy, soften)
        if not use_soft_contour:
            soft = extract_contours(label, taxonomy.blurry_classes).astype(np.float32)
        else:
            soft = targets.soft.astype(np.float32)
        cases.append(
            Case(
                case_id=entry["id"],
                image=torch.from_numpy(image.copy()).unsqueeze(0),
                label=torch.from_numpy(label.astype(np.int64)),
                hard=torch.from_numpy(targets.hard.astype(np.float32)).unsqueeze(0),
                soft=torch.from_numpy(soft).unsqueeze(0),
                spacing=spacing,
            )
        )
    return cases


def _batched(cases: Sequence[Case], order: np.ndarray, batch_size: int):
    for start in range(0, len(order), batch_size):
        chunk = [cases[i] for i in order[start : start + batch_size]]
        images = torch.stack([c.image for c in chunk])
        labels = torch.stack([c.label for c in chunk])
        targets = BoundaryTargets(
            hard=torch.stack([c.hard for c in chunk]),
            soft=torch.stack([c.soft for c in chunk]),
        )
        yield images, labels, targets


def _effective_loss_config(cfg: ExperimentConfig) -> LossConfig:
    losses = cfg.losses
    if not cfg.ablation.use_boundary_heads:
        losses = replace(
            losses, weights=replace(losses.weights, clear=0.0, blurry=0.0)
        )
    if not cfg.ablation.use_deep_supervision:
        losses = replace(
            losses,
            weights=replace(losses.weights, aux=tuple(0.0 for _ in losses.weights.aux)),
        )
    return losses


def _effective_network_config(cfg: ExperimentConfig):
    return replace(
        cfg.network,
        use_sg=cfg.ablation.use_sg,
        deep_supervision=cfg.network.deep_supervision and cfg.ablation.use_deep_supervision,
    )


def validation_dsc(net: SegNet3d, cases: Sequence[Case], classes: Sequence[int]) -> float:
    """Mean Dice over classes and cases (the best-checkpoint selection metric)."""
    if not cases:
        return math.nan
    scores = []
    with torch.no_grad():
        for case in cases:
            outputs = net(case.image.unsqueeze(0))
            pred = predict_labels(outputs)[0]
            gt = case.label.numpy()
            scores.extend(dsc(pred, gt, c) for c in classes)
    return float(np.mean(scores))


@dataclass
class TrainResult:
    out_dir: Path
    log_path: Path
    last_checkpoint: Path
    best_checkpoint: Path
    best_val_dsc: float
    final_epoch: int
    log_rows: List[dict]


def train_experiment(
    cfg: ExperimentConfig,
    out_dir: Path | str,
    *,
    deterministic: bool = False,
    resume_from: Optional[Path | str] = None,
    manifest_path: Optional[Path | str] = None,
    epoch_checkpoints: bool = True,
) -> TrainResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    set_determinism(cfg.seed, deterministic)

    manifest_path = Path(manifest_path or cfg.manifest)
    if not manifest_path.exists():
        raise FileNotFoundError(
            f"dataset manifest {manifest_path} not found; run gen-data first"
        )
    train_cases = load_cases(
        manifest_path, "train", cfg.taxonomy, cfg.soften, cfg.ablation.use_soft_contour
    )
    if not train_cases:
        raise ValueError(f"manifest {manifest_path} holds no training cases")
    val_cases = load_cases(
        manifest_path, "val", cfg.taxonomy, cfg.soften, cfg.ablation.use_soft_contour
    )

    loss_cfg = _effective_loss_config(cfg)
    net_cfg = _effective_network_config(cfg)

    start_epoch = 0
    global_step = 0
    best_val = -math.inf
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        net = restore_network(ckpt)
        start_epoch = int(ckpt.train_state.get("epoch", -1)) + 1
        global_step = int(ckpt.train_state.get("global_step", 0))
        stored_best = ckpt.train_state.get("best_val_dsc")
        best_val = float(stored_best) if stored_best is not None else -math.inf
    else:
        net = build_network(net_cfg, cfg.seed)
    optimizer = torch.optim.Adam(
        net.parameters(), lr=cfg.optim.lr, weight_decay=cfg.optim.weight_decay
    )
    if resume_from is not None:
        restore_optimizer(ckpt, net, optimizer)

    organ_classes = sorted(cfg.taxonomy.clear_classes | cfg.taxonomy.blurry_classes)
    log_rows: List[dict] = []
    log_path = out_dir / "train_log.csv"
    best_path = out_dir / "best.npz"
    last_path = out_dir / "last.npz"

    for epoch in range(start_epoch, cfg.optim.epochs):
        lr = learning_rate(cfg.optim, epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr
        order = np.random.default_rng((cfg.seed, epoch)).permutation(len(train_cases))
        net.train()
        for images, labels, targets in _batched(train_cases, order, cfg.optim.batch_size):
            outputs = net(images)
            loss, breakdown = total_loss(outputs, labels, targets, loss_cfg)
            if not math.isfinite(breakdown["total"]):
                raise RuntimeError(
                    f"non-finite loss at step {global_step} (epoch {epoch}): {breakdown}"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            log_rows.append(
                {
                    "step": global_step,
                    "epoch": epoch,
                    "lr": lr,
                    "total": breakdown["total"],
                    "seg": breakdown["seg"],
                    "clear": breakdown["clear"],
                    "blurry": breakdown["blurry"],
                    "aux": breakdown["aux"],
                }
            )
            global_step += 1

        net.eval()
        val_dsc = validation_dsc(net, val_cases, organ_classes)
        train_state = {
            "epoch": epoch,
            "global_step": global_step,
            "best_val_dsc": None if math.isinf(best_val) else best_val,
            "val_dsc": None if math.isnan(val_dsc) else val_dsc,
        }
        if epoch_checkpoints:
            save_checkpoint(out_dir / f"epoch_{epoch:03d}.npz", net, optimizer, train_state)
        save_checkpoint(last_path, net, optimizer, train_state)
        if math.isnan(val_dsc):
            # no validation split: the best checkpoint follows the last epoch
            save_checkpoint(best_path, net, optimizer, train_state)
        elif val_dsc > best_val:
            best_val = val_dsc
            train_state["best_val_dsc"] = val_dsc
            save_checkpoint(best_path, net, optimizer, train_state)

    _write_log(log_path, log_rows)
    return TrainResult(
        out_dir=out_dir,
        log_path=log_path,
        last_checkpoint=last_path,
        best_checkpoint=best_path,
        best_val_dsc=best_val,
        final_epoch=cfg.optim.epochs - 1,
        log_rows=log_rows,
    )


def _write_log(path: Path, rows: List[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRAIN_LOG_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
