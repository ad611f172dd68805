"""Inference over a dataset split plus metric reports and slice overlays."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .boundary import extract_contours
from .checkpoint import load_checkpoint, restore_network
from .metrics import MetricsReport, evaluate_case
from .mhd import read_mhd
from .network import predict_labels


def write_pgm(path: Path | str, image: np.ndarray) -> None:
    """Binary (P5) PGM, 8-bit grayscale."""
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise ValueError(f"PGM wants a 2-D image, got shape {image.shape}")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode())
        fh.write(image.tobytes())


def _overlay_slice(
    image: np.ndarray, pred: np.ndarray, gt: np.ndarray, classes, t: int
) -> np.ndarray:
    """Mid-slice grayscale with ground-truth contours white, predicted black."""
    sl = image[:, :, t].astype(np.float64)
    span = sl.max() - sl.min()
    base = (20 + 215 * (sl - sl.min()) / (span if span > 0 else 1.0)).astype(np.uint8)
    pred_contour = extract_contours(pred[:, :, t : t + 1], classes)[:, :, 0] > 0
    gt_contour = extract_contours(gt[:, :, t : t + 1], classes)[:, :, 0] > 0
    base[gt_contour] = 255
    base[pred_contour] = 0
    return base


def evaluate_checkpoint(
    checkpoint_path: Path | str,
    manifest_path: Path | str,
    split: str,
    out_dir: Path | str,
    *,
    overlays: bool = False,
    classes: Optional[list[int]] = None,
) -> MetricsReport:
    """Run inference on every case of a split and write metric artifacts.

    Produces ``metrics.csv`` (one row per case per class), ``metrics.json``
    (mean/std aggregates) and, optionally, one mid-slice PGM overlay per
    case. The checkpoint's embedded config defines the network; volumes that
    do not match it are rejected.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = load_checkpoint(checkpoint_path)
    net = restore_network(ckpt)
    net.eval()

    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    entries = [e for e in manifest["samples"] if e["split"] == split]
    if not entries:
        raise ValueError(f"split {split!r} has no cases in {manifest_path}")

    if classes is None:
        classes = list(range(1, ckpt.config.num_classes))
    report = MetricsReport(classes=tuple(classes))

    for entry in entries:
        image, spacing = read_mhd(manifest_path.parent / entry["image"])
        gt, _ = read_mhd(manifest_path.parent / entry["label"])
        if gt.shape != image.shape:
            raise ValueError(
                f"{entry['id']}: image shape {image.shape} != label shape {gt.shape}"
            )
        with torch.no_grad():
            outputs = net(torch.from_numpy(image.copy())[None, None])
        pred = predict_labels(outputs)[0]
        report.add_case(entry["id"], evaluate_case(pred, gt, spacing, classes))
        if overlays:
            t_mid = image.shape[2] // 2
            write_pgm(
                out_dir / f"{entry['id']}_overlay.pgm",
                _overlay_slice(image, pred, gt, classes, t_mid),
            )

    report.to_csv(out_dir / "metrics.csv")
    report.to_json(out_dir / "metrics.json")
    return report
