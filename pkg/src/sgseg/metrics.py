"""Segmentation evaluation: per-class Dice overlap and average surface distance.

Both metrics operate on integer label volumes. ASD is the symmetric
mean-of-means variant over surface voxel centers: for each surface voxel of
one mask, the Euclidean distance (voxel spacing applied per axis) to the
nearest surface voxel of the other mask is averaged, and the two directional
means are averaged. Conventions for degenerate inputs: Dice of two empty
masks is 1.0; ASD is undefined (``None``) if either surface is empty.
"""

from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree


def _check_same_shape(pred: np.ndarray, gt: np.ndarray) -> None:
    if pred.shape != gt.shape:
        raise ValueError(
            f"prediction shape {pred.shape} does not match ground truth {gt.shape}"
        )


def dsc(pred: np.ndarray, gt: np.ndarray, class_id: int) -> float:
    """Dice similarity 2|A n B| / (|A| + |B|) for one class; 1.0 if both masks empty."""
    _check_same_shape(pred, gt)
    a = pred == class_id
    b = gt == class_id
    denom = int(a.sum()) + int(b.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / denom


def surface_voxels(mask: np.ndarray) -> np.ndarray:
    """Coordinates (N, 3) of mask voxels with a 6-connected neighbor outside the mask.

    Out-of-bounds counts as outside, so voxels on the volume border are
    surface voxels whenever they belong to the mask.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 3:
        raise ValueError(f"mask must be 3-D, got shape {mask.shape}")
    padded = np.pad(mask, 1, mode="constant", constant_values=False)
    interior = np.ones_like(mask)
    for axis in range(3):
        for shift in (-1, 1):
            interior &= np.roll(padded, shift, axis=axis)[1:-1, 1:-1, 1:-1]
    return np.argwhere(mask & ~interior)


def _directed_mean_distance(src: np.ndarray, dst: np.ndarray) -> float:
    distances, _ = cKDTree(dst).query(src)
    return float(np.mean(distances))


def asd(
    pred: np.ndarray,
    gt: np.ndarray,
    class_id: int,
    spacing: Sequence[float] = (1.0, 1.0, 1.0),
) -> Optional[float]:
    """Symmetric average surface distance in mm, or None if a surface is empty."""
    _check_same_shape(pred, gt)
    sx, sy, sz = spacing
    if min(sx, sy, sz) <= 0:
        raise ValueError(f"voxel spacing must be positive, got {tuple(spacing)}")
    surf_pred = surface_voxels(pred == class_id)
    surf_gt = surface_voxels(gt == class_id)
    if len(surf_pred) == 0 or len(surf_gt) == 0:
        return None
    scale = np.asarray([sx, sy, sz], dtype=np.float64)
    a = surf_pred.astype(np.float64) * scale
    b = surf_gt.astype(np.float64) * scale
    return 0.5 * (_directed_mean_distance(a, b) + _directed_mean_distance(b, a))


def evaluate_case(
    pred: np.ndarray,
    gt: np.ndarray,
    spacing: Sequence[float],
    classes: Iterable[int],
) -> dict[int, dict[str, Optional[float]]]:
    """Per-class {"dsc": ..., "asd": ...} for one case; asd may be None."""
    _check_same_shape(pred, gt)
    return {
        int(c): {"dsc": dsc(pred, gt, c), "asd": asd(pred, gt, c, spacing)}
        for c in classes
    }


@dataclass
class MetricsReport:
    """Per-case, per-class metrics plus mean/std aggregates across cases."""

    classes: tuple[int, ...]
    cases: dict[str, dict[int, dict[str, Optional[float]]]] = field(default_factory=dict)

    def add_case(self, case_id: str, result: dict[int, dict[str, Optional[float]]]):
        self.cases[case_id] = result

    def aggregate(self) -> dict[str, dict[str, Optional[float]]]:
        """Mean/std per class; ASD aggregated over cases where it is defined."""
        out: dict[str, dict[str, Optional[float]]] = {}
        for c in self.classes:
            dscs = [r[c]["dsc"] for r in self.cases.values()]
            asds = [r[c]["asd"] for r in self.cases.values() if r[c]["asd"] is not None]
            out[str(c)] = {
                "dsc_mean": _mean(dscs),
                "dsc_std": _std(dscs),
                "asd_mean": _mean(asds),
                "asd_std": _std(asds),
                "asd_undefined_cases": len(self.cases) - len(asds),
                "num_cases": len(self.cases),
            }
        return out

    def to_json(self, path: Path | str) -> None:
        payload = {"classes": list(self.classes), "aggregate": self.aggregate()}
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))

    def to_csv(self, path: Path | str) -> None:
        """One row per case per class; undefined ASD becomes an empty cell."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(PER_CASE_CSV_COLUMNS)
            for case_id in sorted(self.cases):
                for c in self.classes:
                    entry = self.cases[case_id][c]
                    a = entry["asd"]
                    writer.writerow(
                        [case_id, c, f"{entry['dsc']:.6f}", "" if a is None else f"{a:.6f}"]
                    )


PER_CASE_CSV_COLUMNS = ("case_id", "class", "dsc", "asd")


def _mean(values: Sequence[float]) -> Optional[float]:
    return float(statistics.fmean(values)) if values else None


def _std(values: Sequence[float]) -> Optional[float]:
    if not values:
        return None
    if len(values) == 1:
        return 0.0
    return float(statistics.stdev(values))


def is_defined(value: Optional[float]) -> bool:
    return value is not None and math.isfinite(value)
