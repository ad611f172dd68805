"""Boundary supervision maps built from ground-truth label volumes.

Clear-boundary organs get a hard binary contour map; blurry-boundary organs
get that same contour map softened with a truncated isotropic Gaussian and
rescaled so the strongest boundary voxel carries probability 1. Contours are
the label-transition voxels: a voxel of a selected class with at least one
6-connected neighbor carrying a different label. On a piecewise-constant
label map this yields the same voxel set an edge detector would mark, without
any gradient or hysteresis machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.ndimage import correlate1d


@dataclass(frozen=True)
class OrganTaxonomy:
    """Which label ids have clear vs blurry image boundaries."""

    clear_classes: frozenset[int]
    blurry_classes: frozenset[int]

    def __init__(self, clear_classes: Iterable[int], blurry_classes: Iterable[int]):
        object.__setattr__(self, "clear_classes", frozenset(int(c) for c in clear_classes))
        object.__setattr__(self, "blurry_classes", frozenset(int(c) for c in blurry_classes))
        overlap = self.clear_classes & self.blurry_classes
        if overlap:
            raise ValueError(f"classes {sorted(overlap)} listed as both clear and blurry")
        if any(c < 1 for c in self.clear_classes | self.blurry_classes):
            raise ValueError("organ class ids must be >= 1 (0 is background)")


@dataclass(frozen=True)
class SoftenConfig:
    delta: float = 3.0
    truncation_radius: int = 9

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError(f"Gaussian bandwidth must be positive, got {self.delta}")
        if self.truncation_radius < math.ceil(3 * self.delta):
            raise ValueError(
                f"truncation radius {self.truncation_radius} is below "
                f"ceil(3 * delta) = {math.ceil(3 * self.delta)}"
            )


@dataclass(frozen=True)
class BoundaryTargets:
    hard: np.ndarray  # uint8 in {0,1}, clear-organ contours
    soft: np.ndarray  # float64 in [0,1], blurry-organ soft contours


def extract_contours(label: np.ndarray, classes: Iterable[int]) -> np.ndarray:
    """Label-transition contour map restricted to the given classes.

    A voxel is marked iff its label is in ``classes`` and at least one
    in-bounds 6-connected neighbor carries a different label. Volume borders
    compare only against neighbors that exist.
    """
    label = np.asarray(label)
    if label.ndim != 3:
        raise ValueError(f"label volume must be 3-D, got shape {label.shape}")
    class_list = sorted(int(c) for c in classes)
    if not class_list:
        return np.zeros(label.shape, dtype=np.uint8)

    differs = np.zeros(label.shape, dtype=bool)
    for axis in range(3):
        lead = [slice(None)] * 3
        trail = [slice(None)] * 3
        lead[axis] = slice(1, None)
        trail[axis] = slice(None, -1)
        edge = label[tuple(lead)] != label[tuple(trail)]
        differs[tuple(lead)] |= edge
        differs[tuple(trail)] |= edge

    member = np.isin(label, class_list)
    return (member & differs).astype(np.uint8)


def gaussian_blur(volume: np.ndarray, delta: float, radius: int) -> np.ndarray:
    """Separable truncated Gaussian filter, zero-padded at the borders.

    The 1-D kernel is ``exp(-d^2 / (2 delta^2))`` for offsets |d| <= radius;
    it is deliberately left unnormalized (the peak weight is exactly 1), so a
    single point spreads to ``exp(-d^2 / (2 delta^2))`` at axis distance d.
    The operation is linear in its input.
    """
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(offsets**2) / (2.0 * delta * delta))
    out = np.asarray(volume, dtype=np.float64)
    for axis in range(out.ndim):
        out = correlate1d(out, kernel, axis=axis, mode="constant", cval=0.0)
    return out


def soften_contours(hard: np.ndarray, cfg: SoftenConfig) -> np.ndarray:
    """Gaussian-soften a binary contour map and rescale its maximum to 1.

    An all-zero input stays all-zero. Output values lie in [0, 1].
    """
    blurred = gaussian_blur(hard, cfg.delta, cfg.truncation_radius)
    peak = blurred.max()
    if peak <= 0:
        return np.zeros_like(blurred)
    return blurred / peak


def make_targets(
    label: np.ndarray, taxonomy: OrganTaxonomy, cfg: SoftenConfig
) -> BoundaryTargets:
    """Hard contours for clear organs, softened contours for blurry organs."""
    hard = extract_contours(label, taxonomy.clear_classes)
    soft = soften_contours(extract_contours(label, taxonomy.blurry_classes), cfg)
    return BoundaryTargets(hard=hard, soft=soft)
