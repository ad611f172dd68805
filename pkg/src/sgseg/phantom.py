"""Synthetic 3-D phantoms with clear and blurry object boundaries.

Each sample holds three non-overlapping random ellipsoids on a dark
background: classes 1 and 2 render sharp and high-contrast, class 3 renders
at low contrast with its intensity edge smeared by a Gaussian. Labels stay
crisp for all three objects; only the image evidence of class 3 is fuzzy.
Everything is deterministic in the seed.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.spatial.transform import Rotation

from .mhd import write_mhd

# sharp-object intensity offsets against a zero background; the blurry
# object's offset comes from PhantomConfig.intensity_contrast
CLEAR_INTENSITY = {1: 2.0, 2: -1.5}
BLURRY_CLASS = 3

_PLACEMENT_ATTEMPTS = 200
_MIN_OBJECT_VOXELS = 20


class PlacementError(RuntimeError):
    """Raised when the requested objects cannot be placed without overlap."""


@dataclass(frozen=True)
class PhantomConfig:
    volume_shape: tuple[int, int, int] = (64, 64, 16)
    num_objects: int = 3
    blur_sigma: float = 4.0
    noise_sigma: float = 0.05
    intensity_contrast: float = 0.15
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "volume_shape", tuple(int(d) for d in self.volume_shape))
        if any(d <= 0 for d in self.volume_shape):
            raise ValueError(f"volume_shape must be positive, got {self.volume_shape}")
        if self.num_objects != 3:
            raise ValueError("phantoms hold exactly three objects (two clear, one blurry)")
        if self.blur_sigma < 0 or self.noise_sigma < 0:
            raise ValueError("sigmas must be >= 0")
        if not 0.0 < self.intensity_contrast <= 1.0:
            raise ValueError(
                f"intensity_contrast must lie in (0, 1], got {self.intensity_contrast}"
            )

    def content_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class SegSample:
    image: np.ndarray  # float32, zero mean / unit variance
    label: np.ndarray  # uint8, ids in {0..3}
    meta: dict = field(default_factory=dict)


def _ellipsoid_mask(
    shape: Sequence[int],
    center: np.ndarray,
    axes: np.ndarray,
    rotation: np.ndarray,
) -> np.ndarray:
    grids = np.stack(
        np.meshgrid(*(np.arange(d, dtype=np.float64) for d in shape), indexing="ij"),
        axis=-1,
    )
    local = (grids - center) @ rotation
    return ((local / axes) ** 2).sum(axis=-1) <= 1.0


def _sample_object(rng: np.random.Generator, shape: Sequence[int]):
    """Random ellipsoid fully inside the volume, or None if this draw cannot fit."""
    h, w, t = shape
    axes = np.array(
        [
            rng.uniform(0.12, 0.18) * min(h, w),
            rng.uniform(0.12, 0.18) * min(h, w),
            rng.uniform(0.22, 0.34) * t,
        ]
    )
    rotation = Rotation.from_quat(_unit_quaternion(rng)).as_matrix()
    # extent of the rotated ellipsoid along grid axis i
    extent = np.sqrt(((rotation * axes) ** 2).sum(axis=1))
    lo = extent + 1.0
    hi = np.array([h, w, t], dtype=np.float64) - 1.0 - extent - 1.0
    if np.any(hi <= lo):
        return None
    center = np.array([rng.uniform(a, b) for a, b in zip(lo, hi)])
    return center, axes, rotation


def _unit_quaternion(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


def generate_phantom(cfg: PhantomConfig) -> SegSample:
    """One phantom sample, deterministic in cfg.seed."""
    rng = np.random.default_rng(cfg.seed)
    shape = tuple(int(d) for d in cfg.volume_shape)
    label = np.zeros(shape, dtype=np.uint8)
    occupied = np.zeros(shape, dtype=bool)
    masks = {}
    for class_id in (1, 2, BLURRY_CLASS):
        for attempt in range(_PLACEMENT_ATTEMPTS):
            drawn = _sample_object(rng, shape)
            if drawn is None:
                continue
            center, axes, rot = drawn
            # inflate slightly for the overlap test to keep objects separated
            guard = _ellipsoid_mask(shape, center, axes * 1.15, rot)
            if (guard & occupied).any():
                continue
            mask = _ellipsoid_mask(shape, center, axes, rot)
            if int(mask.sum()) < _MIN_OBJECT_VOXELS:
                continue
            masks[class_id] = mask
            occupied |= guard
            label[mask] = class_id
            break
        else:
            raise PlacementError(
                f"could not place object {class_id} after {_PLACEMENT_ATTEMPTS} attempts; "
                "increase volume_shape or shrink the objects"
            )

    image = np.zeros(shape, dtype=np.float64)
    for class_id, level in CLEAR_INTENSITY.items():
        image += level * masks[class_id]
    blurry = masks[BLURRY_CLASS].astype(np.float64)
    if cfg.blur_sigma > 0:
        blurry = gaussian_filter(blurry, sigma=cfg.blur_sigma, mode="constant")
    image += cfg.intensity_contrast * blurry
    if cfg.noise_sigma > 0:
        image += rng.normal(0.0, cfg.noise_sigma, size=shape)

    std = image.std()
    image = (image - image.mean()) / (std if std > 0 else 1.0)
    return SegSample(
        image=image.astype(np.float32),
        label=label,
        meta={
            "seed": cfg.seed,
            "config_hash": cfg.content_hash(),
            "spacing": (1.0, 1.0, 1.0),
        },
    )


def split_counts(n: int, fractions: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of n cases over split fractions."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must sum to 1, got {tuple(fractions)}")
    base = [math.floor(f * n) for f in fractions]
    remainders = [f * n - b for f, b in zip(fractions, base)]
    for _ in range(n - sum(base)):
        i = max(range(len(fractions)), key=lambda j: (remainders[j], -j))
        base[i] += 1
        remainders[i] = -1.0
    return base

SPLIT_NAMES = ("train", "val", "test")
_SPLIT_SEED_OFFSETS = {"train": 0, "val": 1_000_000, "test": 2_000_000}


def generate_dataset(
    n: int,
    cfg: PhantomConfig,
    split: Sequence[float],
    out_dir: Path | str,
) -> dict:
    """Write n phantom cases plus a manifest; returns the manifest dict.

    Seeds are taken from disjoint ranges per split (train from cfg.seed + i,
    val from cfg.seed + 1e6 + i, test from cfg.seed + 2e6 + i) so splits stay
    disjoint under regeneration or resizing.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    counts = split_counts(n, split)
    samples = []
    case_index = 0
    for split_name, count in zip(SPLIT_NAMES, counts):
        for i in range(count):
            seed = cfg.seed + _SPLIT_SEED_OFFSETS[split_name] + i
            case_cfg = PhantomConfig(**{**asdict(cfg), "seed": seed})
            sample = generate_phantom(case_cfg)
            case_id = f"case_{case_index:04d}"
            image_name = f"{case_id}_img.mhd"
            label_name = f"{case_id}_lbl.mhd"
            write_mhd(sample.image, sample.meta["spacing"], out_dir / image_name)
            write_mhd(sample.label, sample.meta["spacing"], out_dir / label_name)
            samples.append(
                {
                    "id": case_id,
                    "split": split_name,
                    "seed": seed,
                    "image": image_name,
                    "label": label_name,
                }
            )
            case_index += 1

    manifest = {
        "format_version": 1,
        "spacing": [1.0, 1.0, 1.0],
        "master_seed": cfg.seed,
        "phantom_config": asdict(cfg),
        "samples": samples,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest
