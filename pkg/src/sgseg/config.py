"""Experiment configuration: one JSON file drives data generation, training,
evaluation and the ablation grid."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .boundary import OrganTaxonomy, SoftenConfig
from .losses import LossConfig, LossWeights
from .network import NetworkConfig
from .phantom import PhantomConfig


@dataclass
class OptimConfig:
    lr: float = 2e-3
    weight_decay: float = 1e-4
    lr_decay_factor: float = 10.0
    lr_decay_every_epochs: int = 2
    lr_floor: float = 1e-7
    epochs: int = 8
    batch_size: int = 2

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.lr_floor >= self.lr:
            raise ValueError("lr_floor must be below the initial lr")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1 or self.lr_decay_every_epochs < 1:
            raise ValueError("batch_size and lr_decay_every_epochs must be >= 1")


def learning_rate(cfg: OptimConfig, epoch: int) -> float:
    """Stepped decay: lr0 / factor^(epoch // every), floored at lr_floor."""
    return max(cfg.lr / cfg.lr_decay_factor ** (epoch // cfg.lr_decay_every_epochs), cfg.lr_floor)


@dataclass
class AblationFlags:
    use_sg: bool = True
    use_soft_contour: bool = True
    use_boundary_heads: bool = True
    use_deep_supervision: bool = True


@dataclass
class DatasetGenConfig:
    n: int = 50
    split: tuple[float, float, float] = (0.7, 0.1, 0.2)

    def __post_init__(self):
        self.split = tuple(float(f) for f in self.split)
        if self.n < 1:
            raise ValueError("dataset size must be >= 1")


@dataclass
class ExperimentConfig:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    losses: LossConfig = field(default_factory=LossConfig)
    taxonomy: OrganTaxonomy = field(
        default_factory=lambda: OrganTaxonomy(clear_classes=(1, 2), blurry_classes=(3,))
    )
    soften: SoftenConfig = field(default_factory=SoftenConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    phantom: PhantomConfig = field(default_factory=PhantomConfig)
    dataset: DatasetGenConfig = field(default_factory=DatasetGenConfig)
    ablation: AblationFlags = field(default_factory=AblationFlags)
    manifest: str = "data/manifest.json"
    seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["taxonomy"] = {
            "clear_classes": sorted(self.taxonomy.clear_classes),
            "blurry_classes": sorted(self.taxonomy.blurry_classes),
        }
        return d

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        parts = {}
        section_types = {
            "network": NetworkConfig,
            "losses": LossConfig,
            "taxonomy": OrganTaxonomy,
            "soften": SoftenConfig,
            "optim": OptimConfig,
            "phantom": PhantomConfig,
            "dataset": DatasetGenConfig,
            "ablation": AblationFlags,
        }
        for key, typ in section_types.items():
            if key in d:
                section = dict(d.pop(key))
                if key == "losses" and "weights" in section:
                    section["weights"] = LossWeights(**section["weights"])
                if key == "network" and "stage_channels" in section:
                    section["stage_channels"] = tuple(section["stage_channels"])
                if key == "phantom" and "volume_shape" in section:
                    section["volume_shape"] = tuple(section["volume_shape"])
                parts[key] = typ(**section)
        known = {"manifest", "seed"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**parts, **d)

    @classmethod
    def load(cls, path: Path | str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def with_ablation(self, use_sg: bool, use_soft_contour: bool) -> "ExperimentConfig":
        return replace(
            self,
            ablation=replace(self.ablation, use_sg=use_sg, use_soft_contour=use_soft_contour),
        )
