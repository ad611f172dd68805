"""3-D encoder-decoder segmentation network with gated skip connections.

The encoder is a stack of plain double-conv stages with max-pool
downsampling. Each decoder stage upsamples (nearest neighbor plus a 1x1x1
channel-matching convolution), runs the skip connection through the
semantic-guided gating module (or a plain skip when disabled), and refines
with another double-conv. Every fused stage emits an auxiliary segmentation
head; the full-resolution stage additionally emits the main segmentation
head and one logit head each for clear-boundary and blurry-boundary
detection.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import List

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor

from . import sg_ops
from .sg_ops import FUSION_MODES, xavier_uniform_


@dataclass
class NetworkConfig:
    in_channels: int = 1
    num_classes: int = 4  # background + three organs
    stage_channels: tuple[int, ...] = (8, 16, 32)
    fusion_mode: str = "concatenate"
    deep_supervision: bool = True
    kernel_size: int = 3
    downsample_factor: int = 2
    use_sg: bool = True  # plain skip connections when False

    def __post_init__(self):
        self.stage_channels = tuple(int(c) for c in self.stage_channels)
        if len(self.stage_channels) < 2:
            raise ValueError("need at least 2 encoder stages")
        if min(self.stage_channels) < 1 or self.in_channels < 1 or self.num_classes < 2:
            raise ValueError("channel and class counts must be positive")
        if self.fusion_mode not in FUSION_MODES:
            raise ValueError(f"fusion_mode must be one of {FUSION_MODES}")
        if self.kernel_size % 2 != 1:
            raise ValueError("kernel_size must be odd to keep resolution")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, blob: str) -> "NetworkConfig":
        return cls(**json.loads(blob))


@dataclass
class NetworkOutputs:
    seg_logits: Tensor  # (B, num_classes, H, W, T)
    clear_boundary_logits: Tensor  # (B, 1, H, W, T)
    blurry_boundary_logits: Tensor  # (B, 1, H, W, T)
    aux_seg_logits: List[Tensor] = field(default_factory=list)  # coarse -> fine


class ConvBlock(nn.Module):
    """(conv3d -> ReLU) x 2, resolution preserving."""

    def __init__(self, in_ch: int, out_ch: int, kernel_size: int = 3):
        super().__init__()
        pad = kernel_size // 2
        self.conv1 = nn.Conv3d(in_ch, out_ch, kernel_size, padding=pad)
        self.conv2 = nn.Conv3d(out_ch, out_ch, kernel_size, padding=pad)

    def forward(self, x):
        x = F.relu(self.conv1(x))
        return F.relu(self.conv2(x))


class SGModule(nn.Module):
    """Learnable wrapper around the pure gating math for one skip connection."""

    def __init__(self, k: int, fusion_mode: str = "concatenate"):
        super().__init__()
        self.fusion_mode = fusion_mode
        self.w2 = nn.Parameter(torch.empty(k, 2 * k))
        self.b2 = nn.Parameter(torch.zeros(k))
        self.w1 = nn.Parameter(torch.empty(k, k))
        self.b1 = nn.Parameter(torch.zeros(k))
        self.squeeze_kernel = nn.Parameter(torch.empty(2 * k))
        self.squeeze_bias = nn.Parameter(torch.zeros(()))

    @property
    def out_multiplier(self) -> int:
        return 2 if self.fusion_mode == "concatenate" else 1

    def params(self) -> sg_ops.SGModuleParams:
        return sg_ops.SGModuleParams(
            channel=sg_ops.ChannelGateParams(w2=self.w2, w1=self.w1, b2=self.b2, b1=self.b1),
            spatial=sg_ops.SpatialGateParams(kernel=self.squeeze_kernel, bias=self.squeeze_bias),
            fusion_mode=self.fusion_mode,
        )

    def forward(self, shallow: Tensor, deep: Tensor) -> Tensor:
        return sg_ops.sg_forward(shallow, deep, self.params())


class PlainSkip(nn.Module):
    """Ablation fusion: concatenate (or add) the raw skip with the decoder features."""

    def __init__(self, fusion_mode: str = "concatenate"):
        super().__init__()
        self.fusion_mode = fusion_mode

    @property
    def out_multiplier(self) -> int:
        return 2 if self.fusion_mode == "concatenate" else 1

    def forward(self, shallow: Tensor, deep: Tensor) -> Tensor:
        return sg_ops.fuse_with_decoder(shallow, deep, self.fusion_mode)


class SegNet3d(nn.Module):
    """Encoder-decoder with gated skips and three output heads."""

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.cfg = cfg
        widths = cfg.stage_channels
        k = cfg.kernel_size

        self.encoders = nn.ModuleList()
        prev = cfg.in_channels
        for w in widths:
            self.encoders.append(ConvBlock(prev, w, k))
            prev = w

        self.up_convs = nn.ModuleList()
        self.skips = nn.ModuleList()
        self.decoders = nn.ModuleList()
        self.aux_heads = nn.ModuleList()
        for deep_w, skip_w in zip(widths[:0:-1], widths[-2::-1]):
            self.up_convs.append(nn.Conv3d(deep_w, skip_w, kernel_size=1))
            skip = (
                SGModule(skip_w, cfg.fusion_mode)
                if cfg.use_sg
                else PlainSkip(cfg.fusion_mode)
            )
            self.skips.append(skip)
            self.decoders.append(ConvBlock(skip_w * skip.out_multiplier, skip_w, k))
            if cfg.deep_supervision:
                self.aux_heads.append(nn.Conv3d(skip_w, cfg.num_classes, kernel_size=1))

        final_w = widths[0]
        self.seg_head = nn.Conv3d(final_w, cfg.num_classes, kernel_size=1)
        self.clear_head = nn.Conv3d(final_w, 1, kernel_size=1)
        self.blurry_head = nn.Conv3d(final_w, 1, kernel_size=1)

    def forward(self, x: Tensor) -> NetworkOutputs:
        cfg = self.cfg
        stages = len(cfg.stage_channels)
        divisor = cfg.downsample_factor ** (stages - 1)
        if any(d % divisor != 0 for d in x.shape[2:]):
            raise ValueError(
                f"spatial dims {tuple(x.shape[2:])} must each be divisible by "
                f"{divisor} (= downsample_factor^{stages - 1})"
            )

        skips = []
        feat = x
        for i, enc in enumerate(self.encoders):
            if i > 0:
                feat = F.max_pool3d(feat, cfg.downsample_factor)
            feat = enc(feat)
            skips.append(feat)

        aux: List[Tensor] = []
        for i, (up_conv, skip_mod, dec) in enumerate(
            zip(self.up_convs, self.skips, self.decoders)
        ):
            deep = up_conv(
                F.interpolate(feat, scale_factor=cfg.downsample_factor, mode="nearest")
            )
            shallow = skips[stages - 2 - i]
            feat = dec(skip_mod(shallow, deep))
            if cfg.deep_supervision:
                aux.append(self.aux_heads[i](feat))

        return NetworkOutputs(
            seg_logits=self.seg_head(feat),
            aux_seg_logits=aux,
            clear_boundary_logits=self.clear_head(feat),
            blurry_boundary_logits=self.blurry_head(feat),
        )


def _init_conv(conv: nn.Conv3d, generator: torch.Generator) -> None:
    out_ch, in_ch, *k = conv.weight.shape
    receptive = int(np.prod(k))
    xavier_uniform_(conv.weight.data, in_ch * receptive, out_ch * receptive, generator)
    if conv.bias is not None:
        conv.bias.data.zero_()


def build_network(cfg: NetworkConfig, seed: int) -> SegNet3d:
    """Construct and deterministically initialize the network.

    Convolution and gate matrices are Xavier-uniform; every bias starts at 0.
    The same seed always yields bit-identical parameters.
    """
    net = SegNet3d(cfg)
    gen = torch.Generator().manual_seed(seed)
    for module in net.modules():
        if isinstance(module, nn.Conv3d):
            _init_conv(module, gen)
        elif isinstance(module, SGModule):
            k2, k = module.w1.shape[0] * 2, module.w1.shape[0]
            xavier_uniform_(module.w2.data, k2, k, gen)
            xavier_uniform_(module.w1.data, k, k, gen)
            xavier_uniform_(module.squeeze_kernel.data, k2, 1, gen)
            module.b2.data.zero_()
            module.b1.data.zero_()
            module.squeeze_bias.data.zero_()
    return net


def predict_labels(outputs: NetworkOutputs) -> np.ndarray:
    """Voxel-wise argmax over classes, ties broken toward the lower class id.

    Returns a (B, H, W, T) uint8 array.
    """
    logits = outputs.seg_logits.detach().cpu().numpy()
    return np.argmax(logits, axis=1).astype(np.uint8)
