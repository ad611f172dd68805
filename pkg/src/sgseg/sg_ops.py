"""Semantic-guided skip-connection math.

Pure functions over 5-D feature tensors shaped ``(batch, channels, H, W, T)``
plus the parameter containers for one gating module. Everything here is
stateless: parameters come in as plain tensors, so the same functions serve
the trainable network, the finite-difference gradient checker, and the tests.

The module gates *shallow* (encoder) features with two signals derived from
the concatenation of shallow and deep (decoder) features: a per-channel gate
from globally pooled statistics and a per-voxel gate from a channel-squeeze
projection. The two gated copies are summed and then fused with the deep
features by concatenation or addition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import torch
from torch import Tensor

FUSION_MODES = ("concatenate", "add")


@dataclass(frozen=True)
class ChannelGateParams:
    """Channel-gate weights: pooled 2K vector -> K hidden (ReLU) -> K logits (sigmoid)."""

    w2: Tensor  # (K, 2K), applied first
    w1: Tensor  # (K, K)
    b2: Optional[Tensor] = None  # (K,)
    b1: Optional[Tensor] = None  # (K,)


@dataclass(frozen=True)
class SpatialGateParams:
    """Per-voxel channel squeeze: a 2K -> 1 linear map applied at every voxel."""

    kernel: Tensor  # (2K,)
    bias: Tensor  # scalar ()


@dataclass(frozen=True)
class SGModuleParams:
    channel: ChannelGateParams
    spatial: SpatialGateParams
    fusion_mode: str = "concatenate"

    def __post_init__(self):
        if self.fusion_mode not in FUSION_MODES:
            raise ValueError(
                f"fusion_mode must be one of {FUSION_MODES}, got {self.fusion_mode!r}"
            )
        k = self.channel.w1.shape[0]
        if self.spatial.kernel.shape[0] != 2 * k:
            raise ValueError(
                f"channel and spatial params disagree on K: w1 is {tuple(self.channel.w1.shape)} "
                f"but squeeze kernel has length {self.spatial.kernel.shape[0]} (expected {2 * k})"
            )


def _check_volume(name: str, x: Tensor) -> None:
    if x.dim() != 5:
        raise ValueError(
            f"{name} must be a 5-D (batch, channels, H, W, T) tensor, got shape {tuple(x.shape)}"
        )


def concat_features(shallow: Tensor, deep: Tensor) -> Tensor:
    """Stack shallow (encoder) and deep (decoder) features along channels.

    Both inputs must share batch, channel count K and spatial dims; the result
    has 2K channels with the shallow block first.
    """
    _check_volume("shallow", shallow)
    _check_volume("deep", deep)
    if shallow.shape != deep.shape:
        raise ValueError(
            f"shallow and deep features must have identical shapes, "
            f"got {tuple(shallow.shape)} vs {tuple(deep.shape)}"
        )
    return torch.cat([shallow, deep], dim=1)


def global_average_pool(f: Tensor) -> Tensor:
    """Mean over all voxels of each channel, per batch item: (B, C, H, W, T) -> (B, C)."""
    _check_volume("features", f)
    if f.shape[2] * f.shape[3] * f.shape[4] == 0:
        raise ValueError(f"cannot pool an empty volume of shape {tuple(f.shape)}")
    return f.mean(dim=(2, 3, 4))


def channel_gate(q: Tensor, p: ChannelGateParams) -> Tensor:
    """Per-channel gate in (0,1): sigmoid(w1 @ relu(w2 @ q + b2) + b1).

    ``q`` is the pooled descriptor, shape (..., 2K); returns shape (..., K).
    """
    if q.shape[-1] != p.w2.shape[1]:
        raise ValueError(
            f"pooled vector has length {q.shape[-1]} but w2 maps from {p.w2.shape[1]}"
        )
    hidden = torch.nn.functional.linear(q, p.w2, p.b2)
    return torch.sigmoid(torch.nn.functional.linear(torch.relu(hidden), p.w1, p.b1))


def apply_channel_gate(shallow: Tensor, g: Tensor) -> Tensor:
    """Scale channel k of the shallow features by gate component g_k (broadcast over voxels)."""
    _check_volume("shallow", shallow)
    if g.shape[-1] != shallow.shape[1]:
        raise ValueError(
            f"gate has {g.shape[-1]} components but features have {shallow.shape[1]} channels"
        )
    return shallow * g.reshape(*g.shape, 1, 1, 1)


def spatial_gate(f: Tensor, p: SpatialGateParams) -> Tensor:
    """Per-voxel gate in (0,1): sigmoid of a channel squeeze of the concatenated features.

    Returns shape (B, 1, H, W, T). The squeeze is accumulated channel by
    channel in a fixed order, so each voxel sees an identical reduction
    sequence regardless of where it sits in the volume.
    """
    _check_volume("concatenated features", f)
    c = f.shape[1]
    if p.kernel.shape != (c,):
        raise ValueError(
            f"squeeze kernel has shape {tuple(p.kernel.shape)} but features have {c} channels"
        )
    u = p.kernel[0] * f[:, 0]
    for i in range(1, c):
        u = u + p.kernel[i] * f[:, i]
    u = u + p.bias
    return torch.sigmoid(u).unsqueeze(1)


def apply_spatial_gate(shallow: Tensor, gate_map: Tensor) -> Tensor:
    """Scale every channel of the shallow features by the per-voxel gate map."""
    _check_volume("shallow", shallow)
    if gate_map.dim() == 4:
        gate_map = gate_map.unsqueeze(1)
    if gate_map.dim() != 5 or gate_map.shape[1] != 1:
        raise ValueError(
            f"gate map must be (B, H, W, T) or (B, 1, H, W, T), got {tuple(gate_map.shape)}"
        )
    if gate_map.shape[2:] != shallow.shape[2:] or gate_map.shape[0] != shallow.shape[0]:
        raise ValueError(
            f"gate map shape {tuple(gate_map.shape)} does not match features {tuple(shallow.shape)}"
        )
    return shallow * gate_map


def combine_gates(sgcf: Tensor, sgsf: Tensor) -> Tensor:
    """Element-wise sum of the channel-gated and spatially-gated feature volumes."""
    if sgcf.shape != sgsf.shape:
        raise ValueError(
            f"cannot combine gated volumes of shapes {tuple(sgcf.shape)} and {tuple(sgsf.shape)}"
        )
    return sgcf + sgsf


def fuse_with_decoder(sgf: Tensor, deep: Tensor, mode: str) -> Tensor:
    """Fuse the gated shallow features into the decoder path.

    ``concatenate`` stacks channels (2K out), ``add`` sums element-wise (K out).
    """
    if mode == "concatenate":
        return concat_features(sgf, deep)
    if mode == "add":
        if sgf.shape != deep.shape:
            raise ValueError(
                f"add-fusion needs identical shapes, got {tuple(sgf.shape)} vs {tuple(deep.shape)}"
            )
        return sgf + deep
    raise ValueError(f"fusion mode must be one of {FUSION_MODES}, got {mode!r}")


def sg_forward(shallow: Tensor, deep: Tensor, params: SGModuleParams) -> Tensor:
    """Full gating module: concat -> channel/spatial gates -> sum -> fuse with decoder."""
    f = concat_features(shallow, deep)
    g = channel_gate(global_average_pool(f), params.channel)
    gate_map = spatial_gate(f, params.spatial)
    sgf = combine_gates(
        apply_channel_gate(shallow, g), apply_spatial_gate(shallow, gate_map)
    )
    return fuse_with_decoder(sgf, deep, params.fusion_mode)


def xavier_uniform_(t: Tensor, fan_in: int, fan_out: int, generator: torch.Generator) -> Tensor:
    """In-place Xavier/Glorot uniform fill driven by an explicit generator."""
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return t.uniform_(-bound, bound, generator=generator)


def init_sg_params(
    k: int,
    fusion_mode: str = "concatenate",
    *,
    generator: torch.Generator,
    dtype: torch.dtype = torch.float32,
) -> SGModuleParams:
    """Fresh gate parameters for channel count K: Xavier matrices, zero biases."""
    w2 = xavier_uniform_(torch.empty(k, 2 * k, dtype=dtype), 2 * k, k, generator)
    w1 = xavier_uniform_(torch.empty(k, k, dtype=dtype), k, k, generator)
    kernel = xavier_uniform_(torch.empty(2 * k, dtype=dtype), 2 * k, 1, generator)
    return SGModuleParams(
        channel=ChannelGateParams(
            w2=w2, w1=w1, b2=torch.zeros(k, dtype=dtype), b1=torch.zeros(k, dtype=dtype)
        ),
        spatial=SpatialGateParams(kernel=kernel, bias=torch.zeros((), dtype=dtype)),
        fusion_mode=fusion_mode,
    )
