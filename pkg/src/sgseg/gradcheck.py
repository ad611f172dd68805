"""Finite-difference verification of analytic gradients.

Every differentiable component (the skip-gating forward in both fusion
modes, and each training loss in both its default and literal form) is
evaluated at double precision on tiny inputs (K=2, 4x4x4 volumes). Autograd
gradients are compared entry by entry against central differences
``(f(x+h) - f(x-h)) / 2h``. The report carries the max relative error per
parameter group; a component fails if any group exceeds the tolerance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import torch
from torch import Tensor

from . import sg_ops
from .losses import (
    LossConfig,
    LossWeights,
    deep_supervision_loss,
    focal_boundary_loss,
    segmentation_loss,
    soft_boundary_loss,
    total_loss,
)
from .network import NetworkOutputs

DEFAULT_STEP = 1e-4
DEFAULT_TOLERANCE = 1e-4
_REL_FLOOR = 1e-6  # treat tinier magnitudes as matching absolutely


@dataclass
class ComponentCheck:
    name: str
    per_param: Dict[str, float]
    max_rel_error: float
    passed: bool


@dataclass
class GradCheckReport:
    tolerance: float
    step: float
    components: List[ComponentCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.components)

    def format_lines(self) -> List[str]:
        lines = []
        for c in self.components:
            status = "PASS" if c.passed else "FAIL"
            lines.append(f"{status}  {c.name:34s} max_rel_err={c.max_rel_error:.3e}")
            for pname, err in c.per_param.items():
                lines.append(f"        {pname:30s} {err:.3e}")
        lines.append(
            f"{'PASS' if self.passed else 'FAIL'}  overall "
            f"(tolerance {self.tolerance:g}, step {self.step:g})"
        )
        return lines

    def to_json(self, path: Path | str) -> None:
        payload = {
            "tolerance": self.tolerance,
            "step": self.step,
            "passed": self.passed,
            "components": [
                {
                    "name": c.name,
                    "passed": c.passed,
                    "max_rel_error": c.max_rel_error,
                    "per_param": c.per_param,
                }
                for c in self.components
            ],
        }
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))


def _relative_errors(analytic: Tensor, numeric: Tensor) -> Tensor:
    denom = torch.maximum(
        torch.maximum(analytic.abs(), numeric.abs()),
        torch.full_like(analytic, _REL_FLOOR),
    )
    return (analytic - numeric).abs() / denom


def _numeric_grad(fn: Callable[[], Tensor], leaf: Tensor, step: float) -> Tensor:
    grad = torch.zeros_like(leaf)
    flat = leaf.data.view(-1)
    gflat = grad.view(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + step
        f_plus = float(fn())
        flat[i] = orig - step
        f_minus = float(fn())
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def check_component(
    name: str,
    fn: Callable[[], Tensor],
    leaves: Dict[str, Tensor],
    *,
    step: float = DEFAULT_STEP,
    tolerance: float = DEFAULT_TOLERANCE,
    corrupt_param: Optional[str] = None,
) -> ComponentCheck:
    """Compare autograd against central differences for one scalar-valued closure."""
    for leaf in leaves.values():
        leaf.requires_grad_(True)
        if leaf.grad is not None:
            leaf.grad = None
    value = fn()
    value.backward()
    per_param: Dict[str, float] = {}
    for pname, leaf in leaves.items():
        analytic = leaf.grad.detach().clone()
        if corrupt_param == pname:
            analytic = analytic + 10.0 * tolerance * (1.0 + analytic.abs())
        with torch.no_grad():
            numeric = _numeric_grad(fn, leaf, step)
        per_param[pname] = float(_relative_errors(analytic, numeric).max())
    worst = max(per_param.values())
    return ComponentCheck(
        name=name, per_param=per_param, max_rel_error=worst, passed=worst <= tolerance
    )


def _rand(gen: torch.Generator, *shape, lo=-1.0, hi=1.0) -> Tensor:
    t = torch.empty(*shape, dtype=torch.float64)
    t.uniform_(lo, hi, generator=gen)
    return t


def run_gradient_checks(
    seed: int = 0,
    *,
    step: float = DEFAULT_STEP,
    tolerance: float = DEFAULT_TOLERANCE,
    corrupt: Optional[str] = None,
) -> GradCheckReport:
    """Run the full gradient suite at K=2 on 4x4x4 volumes in float64.

    ``corrupt`` ("component/param") deliberately offsets one analytic
    gradient so harness failures stay detectable.
    """
    gen = torch.Generator().manual_seed(seed)
    report = GradCheckReport(tolerance=tolerance, step=step)
    corrupt_component, corrupt_param = (corrupt.split("/", 1) + [None])[:2] if corrupt else (None, None)

    def run(name: str, fn, leaves: Dict[str, Tensor]):
        report.components.append(
            check_component(
                name,
                fn,
                leaves,
                step=step,
                tolerance=tolerance,
                corrupt_param=corrupt_param if name == corrupt_component else None,
            )
        )

    k, spatial = 2, (4, 4, 4)

    for mode in ("concatenate", "add"):
        leaves = {
            "shallow": _rand(gen, 1, k, *spatial),
            "deep": _rand(gen, 1, k, *spatial),
            "w2": _rand(gen, k, 2 * k),
            "b2": _rand(gen, k, lo=-0.2, hi=0.2),
            "w1": _rand(gen, k, k),
            "b1": _rand(gen, k, lo=-0.2, hi=0.2),
            "squeeze_kernel": _rand(gen, 2 * k),
            "squeeze_bias": _rand(gen, (), lo=-0.2, hi=0.2),
        }
        out_channels = 2 * k if mode == "concatenate" else k
        projection = _rand(gen, 1, out_channels, *spatial)

        def sg_scalar(mode=mode, leaves=leaves, projection=projection):
            params = sg_ops.SGModuleParams(
                channel=sg_ops.ChannelGateParams(
                    w2=leaves["w2"], w1=leaves["w1"], b2=leaves["b2"], b1=leaves["b1"]
                ),
                spatial=sg_ops.SpatialGateParams(
                    kernel=leaves["squeeze_kernel"], bias=leaves["squeeze_bias"]
                ),
                fusion_mode=mode,
            )
            out = sg_ops.sg_forward(leaves["shallow"], leaves["deep"], params)
            return (out * projection).sum()

        run(f"sg_forward[{mode}]", sg_scalar, leaves)

    hard_target = (_rand(gen, 1, 1, *spatial, lo=0.0, hi=1.0) > 0.7).double()
    for literal in (False, True):
        cfg = LossConfig(gamma=2.0, literal_paper_form=literal)
        leaves = {"logits": _rand(gen, 1, 1, *spatial, lo=-2.0, hi=2.0)}
        run(
            f"focal_boundary_loss[{'literal' if literal else 'default'}]",
            lambda leaves=leaves, cfg=cfg: focal_boundary_loss(
                leaves["logits"], hard_target, cfg
            ),
            leaves,
        )

    soft_target = _rand(gen, 1, 1, *spatial, lo=0.0, hi=1.0)
    for literal in (False, True):
        cfg = LossConfig(literal_paper_form=literal)
        leaves = {"logits": _rand(gen, 1, 1, *spatial, lo=-2.0, hi=2.0)}
        run(
            f"soft_boundary_loss[{'literal' if literal else 'default'}]",
            lambda leaves=leaves, cfg=cfg: soft_boundary_loss(
                leaves["logits"], soft_target, cfg
            ),
            leaves,
        )

    num_classes = 3
    label = torch.randint(0, num_classes, (1, *spatial), generator=gen)
    leaves = {"seg_logits": _rand(gen, 1, num_classes, *spatial, lo=-2.0, hi=2.0)}
    run(
        "segmentation_loss",
        lambda leaves=leaves: segmentation_loss(leaves["seg_logits"], label),
        leaves,
    )

    ds_cfg = LossConfig(weights=LossWeights(aux=(0.7, 0.3)))
    leaves = {
        "aux_full": _rand(gen, 1, num_classes, *spatial, lo=-2.0, hi=2.0),
        "aux_half": _rand(gen, 1, num_classes, 2, 2, 2, lo=-2.0, hi=2.0),
    }
    run(
        "deep_supervision_loss",
        lambda leaves=leaves: deep_supervision_loss(
            [leaves["aux_half"], leaves["aux_full"]], label, ds_cfg
        ),
        leaves,
    )

    tl_cfg = LossConfig(weights=LossWeights(seg=1.0, clear=0.4, blurry=0.6, aux=(0.5,)))
    leaves = {
        "seg_logits": _rand(gen, 1, num_classes, *spatial, lo=-2.0, hi=2.0),
        "clear_logits": _rand(gen, 1, 1, *spatial, lo=-2.0, hi=2.0),
        "blurry_logits": _rand(gen, 1, 1, *spatial, lo=-2.0, hi=2.0),
        "aux_logits": _rand(gen, 1, num_classes, 2, 2, 2, lo=-2.0, hi=2.0),
    }

    class _Targets:
        hard = hard_target
        soft = soft_target

    def total_scalar(leaves=leaves):
        outputs = NetworkOutputs(
            seg_logits=leaves["seg_logits"],
            clear_boundary_logits=leaves["clear_logits"],
            blurry_boundary_logits=leaves["blurry_logits"],
            aux_seg_logits=[leaves["aux_logits"]],
        )
        value, _ = total_loss(outputs, label, _Targets, tl_cfg)
        return value

    run("total_loss", total_scalar, leaves)

    return report
