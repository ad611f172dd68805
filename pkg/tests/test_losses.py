import math

import pytest
import torch

from sgseg.losses import (
    LossConfig,
    LossWeights,
    _soft_loss_from_probs,
    deep_supervision_loss,
    downsample_label,
    focal_boundary_loss,
    segmentation_loss,
    soft_boundary_loss,
    total_loss,
)
from sgseg.network import NetworkOutputs


def rand_logits(gen, *shape, scale=3.0):
    t = torch.empty(*shape, dtype=torch.float64)
    return t.uniform_(-scale, scale, generator=gen)


def bce_oracle(logits, target, epsilon):
    """Plain binary cross-entropy on clamped probabilities."""
    p = torch.sigmoid(logits).clamp(epsilon, 1 - epsilon)
    return (-(target * torch.log(p) + (1 - target) * torch.log(1 - p))).mean()


class TestFocal:
    def test_gamma0_closed_form(self):
        cfg = LossConfig(gamma=0.0)
        logits = torch.zeros(1, 1, 2, 2, 2, dtype=torch.float64)
        target = torch.ones_like(logits)
        assert float(focal_boundary_loss(logits, target, cfg)) == pytest.approx(
            math.log(2.0), rel=1e-12
        )

    def test_gamma2_closed_form(self):
        cfg = LossConfig(gamma=2.0)
        logits = torch.zeros(1, 1, 2, 2, 2, dtype=torch.float64)
        target = torch.ones_like(logits)
        assert float(focal_boundary_loss(logits, target, cfg)) == pytest.approx(
            0.25 * math.log(2.0), rel=1e-12
        )

    def test_gamma0_equals_bce(self):
        gen = torch.Generator().manual_seed(0)
        cfg = LossConfig(gamma=0.0)
        for _ in range(20):
            logits = rand_logits(gen, 2, 1, 4, 4, 2)
            target = (rand_logits(gen, 2, 1, 4, 4, 2) > 0).double()
            got = float(focal_boundary_loss(logits, target, cfg))
            want = float(bce_oracle(logits, target, cfg.epsilon))
            assert abs(got - want) <= 1e-8

    def test_monotone_nonincreasing_in_pt(self):
        # focal term -(1-p)^g log p decreases as the true-class probability grows
        for gamma in (0.0, 1.0, 2.0, 5.0):
            cfg = LossConfig(gamma=gamma)
            p_grid = torch.linspace(0.01, 0.99, 200, dtype=torch.float64)
            logits = torch.log(p_grid / (1 - p_grid)).reshape(1, 1, -1, 1, 1)
            losses = [
                float(
                    focal_boundary_loss(
                        logits[:, :, i : i + 1], torch.ones(1, 1, 1, 1, 1, dtype=torch.float64), cfg
                    )
                )
                for i in range(200)
            ]
            assert all(a >= b - 1e-15 for a, b in zip(losses, losses[1:]))

    def test_literal_form_value(self):
        cfg = LossConfig(gamma=2.0, literal_paper_form=True)
        logits = torch.zeros(1, 1, 1, 1, 1, dtype=torch.float64)
        target = torch.ones_like(logits)
        assert float(focal_boundary_loss(logits, target, cfg)) == pytest.approx(0.125, rel=1e-12)

    def test_rejects_nan_and_mismatch(self):
        cfg = LossConfig()
        with pytest.raises(ValueError, match="NaN"):
            focal_boundary_loss(
                torch.full((1, 1, 1, 1, 1), math.nan), torch.zeros(1, 1, 1, 1, 1), cfg
            )
        with pytest.raises(ValueError, match="does not match"):
            focal_boundary_loss(torch.zeros(1, 1, 2, 2, 2), torch.zeros(1, 1, 2, 2, 1), cfg)


class TestSoft:
    def test_one_hot_targets_equal_hard_bce(self):
        gen = torch.Generator().manual_seed(1)
        cfg = LossConfig()
        for _ in range(20):
            logits = rand_logits(gen, 1, 1, 4, 4, 2)
            target = (rand_logits(gen, 1, 1, 4, 4, 2) > 0).double()
            got = float(soft_boundary_loss(logits, target, cfg))
            want = float(bce_oracle(logits, target, cfg.epsilon))
            assert abs(got - want) <= 1e-8

    def test_entropy_floor(self):
        cfg = LossConfig()
        logits = torch.zeros(1, 1, 2, 2, 2, dtype=torch.float64)
        target = torch.full_like(logits, 0.5)
        assert float(soft_boundary_loss(logits, target, cfg)) == pytest.approx(
            math.log(2.0), rel=1e-12
        )

    def test_minimizer_at_target_probability(self):
        # scan p_hat over a 1e-3 grid; the soft cross-entropy must bottom out at p
        cfg = LossConfig()
        p = 0.3
        target = torch.full((1, 1, 1, 1, 1), p, dtype=torch.float64)
        grid = torch.arange(1, 1000, dtype=torch.float64) / 1000
        losses = []
        for p_hat in grid:
            logit = torch.log(p_hat / (1 - p_hat)).reshape(1, 1, 1, 1, 1)
            losses.append(float(soft_boundary_loss(logit, target, cfg)))
        assert float(grid[losses.index(min(losses))]) == pytest.approx(p, abs=1e-9)

    def test_rejects_out_of_range_targets(self):
        cfg = LossConfig()
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            soft_boundary_loss(
                torch.zeros(1, 1, 1, 1, 1), torch.full((1, 1, 1, 1, 1), 1.5), cfg
            )

    def test_literal_form_gradient_is_minus_p_over_n(self):
        gen = torch.Generator().manual_seed(2)
        cfg = LossConfig(literal_paper_form=True)
        p = torch.rand(1, 1, 4, 4, 2, dtype=torch.float64, generator=gen)
        p_hat = torch.rand(1, 1, 4, 4, 2, dtype=torch.float64, generator=gen).requires_grad_(True)
        _soft_loss_from_probs(p_hat, p, cfg).backward()
        assert torch.equal(p_hat.grad, -p / p.numel())


class TestSegmentation:
    def test_uniform_logits(self):
        logits = torch.zeros(1, 3, 2, 2, 2, dtype=torch.float64)
        label = torch.randint(0, 3, (1, 2, 2, 2))
        assert float(segmentation_loss(logits, label)) == pytest.approx(math.log(3.0), rel=1e-12)

    def test_large_margin_saturates(self):
        label = torch.randint(0, 3, (1, 2, 2, 2))
        logits = torch.zeros(1, 3, 2, 2, 2, dtype=torch.float64)
        logits.scatter_(1, label.unsqueeze(1), 20.0)
        assert float(segmentation_loss(logits, label)) < 1e-8

    def test_scalar_softmax_oracle(self):
        gen = torch.Generator().manual_seed(3)
        logits = rand_logits(gen, 1, 3, 2, 2, 2)
        label = torch.randint(0, 3, (1, 2, 2, 2), generator=gen)
        got = float(segmentation_loss(logits, label))
        total = 0.0
        for h in range(2):
            for w in range(2):
                for t in range(2):
                    row = [float(logits[0, c, h, w, t]) for c in range(3)]
                    m = max(row)
                    lse = m + math.log(sum(math.exp(v - m) for v in row))
                    total += lse - row[int(label[0, h, w, t])]
        assert got == pytest.approx(total / 8, rel=1e-12)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            segmentation_loss(torch.zeros(1, 3, 2, 2, 2), torch.full((1, 2, 2, 2), 3))


class TestDeepSupervision:
    def test_zero_weights(self):
        cfg = LossConfig(weights=LossWeights(aux=(0.0, 0.0)))
        label = torch.randint(0, 3, (1, 4, 4, 4))
        aux = [torch.randn(1, 3, 2, 2, 2), torch.randn(1, 3, 4, 4, 4)]
        assert float(deep_supervision_loss(aux, label, cfg)) == 0.0

    def test_single_scale_full_resolution(self):
        gen = torch.Generator().manual_seed(4)
        cfg = LossConfig(weights=LossWeights(aux=(1.0,)))
        label = torch.randint(0, 3, (1, 4, 4, 4), generator=gen)
        logits = rand_logits(gen, 1, 3, 4, 4, 4)
        assert float(deep_supervision_loss([logits], label, cfg)) == pytest.approx(
            float(segmentation_loss(logits, label)), rel=1e-12
        )

    def test_two_scales_hand_summed(self):
        gen = torch.Generator().manual_seed(5)
        cfg = LossConfig(weights=LossWeights(aux=(0.7, 0.3)))
        label = torch.randint(0, 3, (1, 4, 4, 4), generator=gen)
        coarse = rand_logits(gen, 1, 3, 2, 2, 2)
        fine = rand_logits(gen, 1, 3, 4, 4, 4)
        want = 0.7 * float(segmentation_loss(coarse, downsample_label(label, 2))) + 0.3 * float(
            segmentation_loss(fine, label)
        )
        assert float(deep_supervision_loss([coarse, fine], label, cfg)) == pytest.approx(
            want, rel=1e-12
        )

    def test_too_few_weights(self):
        cfg = LossConfig(weights=LossWeights(aux=(0.5,)))
        aux = [torch.zeros(1, 3, 2, 2, 2), torch.zeros(1, 3, 4, 4, 4)]
        with pytest.raises(ValueError, match="aux weights"):
            deep_supervision_loss(aux, torch.zeros(1, 4, 4, 4, dtype=torch.long), cfg)

    def test_resolution_mismatch(self):
        cfg = LossConfig(weights=LossWeights(aux=(1.0,)))
        with pytest.raises(ValueError, match="divisible|expect"):
            deep_supervision_loss(
                [torch.zeros(1, 3, 3, 3, 3)], torch.zeros(1, 4, 4, 4, dtype=torch.long), cfg
            )


def _fake_outputs(gen, num_classes=3, spatial=(4, 4, 2)):
    return NetworkOutputs(
        seg_logits=rand_logits(gen, 1, num_classes, *spatial),
        clear_boundary_logits=rand_logits(gen, 1, 1, *spatial),
        blurry_boundary_logits=rand_logits(gen, 1, 1, *spatial),
        aux_seg_logits=[rand_logits(gen, 1, num_classes, 2, 2, 1)],
    )


class _Targets:
    def __init__(self, gen, spatial=(4, 4, 2)):
        self.hard = (rand_logits(gen, 1, 1, *spatial) > 0).double()
        self.soft = torch.rand(1, 1, *spatial, dtype=torch.float64, generator=gen)


class TestTotal:
    def test_all_weights_zero(self):
        gen = torch.Generator().manual_seed(6)
        cfg = LossConfig(weights=LossWeights(seg=0.0, clear=0.0, blurry=0.0, aux=(0.0,)))
        outputs = _fake_outputs(gen)
        label = torch.randint(0, 3, (1, 4, 4, 2), generator=gen)
        value, breakdown = total_loss(outputs, label, _Targets(gen), cfg)
        assert float(value) == 0.0 and breakdown["total"] == 0.0

    def test_seg_only(self):
        gen = torch.Generator().manual_seed(7)
        cfg = LossConfig(weights=LossWeights(seg=1.0, clear=0.0, blurry=0.0, aux=(0.0,)))
        outputs = _fake_outputs(gen)
        label = torch.randint(0, 3, (1, 4, 4, 2), generator=gen)
        value, _ = total_loss(outputs, label, _Targets(gen), cfg)
        assert float(value) == pytest.approx(
            float(segmentation_loss(outputs.seg_logits, label)), rel=1e-12
        )

    def test_random_weights_hand_weighted(self):
        gen = torch.Generator().manual_seed(8)
        cfg = LossConfig(weights=LossWeights(seg=0.9, clear=0.3, blurry=0.7, aux=(0.2,)))
        outputs = _fake_outputs(gen)
        label = torch.randint(0, 3, (1, 4, 4, 2), generator=gen)
        targets = _Targets(gen)
        value, breakdown = total_loss(outputs, label, targets, cfg)
        want = (
            0.9 * float(segmentation_loss(outputs.seg_logits, label))
            + 0.3 * float(focal_boundary_loss(outputs.clear_boundary_logits, targets.hard, cfg))
            + 0.7 * float(soft_boundary_loss(outputs.blurry_boundary_logits, targets.soft, cfg))
            + float(deep_supervision_loss(outputs.aux_seg_logits, label, cfg))
        )
        assert float(value) == pytest.approx(want, rel=1e-12)
        assert set(breakdown) == {"seg", "clear", "blurry", "aux", "total"}

    def test_nonnegative_and_finite(self):
        gen = torch.Generator().manual_seed(9)
        cfg = LossConfig()
        for _ in range(10):
            outputs = _fake_outputs(gen)
            label = torch.randint(0, 3, (1, 4, 4, 2), generator=gen)
            value, breakdown = total_loss(outputs, label, _Targets(gen), cfg)
            assert math.isfinite(float(value)) and float(value) >= 0.0
            assert all(math.isfinite(v) and v >= 0.0 for v in breakdown.values())


class TestConfigValidation:
    def test_negative_gamma_rejected(self):
        with pytest.raises(ValueError, match="gamma|exponent"):
            LossConfig(gamma=-1.0)

    def test_epsilon_bounds(self):
        with pytest.raises(ValueError, match="epsilon"):
            LossConfig(epsilon=0.0)
        with pytest.raises(ValueError, match="epsilon"):
            LossConfig(epsilon=0.1)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            LossWeights(seg=-0.1)
