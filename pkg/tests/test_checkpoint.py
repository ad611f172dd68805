import numpy as np
import pytest
import torch

from sgseg.checkpoint import (
    load_checkpoint,
    restore_network,
    restore_optimizer,
    save_checkpoint,
)
from sgseg.network import NetworkConfig, build_network


def small_net(seed=0):
    return build_network(NetworkConfig(stage_channels=(4, 8), num_classes=3), seed=seed)


class TestRoundTrip:
    def test_forward_bit_identical_after_reload(self, tmp_path):
        old_threads = torch.get_num_threads()
        torch.set_num_threads(1)
        try:
            net = small_net()
            path = tmp_path / "ckpt.npz"
            save_checkpoint(path, net)
            restored = restore_network(load_checkpoint(path))
            x = torch.randn(1, 1, 8, 8, 4, generator=torch.Generator().manual_seed(0))
            assert torch.equal(net(x).seg_logits, restored(x).seg_logits)
            assert torch.equal(net(x).blurry_boundary_logits, restored(x).blurry_boundary_logits)
        finally:
            torch.set_num_threads(old_threads)

    def test_parameters_bit_identical(self, tmp_path):
        net = small_net(seed=7)
        save_checkpoint(tmp_path / "c.npz", net)
        ckpt = load_checkpoint(tmp_path / "c.npz")
        for name, p in net.state_dict().items():
            stored = ckpt.params[name]
            assert np.array_equal(p.numpy().view(np.uint32), stored.view(np.uint32)), name

    def test_config_and_train_state_embedded(self, tmp_path):
        net = small_net()
        save_checkpoint(tmp_path / "c.npz", net, train_state={"epoch": 3, "global_step": 17})
        ckpt = load_checkpoint(tmp_path / "c.npz")
        assert ckpt.config == net.cfg
        assert ckpt.train_state == {"epoch": 3, "global_step": 17}

    def test_adam_state_round_trip(self, tmp_path):
        net = small_net()
        opt = torch.optim.Adam(net.parameters(), lr=1e-3)
        x = torch.randn(1, 1, 8, 8, 4)
        out = net(x)
        out.seg_logits.square().mean().backward()
        opt.step()
        save_checkpoint(tmp_path / "c.npz", net, opt)

        ckpt = load_checkpoint(tmp_path / "c.npz")
        net2 = restore_network(ckpt)
        opt2 = torch.optim.Adam(net2.parameters(), lr=1e-3)
        restore_optimizer(ckpt, net2, opt2)
        s1 = opt.state_dict()["state"]
        s2 = opt2.state_dict()["state"]
        assert s1.keys() == s2.keys()
        for idx in s1:
            assert torch.equal(s1[idx]["exp_avg"], s2[idx]["exp_avg"])
            assert torch.equal(s1[idx]["exp_avg_sq"], s2[idx]["exp_avg_sq"])
            assert float(s1[idx]["step"]) == float(s2[idx]["step"])

    def test_unknown_archive_rejected(self, tmp_path):
        path = tmp_path / "bogus.npz"
        with open(path, "wb") as fh:
            np.savez(fh, **{"meta/format": np.str_("something-else")})
        with pytest.raises(ValueError, match="sgseg-checkpoint-v1"):
            load_checkpoint(path)
