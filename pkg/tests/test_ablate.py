import csv
import json

import jsonschema
import pytest

from sgseg.ablate import run_ablation
from sgseg.schemas import ABLATION_SUMMARY_SCHEMA

from conftest import tiny_experiment_config


@pytest.fixture(scope="module")
def ablation(tiny_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("ablation")
    cfg = tiny_experiment_config(tiny_dataset, epochs=1)
    summary = run_ablation(cfg, out, seeds=(0,))
    return out, summary


class TestGridCoverage:
    def test_all_four_configurations_ran(self, ablation):
        out, summary = ablation
        run_dirs = {p.name for p in out.glob("run_*")}
        assert run_dirs == {
            "run_sg1_soft1_seed0",
            "run_sg1_soft0_seed0",
            "run_sg0_soft1_seed0",
            "run_sg0_soft0_seed0",
        }
        assert set(summary["per_config"]) == {"sg1_soft1", "sg1_soft0", "sg0_soft1", "sg0_soft0"}

    def test_table_cardinality(self, ablation):
        out, _ = ablation
        with open(out / "ablation.csv") as fh:
            rows = list(csv.DictReader(fh))
        # 4 configurations x 1 seed x 3 classes
        assert len(rows) == 4 * 1 * 3
        baseline = [
            r for r in rows if r["use_sg"] == "0" and r["use_soft_contour"] == "0"
        ]
        assert len(baseline) == 3  # the plain deep-supervised baseline is present

    def test_summary_schema_and_deltas(self, ablation):
        out, summary = ablation
        payload = json.loads((out / "summary.json").read_text())
        jsonschema.validate(payload, ABLATION_SUMMARY_SCHEMA)
        assert payload == summary
        for key in ("sg_effect_dsc_blurry", "soft_contour_effect_asd_blurry"):
            assert set(summary["deltas"][key]["per_seed"]) == {"0"}

    def test_matched_seeds_share_data(self, ablation):
        out, _ = ablation
        logs = {}
        for name in ("run_sg1_soft1_seed0", "run_sg0_soft1_seed0"):
            with open(out / name / "train_log.csv") as fh:
                logs[name] = list(csv.DictReader(fh))
        # same dataset and schedule: identical step counts and lr columns
        assert [r["lr"] for r in logs["run_sg1_soft1_seed0"]] == [
            r["lr"] for r in logs["run_sg0_soft1_seed0"]
        ]
