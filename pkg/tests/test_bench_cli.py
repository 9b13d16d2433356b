import json

import numpy as np
import pytest

from prunepose.bench import (
    BenchConfig,
    forward_baseline,
    run_gradcheck,
    run_ratio_grid,
    run_train_smoke,
)
from prunepose.cli import GRID_MODEL, TINY_MODEL, _model_config, run
from prunepose.dpc import DpcConfig
from prunepose.model import ModelConfig, init_model_params
from prunepose.synth import SynthScene, make_triplet_sample

TINY = _model_config(TINY_MODEL)
SMALL_GRID = ModelConfig(image_size=(32, 32), embed_dim=8, joints=2, heads=2)


class TestBenchConfig:
    def test_zero_iterations_rejected(self):
        with pytest.raises(ValueError):
            BenchConfig(iters=0)

    def test_negative_warmup_rejected(self):
        with pytest.raises(ValueError):
            BenchConfig(warmup=-1)


class TestBaselineVariant:
    def test_baseline_heatmap_shape(self):
        params = init_model_params(TINY, 0)
        scene = SynthScene(seed=0, joints=TINY.joints)
        triplet, _, _ = make_triplet_sample(scene, TINY)
        out = forward_baseline(triplet, TINY, params)
        assert out.shape == (TINY.joints, *TINY.heatmap_size)


class TestRatioGrid:
    def test_grid_structure_and_mac_monotonicity(self):
        report = run_ratio_grid(SMALL_GRID, ratios=(1, 2), train_steps=1, iters=1)
        assert len(report["cells"]) == 4
        macs = {(c["eps_hrb"], c["eps_lrb"]): c["macs"] for c in report["cells"]}
        assert macs[(2, 1)] < macs[(1, 1)]
        assert macs[(1, 2)] < macs[(1, 1)]
        assert macs[(2, 2)] < macs[(2, 1)]

    def test_identity_cell_present(self):
        report = run_ratio_grid(SMALL_GRID, ratios=(1,), train_steps=1, iters=1)
        cell = report["cells"][0]
        assert (cell["eps_hrb"], cell["eps_lrb"]) == (1, 1)
        assert "final_loss" in cell

    def test_empty_ratios_rejected(self):
        with pytest.raises(ValueError):
            run_ratio_grid(SMALL_GRID, ratios=())


class TestGradcheckCommand:
    def test_oversized_config_rejected(self):
        with pytest.raises(ValueError):
            run_gradcheck(ModelConfig(image_size=(128, 128), embed_dim=8,
                                      joints=2, heads=2))

    def test_subset_passes(self):
        report = run_gradcheck(TINY, max_coords_per_param=2)
        assert report["passed"]

    def test_corrupted_gradient_fails_with_named_parameter(self):
        report = run_gradcheck(TINY, corrupt="patch_bias", max_coords_per_param=2)
        assert not report["passed"]
        assert report["worst_parameter"].startswith("patch_bias")

    def test_unknown_corrupt_target_rejected(self):
        with pytest.raises(KeyError):
            run_gradcheck(TINY, corrupt="nope", max_coords_per_param=1)


class TestTrainSmoke:
    def test_zero_lr_flat_curve_fails_threshold(self):
        report = run_train_smoke(TINY, steps=5, lr=0.0, batch=1)
        assert not report["passed"]
        assert report["initial_loss"] == pytest.approx(report["final_loss"])

    def test_determinism_same_seed(self):
        a = run_train_smoke(TINY, steps=3, lr=0.03, seed=7, batch=1)
        b = run_train_smoke(TINY, steps=3, lr=0.03, seed=7, batch=1)
        assert a["curve"] == b["curve"]

    def test_short_run_reduces_loss(self):
        report = run_train_smoke(TINY, steps=20, lr=0.03, batch=1)
        assert report["final_loss"] < report["curve"][0]


class TestCli:
    def _tiny_config_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"model": TINY_MODEL}))
        return str(path)

    def test_bench_writes_report(self, tmp_path, capsys):
        out = tmp_path / "report.json"
        code = run(["bench", "--config", self._tiny_config_file(tmp_path),
                    "--iters", "1", "--warmup", "0", "--out", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["schema"] == "prunepose-report-v1"
        assert set(report["variants"]) == {"baseline", "multi_grained",
                                           "multi_grained_pruned"}
        assert report["config"]["model"]["embed_dim"] == 8

    def test_bench_macs_reproducible(self, tmp_path, capsys):
        cfg = self._tiny_config_file(tmp_path)
        outs = []
        for name in ("a.json", "b.json"):
            out = tmp_path / name
            assert run(["bench", "--config", cfg, "--iters", "1",
                        "--warmup", "0", "--out", str(out)]) == 0
            outs.append(json.loads(out.read_text()))
        for variant in outs[0]["variants"]:
            assert (outs[0]["variants"][variant]["macs"]
                    == outs[1]["variants"][variant]["macs"])

    def test_eps_flags_override(self, tmp_path, capsys):
        out = tmp_path / "r.json"
        code = run(["bench", "--config", self._tiny_config_file(tmp_path),
                    "--iters", "1", "--warmup", "0",
                    "--eps-hrb", "2", "--eps-lrb", "3", "--out", str(out)])
        assert code == 0
        model = json.loads(out.read_text())["config"]["model"]
        assert model["hr_cfg"]["epsilon"] == 2
        assert model["lr_cfg"]["epsilon"] == 3

    def test_bad_config_file_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run(["bench", "--config", str(bad)]) == 2

    def test_bad_model_value_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"model": {"image_size": [30, 30]}}))
        assert run(["bench", "--config", str(bad)]) == 2

    def test_gradcheck_corrupt_exits_1(self, tmp_path, capsys):
        code = run(["gradcheck", "--corrupt", "patch_bias", "--max-coords", "1"])
        assert code == 1

    def test_gradcheck_subset_exits_0(self, capsys):
        assert run(["gradcheck", "--max-coords", "1"]) == 0

    def test_train_smoke_writes_curve(self, tmp_path, capsys):
        out = tmp_path / "smoke.json"
        code = run(["train-smoke", "--steps", "25", "--batch", "1",
                    "--out", str(out)])
        report = json.loads(out.read_text())
        assert len(report["curve"]) == 26
        curve_csv = (tmp_path / "smoke.json.curve.csv").read_text().splitlines()
        assert curve_csv[0] == "step,loss"
        assert len(curve_csv) == 27
        assert code in (0, 1)

    def test_ratio_grid_emits_csv(self, tmp_path, capsys):
        out = tmp_path / "grid.json"
        cfg = tmp_path / "grid_cfg.json"
        cfg.write_text(json.dumps({"model": {**GRID_MODEL,
                                             "image_size": [32, 32],
                                             "embed_dim": 8, "joints": 2}}))
        code = run(["ratio-grid", "--config", str(cfg), "--ratios", "1", "2",
                    "--train-steps", "1", "--iters", "1", "--out", str(out)])
        assert code == 0
        rows = (tmp_path / "grid.json.csv").read_text().splitlines()
        assert rows[0].startswith("eps_hrb,eps_lrb")
        assert len(rows) == 5

    def test_dump_synth(self, tmp_path, capsys):
        out = tmp_path / "dump"
        code = run(["dump-synth", "--length", "3", "--out", str(out)])
        assert code == 0
        assert (out / "frame_000.pgm").exists()
        assert (out / "keypoints.json").exists()
