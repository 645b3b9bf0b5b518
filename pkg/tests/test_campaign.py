from __future__ import annotations

import json
import time

import numpy as np
import pytest

from impq import campaign, nonlocality
from impq.campaign import CampaignConfig, ConfigError
from impq.operators import make_rng


class TestConfig:
    def test_defaults(self):
        cfg = CampaignConfig()
        assert len(cfg.dims) * cfg.samples_per_dim >= 250
        assert cfg.tol["gap_block"] == 1e-8

    @pytest.mark.parametrize("kw", [
        {"dims": ((1, 2),)},
        {"dims": ((16, 17),)},
        {"dims": ()},
        {"samples_per_dim": 0},
        {"checks": ("nope",)},
        {"tolerances": {"nope": 1.0}},
        {"master_seed": -1},
    ])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            CampaignConfig(**kw)

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            CampaignConfig.from_dict({"dimz": [[2, 2]]})

    def test_roundtrip(self, tmp_path):
        cfg = CampaignConfig(dims=((2, 3),), samples_per_dim=2, master_seed=5, tolerances={"gap_psd": 1e-8})
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg.to_dict()))
        back = campaign.load_config(path)
        assert back.to_dict() == cfg.to_dict()

    def test_overrides(self):
        cfg = CampaignConfig().with_overrides(master_seed=9, samples_per_dim=None)
        assert cfg.master_seed == 9 and cfg.samples_per_dim == campaign.DEFAULT_SAMPLES


class TestGenerators:
    def test_random_pair_is_separated(self):
        rng = make_rng(1)
        for _ in range(20):
            p, q = campaign.random_pair(5, 2, 3, rng)
            assert campaign.well_separated(p, q)

    def test_commuting_partner(self):
        rng = make_rng(2)
        p, _ = campaign.random_pair(4, 2, 2, rng)
        q = campaign.commuting_partner(p, rng)
        assert np.max(np.abs(p.matrix @ q.matrix - q.matrix @ p.matrix)) < 1e-12

    def test_resolution(self):
        res = campaign.random_resolution(5, make_rng(3))
        assert sum(p.rank for p in res.parts) == 5

    def test_instance_is_deterministic(self):
        a, b = campaign.draw_instance(3, 4, 77), campaign.draw_instance(3, 4, 77)
        np.testing.assert_array_equal(a.scene.p1.matrix, b.scene.p1.matrix)
        np.testing.assert_array_equal(a.states[1][0].matrix, b.states[1][0].matrix)


class TestRun:
    def test_sample_passes_and_replays(self):
        a = campaign.run_sample(2, 3, 123)
        assert a["pass"], [k for k, v in a["checks"].items() if not v["pass"]]
        b = campaign.run_sample(2, 3, 123)
        assert campaign.report_json(a) == campaign.report_json(b)

    def test_error_becomes_failure(self, monkeypatch):
        def boom(*args):
            raise RuntimeError("injected")

        monkeypatch.setattr(campaign, "draw_instance", boom)
        out = campaign.run_sample(2, 2, 1)
        assert not out["pass"] and "injected" in out["checks"]["error"]["message"]
        agg = campaign._aggregate([out])
        assert agg["error"]["failures"][0]["seed"] == 1

    def test_failed_check_carries_seed(self):
        cfg = CampaignConfig(dims=((2, 2),), samples_per_dim=2, tolerances={"gap_nonzero": 10.0},
                             checks=("gap",))
        rep = campaign.run_campaign(cfg)
        assert not rep["pass"]
        failures = rep["aggregate"]["gap.gap_nonzero"]["failures"]
        assert {f["seed"] for f in failures} == {s["seed"] for s in rep["samples"]}
        # each failure reproduces on its own from the embedded seed
        for f in failures:
            alone = campaign.run_sample(*f["dims"], f["seed"], cfg.tol, cfg.checks, f["index"])
            assert campaign.report_json(alone) == campaign.report_json(rep["samples"][f["index"]])

    def test_small_campaign(self):
        cfg = CampaignConfig(dims=((2, 2), (2, 3)), samples_per_dim=3, master_seed=11)
        rep = campaign.run_campaign(cfg)
        assert rep["pass"] and rep["summary"]["samples"] == 6
        assert rep["campaign"]["monotonicity_violation_witness"]["count"] >= 1
        json.loads(campaign.report_json(rep))
        again = campaign.run_campaign(cfg)
        assert campaign.report_json(rep) == campaign.report_json(again)

    def test_ten_qubit_pairs_fast(self):
        t0 = time.perf_counter()
        rep = campaign.run_campaign(CampaignConfig(dims=((2, 2),), samples_per_dim=10))
        assert rep["pass"] and rep["summary"]["passed"] == 10
        assert time.perf_counter() - t0 < 5.0

    def test_spin_only(self):
        rep = campaign.run_campaign(CampaignConfig(checks=("spin",)))
        assert "samples" not in rep and rep["pass"]
        assert campaign.report_json(rep["spin"]) == campaign.report_json(nonlocality.spin_half_report())

    def test_threads_do_not_change_result(self, monkeypatch):
        cfg = CampaignConfig(dims=((2, 2),), samples_per_dim=3, checks=("gap", "cs"))
        monkeypatch.setenv("IMPQ_THREADS", "1")
        one = campaign.report_json(campaign.run_campaign(cfg))
        monkeypatch.setattr(campaign, "_workers", lambda: 3)
        assert campaign.report_json(campaign.run_campaign(cfg)) == one

    def test_seed_text(self):
        assert campaign.seed_from_text("0x10") == 16
        assert campaign.seed_from_text("-1") == 2**64 - 1
