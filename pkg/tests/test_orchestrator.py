"""Orchestrator compute paths: data plans, figure computations, determinism."""

import json

import numpy as np
import pytest

import radarmeta as rm
from radarmeta import orchestrator as orch
from radarmeta.experiment import ExperimentConfig
from radarmeta.mlp import flatten_params


@pytest.fixture(scope="module")
def tiny_cfg():
    return ExperimentConfig(
        offline_count=512, adapt_count=128, test_h0_count=400, test_h1_count=200,
        offline_iters=4, maml_iters_factor=2.0, adapt_steps=3, minibatch=32,
        meta_batch=2, train_band_starts=(0.1, 0.3), hidden_sizes=(8, 8),
        fig2_pfa=0.1, fig3_readout_pfa=0.1, fig4_readout_pfa=0.1,
        roc_pfa_min=0.05, roc_pfa_points=5, master_seed=5,
    )


@pytest.fixture(scope="module")
def tiny_run(tiny_cfg):
    datasets = orch.make_offline_datasets(tiny_cfg)
    psi_tl, _ = orch.run_pretrain(tiny_cfg, datasets, "transfer")
    psi_maml, _ = orch.run_pretrain(tiny_cfg, datasets, "maml")
    return datasets, psi_tl, psi_maml


class TestDataPlan:
    def test_plan_covers_everything(self, tiny_cfg):
        plan = orch._dataset_plan(tiny_cfg)
        names = [item["name"] for item in plan]
        assert len(names) == len(set(names))
        assert sum(n.startswith("offline_") for n in names) == tiny_cfg.n_train_envs
        assert "adapt_gaussian" in names and "adapt_heavy" in names
        assert "bench_heavy" in names
        assert sum(n.startswith("test_") for n in names) == 4

    def test_seeds_unique(self, tiny_cfg):
        plan = orch._dataset_plan(tiny_cfg)
        seeds = [item["seed"] for item in plan]
        assert len(seeds) == len(set(seeds))

    def test_in_memory_matches_plan(self, tiny_cfg):
        datasets = orch.make_offline_datasets(tiny_cfg)
        item = orch._dataset_plan(tiny_cfg)[0]
        built = orch._build_planned_dataset(tiny_cfg, item)
        assert np.array_equal(built.z, datasets[0].z)

    def test_eval_data_shapes(self, tiny_cfg):
        data = orch.make_eval_data(tiny_cfg, "gaussian")
        assert len(data.adapt_set) == tiny_cfg.scaled_adapt_count
        assert len(data.h0) == 400 and np.all(data.h0.labels == 0)
        assert len(data.h1) == 200 and np.all(data.h1.labels == 1)
        heavy = orch.make_eval_data(tiny_cfg, "heavy")
        assert not np.array_equal(heavy.h0.z, data.h0.z)


class TestPretrainEntryPoints:
    def test_deterministic(self, tiny_cfg, tiny_run):
        datasets, psi_tl, _ = tiny_run
        again, _ = orch.run_pretrain(tiny_cfg, datasets, "transfer")
        assert np.array_equal(flatten_params(again), flatten_params(psi_tl))

    def test_methods_differ(self, tiny_run):
        _, psi_tl, psi_maml = tiny_run
        assert not np.array_equal(flatten_params(psi_tl), flatten_params(psi_maml))

    def test_maml_budget_multiplier(self, tiny_cfg):
        assert tiny_cfg.scaled_maml_iters == 8  # 4 iters x factor 2
        assert tiny_cfg.train_config(0, "maml").offline_iters == 8
        assert tiny_cfg.train_config(0, "transfer").offline_iters == 4

    def test_unknown_method(self, tiny_cfg, tiny_run):
        with pytest.raises(Exception):
            orch.run_pretrain(tiny_cfg, tiny_run[0], "other")


class TestFigureComputations:
    def test_fig2(self, tiny_cfg, tiny_run):
        _, psi_tl, psi_maml = tiny_run
        data = orch.make_eval_data(tiny_cfg, "gaussian")
        res = orch.compute_fig2(tiny_cfg, psi_tl, psi_maml, data)
        assert set(res.curves) == {"maml", "transfer", "scratch"}
        for curve in res.curves.values():
            assert len(curve.updates) == tiny_cfg.adapt_steps + 1
            assert np.all((curve.pd >= 0) & (curve.pd <= 1))
        assert 0.0 < res.ideal_pd_mc <= 1.0
        assert 0.0 < res.ideal_pd_closed_form < 1.0
        # Monte Carlo should be near the closed form even at these pool sizes
        assert abs(res.ideal_pd_mc - res.ideal_pd_closed_form) < 0.2

    def test_fig3(self, tiny_cfg, tiny_run):
        _, psi_tl, psi_maml = tiny_run
        data = orch.make_eval_data(tiny_cfg, "gaussian")
        res = orch.compute_fig3(tiny_cfg, psi_tl, psi_maml, data)
        assert set(res.curves) == {"maml", "transfer"}
        assert set(res.readout_pd) == {"maml", "transfer"}
        for curve in res.curves.values():
            assert curve.pfa.shape == (tiny_cfg.roc_pfa_points,)

    def test_fig4_includes_ideal_and_benchmark(self, tiny_cfg, tiny_run):
        _, psi_tl, psi_maml = tiny_run
        data = orch.make_eval_data(tiny_cfg, "heavy")
        bench = orch.make_bench_dataset(tiny_cfg)
        res = orch.compute_fig4(tiny_cfg, psi_tl, psi_maml, data, bench)
        assert set(res.curves) == {"maml", "transfer", "benchmark", "ideal"}
        assert set(res.readout_pd) == {"maml", "transfer", "benchmark", "ideal"}

    def test_scratch_uses_scenario_scale(self, tiny_cfg):
        a = orch.scratch_params(tiny_cfg, "gaussian")
        b = orch.scratch_params(tiny_cfg, "heavy")
        assert not np.array_equal(flatten_params(a), flatten_params(b))
