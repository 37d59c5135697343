"""Training regimes: definitions, determinism, and the meta-gradient oracle."""

import numpy as np
import pytest

import radarmeta as rm
from radarmeta.mlp import MLPParams, flatten_params, unflatten_params
from radarmeta.training import TaskBatch, TrainConfig, maml_meta_gradient


def toy_dataset(n=256, sep=2.5, seed=0, label="toy"):
    """Linearly separable K=1 complex dataset: class mean +-sep*(1+1j)."""
    rng = np.random.default_rng(seed)
    labels = (np.arange(n) % 2).astype(np.uint8)
    signs = 2.0 * labels - 1.0
    z = signs * sep * (1 + 1j) + (rng.normal(size=n) + 1j * rng.normal(size=n)) * 0.3
    return rm.Dataset(z=z[:, None], labels=labels, env_label=label, seed=seed)


def small_config(**kw):
    defaults = dict(inner_lr=0.2, outer_lr=0.002, minibatch=16, meta_batch=2,
                    offline_iters=5, adapt_steps=4, seed=1)
    defaults.update(kw)
    return TrainConfig(**defaults)


class TestTrainConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(inner_lr=0.0)
        with pytest.raises(ValueError):
            TrainConfig(outer_lr=-1.0)
        with pytest.raises(ValueError):
            TrainConfig(minibatch=0)
        with pytest.raises(ValueError):
            TrainConfig(support_fraction=1.0)

    def test_defaults_match_experiment_setup(self):
        cfg = TrainConfig()
        assert cfg.inner_lr == 0.2
        assert cfg.outer_lr == 0.002
        assert cfg.minibatch == 128
        assert cfg.meta_batch == 10
        assert cfg.adapt_steps == 40


class TestPretrainTransfer:
    def test_zero_iterations_returns_initialization(self):
        ds = toy_dataset()
        cfg = small_config(offline_iters=0)
        params, trace = rm.pretrain_transfer([ds], [2, 1], cfg)
        expected = rm.init_params([2, 1], np.random.default_rng(cfg.seed))
        assert np.array_equal(flatten_params(params), flatten_params(expected))
        assert len(trace) == 0

    def test_single_env_is_plain_minibatch_sgd(self):
        ds = toy_dataset()
        cfg = small_config(offline_iters=3)
        params, _ = rm.pretrain_transfer([ds], [2, 1], cfg)
        # replay the same stream by hand
        rng = np.random.default_rng(cfg.seed)
        manual = rm.init_params([2, 1], rng)
        for _ in range(3):
            idx = rng.integers(0, len(ds), size=cfg.minibatch)
            _, g = rm.loss_grad(manual, rm.embed_input(ds.z[idx]), ds.labels[idx])
            manual = rm.axpy_params(manual, g, -cfg.outer_lr)
        assert np.array_equal(flatten_params(params), flatten_params(manual))

    def test_converges_on_separable_problem(self):
        # logistic-regression oracle: two identical-distribution environments,
        # separable classes, loss must fall below 0.1 within the budget
        envs = [toy_dataset(seed=0, label="a"), toy_dataset(seed=1, label="b")]
        cfg = small_config(offline_iters=5000, minibatch=32, outer_lr=0.05)
        params, trace = rm.pretrain_transfer(envs, [2, 1], cfg)
        final = np.mean(
            [rm.loss(params, rm.embed_input(ds.z), ds.labels) for ds in envs]
        )
        assert final < 0.1
        assert len(trace) == 5000

    def test_deterministic(self):
        ds = toy_dataset()
        cfg = small_config()
        a, _ = rm.pretrain_transfer([ds], [2, 1], cfg)
        b, _ = rm.pretrain_transfer([ds], [2, 1], cfg)
        assert np.array_equal(flatten_params(a), flatten_params(b))

    def test_empty_dataset_list_rejected(self):
        with pytest.raises(ValueError):
            rm.pretrain_transfer([], [2, 1], small_config())

    def test_datasets_not_mutated(self):
        ds = toy_dataset()
        before = ds.z.copy()
        rm.pretrain_transfer([ds], [2, 1], small_config())
        assert np.array_equal(ds.z, before)


class TestMamlInnerUpdate:
    def test_alpha_zero_identity(self):
        rng = np.random.default_rng(2)
        psi = rm.init_params([3, 1], rng)
        u, labels = rng.normal(size=(4, 3)), np.array([0.0, 1.0, 1.0, 0.0])
        theta = rm.maml_inner_update(psi, u, labels, 0.0)
        assert np.array_equal(flatten_params(theta), flatten_params(psi))

    def test_definition(self):
        rng = np.random.default_rng(3)
        psi = rm.init_params([3, 2, 1], rng)
        u, labels = rng.normal(size=(6, 3)), rng.integers(0, 2, 6).astype(float)
        _, g = rm.loss_grad(psi, u, labels)
        theta = rm.maml_inner_update(psi, u, labels, 0.2)
        assert np.allclose(
            flatten_params(theta), flatten_params(psi) - 0.2 * g, rtol=0, atol=1e-18
        )

    def test_quadratic_surrogate_contraction(self):
        # for L(w) = ||w||^2/2 the gradient is w itself, so one step of the
        # same update kernel contracts the parameters by (1 - alpha)
        rng = np.random.default_rng(4)
        psi = rm.init_params([3, 2, 1], rng)
        theta = rm.axpy_params(psi, flatten_params(psi), -0.2)
        assert np.allclose(flatten_params(theta), 0.8 * flatten_params(psi), rtol=1e-15)


class TestMamlMetaStep:
    def test_zero_query_gradient_keeps_psi(self):
        # zero parameters + the same input under both labels: the per-sample
        # output deltas are +-0.5 and every gradient cancels exactly
        sizes = [2, 1]
        psi = unflatten_params(np.zeros(rm.param_count(sizes)), sizes)
        u = np.array([[0.4, -0.1], [0.4, -0.1]])
        labels = np.array([0.0, 1.0])
        task = TaskBatch(u, labels, u, labels)
        for first_order in (True, False):
            cfg = small_config(first_order=first_order)
            out, _ = rm.maml_meta_step(psi, [task], cfg)
            assert np.array_equal(flatten_params(out), flatten_params(psi))

    def test_first_order_alpha_zero_equals_query_sgd_step(self):
        rng = np.random.default_rng(5)
        psi = rm.init_params([3, 2, 1], rng)
        support = (rng.normal(size=(4, 3)), rng.integers(0, 2, 4).astype(float))
        query = (rng.normal(size=(4, 3)), rng.integers(0, 2, 4).astype(float))
        cfg = small_config(inner_lr=1e-300, first_order=True)  # alpha -> 0
        out, _ = rm.maml_meta_step(psi, [TaskBatch(*support, *query)], cfg)
        _, qg = rm.loss_grad(psi, *query)
        manual = rm.axpy_params(psi, qg, -cfg.outer_lr)
        assert np.allclose(flatten_params(out), flatten_params(manual), rtol=0, atol=1e-12)

    def test_second_order_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        sizes = [3, 2, 1]
        psi = rm.init_params(sizes, rng)
        tasks = [
            TaskBatch(
                rng.normal(size=(4, 3)), rng.integers(0, 2, 4).astype(float),
                rng.normal(size=(4, 3)), rng.integers(0, 2, 4).astype(float),
            )
            for _ in range(2)
        ]
        cfg = small_config(first_order=False)
        _, mg = maml_meta_gradient(psi, tasks, cfg)

        def meta_loss(flat):
            p = unflatten_params(flat, sizes)
            total = 0.0
            for t in tasks:
                theta = rm.maml_inner_update(p, t.support_inputs, t.support_labels, cfg.inner_lr)
                total += rm.loss(theta, t.query_inputs, t.query_labels)
            return total

        flat = flatten_params(psi)
        eps = 1e-5
        fd = np.zeros_like(flat)
        for i in range(flat.size):
            d = np.zeros_like(flat)
            d[i] = eps
            fd[i] = (meta_loss(flat + d) - meta_loss(flat - d)) / (2 * eps)
        assert np.max(np.abs(mg - fd)) / np.max(np.abs(fd)) < 1e-4

    def test_meta_gradient_linear_over_tasks(self):
        rng = np.random.default_rng(7)
        psi = rm.init_params([3, 2, 1], rng)
        tasks = [
            TaskBatch(
                rng.normal(size=(4, 3)), rng.integers(0, 2, 4).astype(float),
                rng.normal(size=(4, 3)), rng.integers(0, 2, 4).astype(float),
            )
            for _ in range(3)
        ]
        cfg = small_config(first_order=False)
        _, together = maml_meta_gradient(psi, tasks, cfg)
        parts = sum(maml_meta_gradient(psi, [t], cfg)[1] for t in tasks)
        assert np.allclose(together, parts, rtol=1e-12, atol=1e-18)

    def test_orders_agree_when_hessian_term_vanishes(self):
        # single-layer net at zero parameters: support {(u, 1)} has
        # H = 0.25 * x~ x~^T with x~ = [u; 1]; a query input v with
        # u . v = -1 makes x~ orthogonal to the query-gradient direction
        # [v; 1], so H @ q_grad = 0 and both orders coincide exactly.
        sizes = [2, 1]
        psi = unflatten_params(np.zeros(rm.param_count(sizes)), sizes)
        u = np.array([[1.0, 1.0]])
        v = np.array([[-0.5, -0.5]])
        task = TaskBatch(u, np.array([1.0]), v, np.array([0.0]))
        cfg1 = small_config(first_order=True)
        cfg2 = small_config(first_order=False)
        out1, _ = rm.maml_meta_step(psi, [task], cfg1)
        out2, _ = rm.maml_meta_step(psi, [task], cfg2)
        # the inner step is non-trivial
        theta = rm.maml_inner_update(psi, u, np.array([1.0]), cfg1.inner_lr)
        assert not np.array_equal(flatten_params(theta), flatten_params(psi))
        assert np.allclose(flatten_params(out1), flatten_params(out2), rtol=0, atol=1e-18)


class TestPretrainMaml:
    def test_zero_iterations_returns_initialization(self):
        ds = [toy_dataset(seed=s) for s in range(3)]
        cfg = small_config(offline_iters=0)
        params, trace = rm.pretrain_maml(ds, [2, 1], cfg)
        expected = rm.init_params([2, 1], np.random.default_rng(cfg.seed))
        assert np.array_equal(flatten_params(params), flatten_params(expected))
        assert len(trace) == 0

    def test_trace_length(self):
        ds = [toy_dataset(seed=s) for s in range(3)]
        cfg = small_config(offline_iters=7)
        _, trace = rm.pretrain_maml(ds, [2, 1], cfg)
        assert len(trace) == 7

    def test_meta_batch_larger_than_envs_rejected(self):
        ds = [toy_dataset()]
        with pytest.raises(ValueError):
            rm.pretrain_maml(ds, [2, 1], small_config(meta_batch=2))

    def test_deterministic(self):
        ds = [toy_dataset(seed=s) for s in range(3)]
        cfg = small_config(offline_iters=6)
        a, _ = rm.pretrain_maml(ds, [2, 1], cfg)
        b, _ = rm.pretrain_maml(ds, [2, 1], cfg)
        assert np.array_equal(flatten_params(a), flatten_params(b))

    def test_improves_adaptation_on_toy_family(self):
        # tasks differ by class polarity; MAML should reach low post-update loss
        def flipped(n, seed, flip):
            ds = toy_dataset(seed=seed)
            labels = (1 - ds.labels) if flip else ds.labels
            return rm.Dataset(z=ds.z, labels=labels, env_label=f"t{seed}", seed=seed)

        family = [flipped(256, s, s % 2 == 0) for s in range(4)]
        cfg = small_config(offline_iters=800, minibatch=32, meta_batch=2,
                           inner_lr=0.5, outer_lr=0.05)
        psi, _ = rm.pretrain_maml(family, [2, 1], cfg)
        held_out = flipped(256, 9, True)
        u, labels = rm.embed_input(held_out.z), held_out.labels
        theta = rm.maml_inner_update(psi, u, labels.astype(float), cfg.inner_lr)
        assert rm.loss(theta, u, labels) < rm.loss(psi, u, labels)


class TestAdapt:
    def test_zero_steps_identity(self):
        ds = toy_dataset()
        psi = rm.init_params([2, 1], np.random.default_rng(8))
        out, trace = rm.adapt(psi, ds, lr=0.002, steps=0)
        assert np.array_equal(flatten_params(out), flatten_params(psi))
        assert len(trace) == 0

    def test_each_step_is_full_batch_gradient_descent(self):
        ds = toy_dataset(n=32)
        psi = rm.init_params([2, 1], np.random.default_rng(9))
        out, _ = rm.adapt(psi, ds, lr=0.01, steps=1)
        u, labels = rm.embed_input(ds.z), ds.labels
        _, g = rm.loss_grad(psi, u, labels)
        assert np.allclose(
            flatten_params(out), flatten_params(psi) - 0.01 * g, rtol=0, atol=1e-18
        )

    def test_composition_of_single_steps(self):
        ds = toy_dataset(n=64)
        psi = rm.init_params([2, 1], np.random.default_rng(10))
        full, _ = rm.adapt(psi, ds, lr=0.01, steps=5)
        stepwise = psi
        for _ in range(5):
            stepwise, _ = rm.adapt(stepwise, ds, lr=0.01, steps=1)
        assert np.array_equal(flatten_params(full), flatten_params(stepwise))

    def test_descent_after_forty_steps(self):
        ds = toy_dataset(n=512, sep=1.0)
        psi = rm.init_params([2, 1], np.random.default_rng(11))
        u, labels = rm.embed_input(ds.z), ds.labels
        before = rm.loss(psi, u, labels)
        out, trace = rm.adapt(psi, ds, lr=0.002, steps=40)
        assert rm.loss(out, u, labels) <= before
        assert len(trace) == 40

    def test_init_not_mutated(self):
        ds = toy_dataset()
        psi = rm.init_params([2, 1], np.random.default_rng(12))
        before = flatten_params(psi).copy()
        rm.adapt(psi, ds, lr=0.01, steps=3)
        assert np.array_equal(flatten_params(psi), before)

    def test_empty_set_rejected(self):
        psi = rm.init_params([2, 1], np.random.default_rng(0))
        empty = rm.Dataset(z=np.zeros((0, 1), complex), labels=np.zeros(0, np.uint8))
        with pytest.raises(ValueError):
            rm.adapt(psi, empty, lr=0.01, steps=1)


class TestTrainScratch:
    def test_equals_init_plus_adapt(self):
        ds = toy_dataset()
        out, trace = rm.train_scratch(ds, [2, 1], lr=0.002, steps=5,
                                      rng=np.random.default_rng(13))
        manual_init = rm.init_params([2, 1], np.random.default_rng(13))
        manual, _ = rm.adapt(manual_init, ds, lr=0.002, steps=5)
        assert np.array_equal(flatten_params(out), flatten_params(manual))
        assert len(trace) == 5
