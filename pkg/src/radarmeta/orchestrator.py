"""Experiment driver: reproducible datasets, checkpoints and result figures.

Every artifact is a pure function of (configuration, master seed): child
seeds are derived from the master seed through fixed integer key paths, so
regenerating any piece -- serially or in a worker pool -- yields identical
bytes. Dataset manifests, checkpoints and result files all carry the
configuration hash and refuse to mix with artifacts from other
configurations.

The ``compute_*`` functions work on in-memory data and are the substance of
the three result figures; the ``cmd_*`` functions wrap them with file I/O
for the command-line interface.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset_io import load_dataset, read_manifest, save_dataset, write_manifest
from .evaluation import (
    AdaptationCurve,
    ROCCurve,
    adaptation_curve,
    network_scores,
    pd_at_pfa,
    plot_adaptation_svg,
    plot_roc_svg,
    roc_at_pfa_grid,
    write_adaptation_csv,
    write_roc_csv,
)
from .experiment import ConfigError, ExperimentConfig, MissingPrerequisiteError
from .gaussian_detector import build_ideal_detector, closed_form_roc, score
from .mlp import MLPParams, init_params, load_checkpoint, save_checkpoint
from .signal_env import (
    Dataset,
    derive_seed,
    generate_dataset,
    generate_pool,
    typical_input_rms,
)
from .training import adapt, pretrain_maml, pretrain_transfer

__all__ = [
    "RunPaths",
    "EvalData",
    "make_offline_datasets",
    "make_eval_data",
    "make_bench_dataset",
    "run_pretrain",
    "run_benchmark",
    "scratch_params",
    "compute_fig2",
    "compute_fig3",
    "compute_fig4",
    "cmd_gen_data",
    "cmd_pretrain",
    "cmd_adapt_eval",
    "cmd_reproduce_all",
]

# Integer key domains for seed derivation (master seed, domain, index).
_DOM_OFFLINE = 1
_DOM_ADAPT = 2
_DOM_POOL = 3
_DOM_BENCH = 4
_DOM_TRAIN = 5
_DOM_SCRATCH = 6

_TRAIN_IDX = {"transfer": 0, "maml": 1, "benchmark": 2}
_SCENARIOS = ("gaussian", "heavy")
FIGURES = ("fig2", "fig3", "fig4")
PRETRAIN_METHODS = ("transfer", "maml")


@dataclass(frozen=True)
class RunPaths:
    """Directory layout of one experiment run."""

    root: Path

    @property
    def data(self) -> Path:
        return self.root / "data"

    @property
    def checkpoints(self) -> Path:
        return self.root / "checkpoints"

    @property
    def results(self) -> Path:
        return self.root / "results"

    def dataset_file(self, name: str) -> Path:
        return self.data / f"{name}.rmds"

    def manifest_file(self, name: str) -> Path:
        return self.data / f"{name}.json"

    def checkpoint_file(self, tag: str) -> Path:
        return self.checkpoints / f"{tag}.json"

    def trace_file(self, tag: str) -> Path:
        return self.checkpoints / f"{tag}_trace.json"

    def ensure(self) -> "RunPaths":
        for d in (self.root, self.data, self.checkpoints, self.results):
            d.mkdir(parents=True, exist_ok=True)
        return self


@dataclass
class EvalData:
    """Adaptation set plus the H0/H1 test pools of one scenario."""

    adapt_set: Dataset
    h0: Dataset
    h1: Dataset


# --------------------------------------------------------------------------- #
# Data generation

def _dataset_plan(cfg: ExperimentConfig) -> list[dict]:
    """All dataset files of a run: name, environment, count, seed, kind."""
    ms = cfg.master_seed
    plan = []
    for i, env in enumerate(cfg.training_environments()):
        plan.append(
            dict(name=f"offline_{i:02d}", env=env, count=cfg.scaled_offline_count,
                 seed=derive_seed(ms, _DOM_OFFLINE, i), kind="offline", hypothesis=None)
        )
    for s_idx, scenario in enumerate(_SCENARIOS):
        plan.append(
            dict(name=f"adapt_{scenario}", env=cfg.adaptation_environment(scenario),
                 count=cfg.scaled_adapt_count, seed=derive_seed(ms, _DOM_ADAPT, s_idx),
                 kind="adapt", hypothesis=None)
        )
        test_env = cfg.test_environment(scenario)
        for hyp, count in ((0, cfg.scaled_test_h0_count), (1, cfg.scaled_test_h1_count)):
            plan.append(
                dict(name=f"test_{scenario}_h{hyp}", env=test_env, count=count,
                     seed=derive_seed(ms, _DOM_POOL, 2 * s_idx + hyp), kind="pool",
                     hypothesis=hyp)
            )
    plan.append(
        dict(name="bench_heavy", env=cfg.test_environment("heavy"),
             count=cfg.scaled_offline_count, seed=derive_seed(ms, _DOM_BENCH, 0),
             kind="bench", hypothesis=None)
    )
    return plan


def _build_planned_dataset(cfg: ExperimentConfig, item: dict) -> Dataset:
    y = cfg.waveform()
    if item["kind"] == "pool":
        return generate_pool(item["env"], y, item["hypothesis"], item["count"], item["seed"])
    return generate_dataset(item["env"], y, item["count"], item["seed"])


def make_offline_datasets(cfg: ExperimentConfig) -> list[Dataset]:
    """The offline training datasets, in memory, one per grid environment."""
    y = cfg.waveform()
    return [
        generate_dataset(env, y, cfg.scaled_offline_count,
                         derive_seed(cfg.master_seed, _DOM_OFFLINE, i))
        for i, env in enumerate(cfg.training_environments())
    ]


def make_eval_data(cfg: ExperimentConfig, scenario: str) -> EvalData:
    """In-memory adaptation set and test pools for one scenario."""
    s_idx = _SCENARIOS.index(scenario)
    y = cfg.waveform()
    adapt_set = generate_dataset(
        cfg.adaptation_environment(scenario), y, cfg.scaled_adapt_count,
        derive_seed(cfg.master_seed, _DOM_ADAPT, s_idx),
    )
    test_env = cfg.test_environment(scenario)
    h0 = generate_pool(test_env, y, 0, cfg.scaled_test_h0_count,
                       derive_seed(cfg.master_seed, _DOM_POOL, 2 * s_idx))
    h1 = generate_pool(test_env, y, 1, cfg.scaled_test_h1_count,
                       derive_seed(cfg.master_seed, _DOM_POOL, 2 * s_idx + 1))
    return EvalData(adapt_set=adapt_set, h0=h0, h1=h1)


def make_bench_dataset(cfg: ExperimentConfig) -> Dataset:
    """Large labeled dataset drawn directly from the heavy-clutter test environment."""
    return generate_dataset(
        cfg.test_environment("heavy"), cfg.waveform(), cfg.scaled_offline_count,
        derive_seed(cfg.master_seed, _DOM_BENCH, 0),
    )


# --------------------------------------------------------------------------- #
# Training entry points

def run_pretrain(cfg: ExperimentConfig, datasets, method: str):
    """Offline pretraining with the run's derived seed; returns (params, trace)."""
    if method not in PRETRAIN_METHODS:
        raise ConfigError(f"unknown pretraining method {method!r}")
    tcfg = cfg.train_config(
        seed=derive_seed(cfg.master_seed, _DOM_TRAIN, _TRAIN_IDX[method]), method=method
    )
    rms = typical_input_rms(cfg.training_environments(), cfg.waveform())
    train = pretrain_transfer if method == "transfer" else pretrain_maml
    return train(datasets, cfg.layer_sizes(), tcfg, input_rms=rms)


def run_benchmark(cfg: ExperimentConfig, bench_set: Dataset):
    """Benchmark detector: minibatch SGD on test-environment data, full budget."""
    tcfg = cfg.train_config(seed=derive_seed(cfg.master_seed, _DOM_TRAIN, _TRAIN_IDX["benchmark"]))
    rms = typical_input_rms([cfg.test_environment("heavy")], cfg.waveform())
    return pretrain_transfer([bench_set], cfg.layer_sizes(), tcfg, input_rms=rms)


def scratch_params(cfg: ExperimentConfig, scenario: str = "gaussian") -> MLPParams:
    """Random (no prior knowledge) initialization with the run's derived seed.

    Uses the same detection-scaled init scheme as the pretrained methods,
    sized to the scenario's adaptation environment (scale is estimable from
    the adaptation data itself, so no offline knowledge is implied).
    """
    rng = np.random.default_rng(derive_seed(cfg.master_seed, _DOM_SCRATCH, 0))
    rms = typical_input_rms([cfg.adaptation_environment(scenario)], cfg.waveform())
    return init_params(cfg.layer_sizes(), rng, input_rms=rms)


# --------------------------------------------------------------------------- #
# Figure computations

@dataclass
class Fig2Result:
    curves: dict[str, AdaptationCurve]
    ideal_pd_mc: float
    ideal_pd_closed_form: float
    pfa: float


@dataclass
class RocFigResult:
    curves: dict[str, ROCCurve]
    readout_pfa: float
    readout_pd: dict[str, float]


def _adapted(cfg: ExperimentConfig, psi: MLPParams, data: EvalData) -> MLPParams:
    params, _ = adapt(psi, data.adapt_set, cfg.adapt_lr, cfg.adapt_steps)
    return params


def compute_fig2(
    cfg: ExperimentConfig, psi_tl: MLPParams, psi_maml: MLPParams, data: EvalData
) -> Fig2Result:
    """Adaptation curves (Pd at fixed Pfa vs updates) in Gaussian clutter.

    Three initializations -- MAML, transfer and random scratch -- plus the
    ideal Gaussian detector level as the reference upper bound.
    """
    det = build_ideal_detector(cfg.waveform(), cfg.test_environment("gaussian"))
    ideal_pd = pd_at_pfa(score(det, data.h0.z), score(det, data.h1.z), cfg.fig2_pfa)
    curves = {}
    for name, params in (
        ("maml", psi_maml),
        ("transfer", psi_tl),
        ("scratch", scratch_params(cfg)),
    ):
        curves[name] = adaptation_curve(
            params, data.adapt_set, data.h0.z, data.h1.z,
            cfg.adapt_lr, cfg.adapt_steps, cfg.fig2_pfa, method=name,
        )
    return Fig2Result(
        curves=curves,
        ideal_pd_mc=float(ideal_pd),
        ideal_pd_closed_form=closed_form_roc(cfg.fig2_pfa, det),
        pfa=cfg.fig2_pfa,
    )


def compute_fig3(
    cfg: ExperimentConfig, psi_tl: MLPParams, psi_maml: MLPParams, data: EvalData
) -> RocFigResult:
    """ROC curves of the two adapted detectors in Gaussian clutter."""
    grid = cfg.roc_pfa_grid()
    curves, readout = {}, {}
    for name, psi in (("maml", psi_maml), ("transfer", psi_tl)):
        params = _adapted(cfg, psi, data)
        h0 = network_scores(params, data.h0.z)
        h1 = network_scores(params, data.h1.z)
        curves[name] = roc_at_pfa_grid(h0, h1, grid)
        readout[name] = float(pd_at_pfa(h0, h1, cfg.fig3_readout_pfa))
    return RocFigResult(curves=curves, readout_pfa=cfg.fig3_readout_pfa, readout_pd=readout)


def compute_fig4(
    cfg: ExperimentConfig,
    psi_tl: MLPParams,
    psi_maml: MLPParams,
    data: EvalData,
    bench_set: Dataset,
) -> RocFigResult:
    """ROC curves in heavy-tailed clutter, where the Gaussian detector is mismatched.

    Adapted MAML/transfer detectors, the big-budget benchmark network trained
    directly on test-environment data, and the mismatched ideal Gaussian
    detector.
    """
    grid = cfg.roc_pfa_grid()
    curves, readout = {}, {}
    scorers = {
        "maml": _adapted(cfg, psi_maml, data),
        "transfer": _adapted(cfg, psi_tl, data),
        "benchmark": run_benchmark(cfg, bench_set)[0],
    }
    for name, params in scorers.items():
        h0 = network_scores(params, data.h0.z)
        h1 = network_scores(params, data.h1.z)
        curves[name] = roc_at_pfa_grid(h0, h1, grid)
        readout[name] = float(pd_at_pfa(h0, h1, cfg.fig4_readout_pfa))
    det = build_ideal_detector(cfg.waveform(), cfg.test_environment("heavy"))
    h0 = score(det, data.h0.z)
    h1 = score(det, data.h1.z)
    curves["ideal"] = roc_at_pfa_grid(h0, h1, grid)
    readout["ideal"] = float(pd_at_pfa(h0, h1, cfg.fig4_readout_pfa))
    return RocFigResult(curves=curves, readout_pfa=cfg.fig4_readout_pfa, readout_pd=readout)


# --------------------------------------------------------------------------- #
# Commands (file-facing wrappers)

def cmd_gen_data(cfg: ExperimentConfig, out_dir, workers: int = 1) -> list[Path]:
    """Write every dataset of the run; skip files already generated.

    A present file whose manifest carries a different configuration hash is
    refused rather than overwritten. Returns the paths written this call.
    """
    paths = RunPaths(Path(out_dir)).ensure()
    cfg.save_json(paths.root / "config.json")
    d_hash = cfg.data_hash()

    todo = []
    for item in _dataset_plan(cfg):
        data_file = paths.dataset_file(item["name"])
        manifest_file = paths.manifest_file(item["name"])
        if data_file.exists() and manifest_file.exists():
            manifest = read_manifest(manifest_file)
            if manifest.get("data_hash") != d_hash:
                raise ConfigError(
                    f"{data_file} was generated with data hash "
                    f"{manifest.get('data_hash')}, current is {d_hash}; "
                    f"use a fresh output directory or delete the stale data"
                )
            continue
        todo.append(item)

    written = []

    def _store(item: dict, dataset: Dataset) -> None:
        data_file = paths.dataset_file(item["name"])
        save_dataset(data_file, dataset)
        write_manifest(
            paths.manifest_file(item["name"]), env=item["env"], count=item["count"],
            seed=item["seed"], data_hash=d_hash, kind=item["kind"],
            k=cfg.k_chips, hypothesis=item["hypothesis"],
        )
        written.append(data_file)

    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_build_planned_dataset, cfg, item) for item in todo]
            for item, future in zip(todo, futures):
                _store(item, future.result())
    else:
        for item in todo:
            _store(item, _build_planned_dataset(cfg, item))
    return written


def _require_dataset(cfg: ExperimentConfig, paths: RunPaths, name: str, mmap: bool = False) -> Dataset:
    data_file = paths.dataset_file(name)
    manifest_file = paths.manifest_file(name)
    if not data_file.exists() or not manifest_file.exists():
        raise MissingPrerequisiteError(
            f"dataset {data_file} is missing; run `radarmeta gen-data` first"
        )
    manifest = read_manifest(manifest_file)
    if manifest.get("data_hash") != cfg.data_hash():
        raise ConfigError(
            f"{data_file} was generated with data hash {manifest.get('data_hash')}, "
            f"current is {cfg.data_hash()}"
        )
    return load_dataset(data_file, mmap=mmap)


def _require_checkpoint(cfg: ExperimentConfig, paths: RunPaths, tag: str) -> MLPParams:
    ckpt = paths.checkpoint_file(tag)
    if not ckpt.exists():
        raise MissingPrerequisiteError(
            f"checkpoint {ckpt} is missing; run `radarmeta pretrain` first"
        )
    params, meta = load_checkpoint(ckpt)
    if meta.get("config_hash") != cfg.config_hash():
        raise ConfigError(
            f"{ckpt} was trained with config hash {meta.get('config_hash')}, "
            f"current is {cfg.config_hash()}"
        )
    return params


def cmd_pretrain(cfg: ExperimentConfig, out_dir, method: str) -> Path:
    """Run one offline pretraining method and write its checkpoint and trace."""
    if method not in PRETRAIN_METHODS:
        raise ConfigError(f"unknown pretraining method {method!r}")
    paths = RunPaths(Path(out_dir)).ensure()
    datasets = [
        _require_dataset(cfg, paths, f"offline_{i:02d}", mmap=True)
        for i in range(cfg.n_train_envs)
    ]
    params, trace = run_pretrain(cfg, datasets, method)
    tag = "psi_tl" if method == "transfer" else "psi_maml"
    meta = {
        "stage": tag,
        "method": method,
        "seed": derive_seed(cfg.master_seed, _DOM_TRAIN, _TRAIN_IDX[method]),
        "config_hash": cfg.config_hash(),
    }
    if method == "maml":
        meta["first_order"] = cfg.first_order
    ckpt = paths.checkpoint_file(tag)
    save_checkpoint(ckpt, params, meta)
    paths.trace_file(tag).write_text(json.dumps(trace.to_dict()))
    return ckpt


def _write_summary(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=1))


def cmd_adapt_eval(cfg: ExperimentConfig, out_dir, figure: str) -> list[Path]:
    """Adapt pretrained detectors and write one figure's CSV/SVG outputs."""
    if figure not in FIGURES:
        raise ConfigError(f"unknown figure {figure!r}; choose from {FIGURES}")
    paths = RunPaths(Path(out_dir)).ensure()
    psi_tl = _require_checkpoint(cfg, paths, "psi_tl")
    psi_maml = _require_checkpoint(cfg, paths, "psi_maml")
    scenario = "gaussian" if figure in ("fig2", "fig3") else "heavy"
    data = EvalData(
        adapt_set=_require_dataset(cfg, paths, f"adapt_{scenario}"),
        h0=_require_dataset(cfg, paths, f"test_{scenario}_h0"),
        h1=_require_dataset(cfg, paths, f"test_{scenario}_h1"),
    )
    cfg_hash = cfg.config_hash()
    out = []

    if figure == "fig2":
        result = compute_fig2(cfg, psi_tl, psi_maml, data)
        for name, curve in result.curves.items():
            f = paths.results / f"fig2_{name}.csv"
            write_adaptation_csv(f, curve, cfg_hash)
            out.append(f)
        ideal_curve = AdaptationCurve(
            updates=np.array([0, cfg.adapt_steps]),
            pd=np.array([result.ideal_pd_mc, result.ideal_pd_mc]),
            pfa_target=result.pfa,
            pfa_empirical=np.array([result.pfa, result.pfa]),
            method="ideal",
            n_h1=len(data.h1),
        )
        f = paths.results / "fig2_ideal.csv"
        write_adaptation_csv(f, ideal_curve, cfg_hash)
        out.append(f)
        _write_summary(paths.results / "fig2_summary.json", {
            "config_hash": cfg_hash,
            "pfa": result.pfa,
            "pd_final": {n: float(c.pd[-1]) for n, c in result.curves.items()},
            "pd_initial": {n: float(c.pd[0]) for n, c in result.curves.items()},
            "ideal_pd_mc": result.ideal_pd_mc,
            "ideal_pd_closed_form": result.ideal_pd_closed_form,
        })
        out.append(paths.results / "fig2_summary.json")
        svg = paths.results / "fig2.svg"
        plot_adaptation_svg(svg, list(result.curves.values()), result.ideal_pd_mc,
                            title="Adaptation in Gaussian clutter")
        out.append(svg)
        return out

    if figure == "fig3":
        result = compute_fig3(cfg, psi_tl, psi_maml, data)
        title = "ROC after adaptation, Gaussian clutter"
    else:
        result = compute_fig4(cfg, psi_tl, psi_maml, data, _require_dataset(cfg, paths, "bench_heavy"))
        title = "ROC after adaptation, heavy-tailed clutter"

    for name, curve in result.curves.items():
        f = paths.results / f"{figure}_{name}.csv"
        write_roc_csv(f, curve, cfg_hash)
        out.append(f)
    _write_summary(paths.results / f"{figure}_summary.json", {
        "config_hash": cfg_hash,
        "readout_pfa": result.readout_pfa,
        "pd": result.readout_pd,
    })
    out.append(paths.results / f"{figure}_summary.json")
    svg = paths.results / f"{figure}.svg"
    plot_roc_svg(svg, result.curves, title=title)
    out.append(svg)
    return out


def cmd_reproduce_all(cfg: ExperimentConfig, out_dir, workers: int = 1) -> None:
    """Full pipeline: data, both pretrainings, and all three figures."""
    cmd_gen_data(cfg, out_dir, workers=workers)
    for method in PRETRAIN_METHODS:
        cmd_pretrain(cfg, out_dir, method)
    for figure in FIGURES:
        cmd_adapt_eval(cfg, out_dir, figure)
