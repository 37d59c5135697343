"""Experiment configuration: every knob of the reproduction in one place.

The configuration is a flat record serializable to JSON. A ``scale`` factor
in (0, 1] shrinks all sample counts and the offline iteration budget
proportionally (adaptation steps and minibatch sizes are budgets of a
different kind and stay fixed), so the same experiment runs at desk scale
in minutes or at full scale for the headline numbers.

``config_hash`` fingerprints the resolved configuration; it is stamped into
dataset manifests, checkpoints and result files so artifacts from different
configurations cannot be silently mixed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .signal_env import (
    GRID_BAND_STARTS,
    EnvironmentSpec,
    Waveform,
    lfm_waveform,
    training_environment_grid,
)
from .training import TrainConfig

__all__ = ["ExperimentConfig", "ConfigError", "MissingPrerequisiteError"]


class ConfigError(Exception):
    """Invalid or inconsistent experiment configuration (CLI exit code 2)."""


class MissingPrerequisiteError(Exception):
    """A required dataset or checkpoint has not been produced yet (exit code 3)."""


@dataclass(frozen=True)
class ExperimentConfig:
    # Waveform
    k_chips: int = 16
    chirp_rate: float = 2.5e9  # Hz/s, = 100 kHz swept over 40 us
    sample_rate: float = 2.0e5  # Hz

    # Offline training environment grid
    clutter_median: float = 4e-4
    train_snr_db: float = 24.0
    train_shapes: tuple[float, ...] = (0.25, 2.0)
    train_sirs_db: tuple[float, ...] = (10.0, 17.0)
    train_band_starts: tuple[float, ...] = GRID_BAND_STARTS
    train_band_width: float = 0.1
    offline_count: int = 400_000

    # Adaptation environment (shape differs per scenario below)
    adapt_snr_db: float = 20.0
    adapt_sir_db: float = 16.0
    adapt_f_lower: float = 0.4
    adapt_f_upper: float = 0.6
    adapt_count: int = 8_000
    adapt_lr: float = 0.002

    # Test scenarios: Gaussian clutter and heavy-tailed clutter
    gaussian_shape: float = 2.0
    heavy_shape: float = 0.25
    test_snr_gaussian_db: float = 13.0
    test_snr_heavy_db: float = 25.0
    test_h0_count: int = 200_000
    test_h1_count: int = 50_000

    # Detector network and optimization
    hidden_sizes: tuple[int, ...] = (48, 48)
    inner_lr: float = 0.2
    outer_lr: float = 0.002
    minibatch: int = 128
    meta_batch: int = 10
    offline_iters: int = 20_000
    # Meta-training budget multiplier: one MAML iteration covers meta_batch of
    # the n_train_envs environments and its update is correspondingly smaller,
    # so parity of cumulative learning mass needs n_train_envs/meta_batch more
    # iterations (4 for the default 40/10 grid); the extra 1.5x gives the
    # meta-objective convergence headroom past bare parity.
    maml_iters_factor: float = 6.0
    adapt_steps: int = 40
    first_order: bool = True
    support_fraction: float = 0.5

    # Evaluation readouts
    fig2_pfa: float = 1e-3
    fig3_readout_pfa: float = 5e-3
    fig4_readout_pfa: float = 1e-2
    roc_pfa_min: float = 1e-3
    roc_pfa_points: int = 25

    # Run control
    master_seed: int = 20240
    scale: float = 1.0

    # ------------------------------------------------------------------ #

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        try:
            if not (0.0 < self.scale <= 1.0):
                raise ValueError(f"scale must lie in (0, 1], got {self.scale}")
            if self.k_chips < 1 or self.sample_rate <= 0:
                raise ValueError("invalid waveform parameters")
            TrainConfig(
                inner_lr=self.inner_lr,
                outer_lr=self.outer_lr,
                minibatch=self.minibatch,
                meta_batch=self.meta_batch,
                offline_iters=self.scaled_offline_iters,
                adapt_steps=self.adapt_steps,
                first_order=self.first_order,
                support_fraction=self.support_fraction,
            )
            if self.adapt_lr <= 0:
                raise ValueError("adapt_lr must be positive")
            if self.meta_batch > self.n_train_envs:
                raise ValueError(
                    f"meta_batch {self.meta_batch} exceeds the "
                    f"{self.n_train_envs} training environments"
                )
            for pfa in (self.fig2_pfa, self.fig3_readout_pfa, self.fig4_readout_pfa, self.roc_pfa_min):
                if not (0.0 < pfa < 1.0):
                    raise ValueError(f"pfa targets must lie in (0, 1), got {pfa}")
                if int(pfa * self.scaled_test_h0_count) < 10:
                    raise ValueError(
                        f"scaled H0 pool ({self.scaled_test_h0_count}) too small for "
                        f"pfa={pfa:g}; raise scale or test_h0_count"
                    )
            if self.roc_pfa_points < 2:
                raise ValueError("roc_pfa_points must be >= 2")
            if self.maml_iters_factor <= 0:
                raise ValueError("maml_iters_factor must be positive")
            if self.scaled_adapt_count < 2 or self.scaled_offline_count < 2:
                raise ValueError("scaled sample counts are too small")
            # environments must construct cleanly
            self.training_environments()
            self.adaptation_environment("gaussian")
            self.adaptation_environment("heavy")
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    # Scaled budgets ---------------------------------------------------- #

    def _scaled_even(self, count: int) -> int:
        return max(2, 2 * int(round(count * self.scale / 2)))

    @property
    def scaled_offline_count(self) -> int:
        return self._scaled_even(self.offline_count)

    @property
    def scaled_adapt_count(self) -> int:
        return self._scaled_even(self.adapt_count)

    @property
    def scaled_test_h0_count(self) -> int:
        return max(1, int(round(self.test_h0_count * self.scale)))

    @property
    def scaled_test_h1_count(self) -> int:
        return max(1, int(round(self.test_h1_count * self.scale)))

    @property
    def scaled_offline_iters(self) -> int:
        return max(1, int(round(self.offline_iters * self.scale)))

    @property
    def n_train_envs(self) -> int:
        return len(self.train_shapes) * len(self.train_sirs_db) * len(self.train_band_starts)

    # Derived objects --------------------------------------------------- #

    def waveform(self) -> Waveform:
        return lfm_waveform(self.k_chips, self.chirp_rate, self.sample_rate)

    def layer_sizes(self) -> list[int]:
        return [2 * self.k_chips, *self.hidden_sizes, 1]

    def training_environments(self) -> list[EnvironmentSpec]:
        return training_environment_grid(
            snr_db=self.train_snr_db,
            median=self.clutter_median,
            shapes=self.train_shapes,
            sirs_db=self.train_sirs_db,
            band_starts=self.train_band_starts,
            band_width=self.train_band_width,
        )

    def _scenario_shape(self, scenario: str) -> float:
        if scenario == "gaussian":
            return self.gaussian_shape
        if scenario == "heavy":
            return self.heavy_shape
        raise ValueError(f"unknown scenario {scenario!r}")

    def adaptation_environment(self, scenario: str) -> EnvironmentSpec:
        """Environment the detector adapts in (Gaussian or heavy-tailed clutter)."""
        return EnvironmentSpec(
            shape=self._scenario_shape(scenario),
            median=self.clutter_median,
            snr_db=self.adapt_snr_db,
            sir_db=self.adapt_sir_db,
            f_lower=self.adapt_f_lower,
            f_upper=self.adapt_f_upper,
            label=f"adapt_{scenario}",
        )

    def test_environment(self, scenario: str) -> EnvironmentSpec:
        """Test environment equals the adaptation environment except for the SNR."""
        snr = self.test_snr_gaussian_db if scenario == "gaussian" else self.test_snr_heavy_db
        env = self.adaptation_environment(scenario)
        return replace(env, snr_db=snr, label=f"test_{scenario}")

    @property
    def scaled_maml_iters(self) -> int:
        return max(1, int(round(self.scaled_offline_iters * self.maml_iters_factor)))

    def train_config(self, seed: int, method: str = "transfer") -> TrainConfig:
        iters = self.scaled_maml_iters if method == "maml" else self.scaled_offline_iters
        return TrainConfig(
            inner_lr=self.inner_lr,
            outer_lr=self.outer_lr,
            minibatch=self.minibatch,
            meta_batch=self.meta_batch,
            offline_iters=iters,
            adapt_steps=self.adapt_steps,
            first_order=self.first_order,
            support_fraction=self.support_fraction,
            seed=seed,
        )

    def roc_pfa_grid(self) -> list[float]:
        """Log-spaced Pfa targets from roc_pfa_min up to 1 (inclusive)."""
        return [float(v) for v in np.geomspace(self.roc_pfa_min, 1.0, self.roc_pfa_points)]

    # Serialization ------------------------------------------------------ #

    def to_dict(self) -> dict:
        doc = asdict(self)
        for key, value in doc.items():
            if isinstance(value, tuple):
                doc[key] = list(value)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = {k: v for k, v in doc.items() if not k.startswith("_")}
        known = {f.name: f for f in fields(cls)}
        unknown = set(doc) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in doc.items():
            if isinstance(value, list):
                value = tuple(value)
            kwargs[key] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"config {path} must contain a JSON object")
        return cls.from_dict(doc)

    # Fields that determine dataset bytes (waveform, environments, counts,
    # seeding); training/evaluation knobs deliberately excluded so e.g.
    # flipping the MAML order flag does not invalidate generated data.
    _DATA_FIELDS = (
        "k_chips", "chirp_rate", "sample_rate", "clutter_median",
        "train_snr_db", "train_shapes", "train_sirs_db", "train_band_starts",
        "train_band_width", "offline_count", "adapt_snr_db", "adapt_sir_db",
        "adapt_f_lower", "adapt_f_upper", "adapt_count", "gaussian_shape",
        "heavy_shape", "test_snr_gaussian_db", "test_snr_heavy_db",
        "test_h0_count", "test_h1_count", "master_seed", "scale",
    )

    def _hash_of(self, doc: dict) -> str:
        canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    def config_hash(self) -> str:
        """Fingerprint of the complete configuration."""
        return self._hash_of(self.to_dict())

    def data_hash(self) -> str:
        """Fingerprint of the dataset-determining subset of the configuration."""
        doc = self.to_dict()
        return self._hash_of({k: doc[k] for k in self._DATA_FIELDS})

    def save_json(self, path) -> None:
        doc = self.to_dict()
        doc["_config_hash"] = self.config_hash()
        Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1))
