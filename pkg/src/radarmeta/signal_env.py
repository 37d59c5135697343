"""Radar operating environments and synthetic received-signal generation.

Signal model: a length-K coded pulse y is transmitted; the range cell under
test yields z = alpha*y + c + n when a target is present (label 1) and
z = c + n otherwise (label 0). Clutter c is a superposition of shifted
waveform copies weighted by coherent-Weibull scattering coefficients;
n is zero-mean complex Gaussian thermal noise plus band-limited interference.

Power conventions used throughout:
  * target power sigma_alpha^2 = 1 (the free absolute scale),
  * thermal noise power sigma_w^2 = 10**(-snr_db/10),
  * interference power sigma_i^2 = 10**(-sir_db/10),
  * clutter amplitude median sigma_m given in linear units.

Complex normal CN(0, s) here means E|x|^2 = s (real/imag parts each N(0, s/2)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Waveform",
    "EnvironmentSpec",
    "LabeledSample",
    "Dataset",
    "lfm_waveform",
    "interference_cov",
    "weibull_scale_from_median",
    "clutter_coeff_power",
    "sample_clutter_coeff",
    "generate_clutter",
    "clutter_cov",
    "noise_cov",
    "generate_sample",
    "generate_batch",
    "generate_dataset",
    "generate_pool",
    "training_environment_grid",
    "typical_input_rms",
    "derive_seed",
]

# Nominal Weibull shape range for valid operating environments.
SHAPE_MIN = 0.25
SHAPE_MAX = 2.0


@dataclass(frozen=True)
class Waveform:
    """A unit-norm coded pulse of K complex chips."""

    chips: np.ndarray

    def __post_init__(self):
        chips = np.asarray(self.chips, dtype=np.complex128)
        chips.setflags(write=False)
        object.__setattr__(self, "chips", chips)
        if chips.ndim != 1 or chips.size < 1:
            raise ValueError("waveform needs at least one chip")
        norm = np.linalg.norm(chips)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"waveform must have unit norm, got {norm!r}")

    @property
    def k(self) -> int:
        return self.chips.size


@dataclass(frozen=True)
class EnvironmentSpec:
    """Stochastic description of one radar operating environment.

    Parameters
    ----------
    shape : Weibull shape of the clutter amplitude (0.25 .. 2; 2 = Gaussian).
    median : clutter amplitude median, linear units, >= 0.
    snr_db / sir_db : target-to-noise and target-to-interference ratios in dB
        (may be ``math.inf`` to disable the corresponding term).
    f_lower / f_upper : normalized interference band edges, 0 <= f_l < f_u <= 1.
    label : free-text identifier used in filenames and manifests.
    """

    shape: float
    median: float
    snr_db: float
    sir_db: float
    f_lower: float
    f_upper: float
    label: str = ""

    def __post_init__(self):
        if not (SHAPE_MIN <= self.shape <= SHAPE_MAX):
            raise ValueError(
                f"clutter shape {self.shape} outside nominal range "
                f"[{SHAPE_MIN}, {SHAPE_MAX}]"
            )
        if self.median < 0:
            raise ValueError("clutter median must be >= 0")
        if not (0.0 <= self.f_lower < self.f_upper <= 1.0):
            raise ValueError(
                f"need 0 <= f_lower < f_upper <= 1, got "
                f"({self.f_lower}, {self.f_upper})"
            )

    @property
    def noise_power(self) -> float:
        return 10.0 ** (-self.snr_db / 10.0)

    @property
    def interference_power(self) -> float:
        return 10.0 ** (-self.sir_db / 10.0)


@dataclass(frozen=True)
class LabeledSample:
    """One received vector z with its target-presence label."""

    z: np.ndarray
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")


@dataclass
class Dataset:
    """A column of received vectors plus labels from one environment.

    ``z`` has shape (n, K) complex128 and ``labels`` shape (n,) uint8; the
    struct-of-arrays layout keeps minibatch slicing cheap. ``seed`` records
    the integer used to generate the data (0 for hand-built sets).
    """

    z: np.ndarray
    labels: np.ndarray
    env_label: str = ""
    seed: int = 0

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.complex128)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.z.ndim != 2:
            raise ValueError("z must be a (n, K) array")
        if self.labels.shape != (self.z.shape[0],):
            raise ValueError("labels must match the number of samples")
        if self.labels.size and not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")

    def __len__(self) -> int:
        return self.z.shape[0]

    def __getitem__(self, q: int) -> LabeledSample:
        return LabeledSample(z=self.z[q].copy(), label=int(self.labels[q]))

    @property
    def k(self) -> int:
        return self.z.shape[1]

    @property
    def samples(self):
        """Iterate the set as LabeledSample values (copy per item)."""
        for q in range(len(self)):
            yield self[q]


def lfm_waveform(k: int, chirp_rate: float, sample_rate: float) -> Waveform:
    """Unit-norm linear-FM pulse: chips[n] = exp(j*pi*R*(n/f_s)^2) / sqrt(K)."""
    if k < 1:
        raise ValueError("chip count must be >= 1")
    if sample_rate <= 0:
        raise ValueError("sample rate must be positive")
    n = np.arange(k, dtype=np.float64)
    phase = np.pi * chirp_rate * (n / sample_rate) ** 2
    return Waveform(np.exp(1j * phase) / math.sqrt(k))


def interference_cov(f_lower: float, f_upper: float, k: int) -> np.ndarray:
    """Correlation matrix of interference flat over the band [f_l, f_u].

    Entry (v, h) is f_u - f_l on the diagonal and
    (exp(j*2*pi*f_u*d) - exp(j*2*pi*f_l*d)) / (j*2*pi*d) with d = v - h
    elsewhere, i.e. the integral of exp(j*2*pi*f*d) over the band.
    Hermitian PSD for any valid band.
    """
    if not (0.0 <= f_lower < f_upper <= 1.0):
        raise ValueError(f"need 0 <= f_lower < f_upper <= 1, got ({f_lower}, {f_upper})")
    if k < 1:
        raise ValueError("matrix size must be >= 1")
    d = np.subtract.outer(np.arange(k), np.arange(k)).astype(np.float64)
    d_safe = np.where(d == 0, 1.0, d)
    off = (np.exp(2j * np.pi * f_upper * d_safe) - np.exp(2j * np.pi * f_lower * d_safe)) / (
        2j * np.pi * d_safe
    )
    return np.where(d == 0, f_upper - f_lower, off)


def weibull_scale_from_median(shape: float, median: float) -> float:
    """Weibull scale b whose amplitude median equals ``median``: b = m / (ln 2)^(1/shape)."""
    if shape <= 0:
        raise ValueError("Weibull shape must be positive")
    if median < 0:
        raise ValueError("median must be >= 0")
    return median / math.log(2.0) ** (1.0 / shape)


def clutter_coeff_power(shape: float, median: float) -> float:
    """Mean squared magnitude of a clutter coefficient: b^2 * Gamma(1 + 2/shape)."""
    b = weibull_scale_from_median(shape, median)
    return b * b * math.gamma(1.0 + 2.0 / shape)


def _clutter_coeffs(shape: float, median: float, rng: np.random.Generator, size) -> np.ndarray:
    """Coherent-Weibull draws: Weibull amplitude (inverse-CDF) times uniform phase."""
    b = weibull_scale_from_median(shape, median)
    amplitude = b * rng.weibull(shape, size=size)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=size)
    return amplitude * np.exp(1j * phase)


def sample_clutter_coeff(shape: float, median: float, rng: np.random.Generator) -> complex:
    """One clutter scattering coefficient gamma = a * exp(j*theta)."""
    return complex(_clutter_coeffs(shape, median, rng, size=()))


def _shift_bank(y: Waveform) -> np.ndarray:
    """Rows g = -K+1 .. K-1 of the shifted waveform J_g y (2K-1, K)."""
    k = y.k
    bank = np.zeros((2 * k - 1, k), dtype=np.complex128)
    for row, g in enumerate(range(-k + 1, k)):
        if g >= 0:
            bank[row, g:] = y.chips[: k - g]
        else:
            bank[row, : k + g] = y.chips[-g:]
    return bank


def generate_clutter(
    y: Waveform, shape: float, median: float, rng: np.random.Generator, count: int | None = None
) -> np.ndarray:
    """Clutter vector(s) c = sum_g gamma_g * (J_g y) over the 2K-1 range cells.

    Returns shape (K,) for ``count=None`` or (count, K) otherwise.
    """
    bank = _shift_bank(y)
    size = (2 * y.k - 1,) if count is None else (count, 2 * y.k - 1)
    gammas = _clutter_coeffs(shape, median, rng, size=size)
    return gammas @ bank


def clutter_cov(y: Waveform, shape: float, median: float) -> np.ndarray:
    """Analytic clutter covariance E[c c^H] = E|gamma|^2 * sum_g (J_g y)(J_g y)^H."""
    bank = _shift_bank(y)
    return clutter_coeff_power(shape, median) * (bank.T @ bank.conj())


def noise_cov(env: EnvironmentSpec, k: int) -> np.ndarray:
    """Covariance of noise-plus-interference: sigma_w^2 I + sigma_i^2 Omega_I."""
    cov = env.noise_power * np.eye(k, dtype=np.complex128)
    if env.interference_power > 0.0:
        cov = cov + env.interference_power * interference_cov(env.f_lower, env.f_upper, k)
    return cov


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    """Factor F with F F^H = cov; Cholesky when PD, eigen square root otherwise."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        return v * np.sqrt(np.clip(w, 0.0, None))


def generate_batch(
    env: EnvironmentSpec,
    y: Waveform,
    hypothesis: int,
    count: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw ``count`` received vectors under one hypothesis; returns (count, K).

    Draw order (fixed for reproducibility): clutter amplitudes, clutter
    phases, noise, then the target gain when hypothesis is 1.
    """
    if hypothesis not in (0, 1):
        raise ValueError("hypothesis must be 0 or 1")
    if count < 0:
        raise ValueError("count must be >= 0")
    k = y.k
    z = generate_clutter(y, env.shape, env.median, rng, count=count)
    cov = noise_cov(env, k)
    if cov.any():
        factor = _psd_factor(cov)
        w = (rng.standard_normal((count, k)) + 1j * rng.standard_normal((count, k))) / math.sqrt(2.0)
        z = z + w @ factor.T
    if hypothesis == 1:
        alpha = (rng.standard_normal(count) + 1j * rng.standard_normal(count)) / math.sqrt(2.0)
        z = z + np.outer(alpha, y.chips)
    return z


def generate_sample(
    env: EnvironmentSpec, y: Waveform, hypothesis: int, rng: np.random.Generator
) -> LabeledSample:
    """One labeled received vector under the given hypothesis."""
    z = generate_batch(env, y, hypothesis, 1, rng)[0]
    return LabeledSample(z=z, label=hypothesis)


def generate_dataset(env: EnvironmentSpec, y: Waveform, count: int, seed: int) -> Dataset:
    """Class-balanced labeled dataset of ``count`` samples, shuffled, seeded.

    Exactly count/2 samples per hypothesis; the whole generation is a pure
    function of (env, y, count, seed).
    """
    if count < 2 or count % 2 != 0:
        raise ValueError("count must be an even number >= 2")
    rng = np.random.default_rng(seed)
    half = count // 2
    z0 = generate_batch(env, y, 0, half, rng)
    z1 = generate_batch(env, y, 1, half, rng)
    z = np.concatenate([z0, z1], axis=0)
    labels = np.concatenate([np.zeros(half, np.uint8), np.ones(half, np.uint8)])
    order = rng.permutation(count)
    return Dataset(z=z[order], labels=labels[order], env_label=env.label, seed=seed)


def generate_pool(
    env: EnvironmentSpec, y: Waveform, hypothesis: int, count: int, seed: int
) -> Dataset:
    """Single-hypothesis pool (for Monte Carlo Pfa/Pd estimation), seeded."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    z = generate_batch(env, y, hypothesis, count, rng)
    labels = np.full(count, hypothesis, np.uint8)
    return Dataset(z=z, labels=labels, env_label=env.label, seed=seed)


# Training-grid defaults: 2 clutter shapes x 2 SIRs x 10 interference bands.
GRID_SNR_DB = 24.0
GRID_MEDIAN = 0.0004
GRID_SHAPES = (0.25, 2.0)
GRID_SIRS_DB = (10.0, 17.0)
GRID_BAND_WIDTH = 0.1
GRID_BAND_STARTS = tuple(round(0.05 + 0.08 * i, 2) for i in range(10))


def training_environment_grid(
    snr_db: float = GRID_SNR_DB,
    median: float = GRID_MEDIAN,
    shapes=GRID_SHAPES,
    sirs_db=GRID_SIRS_DB,
    band_starts=GRID_BAND_STARTS,
    band_width: float = GRID_BAND_WIDTH,
) -> list[EnvironmentSpec]:
    """The offline training environments: every (shape, SIR, band) combination.

    Defaults give the 2 x 2 x 10 = 40 environment grid at SNR 24 dB with
    band width 0.1 and evenly spaced band starts 0.05, 0.13, ..., 0.77.
    """
    grid = []
    for shape in shapes:
        for sir_db in sirs_db:
            for f_lower in band_starts:
                f_upper = round(f_lower + band_width, 10)
                grid.append(
                    EnvironmentSpec(
                        shape=shape,
                        median=median,
                        snr_db=snr_db,
                        sir_db=sir_db,
                        f_lower=f_lower,
                        f_upper=f_upper,
                        label=f"tr_s{shape:g}_sir{sir_db:g}_f{f_lower:g}",
                    )
                )
    return grid


def typical_input_rms(envs, y: Waveform, target_power: float = 1.0) -> float:
    """RMS of one real embedding component under a 50/50 hypothesis mix.

    Closed form from the environment statistics: per complex component the
    average variance is trace(clutter_cov + noise_cov)/K plus half the
    target contribution target_power/K; each real part carries half of it.
    Averaged over the given environments. Used to scale detector
    initialization to the data's numeric range.
    """
    envs = list(envs)
    if not envs:
        raise ValueError("need at least one environment")
    k = y.k
    total = 0.0
    for env in envs:
        cov_trace = float(np.trace(clutter_cov(y, env.shape, env.median)).real)
        cov_trace += float(np.trace(noise_cov(env, k)).real)
        per_complex = cov_trace / k + 0.5 * target_power / k
        total += per_complex / 2.0
    return math.sqrt(total / len(envs))


def derive_seed(master_seed: int, *key: int) -> int:
    """Stable 64-bit child seed for (master seed, integer key path)."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(key))
    return int(ss.generate_state(1, np.uint64)[0])
