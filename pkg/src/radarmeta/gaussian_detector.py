"""Ideal Gaussian detector: the NP-optimal test when clutter is Gaussian.

For a Rayleigh target (alpha ~ CN(0, s_a)) in zero-mean Gaussian disturbance
with covariance Sigma0, the Neyman-Pearson statistic reduces to
T(z) = |y^H Sigma0^{-1} z|^2 (estimator-correlator for a rank-one signal).
Under H0, T is exponential with mean y^H Sigma0^{-1} y; under H1 its mean
grows by the factor 1 + q_eff with q_eff = s_a * y^H Sigma0^{-1} y, giving
the closed-form ROC  Pd = Pfa^(1/(1+q_eff))  used as an oracle in tests.

The detector knows the true covariances of its environment. It is the
performance upper bound in Gaussian clutter (shape 2) and is deliberately
usable, mismatched, in heavy-tailed clutter, where ``matched`` is False.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_env import EnvironmentSpec, Waveform, clutter_cov, noise_cov

__all__ = [
    "GaussianDetector",
    "build_ideal_detector",
    "score",
    "closed_form_roc",
    "closed_form_threshold",
]


@dataclass(frozen=True)
class GaussianDetector:
    """Whitened matched statistic |w^H z|^2 with w = Sigma0^{-1} y."""

    whitened_steering: np.ndarray
    effective_snr: float
    h0_cov: np.ndarray
    target_power: float = 1.0
    matched: bool = True

    @property
    def h0_score_mean(self) -> float:
        """Mean of the statistic under H0: y^H Sigma0^{-1} y."""
        return self.effective_snr / self.target_power


def build_ideal_detector(
    y: Waveform, env: EnvironmentSpec, target_power: float = 1.0
) -> GaussianDetector:
    """Detector with the true H0 covariance of ``env``.

    Sigma0 = clutter covariance + noise covariance; the steering vector is
    whitened by a Cholesky solve (LinAlgError propagates if Sigma0 is not
    positive definite -- that indicates a broken environment, never papered
    over here). ``matched`` is False when the clutter is not Gaussian
    (shape != 2), in which case the detector is a mismatched baseline.
    """
    sigma0 = clutter_cov(y, env.shape, env.median) + noise_cov(env, y.k)
    chol = np.linalg.cholesky(sigma0)
    w = np.linalg.solve(chol.conj().T, np.linalg.solve(chol, y.chips))
    q_eff = target_power * float(np.real(np.vdot(y.chips, w)))
    return GaussianDetector(
        whitened_steering=w,
        effective_snr=q_eff,
        h0_cov=sigma0,
        target_power=target_power,
        matched=(env.shape == 2.0),
    )


def score(det: GaussianDetector, z: np.ndarray) -> float | np.ndarray:
    """|w^H z|^2 for one vector (K,) or a batch (n, K)."""
    z = np.asarray(z, dtype=np.complex128)
    if z.shape[-1] != det.whitened_steering.size:
        raise ValueError(
            f"vector length {z.shape[-1]} does not match detector "
            f"dimension {det.whitened_steering.size}"
        )
    proj = z @ det.whitened_steering.conj()
    out = np.abs(proj) ** 2
    return float(out) if z.ndim == 1 else out


def closed_form_roc(pfa: float, det: GaussianDetector) -> float:
    """Exact detection probability at the given false-alarm probability.

    Valid when the disturbance really is Gaussian with covariance
    ``det.h0_cov``: Pd = Pfa^(1/(1+q_eff)).
    """
    if not (0.0 < pfa < 1.0):
        raise ValueError("pfa must lie strictly between 0 and 1")
    return pfa ** (1.0 / (1.0 + det.effective_snr))


def closed_form_threshold(pfa: float, det: GaussianDetector) -> float:
    """Threshold whose closed-form false-alarm probability equals ``pfa``."""
    if not (0.0 < pfa < 1.0):
        raise ValueError("pfa must lie strictly between 0 and 1")
    return -det.h0_score_mean * np.log(pfa)
