"""Monte Carlo detection performance: Pfa/Pd estimation, ROC and adaptation curves.

Thresholds are placed on H0 score order statistics (exact empirical
quantiles, no interpolation): the threshold for a target false-alarm rate
``pfa`` is the value with exactly floor(pfa * n_h0) strictly larger H0
scores, so the in-sample false-alarm rate never exceeds the target.
Every probability estimate carries a normal-approximation binomial
confidence interval (99% by default).
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass
from pathlib import Path
from statistics import NormalDist
from typing import Sequence

import numpy as np

from .mlp import MLPParams, embed_input, forward
from .signal_env import Dataset
from .training import adapt

__all__ = [
    "ROCCurve",
    "AdaptationCurve",
    "binomial_ci",
    "estimate_roc",
    "threshold_for_pfa",
    "exceedance_fraction",
    "pd_at_pfa",
    "roc_at_pfa_grid",
    "network_scores",
    "adaptation_curve",
    "write_roc_csv",
    "write_adaptation_csv",
    "plot_roc_svg",
    "plot_adaptation_svg",
]

DEFAULT_CONFIDENCE = 0.99
# Every empirical quantile must rest on at least this many exceedances.
MIN_EXCEEDANCES = 10


@dataclass
class ROCCurve:
    """Paired false-alarm / detection estimates over a threshold sweep."""

    thresholds: np.ndarray
    pfa: np.ndarray
    pd: np.ndarray
    n_h0: int
    n_h1: int

    def __post_init__(self):
        self.thresholds = np.asarray(self.thresholds, dtype=np.float64)
        self.pfa = np.asarray(self.pfa, dtype=np.float64)
        self.pd = np.asarray(self.pd, dtype=np.float64)
        if not (self.thresholds.shape == self.pfa.shape == self.pd.shape):
            raise ValueError("thresholds, pfa and pd must have equal length")
        if self.n_h0 < 1 or self.n_h1 < 1:
            raise ValueError("sample counts must be positive")


@dataclass
class AdaptationCurve:
    """Detection probability at fixed Pfa as a function of gradient updates."""

    updates: np.ndarray
    pd: np.ndarray
    pfa_target: float
    pfa_empirical: np.ndarray
    method: str
    n_h1: int

    def __post_init__(self):
        self.updates = np.asarray(self.updates, dtype=np.int64)
        if np.any(np.diff(self.updates) <= 0):
            raise ValueError("update counts must be strictly increasing")


def binomial_ci(
    p_hat: float, n: int, confidence: float = DEFAULT_CONFIDENCE
) -> tuple[float, float]:
    """Normal-approximation binomial confidence interval, clipped to [0, 1]."""
    if n < 1:
        raise ValueError("need at least one trial")
    z = NormalDist().inv_cdf(0.5 + confidence / 2.0)
    half = z * math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / n)
    return max(0.0, p_hat - half), min(1.0, p_hat + half)


def _sorted_scores(scores) -> np.ndarray:
    arr = np.sort(np.asarray(scores, dtype=np.float64))
    if arr.size == 0:
        raise ValueError("score set must not be empty")
    return arr


def exceedance_fraction(sorted_scores: np.ndarray, threshold: float) -> float:
    """Fraction of scores strictly above the threshold (scores pre-sorted)."""
    n = sorted_scores.size
    return (n - np.searchsorted(sorted_scores, threshold, side="right")) / n


def estimate_roc(h0_scores, h1_scores, thresholds) -> ROCCurve:
    """Empirical (Pfa, Pd) at each threshold; rows sorted by threshold."""
    h0 = _sorted_scores(h0_scores)
    h1 = _sorted_scores(h1_scores)
    t = np.sort(np.asarray(thresholds, dtype=np.float64))
    if t.size == 0:
        raise ValueError("threshold set must not be empty")
    pfa = (h0.size - np.searchsorted(h0, t, side="right")) / h0.size
    pd = (h1.size - np.searchsorted(h1, t, side="right")) / h1.size
    return ROCCurve(thresholds=t, pfa=pfa, pd=pd, n_h0=h0.size, n_h1=h1.size)


def threshold_for_pfa(h0_scores, target_pfa: float) -> float:
    """H0 order statistic with exactly floor(target * n) strictly larger scores.

    Conservative by construction: the in-sample false-alarm fraction never
    exceeds the target. Requires floor(target * n) >= MIN_EXCEEDANCES.
    """
    if not (0.0 < target_pfa < 1.0):
        raise ValueError("target_pfa must lie strictly between 0 and 1")
    h0 = np.asarray(h0_scores, dtype=np.float64)
    n = h0.size
    k = int(target_pfa * n)
    if k < MIN_EXCEEDANCES:
        needed = math.ceil(MIN_EXCEEDANCES / target_pfa)
        raise ValueError(
            f"{n} H0 scores are too few for pfa={target_pfa:g}; need at least {needed}"
        )
    return float(np.partition(h0, n - k - 1)[n - k - 1])


def pd_at_pfa(h0_scores, h1_scores, target_pfa: float) -> float:
    """Empirical detection probability at the threshold set for ``target_pfa``."""
    t = threshold_for_pfa(h0_scores, target_pfa)
    return exceedance_fraction(_sorted_scores(h1_scores), t)


def roc_at_pfa_grid(h0_scores, h1_scores, pfa_grid) -> ROCCurve:
    """ROC sampled at the H0 order statistics matching each target Pfa.

    Grid values must lie in (0, 1]; a target of exactly 1 anchors the
    (1, 1) corner with a threshold just below the smallest H0 score.
    """
    h0 = _sorted_scores(h0_scores)
    h1 = _sorted_scores(h1_scores)
    thresholds = []
    for target in np.asarray(pfa_grid, dtype=np.float64):
        if target == 1.0:
            thresholds.append(np.nextafter(h0[0], -np.inf))
        else:
            thresholds.append(threshold_for_pfa(h0, target))
    t = np.sort(np.asarray(thresholds))
    pfa = (h0.size - np.searchsorted(h0, t, side="right")) / h0.size
    pd = (h1.size - np.searchsorted(h1, t, side="right")) / h1.size
    return ROCCurve(thresholds=t, pfa=pfa, pd=pd, n_h0=h0.size, n_h1=h1.size)


def network_scores(params: MLPParams, z: np.ndarray) -> np.ndarray:
    """Detector network outputs for a batch of received vectors (n, K)."""
    return forward(params, embed_input(z))


def adaptation_curve(
    psi_init: MLPParams,
    adaptation_set: Dataset,
    test_h0_z: np.ndarray,
    test_h1_z: np.ndarray,
    lr: float,
    m_max: int,
    target_pfa: float,
    method: str = "",
) -> AdaptationCurve:
    """Pd at fixed Pfa after each of 0..m_max full-batch adaptation updates."""
    params = psi_init
    pd_values, pfa_values = [], []
    for m in range(m_max + 1):
        if m > 0:
            params, _ = adapt(params, adaptation_set, lr, 1)
        h0 = np.sort(network_scores(params, test_h0_z))
        h1 = np.sort(network_scores(params, test_h1_z))
        t = threshold_for_pfa(h0, target_pfa)
        pd_values.append(exceedance_fraction(h1, t))
        pfa_values.append(exceedance_fraction(h0, t))
    return AdaptationCurve(
        updates=np.arange(m_max + 1),
        pd=np.asarray(pd_values),
        pfa_target=target_pfa,
        pfa_empirical=np.asarray(pfa_values),
        method=method,
        n_h1=int(np.asarray(test_h1_z).shape[0]),
    )


def _write_csv(path, first_column: str, rows, config_hash: str) -> None:
    """CSV with a comment header carrying the config hash and a content digest."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([first_column, "pfa", "pd", "ci_low", "ci_high"])
    for row in rows:
        # repr(float(...)) gives the shortest round-trip decimal, platform-stable
        writer.writerow([repr(float(v)) if not isinstance(v, (int, np.integer)) else int(v) for v in row])
    body = buf.getvalue()
    digest = hashlib.sha256(body.encode()).hexdigest()
    header = f"# config_hash={config_hash or 'none'} content_sha256={digest}\n"
    Path(path).write_text(header + body)


def write_roc_csv(path, curve: ROCCurve, config_hash: str = "") -> None:
    """Emit a ROC curve with per-point Pd confidence bounds."""
    rows = []
    for t, pfa, pd in zip(curve.thresholds, curve.pfa, curve.pd):
        lo, hi = binomial_ci(pd, curve.n_h1)
        rows.append([float(t), float(pfa), float(pd), lo, hi])
    _write_csv(path, "threshold", rows, config_hash)


def write_adaptation_csv(path, curve: AdaptationCurve, config_hash: str = "") -> None:
    """Emit Pd versus gradient updates at the curve's fixed Pfa target."""
    rows = []
    for m, pfa, pd in zip(curve.updates, curve.pfa_empirical, curve.pd):
        lo, hi = binomial_ci(pd, curve.n_h1)
        rows.append([int(m), float(pfa), float(pd), lo, hi])
    _write_csv(path, "updates", rows, config_hash)


def _plot_setup():
    import matplotlib

    matplotlib.use("Agg", force=False)
    matplotlib.rcParams["svg.hashsalt"] = "radarmeta"
    import matplotlib.pyplot as plt

    return plt


def plot_roc_svg(path, curves: dict[str, ROCCurve], title: str = "") -> None:
    """Pd vs Pfa (log x) for several named scorers, written as static SVG."""
    plt = _plot_setup()
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    for name, curve in curves.items():
        order = np.argsort(curve.pfa)
        ax.semilogx(curve.pfa[order], curve.pd[order], marker="o", ms=3, label=name)
    ax.set_xlabel("probability of false alarm")
    ax.set_ylabel("probability of detection")
    ax.set_ylim(0.0, 1.02)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_adaptation_svg(
    path,
    curves: Sequence[AdaptationCurve],
    reference_pd: float | None = None,
    title: str = "",
) -> None:
    """Pd vs number of adaptation updates, with an optional reference level."""
    plt = _plot_setup()
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    for curve in curves:
        ax.plot(curve.updates, curve.pd, marker="o", ms=3, label=curve.method)
    if reference_pd is not None:
        ax.axhline(reference_pd, color="k", ls="--", label="ideal Gaussian detector")
    ax.set_xlabel("gradient updates")
    ax.set_ylabel("probability of detection")
    ax.set_ylim(0.0, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
