"""Small deterministic statistics helpers used by the validation suite."""
from __future__ import annotations

import numpy as np
from scipy import stats


def ls_slope(x, y) -> tuple[float, float]:
    """Ordinary least-squares (slope, intercept)."""
    slope, intercept = np.polyfit(np.asarray(x, float), np.asarray(y, float), 1)
    return float(slope), float(intercept)


def qq_r2(sample) -> float:
    """R^2 of sorted, standardised sample against standard normal quantiles.

    Plotting positions are ``(k - 0.5) / n``; mean and sd are plug-in estimates.
    """
    x = np.sort(np.asarray(sample, float))
    n = x.size
    z = (x - x.mean()) / x.std(ddof=1)
    q = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    r = np.corrcoef(q, z)[0, 1]
    return float(r * r)


def bootstrap_se(samples, statistic, n_boot: int = 1000, seed: int = 0) -> np.ndarray:
    """Bootstrap standard error of ``statistic`` applied along axis 0 of ``samples``.

    Rows are resampled with replacement; ``statistic`` receives arrays of the
    same shape as ``samples`` and returns one value per column.
    """
    samples = np.asarray(samples, float)
    rng = np.random.default_rng(seed)
    n = samples.shape[0]
    boots = np.array([statistic(samples[rng.integers(0, n, n)]) for _ in range(n_boot)])
    return boots.std(axis=0, ddof=1)


def mean_se(x) -> float:
    x = np.asarray(x, float)
    return float(x.std(ddof=1) / np.sqrt(x.size)) if x.size > 1 else float("nan")
