"""Correlation and error metrics with brute-force-verifiable semantics.

No nonlinear pre-mapping is applied by default; ``fit_logistic`` implements
the conventional monotone logistic remapping for literature comparability
and callers opt into it explicitly. Undefined metrics (zero variance, all
ties) raise rather than silently returning 0.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, UndefinedMetricError


def _check_pairs(predictions, targets, minimum: int = 2) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.ndim != 1 or t.ndim != 1 or p.shape != t.shape:
        raise DomainError(f"score vectors must be equal-length 1-D, got {p.shape} vs {t.shape}")
    if len(p) < minimum:
        raise DomainError(f"need at least {minimum} pairs, got {len(p)}")
    return p, t


def ranks(values) -> np.ndarray:
    """Fractional (mid-) ranks, 1-based; tied values share the average rank."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    sorted_v = v[order]
    result = np.empty(len(v), dtype=np.float64)
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        result[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return result


def plcc(predictions, targets) -> float:
    """Sample Pearson linear correlation coefficient."""
    p, t = _check_pairs(predictions, targets)
    pc = p - p.mean()
    tc = t - t.mean()
    denom = np.sqrt((pc * pc).sum()) * np.sqrt((tc * tc).sum())
    if denom == 0.0:
        raise UndefinedMetricError("PLCC undefined: a score vector has zero variance")
    return float((pc * tc).sum() / denom)


def srcc(predictions, targets) -> float:
    """Spearman rank correlation: Pearson over fractional ranks."""
    p, t = _check_pairs(predictions, targets)
    try:
        return plcc(ranks(p), ranks(t))
    except UndefinedMetricError:
        raise UndefinedMetricError("SRCC undefined: a score vector is all ties") from None


def krcc(predictions, targets) -> float:
    """Kendall tau-b (tie-corrected) over all unordered pairs."""
    p, t = _check_pairs(predictions, targets)
    dp = np.sign(p[:, None] - p[None, :])
    dt = np.sign(t[:, None] - t[None, :])
    upper = np.triu_indices(len(p), k=1)
    sp, st = dp[upper], dt[upper]
    concordant_minus_discordant = float((sp * st).sum())
    n0 = len(sp)
    ties_p = n0 - int(np.count_nonzero(sp))
    ties_t = n0 - int(np.count_nonzero(st))
    denom = np.sqrt(float(n0 - ties_p)) * np.sqrt(float(n0 - ties_t))
    if denom == 0.0:
        raise UndefinedMetricError("KRCC undefined: a score vector is all ties")
    return float(concordant_minus_discordant / denom)


def rmse(predictions, targets) -> float:
    """Root mean squared error."""
    p, t = _check_pairs(predictions, targets, minimum=1)
    d = p - t
    return float(np.sqrt((d * d).mean()))


def all_metrics(predictions, targets) -> dict[str, float]:
    return {
        "plcc": plcc(predictions, targets),
        "srcc": srcc(predictions, targets),
        "krcc": krcc(predictions, targets),
        "rmse": rmse(predictions, targets),
    }


def fit_logistic(predictions, targets) -> np.ndarray:
    """Four-parameter monotone logistic remapping of predictions onto targets.

    Optional comparability aid (off by default everywhere); returns the
    remapped predictions.
    """
    from scipy.optimize import curve_fit

    p, t = _check_pairs(predictions, targets, minimum=4)

    def logistic(x, b1, b2, b3, b4):
        return b2 + (b1 - b2) / (1.0 + np.exp(-(x - b3) / np.abs(b4) + 1e-12))

    span = p.max() - p.min() or 1.0
    guess = [t.max(), t.min(), float(np.median(p)), span / 4.0]
    try:
        popt, _ = curve_fit(logistic, p, t, p0=guess, maxfev=20000)
        return logistic(p, *popt)
    except RuntimeError:
        return p.copy()
