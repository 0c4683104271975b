"""Pure-NumPy implementations of the posterior-grid hot kernels.

This module is the reference backend; ``fatiguelab._kernels`` is a compiled
twin with identical signatures and semantics (agreement is asserted by the
backend parity tests).  All functions are pure and operate on float64
arrays.  Log-probabilities use the erfc-based normal CDF; outcome terms
whose probability underflows to exactly 0 become -inf, which downstream
code treats as "this parameter value is ruled out".
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

BACKEND_NAME = "python"

# estimator codes shared with the compiled backend
ESTIMATOR_IMPORTANCE = 0
ESTIMATOR_CROSS_ENTROPY = 1

_XENT_FLOOR = -800.0  # clamp for zero-density samples in the cross-entropy mode


def outcome_log_terms(mu_log10: np.ndarray, load_log10: float, sigma_log10: float):
    """(log P(failure), log P(runout)) at one load over a grid of log10-mu values."""
    z = (load_log10 - mu_log10) / sigma_log10
    p = ndtr(z)
    with np.errstate(divide="ignore"):
        log_fail = np.log(p)
        log_run = np.log1p(-p)
    return log_fail, log_run


def accumulate_series(
    mu_log10: np.ndarray,
    load_log10: np.ndarray,
    failure_mask: np.ndarray,
    sigma_log10: float,
) -> np.ndarray:
    """Sum of per-record outcome log-terms over the grid."""
    total = np.zeros_like(mu_log10)
    for ll, fail in zip(load_log10, failure_mask):
        lf, lr = outcome_log_terms(mu_log10, float(ll), sigma_log10)
        total += lf if fail else lr
    return total


def posterior_summary(mu_log10: np.ndarray, log_post: np.ndarray, weights: np.ndarray):
    """Normalize the grid and return ``(n_finite, argmax, mean, std)``.

    ``weights`` are the integration weights (trapezoidal).  When no point is
    finite, returns ``(0, -1, nan, nan)``.
    """
    n_finite = int(np.isfinite(log_post).sum())
    if n_finite == 0:
        return 0, -1, float("nan"), float("nan")
    imax = int(np.argmax(log_post))
    mass = np.exp(log_post - log_post[imax]) * weights
    pmf = mass / mass.sum()
    mean = float(np.dot(pmf, mu_log10))
    var = float(np.dot(pmf, (mu_log10 - mean) ** 2))
    return n_finite, imax, mean, float(np.sqrt(max(var, 0.0)))


def entropy_exact(mu_log10: np.ndarray, log_post: np.ndarray, weights: np.ndarray):
    """Differential entropy of the normalized grid density; ``(h, ok)``."""
    finite = np.isfinite(log_post)
    if not finite.any():
        return float("nan"), False
    mx = log_post.max()
    e = np.exp(log_post - mx)
    z = float((e * weights).sum())
    log_dens = np.where(finite, log_post - mx - np.log(z), 0.0)  # 0*log(0) := 0
    pmf = e * weights / z
    return float(-(pmf * log_dens).sum()), True


def entropy_pair_mc(
    mu_log10: np.ndarray,
    log_post: np.ndarray,
    weights: np.ndarray,
    sample_idx: np.ndarray,
    sample_cnt: np.ndarray,
    load_log10: float,
    sigma_log10: float,
    estimator: int,
):
    """Entropies of both hypothetical posteriors after an experiment at one load.

    The hypothetical posteriors append a failure resp. runout at the load to
    the current grid posterior ``log_post``; their entropy is estimated from
    the pre-drawn sample of grid indices (drawn from the *current* posterior,
    with multiplicities ``sample_cnt``).

    estimator = ESTIMATOR_IMPORTANCE re-weights each sample by the ratio of
    hypothetical to current posterior (self-normalized importance sampling,
    consistent for the hypothetical entropy).  ESTIMATOR_CROSS_ENTROPY
    averages the hypothetical log-density under the current-posterior samples
    unweighted, clamping zero-density samples.

    Returns ``(h_fail, ok_fail, h_runout, ok_runout)``; ``ok`` is False when
    the hypothetical posterior is degenerate (no finite point, or no sample
    mass in importance mode).
    """
    log_fail, log_run = outcome_log_terms(mu_log10, load_log10, sigma_log10)
    out = []
    for term in (log_fail, log_run):
        log_hyp = log_post + term
        finite = np.isfinite(log_hyp)
        if not finite.any():
            out.extend([float("nan"), False])
            continue
        mx = log_hyp.max()
        z = float((np.exp(log_hyp - mx) * weights).sum())
        log_dens = log_hyp - mx - np.log(z)  # normalized log-density on the grid
        ld_s = log_dens[sample_idx]
        if estimator == ESTIMATOR_IMPORTANCE:
            with np.errstate(invalid="ignore"):
                ratio = sample_cnt * np.exp(log_hyp[sample_idx] - log_post[sample_idx])
                keep = ratio > 0  # excludes underflowed and ill-defined ratios
            total = float(ratio[keep].sum())
            if total <= 0.0:
                out.extend([float("nan"), False])
                continue
            h = float(-(ratio[keep] * ld_s[keep]).sum() / total)
        else:
            clamped = np.where(ld_s >= _XENT_FLOOR, ld_s, _XENT_FLOOR)
            h = float(-(sample_cnt * clamped).sum() / sample_cnt.sum())
        out.extend([h, True])
    return out[0], out[1], out[2], out[3]
