# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled posterior-grid kernels; the semantics twin of ``_kernels_py``.

Normal CDF values come from the same Cephes implementation SciPy uses
(``scipy.special.cython_special.ndtr``), so both backends agree bit-for-bit
on probabilities and their underflow boundaries.
"""

import numpy as np

from libc.math cimport INFINITY, exp, isfinite, log, log1p, sqrt
from libc.stdint cimport int64_t, uint8_t

from scipy.special.cython_special cimport ndtr

BACKEND_NAME = "compiled"

ESTIMATOR_IMPORTANCE = 0
ESTIMATOR_CROSS_ENTROPY = 1

cdef double XENT_FLOOR = -800.0


cdef inline void _terms(double mu, double load_log10, double sigma_log10,
                        double* log_fail, double* log_run) nogil:
    cdef double z = (load_log10 - mu) / sigma_log10
    cdef double p = ndtr(z)
    log_fail[0] = log(p) if p > 0.0 else -INFINITY
    log_run[0] = log1p(-p) if p < 1.0 else -INFINITY


def outcome_log_terms(double[::1] mu_log10, double load_log10, double sigma_log10):
    """(log P(failure), log P(runout)) at one load over a grid of log10-mu values."""
    cdef Py_ssize_t n = mu_log10.shape[0]
    lf_arr = np.empty(n, dtype=np.float64)
    lr_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] lf = lf_arr
    cdef double[::1] lr = lr_arr
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            _terms(mu_log10[i], load_log10, sigma_log10, &lf[i], &lr[i])
    return lf_arr, lr_arr


def accumulate_series(double[::1] mu_log10, double[::1] load_log10,
                      const uint8_t[::1] failure_mask, double sigma_log10):
    """Sum of per-record outcome log-terms over the grid."""
    cdef Py_ssize_t n = mu_log10.shape[0]
    cdef Py_ssize_t k = load_log10.shape[0]
    out_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double lf, lr
    with nogil:
        for i in range(n):
            for j in range(k):
                _terms(mu_log10[i], load_log10[j], sigma_log10, &lf, &lr)
                out[i] += lf if failure_mask[j] else lr
    return out_arr


def posterior_summary(double[::1] mu_log10, double[::1] log_post, double[::1] weights):
    """Normalize the grid; returns ``(n_finite, argmax, mean, std)``."""
    cdef Py_ssize_t n = log_post.shape[0]
    cdef Py_ssize_t i, imax = -1, n_finite = 0
    cdef double mx = -INFINITY
    cdef double z = 0.0, s1 = 0.0, s2 = 0.0, mass, mean, var
    with nogil:
        for i in range(n):
            if isfinite(log_post[i]):
                n_finite += 1
                if log_post[i] > mx:
                    mx = log_post[i]
                    imax = i
    if n_finite == 0:
        return 0, -1, float("nan"), float("nan")
    with nogil:
        for i in range(n):
            mass = exp(log_post[i] - mx) * weights[i]
            z += mass
            s1 += mass * mu_log10[i]
        mean = s1 / z
        for i in range(n):
            mass = exp(log_post[i] - mx) * weights[i]
            s2 += mass * (mu_log10[i] - mean) * (mu_log10[i] - mean)
        var = s2 / z
        if var < 0.0:
            var = 0.0
    return int(n_finite), int(imax), float(mean), float(sqrt(var))


def entropy_exact(double[::1] mu_log10, double[::1] log_post, double[::1] weights):
    """Differential entropy of the normalized grid density; ``(h, ok)``."""
    cdef Py_ssize_t n = log_post.shape[0]
    cdef Py_ssize_t i
    cdef double mx = -INFINITY
    cdef double z = 0.0, h = 0.0, log_z, e
    with nogil:
        for i in range(n):
            if log_post[i] > mx:
                mx = log_post[i]
    if mx == -INFINITY:
        return float("nan"), False
    with nogil:
        for i in range(n):
            z += exp(log_post[i] - mx) * weights[i]
        log_z = log(z)
        for i in range(n):
            if isfinite(log_post[i]):
                e = exp(log_post[i] - mx)
                h -= (e * weights[i] / z) * (log_post[i] - mx - log_z)
    return float(h), True


def entropy_pair_mc(double[::1] mu_log10, double[::1] log_post, double[::1] weights,
                    const int64_t[::1] sample_idx, double[::1] sample_cnt,
                    double load_log10, double sigma_log10, int estimator):
    """Entropies of both hypothetical posteriors after an experiment at one load.

    Same contract as the NumPy twin: returns (h_fail, ok_fail, h_run, ok_run),
    with samples re-weighted by the hypothetical/current posterior ratio in
    IMPORTANCE mode and used as drawn (zero densities clamped) in
    CROSS_ENTROPY mode.
    """
    cdef Py_ssize_t n = log_post.shape[0]
    cdef Py_ssize_t m = sample_idx.shape[0]
    lf_arr = np.empty(n, dtype=np.float64)
    lr_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] lf = lf_arr
    cdef double[::1] lr = lr_arr
    cdef Py_ssize_t i, k
    cdef int64_t j
    cdef double mxf = -INFINITY, mxr = -INFINITY
    cdef double zf = 0.0, zr = 0.0, log_zf, log_zr
    cdef double hf = 0.0, hr = 0.0, wf = 0.0, wr = 0.0
    cdef double lhf, lhr, ld, ratio, cnt_total = 0.0
    cdef bint ok_f, ok_r

    with nogil:
        for i in range(n):
            _terms(mu_log10[i], load_log10, sigma_log10, &lf[i], &lr[i])
            lhf = log_post[i] + lf[i]
            lhr = log_post[i] + lr[i]
            lf[i] = lhf  # reuse buffers for the hypothetical log posteriors
            lr[i] = lhr
            if lhf > mxf:
                mxf = lhf
            if lhr > mxr:
                mxr = lhr
        ok_f = mxf > -INFINITY
        ok_r = mxr > -INFINITY
        if ok_f or ok_r:
            for i in range(n):
                if ok_f:
                    zf += exp(lf[i] - mxf) * weights[i]
                if ok_r:
                    zr += exp(lr[i] - mxr) * weights[i]
            log_zf = log(zf) if ok_f else 0.0
            log_zr = log(zr) if ok_r else 0.0
            if estimator == 0:  # importance re-weighting
                for k in range(m):
                    j = sample_idx[k]
                    if ok_f:
                        ratio = sample_cnt[k] * exp(lf[j] - log_post[j])
                        if ratio > 0.0:
                            hf -= ratio * (lf[j] - mxf - log_zf)
                            wf += ratio
                        # ratio == 0 contributes nothing
                    if ok_r:
                        ratio = sample_cnt[k] * exp(lr[j] - log_post[j])
                        if ratio > 0.0:
                            hr -= ratio * (lr[j] - mxr - log_zr)
                            wr += ratio
                if ok_f:
                    if wf > 0.0:
                        hf /= wf
                    else:
                        ok_f = False
                if ok_r:
                    if wr > 0.0:
                        hr /= wr
                    else:
                        ok_r = False
            else:  # cross-entropy under the samples as drawn
                for k in range(m):
                    j = sample_idx[k]
                    cnt_total += sample_cnt[k]
                    if ok_f:
                        ld = lf[j] - mxf - log_zf
                        if ld < XENT_FLOOR or not isfinite(ld):
                            ld = XENT_FLOOR
                        hf -= sample_cnt[k] * ld
                    if ok_r:
                        ld = lr[j] - mxr - log_zr
                        if ld < XENT_FLOOR or not isfinite(ld):
                            ld = XENT_FLOOR
                        hr -= sample_cnt[k] * ld
                if ok_f:
                    hf /= cnt_total
                if ok_r:
                    hr /= cnt_total

    return (
        float(hf) if ok_f else float("nan"),
        bool(ok_f),
        float(hr) if ok_r else float("nan"),
        bool(ok_r),
    )
