"""Numerical backend selection.

The posterior-grid kernels exist twice: a compiled Cython extension
(``fatiguelab._kernels``) and a pure-NumPy twin (``fatiguelab._kernels_py``)
with identical signatures.  The compiled one is preferred when importable;
set FATIGUELAB_BACKEND=python or =compiled to force a choice (forcing
"compiled" raises if the extension is missing).  ``benches/bench_backends.py``
compares the two.
"""

from __future__ import annotations

import os


def load_backend(name: str):
    """Return the kernel module for ``name`` in {"compiled", "python"}."""
    if name == "python":
        from . import _kernels_py

        return _kernels_py
    if name == "compiled":
        from . import _kernels  # type: ignore[attr-defined]

        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def _select():
    forced = os.environ.get("FATIGUELAB_BACKEND", "auto").lower()
    if forced in ("compiled", "python"):
        return load_backend(forced)
    if forced != "auto":
        raise ValueError(
            f"FATIGUELAB_BACKEND must be auto, compiled or python, got {forced!r}"
        )
    try:
        return load_backend("compiled")
    except ImportError:
        return load_backend("python")


_impl = _select()

BACKEND_NAME = _impl.BACKEND_NAME
ESTIMATOR_IMPORTANCE = _impl.ESTIMATOR_IMPORTANCE
ESTIMATOR_CROSS_ENTROPY = _impl.ESTIMATOR_CROSS_ENTROPY
outcome_log_terms = _impl.outcome_log_terms
accumulate_series = _impl.accumulate_series
posterior_summary = _impl.posterior_summary
entropy_exact = _impl.entropy_exact
entropy_pair_mc = _impl.entropy_pair_mc


def backend_name() -> str:
    return BACKEND_NAME
