"""Backend selection for the hot kernels.

The compiled extension is used when it was built; setting
``ENTROPIC_HWI_PURE=1`` forces the numpy fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("ENTROPIC_HWI_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback


def lse_matvec(log_k: np.ndarray, w: np.ndarray) -> np.ndarray:
    log_k = np.ascontiguousarray(log_k, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    return _impl.lse_matvec(log_k, w)


def log_uniformized_apply(log_lo, log_mid, log_hi, w, lam_t, periodic, **kw):
    return _impl.log_uniformized_apply(
        np.ascontiguousarray(log_lo, dtype=np.float64),
        np.ascontiguousarray(log_mid, dtype=np.float64),
        np.ascontiguousarray(log_hi, dtype=np.float64),
        np.ascontiguousarray(w, dtype=np.float64),
        float(lam_t),
        bool(periodic),
        **kw,
    )


def w2_sweep(x, a, b) -> float:
    return float(
        _impl.w2_sweep(
            np.ascontiguousarray(x, dtype=np.float64),
            np.ascontiguousarray(a, dtype=np.float64),
            np.ascontiguousarray(b, dtype=np.float64),
        )
    )


__all__ = ["BACKEND", "lse_matvec", "log_uniformized_apply", "w2_sweep"]
