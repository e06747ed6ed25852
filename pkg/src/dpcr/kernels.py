"""Backend selection for the numerical kernels.

The compiled extension is used when importable; setting the environment
variable ``DPCR_PURE_PYTHON=1`` forces the pure-Python implementation.
``BACKEND`` names the active one (``"cython"`` or ``"python"``).
"""
import os

from . import _pykernels

if os.environ.get("DPCR_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"

arma_negloglik = _impl.arma_negloglik
fit_arma = _impl.fit_arma
l1_trend_filter = _impl.l1_trend_filter

__all__ = ["BACKEND", "arma_negloglik", "fit_arma", "l1_trend_filter"]
