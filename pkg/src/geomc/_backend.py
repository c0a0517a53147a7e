"""Selects the kernel implementation at import time.

The compiled ``_ckernels`` extension is preferred. Setting the environment
variable ``GEOMC_PURE_PYTHON=1`` forces the numpy fallback, as does a missing
or unbuildable extension.
"""

import os

from . import _pykernels

if os.environ.get("GEOMC_PURE_PYTHON", "").strip() not in ("", "0"):
    kernels = _pykernels
else:
    try:
        from . import _ckernels as kernels
    except ImportError:
        kernels = _pykernels

BACKEND = "cython" if kernels is not _pykernels else "python"

STATUS_OK = _pykernels.STATUS_OK
STATUS_DIVERGED = _pykernels.STATUS_DIVERGED
STATUS_FIXED_POINT_FAILED = _pykernels.STATUS_FIXED_POINT_FAILED
STATUS_METRIC_DEGENERATE = _pykernels.STATUS_METRIC_DEGENERATE


def owns(kernel):
    """True when ``kernel`` can be passed to the selected backend's trajectory loops."""
    if kernels is _pykernels:
        return kernel is not None
    return isinstance(kernel, kernels.Kernel)
