"""Select the compiled kernels when available, else the numpy fallback.

Set ``ROUGHWAVE_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
kernels = _pykernels

if os.environ.get("ROUGHWAVE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        pass
    else:
        kernels = _ckernels
        BACKEND = "cython"

outer_prefix = kernels.outer_prefix
dyadic_sup = kernels.dyadic_sup
hosking_fgn = kernels.hosking_fgn
linear_recurrence = kernels.linear_recurrence
