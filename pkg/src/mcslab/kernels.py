"""Kernel selection.

The compiled extension is used when it imports; setting the environment
variable ``MCSLAB_PURE_PYTHON=1`` forces the NumPy fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("MCSLAB_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

thomas = _impl.thomas
rate_block = _impl.rate_block
