"""Select the compiled kernels when available, else the numpy fallback.

Set ``PCFORTHO_BACKEND=python`` to force the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("PCFORTHO_BACKEND", "").lower() == "python":
    kernels = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels
        BACKEND = "cython"
    except ImportError:  # extension not built
        kernels = _kernels_py
        BACKEND = "python"

__all__ = ["kernels", "BACKEND"]
