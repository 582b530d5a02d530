"""Kernel selection: the compiled extension if importable, NumPy otherwise.

Set ``AMLATTICE_PURE_PYTHON=1`` to force the NumPy fallback.
"""

import os

from . import _kernels_py

if os.environ.get("AMLATTICE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

apply_phases = _impl.apply_phases
moments = _impl.moments
edge_amplitude = _impl.edge_amplitude
