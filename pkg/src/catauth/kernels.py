"""Kernel backend selection.

The compiled extension ``catauth._kernels`` is used when it was built and
``CATAUTH_PURE_PYTHON`` is unset; otherwise the pure-Python module is used.
``BACKEND`` names the active choice.
"""

import os

from . import _kernels_py

try:
    if os.environ.get("CATAUTH_PURE_PYTHON"):
        raise ImportError("pure-Python backend forced")
    from . import _kernels as _impl
    BACKEND = "compiled"
except ImportError:
    _impl = _kernels_py
    BACKEND = "python"

majorizes = _impl.majorizes
min_tail_ratio = _impl.min_tail_ratio
best_breakpoints = _impl.best_breakpoints
first_failure = _impl.first_failure


def backends():
    """Map of every importable backend name to its module."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        out["compiled"] = _kernels
    return out
