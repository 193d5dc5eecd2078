"""Backend selection for the hot loops.

The compiled Cython module is used when it was built; otherwise the NumPy
fallback is imported. Setting ``DSNET_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _fallback

if os.environ.get("DSNET_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

im2col = _impl.im2col
col2im = _impl.col2im
maxpool2x2_forward = _impl.maxpool2x2_forward
maxpool2x2_backward = _impl.maxpool2x2_backward


def available_backends():
    """Return ``{name: module}`` for every backend importable in this process."""
    backends = {"python": _fallback}
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        backends["cython"] = _kernels
    return backends
