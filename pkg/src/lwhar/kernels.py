"""Kernel backend selection.

The compiled core (``lwhar._kernels``) is used when it imports; otherwise
the numpy implementation in ``lwhar._kernels_py`` takes over.  Set
``LWHAR_KERNEL=python`` to force the fallback or ``LWHAR_KERNEL=native``
to fail loudly when the extension is missing.
"""
import os

from . import _kernels_py

_choice = os.environ.get("LWHAR_KERNEL", "auto").lower()

if _choice == "python":
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        if _choice == "native":
            raise
        _impl = _kernels_py

BACKEND = _impl.BACKEND
lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward
fnv1a64 = _impl.fnv1a64


def native_available() -> bool:
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return False
    return True
