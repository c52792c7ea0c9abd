"""Convolution kernel dispatch.

The compiled extension is used when it was built; otherwise (or when
``UWINFER_PURE_PYTHON`` is set to a non-empty value) the numpy
implementation is used. ``BACKEND`` names the active choice.
"""
import os

from . import _conv_py as python_backend

try:
    if os.environ.get("UWINFER_PURE_PYTHON"):
        raise ImportError("pure-python backend forced")
    from . import _conv as compiled_backend
except ImportError:
    compiled_backend = None

_active = compiled_backend or python_backend
BACKEND = "compiled" if compiled_backend is not None else "python"

conv_forward = _active.conv_forward
conv_backward = _active.conv_backward
