"""Kernel backend selection.

``DLRESNET_BACKEND`` picks the implementation of the hot loops:

* ``numba``  - compiled explicit loops (``_kernels_numba``)
* ``numpy``  - vectorised numpy/BLAS (``_kernels_numpy``)
* ``auto``   - numba for hidden widths up to ``AUTO_NUMBA_MAX_WIDTH``, numpy
  above it (default).

If numba cannot be imported every request falls back to numpy.
"""

import os

from . import _kernels_numpy

try:
    from . import _kernels_numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _kernels_numba = None

AUTO_NUMBA_MAX_WIDTH = 16
_VALID = ("auto", "numba", "numpy")


def requested_backend():
    name = os.environ.get("DLRESNET_BACKEND", "auto").strip().lower()
    if name not in _VALID:
        raise ValueError(f"DLRESNET_BACKEND must be one of {_VALID}, got {name!r}")
    return name


def have_numba():
    return _kernels_numba is not None


def kernels(width, backend=None):
    """Kernel module for a network of hidden width ``width``."""
    name = requested_backend() if backend is None else backend
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {name!r}")
    if name == "auto":
        name = "numba" if width <= AUTO_NUMBA_MAX_WIDTH else "numpy"
    if name == "numba" and _kernels_numba is not None:
        return _kernels_numba
    return _kernels_numpy


def backend_name(width, backend=None):
    return "numba" if kernels(width, backend) is _kernels_numba else "numpy"
