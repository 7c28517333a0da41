"""Kernel backend selection.

The compiled extension is used when it imports; setting the environment
variable ``HAMLEARN_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from . import _pykernels

kernels = _pykernels
if os.environ.get("HAMLEARN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as kernels  # noqa: F811
    except ImportError:  # extension not built
        kernels = _pykernels

BACKEND = kernels.BACKEND


def available_backends():
    """Return ``{name: module}`` for every importable backend."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        found["cython"] = _ckernels
    return found
