"""Kernel backend selection.

The compiled extension is preferred.  Set ``GNSSMAP_BACKEND=python`` to
force the numpy fallback, or ``GNSSMAP_BACKEND=compiled`` to fail loudly
when the extension is missing.
"""

import logging
import os

from . import _pykernels

logger = logging.getLogger(__name__)

_choice = os.environ.get("GNSSMAP_BACKEND", "auto").lower()

if _choice == "python":
    kernels = _pykernels
    NAME = "python"
else:
    try:
        from . import _kernels as kernels
        NAME = "compiled"
    except ImportError:
        if _choice == "compiled":
            raise
        logger.debug("compiled kernels unavailable, using numpy fallback")
        kernels = _pykernels
        NAME = "python"


def available():
    """Names of the backends importable in this environment."""
    names = ["python"]
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        pass
    else:
        names.insert(0, "compiled")
    return names


def get(name):
    if name == "python":
        return _pykernels
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")
