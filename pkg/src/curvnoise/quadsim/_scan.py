"""Engine selection for the moment-scan kernels.

The compiled extension is preferred; if it was not built the numpy
implementation is used.  ``ENGINE`` records which one is active.
"""

try:
    from . import _kernels as _impl

    ENGINE = "cython"
except ImportError:  # pragma: no cover - depends on build environment
    from . import _scan_numpy as _impl

    ENGINE = "numpy"

sg_scan = _impl.sg_scan
polyak_scan = _impl.polyak_scan
