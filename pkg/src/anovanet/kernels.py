"""Backend selection for the jet-algebra kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``ANOVANET_PURE_PYTHON=1`` to force the fallback.
"""

import os

from anovanet import _fallback

BACKEND = "python"

if os.environ.get("ANOVANET_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from anovanet import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _fallback
else:
    _impl = _fallback

lift_forward = _impl.lift_forward
lift_backward = _impl.lift_backward
subset_mul = _impl.subset_mul


def backends():
    """Return every importable backend as ``{name: module}``."""
    found = {"python": _fallback}
    try:
        from anovanet import _kernels

        found["cython"] = _kernels
    except ImportError:  # pragma: no cover
        pass
    return found
