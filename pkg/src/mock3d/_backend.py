"""Kernel backend selection: compiled extension if importable, numpy otherwise.

Set MOCK3D_FORCE_FALLBACK=1 to force the pure-python kernels (used by the
benchmark and the cross-backend tests).
"""

from __future__ import annotations

import os

if os.environ.get("MOCK3D_FORCE_FALLBACK"):
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        from . import _kernels_py as kernels  # type: ignore[no-redef]


def backend_name() -> str:
    return kernels.BACKEND_NAME
