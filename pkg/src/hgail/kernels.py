"""Kernel dispatch: compiled extension when available, numpy otherwise.

Set ``HGAIL_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from . import _kernels_py

FORCED_PURE = os.environ.get("HGAIL_PURE_PYTHON", "") not in ("", "0")

if FORCED_PURE:
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND
mlp_forward = _impl.mlp_forward
mlp_backward = _impl.mlp_backward
gae = _impl.gae
adam_update = _impl.adam_update
point_mass_step = _impl.point_mass_step

__all__ = ["BACKEND", "mlp_forward", "mlp_backward", "gae", "adam_update", "point_mass_step"]
