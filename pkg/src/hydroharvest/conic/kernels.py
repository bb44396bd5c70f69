"""Cone kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy fallback
is used.  Setting ``HYDROHARVEST_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os

from . import _pykernels

_FORCE_PY = os.environ.get("HYDROHARVEST_PURE_PYTHON", "").strip() not in ("", "0")

if _FORCE_PY:
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND: str = _impl.BACKEND
nt_scaling = _impl.nt_scaling
scale_vec = _impl.scale_vec
scale_mat_rows = _impl.scale_mat_rows
jordan_prod = _impl.jordan_prod
jordan_div = _impl.jordan_div
max_step = _impl.max_step

# layout helpers have no hot loop; always the numpy versions
cone_identity = _pykernels.cone_identity
cone_residuals = _pykernels.cone_residuals


def backends() -> dict:
    """All importable backends keyed by name (used by tests and the benchmark)."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
