"""Kernel backend selection.

ETONGUE_FOREST_BACKEND picks the implementation at import time:

    (unset) / "numba"  compiled kernels, falling back to numpy with a
                       warning if numba cannot be imported
    "numpy"            force the vectorized fallback

Both expose grow_tree, apply_tree, apply_tree_batch, loocv_predict and
stream_state with identical semantics; everything above this module is
backend-agnostic.
"""

from __future__ import annotations

import os
import warnings

_requested = os.environ.get("ETONGUE_FOREST_BACKEND", "numba").strip().lower() or "numba"
if _requested not in ("numba", "numpy"):
    raise RuntimeError(
        f"ETONGUE_FOREST_BACKEND must be 'numba' or 'numpy', got {_requested!r}"
    )

if _requested == "numba":
    try:
        from . import _kernels_njit as _impl

        BACKEND = "numba"
    except ImportError as exc:
        warnings.warn(
            f"numba backend unavailable ({exc}); using the numpy fallback",
            RuntimeWarning,
            stacklevel=2,
        )
        from . import _kernels_numpy as _impl

        BACKEND = "numpy"
else:
    from . import _kernels_numpy as _impl

    BACKEND = "numpy"

grow_tree = _impl.grow_tree
apply_tree = _impl.apply_tree
apply_tree_batch = _impl.apply_tree_batch
loocv_predict = _impl.loocv_predict
