"""Backend selection for the stepping kernel.

The compiled extension is used when it imports; otherwise the numpy
implementation.  Set ``CHCOOK_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py
from ._kernels_py import (  # noqa: F401
    ACC_DRIFT_L1,
    ACC_ETA_MINUS,
    ACC_ETA_PLUS,
    ACC_EXCEED,
    ACC_OVERSHOOT,
    ACC_PAIR_MINUS,
    ACC_PAIR_PLUS,
    ACC_SUBSTEPS,
    ACC_XI_MINUS,
    ACC_XI_PLUS,
    DRIFT_DELTA,
    DRIFT_POLY,
    DRIFT_ZERO,
    N_ACC,
)

python_advance = _kernels_py.advance
compiled_advance = None

if not os.environ.get("CHCOOK_PURE_PYTHON"):
    try:
        from ._kernels import advance as compiled_advance
    except ImportError:  # extension not built
        compiled_advance = None

advance = compiled_advance or python_advance
BACKEND = "compiled" if compiled_advance is not None else "python"
