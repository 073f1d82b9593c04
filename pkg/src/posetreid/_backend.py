"""Pick the compiled kernels when built, the pure-Python ones otherwise.

Set POSETREID_PURE_PYTHON=1 to force the fallback.
"""

import os

from . import _pykernels as py

BACKEND = "python"
kernels = py

if os.environ.get("POSETREID_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _c
    except ImportError:  # extension not built
        pass
    else:
        kernels = _c
        BACKEND = "cython"

lap_square = kernels.lap_square
rbf_gram = kernels.rbf_gram
smo_solve = kernels.smo_solve
