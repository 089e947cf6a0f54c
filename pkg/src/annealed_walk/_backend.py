"""Pick the compiled kernels when importable, else the pure-Python fallback.

Set ``ANNEALED_WALK_PURE=1`` to force the fallback.
"""

import os

from . import _pykernels

if os.environ.get("ANNEALED_WALK_PURE"):
    kernels = _pykernels
    COMPILED = False
else:
    try:
        from . import _ckernels as kernels
        COMPILED = True
    except ImportError:  # extension not built
        kernels = _pykernels
        COMPILED = False

BACKEND = "cython" if COMPILED else "python"
