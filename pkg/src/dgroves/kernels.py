"""Kernel backend selection.

The compiled extension is used when it imports; setting
``DGROVES_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

if os.environ.get("DGROVES_PURE_PYTHON"):
    from . import _pykernels as _impl
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        from . import _pykernels as _impl
        BACKEND = "python"

advance = _impl.advance
wrap_step = _impl.wrap_step
example1_step = _impl.example1_step
