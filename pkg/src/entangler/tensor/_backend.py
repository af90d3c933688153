"""Pick the kernel implementation once, at import.

The compiled extension is used when it was built; setting
``ENTANGLER_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _pykernels

if os.environ.get("ENTANGLER_PURE_PYTHON") == "1":
    kernels = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as kernels
    except ImportError:
        kernels = _pykernels
        BACKEND = "python"
    else:
        BACKEND = "compiled"


def use(name):
    """Switch the active backend at runtime ("compiled" or "python")."""
    global kernels, BACKEND
    if name == "python":
        kernels = _pykernels
    elif name == "compiled":
        from . import _ckernels

        kernels = _ckernels
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    BACKEND = name
