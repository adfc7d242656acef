"""Select the numerical kernel backend at import time.

The compiled Cython extension is preferred when present; the pure-NumPy
module is the fallback. ``MTCTRL_BACKEND`` overrides the choice:

* ``MTCTRL_BACKEND=python``   always use the pure-NumPy kernels
* ``MTCTRL_BACKEND=compiled`` require the extension (ImportError if absent)
* unset / ``auto``            compiled if available, else pure
"""

import os

from . import _kernels_py

_choice = os.environ.get("MTCTRL_BACKEND", "auto").lower()

if _choice == "python":
    kernels = _kernels_py
elif _choice == "compiled":
    from . import _kernels as kernels  # noqa: F401  (ImportError is the contract)
elif _choice == "auto":
    try:
        from . import _kernels as kernels
    except ImportError:
        kernels = _kernels_py
else:
    raise ValueError(
        "MTCTRL_BACKEND must be 'auto', 'python' or 'compiled', got %r" % _choice
    )


def backend_name():
    """Name of the active kernel backend ('python' or 'compiled')."""
    return kernels.BACKEND_NAME
