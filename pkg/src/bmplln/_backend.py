"""Pick the simulation kernel at import: compiled if built, else pure Python.

Set ``BMPLLN_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernel

try:
    from . import _kernel
except ImportError:  # extension not built
    _kernel = None

KERNELS = {"python": _pykernel.run_replicate}
if _kernel is not None:
    KERNELS["cython"] = _kernel.run_replicate

if os.environ.get("BMPLLN_PURE_PYTHON") == "1" or _kernel is None:
    DEFAULT = "python"
else:
    DEFAULT = "cython"


def get_kernel(name=None):
    name = DEFAULT if name in (None, "auto") else name
    try:
        return KERNELS[name]
    except KeyError:
        raise ValueError(f"kernel {name!r} is not available; have {sorted(KERNELS)}") from None
