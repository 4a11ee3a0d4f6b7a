"""Hot per-item kernels with a compiled core and a numpy fallback.

The compiled Cython extension (``_fast``) is preferred when importable;
otherwise the numpy reference (``pyref``) is used. Selection can be forced
with the ``DRCROWD_BACKEND`` environment variable (``compiled`` or
``python``) or at runtime via :func:`use_backend`.
"""

import os

from . import pyref

try:
    from . import _fast
except ImportError:
    _fast = None

impl = pyref
_name = "python"


def available_backends():
    names = ["python"]
    if _fast is not None:
        names.insert(0, "compiled")
    return names


def use_backend(name: str) -> str:
    """Switch the active kernel backend; returns the name actually in use."""
    global impl, _name
    if name in ("auto", ""):
        name = "compiled" if _fast is not None else "python"
    if name == "compiled":
        if _fast is None:
            raise RuntimeError("compiled kernel backend not available")
        impl, _name = _fast, "compiled"
    elif name == "python":
        impl, _name = pyref, "python"
    else:
        raise ValueError(f"unknown backend {name!r}; expected compiled|python|auto")
    return _name


def backend_name() -> str:
    return _name


use_backend(os.environ.get("DRCROWD_BACKEND", "auto"))
