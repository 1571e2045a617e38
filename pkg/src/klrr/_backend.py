"""Selects the compiled column core when available.

Set ``KLRR_BACKEND=python`` to force the numpy fallback.
"""
import os

from . import _core_py

try:
    from . import _core as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _core_py}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

_requested = os.environ.get("KLRR_BACKEND", "").strip().lower()
if _requested == "python" or _compiled is None:
    core = _core_py
    name = "python"
else:
    core = _compiled
    name = "compiled"


def get(backend=None):
    """Return the backend module by name, or the default one."""
    if backend is None:
        return core
    try:
        return BACKENDS[backend]
    except KeyError:
        raise ValueError(f"backend {backend!r} not available; have {sorted(BACKENDS)}") from None
