"""Kernel backend selection.

The compiled Cython extension is used when it was built; otherwise the numpy
fallback. ``REVSCI_BACKEND`` (``auto``, ``compiled`` or ``python``) overrides
the choice at import time, and :func:`use_backend` switches it temporarily.
"""
import contextlib
import os

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _fallback}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled


def available_backends():
    return sorted(_BACKENDS)


def _resolve(name):
    if name == "auto":
        return "compiled" if "compiled" in _BACKENDS else "python"
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}")
    return name


_active = _resolve(os.environ.get("REVSCI_BACKEND", "auto"))


def backend_name():
    return _active


def kernels():
    return _BACKENDS[_active]


def set_backend(name):
    global _active
    _active = _resolve(name)


@contextlib.contextmanager
def use_backend(name):
    previous = _active
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)
