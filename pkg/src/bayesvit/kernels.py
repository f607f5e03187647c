"""Backend selection for the dynamic-programming kernels.

The compiled extension is used when importable; setting the environment
variable ``BAYESVIT_PURE_PYTHON=1`` forces the numpy reference backend.
"""
from __future__ import annotations

import contextlib
import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels

if os.environ.get("BAYESVIT_PURE_PYTHON") == "1" or _ckernels is None:
    _active = _pykernels
else:
    _active = _ckernels


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def backend_name() -> str:
    return _active.BACKEND


def active():
    return _active


def get_backend(name: str):
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available") from None


def set_backend(name: str) -> None:
    global _active
    _active = get_backend(name)


@contextlib.contextmanager
def using_backend(name: str):
    global _active
    prev = _active
    _active = get_backend(name)
    try:
        yield _active
    finally:
        _active = prev
