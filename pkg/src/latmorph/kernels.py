"""Hot recurrent kernels, compiled when available.

``BACKEND`` is ``"cython"`` when the extension imported, else ``"numpy"``.
Setting ``LATMORPH_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _gru_fallback

if os.environ.get("LATMORPH_PURE_PYTHON"):
    _compiled = None
else:
    try:
        from . import _gru_kernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "numpy"
_impl = _compiled if _compiled is not None else _gru_fallback


def use_backend(name: str) -> None:
    """Switch the active kernel implementation ("cython" or "numpy")."""
    global _impl, BACKEND
    if name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        _impl = _compiled
    elif name == "numpy":
        _impl = _gru_fallback
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = name


def available_backends() -> list:
    return ["numpy"] + (["cython"] if _compiled is not None else [])


def gru_forward(x, h, w_ih, w_hh, b):
    return _impl.gru_forward(x, h, w_ih, w_hh, b)


def gru_backward(dh_new, x, h, w_ih, w_hh, cache):
    return _impl.gru_backward(dh_new, x, h, w_ih, w_hh, cache)
