"""Kernel backend selection.

The compiled backend (kng.kernels._native, Cython) is preferred when it
imported cleanly; otherwise the numpy implementations are used. Set
KNG_PURE_PYTHON=1 before import to force the numpy backend. The active
choice is exposed as BACKEND ("native" or "numpy").
"""

import os

from . import numpy_backend

_impls = {"numpy": numpy_backend}
BACKEND = "numpy"

if os.environ.get("KNG_PURE_PYTHON") != "1":
    try:
        from . import _native
        _impls["native"] = _native
        BACKEND = "native"
    except ImportError:
        pass

_active = _impls[BACKEND]

nearest_two = _active.nearest_two
quad_form = _active.quad_form
gaussian_blur_2d = _active.gaussian_blur_2d
bilinear_resize = _active.bilinear_resize


def backends() -> dict:
    """Importable backends, for tests and benchmarks."""
    return dict(_impls)
