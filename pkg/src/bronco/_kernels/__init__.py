"""Kernel backend selection.

The hot inner loops (3D thinning, fast marching) exist twice: a compiled
Cython extension (``bronco._kernels._core``) and a pure numpy/heapq twin
(``bronco._kernels.pure``).  The compiled one is picked at import when it
built successfully; set ``BRONCO_PURE_KERNELS=1`` to force the fallback.
Both produce identical outputs; ``benchmarks/bench_kernels.py`` compares
their speed.
"""
import os

from . import pure

if os.environ.get("BRONCO_PURE_KERNELS", "") == "1":
    _impl = pure
    BACKEND = "pure"
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = pure
        BACKEND = "pure"

thin_image = _impl.thin_image
fast_march = _impl.fast_march


def get_backend(name: str):
    """Return a specific backend module ('pure' or 'compiled'), for tests and benchmarks."""
    if name == "pure":
        return pure
    if name == "compiled":
        from . import _core

        return _core
    raise ValueError(f"unknown kernel backend {name!r}")
