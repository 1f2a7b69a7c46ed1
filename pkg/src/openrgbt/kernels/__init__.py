"""Per-pixel raster kernels with a compiled core and a numpy fallback.

The compiled extension (``_native``, Cython) and the numpy implementation
(``_fallback``) expose the same five functions and must agree numerically;
``tests/test_kernels.py`` enforces the equivalence and
``benchmarks/bench_kernels.py`` compares their throughput.

Selection happens once at import: the extension is used when present unless
``OPENRGBT_PURE_PYTHON=1`` is set in the environment.
"""

import os

from . import _fallback

if os.environ.get("OPENRGBT_PURE_PYTHON") == "1":
    _impl = _fallback
    BACKEND = "fallback"
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]

        BACKEND = "native"
    except ImportError:
        _impl = _fallback
        BACKEND = "fallback"

fuse_rgbt = _impl.fuse_rgbt
window_variance = _impl.window_variance
rle_encode = _impl.rle_encode
rle_decode = _impl.rle_decode
confusion_tally = _impl.confusion_tally


def available_backends():
    """Return the importable kernel backends, for tests and benchmarks."""
    backends = {"fallback": _fallback}
    try:
        from . import _native

        backends["native"] = _native
    except ImportError:
        pass
    return backends
