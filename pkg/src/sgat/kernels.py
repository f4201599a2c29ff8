"""Kernel backend selection.

The compiled extension is used when it imports cleanly; setting the
environment variable ``SGAT_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("SGAT_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

segment_max = _impl.segment_max
segment_sum = _impl.segment_sum
csr_spmm = _impl.csr_spmm
csr_spmm_backward = _impl.csr_spmm_backward
scatter_add_rows = _impl.scatter_add_rows
closure_sizes = _impl.closure_sizes


def backends():
    """Map of available backend name to module, for tests and benchmarks."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels

        found["cython"] = _ckernels
    except ImportError:
        pass
    return found
