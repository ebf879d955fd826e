"""Kernel backend selection.

Uses the compiled ``_kernels`` extension when it was built, otherwise the
numpy fallback. Set ``TCSCPLAN_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if not os.environ.get("TCSCPLAN_PURE_PYTHON"):
    try:
        from . import _kernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

ftran_etas = _impl.ftran_etas
btran_etas = _impl.btran_etas
dual_ratio_test = _impl.dual_ratio_test


def backend(name: str):
    """Return the kernel module for ``name`` ('python' or 'cython')."""
    if name == "python":
        return _kernels_py
    from . import _kernels
    return _kernels
