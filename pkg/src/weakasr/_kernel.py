"""Pick the alignment kernel at import.

Set ``WEAKASR_PURE_PYTHON=1`` to force the pure-Python fallback.
"""
import os

from . import _align_py

python_align_codes = _align_py.align_codes
compiled_align_codes = None

if not os.environ.get("WEAKASR_PURE_PYTHON"):
    try:
        from ._align_core import align_codes as compiled_align_codes
    except ImportError:  # extension not built
        compiled_align_codes = None

if compiled_align_codes is not None:
    align_codes = compiled_align_codes
    BACKEND = "cython"
else:
    align_codes = python_align_codes
    BACKEND = "python"
