"""Numeric kernels for the hot inner loops, with backend selection at import.

The compiled Cython module ``_core`` is preferred when it was built; the
pure numpy module ``_purepy`` implements the same contracts and is used as
a fallback.  Set ``SMEARKIT_PURE_PYTHON=1`` to force the fallback, e.g. for
benchmarking one backend against the other.

Both backends compute the same quantities; floating-point results may
differ in the last bits because summation orders differ.
"""

import os

from smearkit._kernels import _purepy

if os.environ.get("SMEARKIT_PURE_PYTHON"):
    _impl = _purepy
    BACKEND = "python"
else:
    try:
        from smearkit._kernels import _core as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _purepy
        BACKEND = "python"

iou_matrix = _impl.iou_matrix
scan_split = _impl.scan_split
sq_dist_matrix = _impl.sq_dist_matrix
student_t_terms = _impl.student_t_terms
tsne_grad = _impl.tsne_grad
kl_from_terms = _impl.kl_from_terms
