"""Backend selection for the hot kernels.

The compiled extension is used when it imports; set ``SUPPORTSEG_PURE_PYTHON=1``
to force the numpy fallback.
"""

import os

from supportseg import _pykernels

python_backend = _pykernels
compiled_backend = None

if not os.environ.get("SUPPORTSEG_PURE_PYTHON"):
    try:
        from supportseg import _ckernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

_impl = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

vote_assign = _impl.vote_assign
greedy_nms = _impl.greedy_nms
tight_boxes = _impl.tight_boxes
