"""Hot graph kernels: compiled when available, pure Python otherwise.

Set ``EA_ACTIVE_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
brandes_betweenness = _pykernels.brandes_betweenness
avc_order = _pykernels.avc_order

if not os.environ.get("EA_ACTIVE_PURE_PYTHON"):
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        brandes_betweenness = _ckernels.brandes_betweenness
        avc_order = _ckernels.avc_order

__all__ = ["BACKEND", "brandes_betweenness", "avc_order"]
