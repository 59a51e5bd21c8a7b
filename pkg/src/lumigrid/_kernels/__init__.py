"""Hot-loop kernels with backend selection at import.

The compiled Cython extension is used when present; otherwise (or when the
``LUMIGRID_PURE`` environment variable is set to a non-empty value other
than "0") the pure-numpy fallback takes over.  Both backends implement the
same call contracts; ``BACKEND`` names the active one.
"""

import os

from . import pure as _pure

_force_pure = os.environ.get("LUMIGRID_PURE", "0") not in ("", "0")

if not _force_pure:
    try:
        from . import _ck as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pure
        BACKEND = "numpy"
else:
    _impl = _pure
    BACKEND = "numpy"

causal_softmax = _impl.causal_softmax
softmax_backward = _impl.softmax_backward
layernorm_forward = _impl.layernorm_forward
layernorm_backward = _impl.layernorm_backward
gelu = _impl.gelu
gelu_backward = _impl.gelu_backward
adam_update = _impl.adam_update

__all__ = [
    "BACKEND",
    "adam_update",
    "causal_softmax",
    "gelu",
    "gelu_backward",
    "layernorm_backward",
    "layernorm_forward",
    "softmax_backward",
]
