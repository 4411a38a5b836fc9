"""Kernel selection.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
pure-Python ``_pykernels`` twin. Set ``QRKEY_PURE_PYTHON=1`` to force the
fallback (the benchmark and parity tests load both modules directly).
"""

import os

from qrkey import _pykernels

python = _pykernels

try:
    from qrkey import _ckernels as compiled
except ImportError:  # extension not built
    compiled = None

if compiled is not None and not os.environ.get("QRKEY_PURE_PYTHON"):
    _impl = compiled
else:
    _impl = _pykernels

IMPLEMENTATION = _impl.IMPLEMENTATION

rs_encode = _impl.rs_encode
rs_decode = _impl.rs_decode
mask_penalty = _impl.mask_penalty
black_points = _impl.black_points

__all__ = [
    "IMPLEMENTATION",
    "black_points",
    "compiled",
    "mask_penalty",
    "python",
    "rs_decode",
    "rs_encode",
]
