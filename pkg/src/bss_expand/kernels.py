"""Backend selection for the hot loops.

The compiled ``_hac_ext`` module is used when it imports; otherwise the
pure-Python ``_kernels_py`` twin. Set ``BSS_EXPAND_PURE=1`` to force the
fallback.
"""

from __future__ import annotations

import logging
import os

from bss_expand import _kernels_py

log = logging.getLogger(__name__)

_ext = None
if not os.environ.get("BSS_EXPAND_PURE"):
    try:
        from bss_expand import _hac_ext as _ext
    except ImportError:  # not built
        log.debug("compiled kernels unavailable; using pure-Python fallback")
        _ext = None

BACKEND = "cython" if _ext is not None else "python"

_impl = _ext if _ext is not None else _kernels_py

neighbor_pairs = _impl.neighbor_pairs
nearest = _impl.nearest
complete_linkage = _impl.complete_linkage


def backends():
    """Available backends by name, compiled one only if built."""
    out = {"python": _kernels_py}
    if _ext is not None:
        out["cython"] = _ext
    return out
