"""Graph kernel backend selection.

The compiled ``_kernels`` extension is used when it was built; otherwise the
pure-Python ``_kernels_py`` module. Set ``RHABAC_PURE_PYTHON=1`` to force the
fallback.
"""

from __future__ import annotations

import os

if os.environ.get("RHABAC_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as _impl

BACKEND = _impl.BACKEND
build_csr = _impl.build_csr
csr_to_adjacency = _impl.csr_to_adjacency
bfs_reached = _impl.bfs_reached
reachable = _impl.reachable
topological_order = _impl.topological_order
transitive_reduction = _impl.transitive_reduction


def available_backends():
    """Map backend name to module for every backend importable here."""
    from . import _kernels_py

    found = {"python": _kernels_py}
    try:
        from . import _kernels  # type: ignore[attr-defined]

        found["cython"] = _kernels
    except ImportError:
        pass
    return found
