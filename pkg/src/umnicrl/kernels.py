"""Backend selection for the lattice scan.

The compiled extension is used when it imports; set ``UMNICRL_BACKEND=python``
to force the numpy implementation.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("UMNICRL_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

lattice_dims = _impl.lattice_dims
first_rank_one = _impl.first_rank_one


def backends() -> dict:
    """All importable backends by name, for benchmarks and cross-checks."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels as _compiled
    except ImportError:
        return out
    out["cython"] = _compiled
    return out
