"""Backward-recursion kernels with a compiled backend and a NumPy fallback.

The compiled extension is used when it imports; set ``MICROGRID_OPT_PURE=1``
to force the fallback. ``BACKEND`` names the active one.
"""

from __future__ import annotations

import os

from . import _pure

TIE_RTOL = _pure.TIE_RTOL

_impl = _pure
if os.environ.get("MICROGRID_OPT_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
    except ImportError:  # extension not built
        _impl = _pure

BACKEND = "cython" if _impl is not _pure else "numpy"

lattice_dp = _impl.lattice_dp
sigma_dp = _impl.sigma_dp
exact_cycle_dp = _impl.exact_cycle_dp

__all__ = ["BACKEND", "TIE_RTOL", "lattice_dp", "sigma_dp", "exact_cycle_dp"]
