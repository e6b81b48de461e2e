"""Basis-pursuit front end with backend selection.

The hot kernel exists twice: a compiled Cython extension and a pure-NumPy
fallback with identical algorithmic structure.  The compiled one is chosen
at import when available; ORTHOCS_BP_BACKEND=python|compiled forces a choice.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _bp_python

try:
    from . import _bp_kernel
except ImportError:  # extension not built: NumPy path only
    _bp_kernel = None

_STATUS_NAMES = {0: "optimal", 1: "max_iter", 2: "numerical_failure"}


def available_backends() -> tuple[str, ...]:
    return ("compiled", "python") if _bp_kernel is not None else ("python",)


def _default_backend() -> str:
    forced = os.environ.get("ORTHOCS_BP_BACKEND", "auto").lower()
    if forced == "python":
        return "python"
    if forced == "compiled":
        if _bp_kernel is None:
            raise ImportError("compiled kernel requested but not built")
        return "compiled"
    return "compiled" if _bp_kernel is not None else "python"


_ACTIVE = _default_backend()


def active_backend() -> str:
    return _ACTIVE


@dataclass
class BpSolution:
    """Outcome of one basis-pursuit solve."""

    xhat: np.ndarray
    l1_value: float
    iterations: int
    feasibility_gap: float
    duality_gap: float
    status: str

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def solve_bp(D, y, tol: float = 1e-9, max_iter: int = 100,
             backend: str | None = None) -> BpSolution:
    """Minimize the l1 norm subject to D x = y.

    D may be a raw matrix or anything exposing a `.matrix` attribute.
    status is "optimal" only when primal/dual infeasibilities and the
    complementarity gap are all at or below `tol`.
    """
    mat = getattr(D, "matrix", D)
    mat = np.ascontiguousarray(mat, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if mat.ndim != 2 or y.shape != (mat.shape[0],):
        raise ValueError(f"shape mismatch: D is {mat.shape}, y is {y.shape}")

    chosen = backend or _ACTIVE
    if chosen == "compiled":
        if _bp_kernel is None:
            raise ImportError("compiled kernel requested but not built")
        xhat, iters, code, feas, gap = _bp_kernel.solve(mat, y, tol, max_iter)
    elif chosen == "python":
        xhat, iters, code, feas, gap = _bp_python.solve(mat, y, tol, max_iter)
    else:
        raise ValueError(f"unknown backend {chosen!r}")

    return BpSolution(
        xhat=np.asarray(xhat), l1_value=float(np.abs(xhat).sum()),
        iterations=int(iters), feasibility_gap=float(feas),
        duality_gap=float(gap), status=_STATUS_NAMES[int(code)])
