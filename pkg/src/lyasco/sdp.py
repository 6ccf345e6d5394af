"""Thin semidefinite-feasibility backend shared by the certificate modules.

All certificate searches reduce to eigenvalue-bounded feasibility over
affine matrix families; cvxpy with a conic solver does the heavy lifting
and every result is re-checked with plain numpy eigensolves before use.
"""

from __future__ import annotations

import warnings

import numpy as np
import cvxpy as cp

_SOLVER_ORDER = ("CLARABEL", "SCS")


class SdpInfeasibleError(RuntimeError):
    """No matrix in the affine family meets the eigenvalue tolerance."""

    def __init__(self, msg, margin=None):
        super().__init__(msg)
        self.margin = margin


def solve_sdp(problem: cp.Problem) -> str:
    """Solve with the first conic solver that succeeds; returns its name."""
    last = None
    for name in _SOLVER_ORDER:
        if name not in cp.installed_solvers():
            continue
        try:
            # inaccurate-solution warnings are redundant here: every result
            # is re-verified with plain eigensolves by the caller
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                problem.solve(solver=name)
        except (cp.SolverError, Exception) as exc:  # noqa: BLE001
            last = exc
            continue
        if problem.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            return name
    raise SdpInfeasibleError(f"SDP solve failed (status={problem.status!r}): {last}")


def max_eigenvalue(matrix: np.ndarray) -> float:
    m = np.asarray(matrix, dtype=float)
    return float(np.linalg.eigvalsh(0.5 * (m + m.T))[-1])


def nearest_psd(matrix: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Eigenvalue clip onto the PSD cone (used to polish solver output)."""
    m = 0.5 * (matrix + matrix.T)
    w, V = np.linalg.eigh(m)
    return (V * np.maximum(w, floor)) @ V.T
