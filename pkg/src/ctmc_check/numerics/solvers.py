"""Iterative solvers for the sparse linear systems of steady-state and
reachability analysis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular

from ..errors import NumericsError, SolverError

METHODS = ("gauss-seidel", "jacobi")

# Damping for Jacobi on singular (stationary) systems; the undamped
# iteration oscillates forever on periodic embedded chains.
JACOBI_DAMPING = 0.9


@dataclass(frozen=True)
class SolverConfig:
    method: str = "gauss-seidel"
    epsilon: float = 1e-9
    max_iterations: int = 1_000_000

    def __post_init__(self):
        if self.method not in METHODS:
            raise NumericsError(f"unknown solver {self.method!r}; choose from {', '.join(METHODS)}")
        if not self.epsilon > 0:
            raise NumericsError("solver epsilon must be positive")
        if self.max_iterations < 1:
            raise NumericsError("max iterations must be at least 1")


@dataclass
class SolveStats:
    iterations: int = 0
    residual: float = 0.0


def _relative_change(new: np.ndarray, old: np.ndarray) -> float:
    scale = np.max(np.abs(new))
    if scale == 0:
        return float(np.max(np.abs(new - old)))
    return float(np.max(np.abs(new - old)) / scale)


def solve(A: sp.spmatrix, b: np.ndarray, config: SolverConfig = SolverConfig(),
          x0: np.ndarray | None = None, stats: SolveStats | None = None) -> np.ndarray:
    """Solve the non-singular system ``A x = b`` iteratively."""
    A = sp.csr_matrix(A)
    n = A.shape[0]
    if n == 0:
        return np.zeros(0)
    diag = A.diagonal()
    if np.any(diag == 0):
        raise NumericsError("zero on the diagonal; iterative solve impossible")
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    off = A - sp.diags(diag)
    if config.method == "gauss-seidel":
        lower = sp.tril(A, format="csr")
        upper = sp.triu(A, k=1, format="csr")
    for it in range(1, config.max_iterations + 1):
        if config.method == "gauss-seidel":
            new = spsolve_triangular(lower, b - upper @ x, lower=True)
        else:
            new = (b - off @ x) / diag
        change = _relative_change(new, x)
        x = new
        if change <= config.epsilon:
            if stats is not None:
                stats.iterations += it
                stats.residual = max(stats.residual, float(np.max(np.abs(A @ x - b))))
            return x
    raise SolverError("linear solve did not converge", config.max_iterations,
                      float(np.max(np.abs(A @ x - b))))


def stationary(rates: sp.spmatrix, exit_rates: np.ndarray, config: SolverConfig = SolverConfig(),
               stats: SolveStats | None = None) -> np.ndarray:
    """Stationary distribution of an irreducible CTMC given by its rate matrix.

    Solves ``pi Q = 0`` with ``sum(pi) = 1`` where ``Q = R - diag(E)``;
    written as ``(diag(E) - R^T) pi = 0`` and iterated with renormalization.
    """
    n = rates.shape[0]
    if n == 1:
        return np.ones(1)
    A = (sp.diags(exit_rates) - sp.csr_matrix(rates).T).tocsr()
    pi = np.full(n, 1.0 / n)
    if config.method == "gauss-seidel":
        lower = sp.tril(A, format="csr")
        upper = sp.triu(A, k=1, format="csr")
    else:
        off = A - sp.diags(exit_rates)
    for it in range(1, config.max_iterations + 1):
        if config.method == "gauss-seidel":
            new = spsolve_triangular(lower, -(upper @ pi), lower=True)
        else:
            new = JACOBI_DAMPING * (-(off @ pi) / exit_rates) + (1 - JACOBI_DAMPING) * pi
        new = np.abs(new)
        new /= new.sum()
        change = _relative_change(new, pi)
        pi = new
        if change <= config.epsilon:
            if stats is not None:
                stats.iterations += it
                stats.residual = max(stats.residual, float(np.max(np.abs(A @ pi))))
            return pi
    raise SolverError("stationary solve did not converge", config.max_iterations,
                      float(np.max(np.abs(A @ pi))))
