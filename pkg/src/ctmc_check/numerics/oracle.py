"""Dense matrix exponential, used as an independent check on uniformization."""

from __future__ import annotations

import math

import numpy as np

from ..errors import NumericsError

MAX_SIZE = 200


def matrix_exponential_oracle(Q: np.ndarray, t: float, terms: int = 30) -> np.ndarray:
    """exp(Q t) by scaling and squaring with a Taylor polynomial.

    The argument is scaled so that its 1-norm is at most 1/2; 30 Taylor
    terms then leave a truncation error far below double precision.
    """
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    if Q.shape != (n, n):
        raise NumericsError("matrix must be square")
    if n > MAX_SIZE:
        raise NumericsError(f"dense oracle limited to {MAX_SIZE} states, got {n}")
    A = Q * float(t)
    norm = np.max(np.sum(np.abs(A), axis=0)) if n else 0.0
    squarings = max(0, int(math.ceil(math.log2(norm))) + 1) if norm > 0 else 0
    A = A / 2.0**squarings
    result = np.eye(n)
    term = np.eye(n)
    for k in range(1, terms + 1):
        term = term @ A / k
        result = result + term
    for _ in range(squarings):
        result = result @ result
    return result
