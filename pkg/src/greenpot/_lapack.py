"""Serialized LAPACK driver calls.

This environment's LAPACK wrappers corrupt the heap when entered from
several threads at once, even for read-only solves against a shared
factorization; a process-wide lock serializes them. BLAS products and the
compiled kernels remain concurrent.
"""

import threading

import numpy as np
from scipy.linalg import get_lapack_funcs
from scipy.linalg import lu_factor as _lu_factor
from scipy.linalg import lu_solve as _lu_solve

_LOCK = threading.Lock()


def lu_factor(a):
    with _LOCK:
        return _lu_factor(a)


def lu_solve(lu_piv, b):
    with _LOCK:
        return _lu_solve(lu_piv, b)


def condition_estimate(matrix, lu_piv):
    """1-norm condition estimate from an LU factorization."""
    gecon = get_lapack_funcs("gecon", (matrix,))
    anorm = np.linalg.norm(matrix, 1)
    with _LOCK:
        rcond, info = gecon(lu_piv[0], anorm, norm="1")
    if info != 0 or rcond == 0.0:
        return np.inf
    return 1.0 / rcond
