"""Fixed-order float64 kernels.

Every score the decoders compare against brute force goes through these so
that the result of a dot product never depends on batch shape or BLAS
blocking. Only elementwise operations are used; the reduction runs over the
dimension axis in ascending order.
"""

import numpy as np


def rowdot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise dot product of two ``(B, D)`` float64 arrays.

    Accumulates ``a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1] + ...`` left to right,
    starting from 0.0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a, b = np.broadcast_arrays(a, b)
    out = np.zeros(a.shape[0], dtype=np.float64)
    for j in range(a.shape[1]):
        out += a[:, j] * b[:, j]
    return out


def dot(a: np.ndarray, b: np.ndarray) -> float:
    """Single-vector version of :func:`rowdot` (same accumulation order)."""
    return float(rowdot(np.asarray(a)[None, :], np.asarray(b)[None, :])[0])


def sq_dist_to_rows(x: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance from ``x`` (D,) to each of ``rows`` (K, D)."""
    diff = np.asarray(rows, dtype=np.float64) - np.asarray(x, dtype=np.float64)[None, :]
    return rowdot(diff, diff)
