"""Shared helpers for the test suite."""

import numpy as np

from phyloclust import DistanceMatrix, MatrixKind


def square_dm(ids, arr, kind=MatrixKind.P_DISTANCE):
    """DistanceMatrix from a square array (upper triangle is taken)."""
    arr = np.asarray(arr, dtype=np.float64)
    n = len(ids)
    assert arr.shape == (n, n)
    iu = np.triu_indices(n, k=1)
    return DistanceMatrix(list(ids), arr[iu].copy(), kind)


def blob_matrix(sizes, within, between):
    """Block-structured square distances: `within` inside each blob,
    `between` across blobs."""
    n = sum(sizes)
    arr = np.full((n, n), between, dtype=np.float64)
    start = 0
    for s in sizes:
        arr[start : start + s, start : start + s] = within
        start += s
    np.fill_diagonal(arr, 0.0)
    ids = [f"q{i}" for i in range(n)]
    return ids, arr
