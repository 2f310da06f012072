"""Gaussian kernel and centered Gram matrices."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import DataError


@dataclass(frozen=True, eq=False)
class GramMatrix:
    values: np.ndarray
    kernel_width: float
    centered: bool


def _check_width(width):
    width = float(width)
    if not width > 0:
        raise DataError(f"kernel width must be positive, got {width}")
    return width


def gaussian_kernel(a, b, width):
    """exp(-||a - b||^2 / (2 width^2))."""
    width = _check_width(width)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise DataError(f"dimension mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.exp(-np.dot(d, d) / (2.0 * width ** 2)))


def _as_points(points):
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    return points


def gaussian_gram(points, width):
    """Uncentered Gaussian Gram matrix of the rows of ``points``."""
    width = _check_width(width)
    points = _as_points(points)
    G = cdist(points, points, "sqeuclidean")
    G *= -1.0 / (2.0 * width ** 2)
    np.exp(G, out=G)
    return G


def center(G):
    """Double-center a square matrix, equal to ``H @ G @ H`` with ``H = I - 11^T/n``.

    Implemented by subtracting row and column means, which costs O(n^2)
    instead of the two O(n^3) products. Returns a new array.
    """
    row = G.mean(axis=1, keepdims=True)
    col = G.mean(axis=0, keepdims=True)
    K = G - row
    K -= col
    K += G.mean()
    return K


def centering_matrix(n):
    return np.eye(n) - np.full((n, n), 1.0 / n)


def centered_gram(points, width):
    points = _as_points(points)
    if points.shape[0] < 2:
        raise DataError("centered_gram needs at least 2 points")
    width = _check_width(width)
    K = center(gaussian_gram(points, width))
    # exact symmetry; the mean subtraction can leave ~1 ulp asymmetry
    K = 0.5 * (K + K.T)
    return GramMatrix(K, width, True)


def gram_for_treatment(treatment, width):
    """Centered Gaussian Gram of a scalar (binary) treatment vector."""
    w = np.asarray(treatment, dtype=float).reshape(-1, 1)
    return centered_gram(w, width)
