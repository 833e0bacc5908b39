"""
Dense linear algebra helpers shared by the rest of the package.

Vectors are 1-D and matrices 2-D float64 numpy arrays. The constructors
reject non-finite entries so that NaN never leaks into the confidence
bounds computed downstream.
"""

import numpy as np
import scipy.linalg

from deqcert.exceptions import DimensionError, SingularError, ArgumentError


PIVOT_THRESHOLD = 1e-12

# fixed start vector for power iteration, so estimates are reproducible
_POWER_ITERATION_SEED = 0


def as_vector(data):
    vector = np.asarray(data, dtype=np.float64)
    if vector.ndim != 1:
        raise DimensionError('Expected a vector, got shape {0}'.format(vector.shape))
    if not np.all(np.isfinite(vector)):
        raise ArgumentError('Vector has non-finite entries')
    return vector


def as_matrix(data, cols=None):
    matrix = np.asarray(data, dtype=np.float64)
    if matrix.ndim == 1 and cols is not None:
        if matrix.size % cols:
            raise DimensionError('{0} values cannot fill rows of {1}'.format(matrix.size, cols))
        matrix = matrix.reshape(-1, cols)
    if matrix.ndim != 2:
        raise DimensionError('Expected a matrix, got shape {0}'.format(matrix.shape))
    if not np.all(np.isfinite(matrix)):
        raise ArgumentError('Matrix has non-finite entries')
    return matrix


def matvec(m, v):
    if m.shape[1] != v.shape[-1]:
        raise DimensionError('Cannot multiply {0} matrix by vector of length {1}'.format(m.shape, v.shape[-1]))
    return m @ v


def l2_norm(v):
    return float(np.linalg.norm(v))


def spectral_norm_estimate(m, iters=100):
    """
    Power iteration estimate of the largest singular value of `m`.

    Iterates on MᵀM from a fixed pseudo-random unit vector; the returned
    value ‖M v_k‖ never decreases with `iters`.

    """
    if iters < 1:
        raise ArgumentError('iters must be >= 1')
    if m.size == 0:
        return 0.0

    rng = np.random.default_rng(_POWER_ITERATION_SEED)
    v = rng.standard_normal(m.shape[1])
    v /= np.linalg.norm(v)

    estimate = 0.0
    for _ in range(iters):
        mv = m @ v
        estimate = float(np.linalg.norm(mv))
        w = m.T @ mv
        w_norm = np.linalg.norm(w)
        if w_norm == 0.0:
            break
        v = w / w_norm

    return max(estimate, float(np.linalg.norm(m @ v)))


def dense_solve(a, b):
    """Solve a·x = b by LU factorisation with partial pivoting."""
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError('dense_solve needs a square matrix, got {0}'.format(a.shape))
    if a.shape[0] != b.shape[0]:
        raise DimensionError('Right-hand side has length {0}, expected {1}'.format(b.shape[0], a.shape[0]))

    lu, piv = scipy.linalg.lu_factor(a, check_finite=True)
    if np.min(np.abs(np.diag(lu))) <= PIVOT_THRESHOLD:
        raise SingularError('Matrix is singular to working precision')

    return scipy.linalg.lu_solve((lu, piv), b)
