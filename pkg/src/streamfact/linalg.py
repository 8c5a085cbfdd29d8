"""Small dense linear-algebra kernels.

Matrices and vectors are plain ``numpy.ndarray`` objects of float64. The
helpers here validate shapes and finiteness, and implement the handful of
operations the filters need: products, a Cholesky-based SPD solve with an
explicit pivot check, Kronecker products with a size cap, and the
column-stacking ``vec`` operator with its inverse.
"""

import numpy as np

__all__ = [
    "ContractViolation",
    "SingularSystem",
    "CapacityExceeded",
    "DEFAULT_KRON_CAP",
    "as_matrix",
    "as_vector",
    "matvec",
    "outer",
    "cholesky",
    "solve_spd",
    "kron",
    "vec",
    "unvec",
]

DEFAULT_KRON_CAP = 10**8

# pivot <= PIVOT_RTOL * max(diag) is treated as singular
PIVOT_RTOL = 1e-12
SYMMETRY_RTOL = 1e-10


class ContractViolation(ValueError):
    """Raised when an input breaks a documented precondition."""


class SingularSystem(np.linalg.LinAlgError):
    """Raised when a Cholesky pivot is non-positive or numerically zero.

    Attributes
    ----------
    pivot : int
        Index of the column whose pivot failed.
    """

    def __init__(self, pivot, value=None):
        self.pivot = int(pivot)
        self.value = value
        msg = f"matrix is not numerically positive definite (pivot {self.pivot}"
        if value is not None:
            msg += f", value {value:.3e}"
        super().__init__(msg + ")")


class CapacityExceeded(ValueError):
    """Raised when a Kronecker product would exceed the configured size cap."""


def as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ContractViolation(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractViolation(f"{name} contains NaN or Inf")
    return a


def as_vector(x, name="vector"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ContractViolation(f"{name} must be 1-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ContractViolation(f"{name} contains NaN or Inf")
    return x


def matvec(A, x):
    A = as_matrix(A, "A")
    x = as_vector(x, "x")
    if A.shape[1] != x.shape[0]:
        raise ContractViolation(
            f"dimension mismatch: A is {A.shape}, x has length {x.shape[0]}")
    return A @ x


def outer(u, v):
    return np.outer(as_vector(u, "u"), as_vector(v, "v"))


def cholesky(A):
    """Lower-triangular factor ``L`` with ``A = L @ L.T``.

    Parameters
    ----------
    A : array_like, shape (n, n)
        Symmetric positive-definite matrix.

    Returns
    -------
    L : ndarray, shape (n, n)

    Raises
    ------
    ContractViolation
        If ``A`` is not square or not symmetric within a relative 1e-10.
    SingularSystem
        If a pivot falls to ``1e-12 * max(diag(A))`` or below.
    """
    A = as_matrix(A, "A")
    n, k = A.shape
    if n != k:
        raise ContractViolation(f"matrix must be square, got {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A)))) if n else 1.0
    if n and np.max(np.abs(A - A.T)) > SYMMETRY_RTOL * scale:
        raise ContractViolation("matrix is not symmetric")

    tol = PIVOT_RTOL * (float(np.max(np.diag(A))) if n else 0.0)
    L = np.zeros_like(A)
    for j in range(n):
        row = L[j, :j]
        d = A[j, j] - row @ row
        if not d > tol:
            raise SingularSystem(j, d)
        ljj = np.sqrt(d)
        L[j, j] = ljj
        if j + 1 < n:
            L[j + 1:, j] = (A[j + 1:, j] - L[j + 1:, :j] @ row) / ljj
    return L


def _forward(L, b):
    y = np.empty_like(b)
    for i in range(L.shape[0]):
        y[i] = (b[i] - L[i, :i] @ y[:i]) / L[i, i]
    return y


def _backward(L, y):
    # solves L.T x = y
    n = L.shape[0]
    x = np.empty_like(y)
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - L[i + 1:, i] @ x[i + 1:]) / L[i, i]
    return x


def solve_spd(A, b):
    """Solve ``A x = b`` for symmetric positive-definite ``A``.

    ``b`` may be a vector or a matrix of right-hand sides (one per column).
    """
    L = cholesky(A)
    b = np.asarray(b, dtype=float)
    if b.ndim not in (1, 2) or b.shape[0] != L.shape[0]:
        raise ContractViolation(
            f"right-hand side of shape {b.shape} does not match {L.shape}")
    if not np.all(np.isfinite(b)):
        raise ContractViolation("right-hand side contains NaN or Inf")
    return _backward(L, _forward(L, b))


def kron(A, B, cap=DEFAULT_KRON_CAP):
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    size = A.shape[0] * B.shape[0] * A.shape[1] * B.shape[1]
    if size > cap:
        raise CapacityExceeded(
            f"Kronecker product would have {size} entries (cap {cap})")
    return np.kron(A, B)


def vec(A):
    """Stack the columns of ``A`` into one vector."""
    return np.asarray(A, dtype=float).reshape(-1, order="F")


def unvec(v, rows, cols):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != rows * cols:
        raise ContractViolation(
            f"cannot reshape vector of shape {v.shape} to {rows}x{cols}")
    return v.reshape((rows, cols), order="F")
