"""Position-dependent communication graph: adjacency, Laplacian and spectra."""
from __future__ import annotations

import math

import numpy as np

from .exceptions import InvalidInputError, NumericalError
from .flock_core import as_agent_vector

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


def _check_weights(K: float, alpha: float) -> None:
    if not K > 0:
        raise InvalidInputError(f"K must be positive, got {K}")
    if not alpha >= 0:
        raise InvalidInputError(f"alpha must be nonnegative, got {alpha}")


def pairwise_distances(x: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def adjacency(x, K: float, alpha: float) -> np.ndarray:
    """Adjacency matrix with entries ``K / (1 + ||x_i - x_j||)**alpha``.

    Diagonal entries follow the same formula and equal ``K``; they never
    affect the Laplacian.
    """
    _check_weights(K, alpha)
    x = as_agent_vector(x, "x", min_agents=2)
    return K / (1.0 + pairwise_distances(x)) ** alpha


def _adjacency_unchecked(x: np.ndarray, K: float, alpha: float) -> np.ndarray:
    # Hot path for the integrators; inputs are validated once by the caller.
    d = pairwise_distances(x)
    if alpha == 0:
        return np.full_like(d, K)
    return K * (1.0 + d) ** (-alpha)


def laplacian(A) -> np.ndarray:
    """Graph Laplacian ``L = D - A`` with ``D = diag(row sums of A)``."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"A must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError("A contains non-finite entries")
    scale = max(1.0, float(np.abs(A).max()))
    if np.abs(A - A.T).max() > 1e-12 * scale:
        raise InvalidInputError("A is not symmetric")
    return np.diag(A.sum(axis=1)) - A


def _laplacian_unchecked(A: np.ndarray) -> np.ndarray:
    L = -A
    L[np.diag_indices_from(L)] += A.sum(axis=1)
    return L


def laplacian_of_positions(x, K: float, alpha: float) -> np.ndarray:
    return laplacian(adjacency(x, K, alpha))


def apply_laplacian(L, v) -> np.ndarray:
    """Act with the k x k matrix ``L`` on each coordinate of ``v`` in (R^3)^k."""
    L = np.asarray(L, dtype=np.float64)
    v = as_agent_vector(v, "v")
    if L.ndim != 2 or L.shape != (v.shape[0], v.shape[0]):
        raise InvalidInputError(
            f"Laplacian of shape {L.shape} cannot act on {v.shape[0]} agents"
        )
    return L @ v


def jacobi_eigenvalues(S, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.

    Iterates until the off-diagonal Frobenius mass drops below
    ``tol * ||S||_F``.  Raises :class:`NumericalError` if that does not
    happen within ``max_sweeps`` sweeps.
    """
    A = np.array(S, dtype=np.float64)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise InvalidInputError(f"expected a square matrix, got shape {A.shape}")
    threshold = tol * np.linalg.norm(A)
    offmask = ~np.eye(n, dtype=bool)
    off = 0.0
    for sweep in range(max_sweeps + 1):
        off = float(np.linalg.norm(A[offmask]))
        if off <= threshold:
            return np.sort(np.diag(A))
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                with np.errstate(over="ignore"):
                    theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p = A[:, p].copy()
                col_q = A[:, q]
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p = A[p, :].copy()
                row_q = A[q, :]
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = A[q, p] = 0.0
    raise NumericalError(
        f"Jacobi eigensolver did not converge: {max_sweeps} sweeps, "
        f"off-diagonal mass {off:.3e} > threshold {threshold:.3e}"
    )


def fiedler_number(L) -> float:
    """Second smallest eigenvalue of the Laplacian, clamped at zero."""
    L = np.asarray(L, dtype=np.float64)
    if L.ndim != 2 or L.shape[0] != L.shape[1] or L.shape[0] < 2:
        raise InvalidInputError(f"expected a k x k Laplacian with k >= 2, got {L.shape}")
    return max(0.0, float(jacobi_eigenvalues(L)[1]))


def fiedler_lower_bound(A) -> float:
    """``k * min_{i != j} a_ij``, a lower bound for the Fiedler number."""
    A = np.asarray(A, dtype=np.float64)
    k = A.shape[0]
    off = A[~np.eye(k, dtype=bool)]
    return float(k * off.min())


def laplacian_norm_bound(k: int, K: float) -> float:
    """Upper bound ``2 (k - 1) sqrt(k) K`` on the operator norm of any L_x."""
    if k < 2:
        raise InvalidInputError(f"k must be at least 2, got {k}")
    if not K > 0:
        raise InvalidInputError(f"K must be positive, got {K}")
    return 2.0 * (k - 1) * math.sqrt(k) * K


def spectral_norm(M, iters: int = 200, rtol: float = 1e-10, seed: int = 0) -> float:
    """Largest singular value of ``M`` by power iteration on ``M^T M``."""
    M = np.asarray(M, dtype=np.float64)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(M.shape[1])
    u /= np.linalg.norm(u)
    estimate = 0.0
    for _ in range(iters):
        w = M.T @ (M @ u)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        u = w / nrm
        new = math.sqrt(nrm)
        if abs(new - estimate) <= rtol * new:
            return new
        estimate = new
    return estimate
