"""Small dense linear-algebra kernels: Cholesky with jitter, QR least squares."""

import numpy as np

from .errors import DecompositionError, InvalidArgumentError, SingularSystemError

#: sentinel for trace-scaled jitter, 1e-8 * trace(a) / dim
AUTO_JITTER = "auto"


def cholesky(a, jitter=0.0) -> np.ndarray:
    """Lower-triangular L with L @ L.T = a + jitter * I.

    ``jitter`` may be the string ``"auto"``, which resolves to
    ``1e-8 * trace(a) / dim`` — enough to rescue near-singular sample
    covariances without distorting well-conditioned ones.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DecompositionError(f"matrix must be square, got shape {a.shape}")
    n = a.shape[0]
    scale = 1.0 + (np.abs(a).max() if n else 0.0)
    if n and np.abs(a - a.T).max() > 1e-9 * scale:
        raise DecompositionError("matrix is asymmetric beyond 1e-9 relative tolerance")
    if jitter == AUTO_JITTER:
        jitter = 1e-8 * np.trace(a) / max(n, 1)
    jitter = float(jitter)
    if not np.isfinite(jitter) or jitter < 0:
        raise InvalidArgumentError(f"jitter must be finite and >= 0, got {jitter}")
    shifted = a + jitter * np.eye(n)
    try:
        return np.linalg.cholesky(shifted)
    except np.linalg.LinAlgError:
        raise DecompositionError(
            f"matrix is not positive definite (jitter={jitter:g})"
        ) from None


def cho_solve(ell, b) -> np.ndarray:
    """Solve (L @ L.T) x = b given the lower Cholesky factor L."""
    z = np.linalg.solve(ell, b)
    return np.linalg.solve(ell.T, z)


def cho_logdet(ell) -> float:
    """log|A| from the lower Cholesky factor of A."""
    return 2.0 * float(np.sum(np.log(np.diag(ell))))


def least_squares(x, y) -> np.ndarray:
    """Coefficients minimizing ||x @ beta - y||_2, solved via reduced QR.

    Orthogonalization (rather than normal equations) keeps wide basis
    designs with clustered frequencies numerically safe.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2:
        raise InvalidArgumentError("design matrix must be 2-d")
    n, p = x.shape
    if y.shape != (n,):
        raise InvalidArgumentError(f"response length {y.shape} does not match {n} rows")
    if n < p:
        raise InvalidArgumentError(f"need at least as many rows ({n}) as columns ({p})")
    q, r = np.linalg.qr(x, mode="reduced")
    diag = np.abs(np.diag(r))
    top = diag.max() if p else 0.0
    tol = max(n, p) * np.finfo(float).eps * top
    dependent = p if top == 0.0 else int(np.sum(diag <= tol))
    if dependent:
        raise SingularSystemError(
            f"design matrix is rank deficient: {dependent} of {p} columns "
            "are linearly dependent"
        )
    return np.linalg.solve(r, q.T @ y)
