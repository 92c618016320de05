"""Geometry of symmetric positive-definite (SPD) matrices.

All matrix functions share a single backend: the symmetric
eigendecomposition. Matrices are plain ``float64`` ndarrays; every
function accepts stacks of matrices in the leading dimensions and
broadcasts the spectral transform over them. The distance is the
affine-invariant one, computed from the eigenvalues of the symmetric
similarity ``A^{-1/2} B A^{-1/2}`` (never from the non-symmetric
``A^{-1} B``).
"""

import numpy as np
from dataclasses import dataclass

from .exceptions import InvalidInput, NumericalFailure

__all__ = [
    "SolverConfig", "check_spd", "is_symmetric", "sym_eig",
    "logm", "expm", "sqrtm", "invsqrtm", "invm", "powm",
    "airm_distance", "geodesic", "frobenius",
]

# Relative tolerance for the symmetry test of SPD inputs.
SYMMETRY_RTOL = 1e-10


@dataclass(frozen=True)
class SolverConfig:
    """Convergence budget shared by all iterative solvers.

    Parameters
    ----------
    tolerance : float, default 1e-7
        Convergence threshold; its exact meaning (relative iterate
        change, stationarity norm, criterion decrement) is documented
        by each solver.
    max_iterations : int, default 150
        Hard cap on update steps before :class:`ConvergenceFailure`.
    """

    tolerance: float = 1e-7
    max_iterations: int = 150

    def __post_init__(self):
        if not self.tolerance > 0:
            raise InvalidInput("tolerance must be positive")
        if self.max_iterations < 1:
            raise InvalidInput("max_iterations must be at least 1")


def _as_square(a, name="matrix"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise InvalidInput(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return a


def is_symmetric(a, rtol=SYMMETRY_RTOL):
    """True when ``max |a - a.T|`` is at most ``rtol * max |a|``."""
    a = np.asarray(a, dtype=np.float64)
    scale = np.abs(a).max()
    if scale == 0.0:
        return True
    gap = np.abs(a - np.swapaxes(a, -1, -2)).max()
    return bool(gap <= rtol * scale)


def _sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def frobenius(a):
    """Frobenius norm over the trailing two axes."""
    a = np.asarray(a, dtype=np.float64)
    return np.sqrt(np.sum(a * a, axis=(-2, -1)))


def check_spd(a, name="matrix"):
    """Validate a symmetric positive-definite matrix.

    Returns the matrix as a ``float64`` array; raises
    :class:`InvalidInput` when the matrix is not symmetric within
    ``SYMMETRY_RTOL`` or its smallest eigenvalue is not strictly
    positive. Nothing is repaired or clamped.
    """
    a = _as_square(a, name)
    if not is_symmetric(a):
        raise InvalidInput(f"{name} is not symmetric")
    w = np.linalg.eigvalsh(a)
    if np.min(w) <= 0.0:
        raise InvalidInput(
            f"{name} is not positive definite "
            f"(smallest eigenvalue {np.min(w):.3e})"
        )
    return a


def sym_eig(s):
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Parameters
    ----------
    s : ndarray, shape (n, n)
        Symmetric matrix (within ``SYMMETRY_RTOL``).

    Returns
    -------
    eigenvalues : ndarray, shape (n,)
        In descending order.
    eigenvectors : ndarray, shape (n, n)
        Orthonormal columns matching the eigenvalue order, so that
        ``V @ diag(w) @ V.T`` reconstructs ``s``.
    """
    s = _as_square(s)
    if s.ndim != 2:
        raise InvalidInput("sym_eig expects a single matrix")
    if not is_symmetric(s):
        raise InvalidInput("sym_eig requires a symmetric matrix")
    try:
        w, v = np.linalg.eigh(_sym(s))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalFailure(f"eigendecomposition failed: {exc}") from exc
    return w[::-1].copy(), v[:, ::-1].copy()


def _eigh_stack(s):
    """Ascending eigh over a (possibly stacked) symmetric array."""
    try:
        return np.linalg.eigh(_sym(s))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalFailure(f"eigendecomposition failed: {exc}") from exc


def _spectral(s, fn, name, require_pd=True):
    """Apply a scalar function to the spectrum: ``V diag(fn(w)) V^T``."""
    s = _as_square(s, name="argument of " + name)
    w, v = _eigh_stack(s)
    if require_pd and np.min(w) <= 0.0:
        raise InvalidInput(
            f"{name} requires a positive-definite matrix "
            f"(smallest eigenvalue {np.min(w):.3e})"
        )
    fw = fn(w)
    return _sym((v * fw[..., None, :]) @ np.swapaxes(v, -1, -2))


def logm(s):
    """Matrix logarithm of an SPD matrix (stack-aware)."""
    return _spectral(s, np.log, "logm")


def expm(s):
    """Matrix exponential of a symmetric matrix (stack-aware)."""
    return _spectral(s, np.exp, "expm", require_pd=False)


def sqrtm(s):
    """Principal square root of an SPD matrix."""
    return _spectral(s, np.sqrt, "sqrtm")


def invsqrtm(s):
    """Inverse principal square root of an SPD matrix."""
    return _spectral(s, lambda w: 1.0 / np.sqrt(w), "invsqrtm")


def invm(s):
    """Inverse of an SPD matrix through its spectrum."""
    return _spectral(s, lambda w: 1.0 / w, "invm")


def powm(s, t):
    """Fractional power ``s**t`` of an SPD matrix."""
    return _spectral(s, lambda w: np.power(w, t), f"powm(t={t})")


def _check_same_dim(a, b):
    if a.shape[-1] != b.shape[-1]:
        raise InvalidInput(
            f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}"
        )


def airm_distance(a, b):
    """Affine-invariant distance between SPD matrices.

    ``d(a, b) = || log(a^{-1/2} b a^{-1/2}) ||_F``, i.e. the root sum
    of squared log-eigenvalues of the whitened matrix.

    Parameters
    ----------
    a : ndarray, shape (n, n)
        SPD reference matrix.
    b : ndarray, shape (..., n, n)
        SPD matrix or stack of SPD matrices.

    Returns
    -------
    float or ndarray
        Distance per matrix in ``b``.
    """
    a = _as_square(a, "a")
    b = _as_square(b, "b")
    _check_same_dim(a, b)
    r = invsqrtm(a)
    w, _ = _eigh_stack(r @ b @ r)
    if np.min(w) <= 0.0:
        raise InvalidInput("airm_distance requires positive-definite inputs")
    d = np.sqrt(np.sum(np.log(w) ** 2, axis=-1))
    return float(d) if d.ndim == 0 else d


def geodesic(a, b, t):
    """Point at parameter ``t`` on the geodesic from ``a`` to ``b``.

    ``a^{1/2} (a^{-1/2} b a^{-1/2})^t a^{1/2}`` with ``t`` in [0, 1];
    ``t = 0`` returns ``a`` exactly and ``t = 1`` returns ``b``.
    """
    a = _as_square(a, "a")
    b = _as_square(b, "b")
    _check_same_dim(a, b)
    if not 0.0 <= t <= 1.0:
        raise InvalidInput(f"geodesic parameter must lie in [0, 1], got {t}")
    if t == 0.0:
        return a.copy()
    if t == 1.0:
        return np.broadcast_to(b, np.broadcast_shapes(a.shape, b.shape)).copy()
    w, v = _eigh_stack(a)
    if np.min(w) <= 0.0:
        raise InvalidInput("geodesic requires positive-definite endpoints")
    vt = np.swapaxes(v, -1, -2)
    r = (v * (1.0 / np.sqrt(w))[..., None, :]) @ vt
    rh = (v * np.sqrt(w)[..., None, :]) @ vt
    return _sym(rh @ powm(r @ b @ r, t) @ rh)
