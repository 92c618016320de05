"""Dimensionality-reducing spatial filters for covariance trials.

Two building blocks: two-class filters from the generalized
eigendecomposition of the class means, and approximate joint
diagonalization (AJD) of a matrix set by iterative pairwise
transformations. The adaptive two-stage filter chains them: a fast
eigendecomposition stage caps the dimension at 28, then an AJD stage
on the geometric class means caps it at 10.
"""

import numpy as np
import scipy.linalg
from dataclasses import dataclass

from .exceptions import ConvergenceFailure, InvalidInput
from .geometry import SolverConfig, check_spd
from .means import arithmetic_mean, geometric_mean

__all__ = [
    "SpatialFilter", "csp_gevd", "csp_fit", "pham_ajd", "ajd_criterion",
    "adcsp_fit", "apply_filter",
    "STAGE1_DIM", "STAGE2_DIM", "CSP_FILTERS_PER_CLASS",
]

# Dimension caps of the two-stage adaptive filter and the row budget of
# the plain two-class baseline.
STAGE1_DIM = 28
STAGE2_DIM = 10
CSP_FILTERS_PER_CLASS = 4

# Scores and eigenvalues are quantized at this granularity before
# ranking so that exact ties resolve by index, not by rounding noise.
_TIE_RESOLUTION = 1e-10


@dataclass(frozen=True)
class SpatialFilter:
    """A linear spatial filter: ``k`` rows applied as ``W C W^T``."""

    matrix: np.ndarray
    input_dim: int
    output_dim: int

    def __post_init__(self):
        w = np.asarray(self.matrix, dtype=np.float64)
        if w.shape != (self.output_dim, self.input_dim):
            raise InvalidInput(
                f"filter matrix shape {w.shape} does not match "
                f"({self.output_dim}, {self.input_dim})"
            )
        if self.output_dim > self.input_dim:
            raise InvalidInput("filter cannot increase the dimension")
        if np.linalg.matrix_rank(w) != self.output_dim:
            raise InvalidInput("filter rows are linearly dependent")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "matrix", w)

    @property
    def is_identity(self):
        return self.input_dim == self.output_dim and np.array_equal(
            self.matrix, np.eye(self.input_dim)
        )


def identity_filter(dim):
    """The no-op filter of a given dimension."""
    return SpatialFilter(np.eye(dim), dim, dim)


def apply_filter(f, cov):
    """Apply a spatial filter to an SPD matrix: ``W C W^T``.

    The output is validated positive definite.
    """
    cov = np.asarray(cov, dtype=np.float64)
    if cov.shape[-1] != f.input_dim:
        raise InvalidInput(
            f"filter expects dimension {f.input_dim}, got {cov.shape[-1]}"
        )
    out = f.matrix @ cov @ f.matrix.T
    if out.ndim == 2:
        return check_spd(out, name="filtered matrix")
    return np.stack([check_spd(o, name="filtered matrix") for o in out])


def _quantize(x):
    return np.round(np.asarray(x, dtype=np.float64) / _TIE_RESOLUTION)


def _alternate_extremes(ratios, k):
    """Pick ``k`` indices by extremeness of ``|ratio - 0.5|`` and order
    them alternating between the high side (ratio >= 0.5, descending)
    and the low side (ratio < 0.5, ascending), high side first.

    Exact ties (at 1e-10 granularity) resolve by ascending index, so a
    fully non-discriminative input falls back to index order.
    """
    ratios = np.asarray(ratios, dtype=np.float64)
    qr = _quantize(ratios)
    qhalf = _quantize(np.array(0.5))[()]
    score = np.abs(qr - qhalf)
    order = np.lexsort((np.arange(len(ratios)), -score))
    chosen = np.sort(order[:k])
    high = [i for i in chosen if qr[i] >= qhalf]
    low = [i for i in chosen if qr[i] < qhalf]
    high.sort(key=lambda i: (-qr[i], i))
    low.sort(key=lambda i: (qr[i], i))
    out = []
    hi, lo = 0, 0
    for pos in range(len(chosen)):
        take_high = (pos % 2 == 0 and hi < len(high)) or lo >= len(low)
        if take_high:
            out.append(high[hi])
            hi += 1
        else:
            out.append(low[lo])
            lo += 1
    return out


def csp_gevd(mean_a, mean_b, n_filters):
    """Two-class spatial filter from a generalized eigendecomposition.

    Solves ``mean_a v = lambda (mean_a + mean_b) v``; the eigenvalues
    lie in (0, 1) and measure how much of the composite variance each
    direction assigns to the first class. The ``n_filters`` most
    discriminative eigenvectors (largest ``|lambda - 0.5|``) become the
    filter rows, ordered alternating between the large- and
    small-eigenvalue extremes; rows carry the whitening normalization
    ``v^T (mean_a + mean_b) v = 1``.

    Parameters
    ----------
    mean_a, mean_b : ndarray, shape (d, d)
        SPD class means.
    n_filters : int
        Even number of rows to retain, at most ``d``.
    """
    mean_a = check_spd(mean_a, "mean_a")
    mean_b = check_spd(mean_b, "mean_b")
    if mean_a.shape != mean_b.shape:
        raise InvalidInput("class means must share their dimension")
    d = mean_a.shape[0]
    if n_filters > d:
        raise InvalidInput(f"cannot retain {n_filters} filters in dimension {d}")
    if n_filters < 1 or n_filters % 2 != 0:
        raise InvalidInput("n_filters must be a positive even integer")
    composite = mean_a + mean_b
    # scipy returns v with v.T @ composite @ v = I, eigenvalues ascending
    lam, v = scipy.linalg.eigh(mean_a, composite)
    lam, v = lam[::-1], v[:, ::-1]
    rows = _alternate_extremes(lam, n_filters)
    return SpatialFilter(v[:, rows].T, input_dim=d, output_dim=n_filters)


def _split_two_classes(covs, labels):
    covs = np.asarray(covs, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise InvalidInput("spatial filter fitting needs two classes")
    if len(classes) > 2:
        raise InvalidInput(
            f"spatial filter fitting supports exactly 2 classes, "
            f"got {len(classes)}"
        )
    return covs[labels == classes[0]], covs[labels == classes[1]]


def csp_fit(trial_covs, labels, n_filters_per_class=CSP_FILTERS_PER_CLASS):
    """Plain two-class filter: arithmetic class means, one
    eigendecomposition, ``2 * n_filters_per_class`` rows."""
    covs_a, covs_b = _split_two_classes(trial_covs, labels)
    mean_a = arithmetic_mean(covs_a)
    mean_b = arithmetic_mean(covs_b)
    return csp_gevd(mean_a, mean_b, 2 * n_filters_per_class)


def ajd_criterion(b, mats, weights=None):
    """Pham's joint-diagonalization criterion of a demixing matrix:
    ``sum_i w_i [log det diag(B C_i B^T) - log det (B C_i B^T)]``.

    Zero exactly when every transformed matrix is diagonal.
    """
    mats = np.asarray(mats, dtype=np.float64)
    n = mats.shape[0]
    weights = np.full(n, 1.0 / n) if weights is None else np.asarray(weights)
    total = 0.0
    for w, c in zip(weights, mats):
        t = b @ c @ b.T
        sign, logdet = np.linalg.slogdet(t)
        if sign <= 0:
            raise InvalidInput("transformed matrix is not positive definite")
        total += w * (np.sum(np.log(np.diag(t))) - logdet)
    return float(total)


def pham_ajd(mats, config=None, weights=None, return_info=False):
    """Approximate joint diagonalization of SPD matrices.

    Minimizes Pham's criterion by sweeps of pairwise (2x2) invertible
    transformations; each sweep can only decrease the criterion, and
    iteration stops when a sweep's decrement falls to
    ``config.tolerance``.

    Parameters
    ----------
    mats : ndarray, shape (n, d, d)
        At least two SPD matrices.
    config : SolverConfig, optional
    weights : ndarray, shape (n,), optional
        Positive weights, uniform by default.
    return_info : bool, default False
        Also return a dict with ``sweeps`` and the per-sweep
        ``criterion`` history (criterion value after each sweep).

    Returns
    -------
    b : ndarray, shape (d, d)
        Invertible demixing matrix; ``b @ C_i @ b.T`` is as diagonal
        as the set allows.
    """
    mats = np.asarray(mats, dtype=np.float64)
    if mats.ndim != 3 or mats.shape[0] < 2:
        raise InvalidInput("joint diagonalization needs at least 2 matrices")
    for c in mats:
        check_spd(c, "ajd input")
    config = config or SolverConfig()
    n, d, _ = mats.shape
    if weights is None:
        weights = np.full(n, 1.0 / n)
    else:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (n,) or np.any(weights <= 0):
            raise InvalidInput("weights must be positive, one per matrix")
        weights = weights / weights.sum()

    c = mats.copy()
    b = np.eye(d)
    history = []
    for sweep in range(config.max_iterations):
        decrement = 0.0
        for i in range(1, d):
            for j in range(i):
                c_ii = c[:, i, i]
                c_jj = c[:, j, j]
                c_ij = c[:, i, j]
                g_ij = float(np.sum(weights * c_ij / c_ii))
                g_ji = float(np.sum(weights * c_ij / c_jj))
                w_ij = float(np.sum(weights * c_jj / c_ii))
                w_ji = float(np.sum(weights * c_ii / c_jj))
                w_tilde = np.sqrt(w_ji / w_ij)
                w_prod = np.sqrt(w_ij * w_ji)
                t1 = (w_tilde * g_ij + g_ji) / (w_prod + 1.0)
                t2 = (w_tilde * g_ij - g_ji) / max(w_prod - 1.0, 1e-12)
                h12 = t1 + t2
                h21 = (t1 - t2) / w_tilde
                decrement += (g_ij * h12 + g_ji * h21) / 2.0
                tmp = 1.0 + np.sqrt(max(1.0 - h12 * h21, 0.0))
                pair = np.array([i, j])
                t = np.array([[1.0, -h12 / tmp], [-h21 / tmp, 1.0]])
                c[:, pair, :] = np.einsum("xy,kyl->kxl", t, c[:, pair, :])
                c[:, :, pair] = np.einsum("kly,xy->klx", c[:, :, pair], t)
                b[pair, :] = t @ b[pair, :]
        history.append(ajd_criterion(b, mats, weights))
        if abs(decrement) <= config.tolerance:
            if return_info:
                return b, {"sweeps": sweep + 1, "criterion": history}
            return b
    raise ConvergenceFailure(
        f"joint diagonalization did not converge in "
        f"{config.max_iterations} sweeps (last decrement {decrement:.3e})",
        last_iterate=b, residual=decrement, iterations=config.max_iterations,
    )


def adcsp_fit(trial_covs, labels, config=None):
    """Two-stage adaptive spatial filter for two-class covariance sets.

    Stage 1 (entered iff the dimension is >= 28): arithmetic class
    means, eigendecomposition-based filter to 28 rows. Stage 2
    (entered iff the current dimension is >= 10): geometric class
    means of the stage-1-filtered trials, joint diagonalization of the
    two means, and the 10 most discriminative rows (scored like the
    eigendecomposition stage on the diagonalized means), composed with
    stage 1. Inputs of dimension < 10 pass through an identity filter.

    Returns
    -------
    SpatialFilter
        With ``output_dim = min(input_dim, 10)``.
    """
    config = config or SolverConfig()
    covs_a, covs_b = _split_two_classes(trial_covs, labels)
    d = covs_a.shape[-1]
    if d < STAGE2_DIM:
        return identity_filter(d)

    if d >= STAGE1_DIM:
        stage1 = csp_gevd(
            arithmetic_mean(covs_a), arithmetic_mean(covs_b), STAGE1_DIM
        )
        covs_a = apply_filter(stage1, covs_a)
        covs_b = apply_filter(stage1, covs_b)
        w = stage1.matrix
        d = STAGE1_DIM
    else:
        w = np.eye(d)

    geo_a = geometric_mean(covs_a, config=config).matrix
    geo_b = geometric_mean(covs_b, config=config).matrix
    b = pham_ajd(np.stack([geo_a, geo_b]), config=config)
    diag_a = np.diag(b @ geo_a @ b.T)
    diag_b = np.diag(b @ geo_b @ b.T)
    ratios = diag_a / (diag_a + diag_b)
    rows = _alternate_extremes(ratios, STAGE2_DIM)
    return SpatialFilter(
        b[rows, :] @ w, input_dim=w.shape[1], output_dim=STAGE2_DIM
    )
