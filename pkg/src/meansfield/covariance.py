"""Per-trial covariance estimation with oracle-approximating shrinkage.

The sample covariance of a short multichannel recording is often
rank-deficient; shrinking it toward the scaled identity restores
positive definiteness with a closed-form, data-driven intensity.
"""

import warnings

import numpy as np

from .exceptions import DegenerateInput, InvalidInput
from .geometry import check_spd

__all__ = ["oas_covariance", "oas_shrinkage"]


def _check_trial(data):
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise InvalidInput(
            f"trial data must be (channels, samples), got shape {data.shape}"
        )
    if not np.all(np.isfinite(data)):
        raise InvalidInput("trial data contains non-finite entries")
    channels, samples = data.shape
    if channels < 1 or samples < 2:
        raise InvalidInput("trial needs at least 1 channel and 2 samples")
    if samples < channels:
        warnings.warn(
            f"trial has fewer samples ({samples}) than channels "
            f"({channels}); the covariance estimate will lean heavily "
            "on shrinkage",
            stacklevel=3,
        )
    return data


def oas_shrinkage(sample_cov, n_samples):
    """Closed-form shrinkage intensity toward the scaled identity.

    ``rho = [(1 - 2/p) tr(S^2) + tr(S)^2]
            / [(n + 1 - 2/p) (tr(S^2) - tr(S)^2 / p)]``
    clamped to [0, 1], with ``p`` the matrix dimension and ``n`` the
    number of samples behind ``S``. A vanishing denominator (``S``
    exactly proportional to the identity) yields 1, the full shrink.
    """
    s = np.asarray(sample_cov, dtype=np.float64)
    p = s.shape[0]
    tr_s = float(np.trace(s))
    tr_s2 = float(np.sum(s * s))
    num = (1.0 - 2.0 / p) * tr_s2 + tr_s**2
    den = (n_samples + 1.0 - 2.0 / p) * (tr_s2 - tr_s**2 / p)
    if den <= 0.0:
        return 1.0
    return float(min(1.0, max(0.0, num / den)))


def oas_covariance(data, return_shrinkage=False):
    """Shrunk covariance of one multichannel trial.

    Parameters
    ----------
    data : ndarray, shape (channels, samples)
        One trial; rows are channels. Channels are mean-centered and
        the sample covariance uses the 1/samples normalization.
    return_shrinkage : bool, default False
        Also return the shrinkage intensity.

    Returns
    -------
    cov : ndarray, shape (channels, channels)
        ``(1 - rho) S + rho (tr(S)/p) I``, validated positive definite.
    rho : float
        Only when ``return_shrinkage`` is true.

    Raises
    ------
    DegenerateInput
        When every channel is constant (zero total variance).
    """
    data = _check_trial(data)
    p, n = data.shape
    centered = data - data.mean(axis=1, keepdims=True)
    s = (centered @ centered.T) / n
    mu = float(np.trace(s)) / p
    if mu <= 0.0:
        raise DegenerateInput("all channels are constant; covariance is zero")
    rho = oas_shrinkage(s, n)
    cov = (1.0 - rho) * s
    cov[np.diag_indices(p)] += rho * mu
    cov = check_spd(cov, name="shrunk covariance")
    if return_shrinkage:
        return cov, rho
    return cov
