"""Classifiers for SPD covariance trials.

Four pipelines over the same geometric substrate:

* nearest class geometric mean (``mdm_*``),
* nearest mean across a per-class power-mean field (``mdmf_*``),
* linear discriminant analysis on the squared distances to every mean
  of the field (``mf_*``),
* logistic regression on tangent-space coordinates at the global
  geometric mean (``ts_lr_*``).

Binary decision scores are oriented so that higher means the class
with the larger label index; ties in predicted labels resolve to the
lower class index.
"""

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.special
from dataclasses import dataclass

from .exceptions import (
    ConvergenceFailure, InvalidInput, NumericalFailure,
)
from .geometry import SolverConfig, _eigh_stack, check_spd, invsqrtm, logm
from .means import (
    DEFAULT_H_GRID, MeanField, build_mean_field, geometric_mean, rpme_clean,
)

__all__ = [
    "MdmModel", "mdm_fit", "mdm_score",
    "mdmf_fit", "mdmf_score",
    "LdaModel", "lda_fit", "lda_discriminants",
    "MfModel", "mf_fit", "mf_score", "distance_features",
    "tangent_map", "TsLrModel", "ts_lr_fit", "ts_lr_score",
]

# Fixed ridge on the pooled feature covariance, relative to its mean
# eigenvalue; the discriminant stays hyperparameter-free.
LDA_RIDGE = 1e-9

# Fixed L2 penalty weight of the tangent-space logistic regression.
LR_PENALTY = 1.0
LR_GRAD_TOL = 1e-8


def _group_by_class(covs, labels):
    covs = np.asarray(covs, dtype=np.float64)
    labels = np.asarray(labels)
    if covs.ndim != 3 or covs.shape[0] != labels.shape[0]:
        raise InvalidInput("need one label per covariance matrix")
    classes = np.unique(labels)
    if len(classes) < 2:
        raise InvalidInput("training needs at least 2 classes")
    groups = {}
    for c in classes:
        sel = covs[labels == c]
        if sel.shape[0] < 2:
            raise InvalidInput(f"class {c} needs at least 2 trials")
        groups[c] = sel
    return groups


def _check_dim(cov, dim):
    cov = np.asarray(cov, dtype=np.float64)
    if cov.shape[-1] != dim or cov.shape[-2] != dim:
        raise InvalidInput(
            f"trial dimension {cov.shape[-1]} does not match model ({dim})"
        )
    return cov


# ---------------------------------------------------------------------------
# Nearest class mean


@dataclass(frozen=True)
class MdmModel:
    """Per-class geometric means plus their cached whiteners."""

    classes: tuple
    means: np.ndarray
    _whiteners: np.ndarray

    @property
    def dim(self):
        return self.means.shape[-1]


def _make_mdm(classes, means):
    means = np.stack(means)
    whiteners = np.stack([invsqrtm(m) for m in means])
    for a in (means, whiteners):
        a.flags.writeable = False
    return MdmModel(tuple(classes), means, whiteners)


def mdm_fit(train_covs, labels, config=None, robust=None):
    """Learn one geometric mean per class.

    With ``robust`` given, each class is cleaned by robust mean
    estimation and the returned mean is that of the survivors.
    """
    config = config or SolverConfig()
    groups = _group_by_class(train_covs, labels)
    means = []
    for c, mats in groups.items():
        if robust is not None:
            means.append(rpme_clean(mats, robust=robust, config=config).mean)
        else:
            means.append(geometric_mean(mats, config=config).matrix)
    return _make_mdm(groups.keys(), means)


def _score_from_per_class(classes, values_smaller_is_better):
    v = values_smaller_is_better
    predicted = classes[int(np.argmin(v))]
    if len(classes) == 2:
        return predicted, float(v[0] - v[1])
    return predicted, -np.asarray(v)


def mdm_distances(model, cov):
    """Distances from one trial to every class mean."""
    cov = _check_dim(cov, model.dim)
    return np.sqrt(_whitened_sq_distances_multi(model._whiteners, cov))


def _whitened_sq_distances_multi(whiteners, cov):
    w, _ = _eigh_stack(whiteners @ cov @ whiteners)
    if np.min(w) <= 0.0:
        raise InvalidInput("distance requires positive-definite trials")
    return np.sum(np.log(w) ** 2, axis=-1)


def mdm_score(model, cov):
    """Classify one trial by its nearest class mean.

    Returns
    -------
    (label, score)
        Binary score is ``d(C, mean_0) - d(C, mean_1)`` (higher means
        the second class); multiclass score is the vector of negated
        distances. Ties go to the lower class index.
    """
    d = mdm_distances(model, cov)
    return _score_from_per_class(model.classes, d)


# ---------------------------------------------------------------------------
# Nearest mean of the field


def mdmf_fit(train_covs, labels, h_grid=DEFAULT_H_GRID, config=None,
             robust=None):
    """Learn the full power-mean field per class."""
    groups = _group_by_class(train_covs, labels)
    return build_mean_field(groups, h_grid=h_grid, config=config,
                            robust=robust)


def _field_whiteners(field):
    return {
        label: np.stack([invsqrtm(e.matrix) for e in field.entries[label]])
        for label in field.classes
    }


def mdmf_score(field, cov, _whiteners=None):
    """Classify one trial by its nearest mean across each class field.

    Per class the score is the minimum distance over the class's
    means; the trial goes to the class with the smallest minimum,
    ties to the lower index. Binary decision score is
    ``min_d(class_0) - min_d(class_1)``.
    """
    whiteners = _whiteners or _field_whiteners(field)
    classes = field.classes
    dim = field.entries[classes[0]][0].matrix.shape[-1]
    cov = _check_dim(cov, dim)
    mins = [
        float(np.sqrt(_whitened_sq_distances_multi(whiteners[c], cov)).min())
        for c in classes
    ]
    return _score_from_per_class(classes, np.asarray(mins))


# ---------------------------------------------------------------------------
# Discriminant on squared distances to the field


@dataclass(frozen=True)
class LdaModel:
    """Linear discriminant with a shared ridge-stabilized covariance."""

    classes: tuple
    class_means: np.ndarray
    pooled_covariance: np.ndarray
    priors: np.ndarray
    _coef: np.ndarray
    _intercept: np.ndarray


def lda_fit(features, labels):
    """Fit linear discriminant analysis with a fixed spectral ridge.

    The pooled within-class covariance (normalized by ``N - n_classes``)
    receives ``LDA_RIDGE * tr(S)/k`` on its diagonal before inversion.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    classes = np.unique(y)
    n, k = x.shape
    if len(classes) < 2 or n <= len(classes):
        raise InvalidInput("discriminant needs 2+ classes and n > n_classes")
    means = np.stack([x[y == c].mean(axis=0) for c in classes])
    pooled = np.zeros((k, k))
    for c, mu in zip(classes, means):
        centered = x[y == c] - mu
        pooled += centered.T @ centered
    pooled /= n - len(classes)
    ridge = LDA_RIDGE * np.trace(pooled) / k
    pooled_r = pooled + ridge * np.eye(k)
    try:
        chol = scipy.linalg.cho_factor(pooled_r)
        coef = scipy.linalg.cho_solve(chol, means.T).T
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(
            f"pooled feature covariance is singular after ridge: {exc}"
        ) from exc
    priors = np.array([(y == c).mean() for c in classes])
    intercept = -0.5 * np.sum(coef * means, axis=1) + np.log(priors)
    for a in (means, pooled_r, priors, coef, intercept):
        a.flags.writeable = False
    return LdaModel(tuple(classes), means, pooled_r, priors, coef, intercept)


def lda_discriminants(model, features):
    """Per-class discriminant values ``x S^{-1} mu_c - mu_c S^{-1} mu_c / 2
    + log prior_c`` for a feature matrix."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    return x @ model._coef.T + model._intercept


@dataclass(frozen=True)
class MfModel:
    """A mean field and the discriminant trained on its distances."""

    field: MeanField
    lda: LdaModel
    _whiteners: dict

    @property
    def classes(self):
        return self.field.classes

    @property
    def n_features(self):
        return sum(len(self.field.entries[c]) for c in self.classes)


def distance_features(field, covs, _whiteners=None):
    """Squared distances from trials to every mean of the field.

    Feature order: class labels ascending, then ``h`` ascending within
    each class; length ``n_classes * len(h_grid)``.
    """
    covs = np.asarray(covs, dtype=np.float64)
    single = covs.ndim == 2
    if single:
        covs = covs[None]
    whiteners = _whiteners or _field_whiteners(field)
    cols = []
    for c in field.classes:
        w = whiteners[c]
        lam, _ = _eigh_stack(w[None, :, :, :] @ covs[:, None, :, :] @ w[None, :, :, :])
        if np.min(lam) <= 0.0:
            raise InvalidInput("distance requires positive-definite trials")
        cols.append(np.sum(np.log(lam) ** 2, axis=-1))
    feats = np.concatenate(cols, axis=1)
    return feats[0] if single else feats


def mf_fit(train_covs, labels, h_grid=DEFAULT_H_GRID, config=None,
           robust=None):
    """Learn the mean field and a discriminant on its squared distances.

    The field and the discriminant are trained on the same trials.
    """
    covs = np.asarray(train_covs, dtype=np.float64)
    y = np.asarray(labels)
    field = mdmf_fit(covs, y, h_grid=h_grid, config=config, robust=robust)
    whiteners = _field_whiteners(field)
    feats = distance_features(field, covs, _whiteners=whiteners)
    lda = lda_fit(feats, y)
    return MfModel(field, lda, whiteners)


def mf_score(model, cov):
    """Classify one trial from its distance features.

    Binary decision score is the discriminant difference
    ``g_1(x) - g_0(x)``; multiclass returns the discriminant vector.
    Ties go to the lower class index.
    """
    dim = model.field.entries[model.classes[0]][0].matrix.shape[-1]
    cov = _check_dim(cov, dim)
    feats = distance_features(model.field, cov, _whiteners=model._whiteners)
    g = lda_discriminants(model.lda, feats)[0]
    predicted = model.lda.classes[int(np.argmax(g))]
    if len(model.lda.classes) == 2:
        return predicted, float(g[1] - g[0])
    return predicted, g


# ---------------------------------------------------------------------------
# Tangent space + logistic regression


def tangent_map(cov, reference):
    """Project an SPD matrix to tangent coordinates at a reference.

    ``S = log(R^{-1/2} C R^{-1/2})`` vectorized as the row-major upper
    triangle with off-diagonal entries scaled by ``sqrt(2)``, so the
    Euclidean norm of the vector equals the affine-invariant distance
    from ``C`` to ``R``.
    """
    reference = check_spd(reference, "reference")
    cov = np.asarray(cov, dtype=np.float64)
    if cov.shape[-1] != reference.shape[0]:
        raise InvalidInput("trial and reference dimensions differ")
    r = invsqrtm(reference)
    s = logm(r @ cov @ r)
    d = reference.shape[0]
    iu = np.triu_indices(d)
    scale = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    return s[..., iu[0], iu[1]] * scale


def _logistic_objective(params, x, y01, penalty):
    """Value and gradient of the penalized negative log-likelihood;
    the intercept (last parameter) is unpenalized."""
    w, b = params[:-1], params[-1]
    z = x @ w + b
    # log(1 + exp(-t*z)) with t in {-1, +1}, stable form
    t = 2.0 * y01 - 1.0
    m = -t * z
    loss = np.logaddexp(0.0, m).sum() + 0.5 * penalty * (w @ w)
    p = scipy.special.expit(z)
    resid = p - y01
    grad = np.concatenate([x.T @ resid + penalty * w, [resid.sum()]])
    return loss, grad


def _fit_binary_lr(x, y01):
    n, k = x.shape
    res = scipy.optimize.minimize(
        _logistic_objective, np.zeros(k + 1), args=(x, y01, LR_PENALTY),
        method="L-BFGS-B", jac=True,
        options={"maxiter": 5000, "ftol": 0.0, "gtol": 1e-12},
    )
    beta = res.x
    gnorm = np.inf
    # polish to the gradient bar with damped Newton steps
    for _ in range(100):
        _, grad = _logistic_objective(beta, x, y01, LR_PENALTY)
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= LR_GRAD_TOL:
            return beta
        hess = _logistic_hessian(beta, x, LR_PENALTY)
        hess[np.diag_indices_from(hess)] += 1e-10
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        beta = beta - step
    raise ConvergenceFailure(
        f"logistic regression gradient norm {gnorm:.3e} exceeds "
        f"{LR_GRAD_TOL}",
        last_iterate=beta, residual=gnorm,
    )


def _logistic_hessian(params, x, penalty):
    w, b = params[:-1], params[-1]
    z = x @ w + b
    p = scipy.special.expit(z)
    s = p * (1.0 - p)
    k = x.shape[1]
    h = np.empty((k + 1, k + 1))
    h[:k, :k] = (x * s[:, None]).T @ x + penalty * np.eye(k)
    h[:k, k] = x.T @ s
    h[k, :k] = h[:k, k]
    h[k, k] = s.sum()
    return h


@dataclass(frozen=True)
class TsLrModel:
    """Tangent-space logistic regression at the training geometric mean.

    Features are z-scored with training statistics; one weight vector
    per class beyond the first (one-vs-rest for multiclass).
    """

    classes: tuple
    reference: np.ndarray
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    weights: np.ndarray
    intercepts: np.ndarray

    @property
    def dim(self):
        return self.reference.shape[0]


def ts_lr_fit(train_covs, labels, config=None):
    """Fit logistic regression on tangent coordinates.

    The reference point is the geometric mean of all training trials.
    Features are standardized per coordinate (population statistics of
    the training fold; zero-spread coordinates are neutralized). The
    L2 penalty weight is fixed at 1 with an unpenalized intercept, and
    the optimizer must reach gradient norm ``1e-8``.
    """
    covs = np.asarray(train_covs, dtype=np.float64)
    y = np.asarray(labels)
    classes = np.unique(y)
    if len(classes) < 2:
        raise InvalidInput("training needs at least 2 classes")
    config = config or SolverConfig()
    reference = geometric_mean(covs, config=config).matrix
    feats = tangent_map(covs, reference)
    mean = feats.mean(axis=0)
    scale = feats.std(axis=0)
    scale = np.where(scale > 0.0, scale, 1.0)
    x = (feats - mean) / scale

    if len(classes) == 2:
        targets = [(y == classes[1]).astype(np.float64)]
    else:
        targets = [(y == c).astype(np.float64) for c in classes]
    solutions = [_fit_binary_lr(x, t) for t in targets]
    weights = np.stack([s[:-1] for s in solutions])
    intercepts = np.array([s[-1] for s in solutions])
    for a in (reference, mean, scale, weights, intercepts):
        a.flags.writeable = False
    return TsLrModel(tuple(classes), reference, mean, scale, weights,
                     intercepts)


def ts_lr_score(model, cov):
    """Classify one trial by its tangent-space logit.

    Binary score is the logit of the second class; multiclass returns
    the one-vs-rest logit vector and predicts its argmax (ties to the
    lower class index).
    """
    cov = _check_dim(cov, model.dim)
    feats = tangent_map(cov, model.reference)
    x = (feats - model.feature_mean) / model.feature_scale
    logits = model.weights @ x + model.intercepts
    if len(model.classes) == 2:
        logit = float(logits[0])
        predicted = model.classes[1] if logit > 0 else model.classes[0]
        return predicted, logit
    predicted = model.classes[int(np.argmax(logits))]
    return predicted, logits
