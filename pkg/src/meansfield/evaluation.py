"""Cross-validated pipeline evaluation with deterministic folds.

Each (subject, session) group is scored by stratified k-fold
cross-validation with AUC-ROC; fold assignment is a pure function of
(labels, k, seed) so every pipeline sees identical folds. Spatial
filters and classifiers are fit strictly on the training folds;
per-trial covariance estimation happens once, before folding.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.stats

from .classifiers import (
    mdm_fit, mdm_score, mdmf_fit, mdmf_score, mf_fit, mf_score,
    ts_lr_fit, ts_lr_score,
)
from .covariance import oas_covariance
from .exceptions import (
    ConvergenceFailure, InvalidInput, NumericalFailure, UndefinedMetric,
)
from .geometry import SolverConfig
from .means import RobustConfig
from .spatial import adcsp_fit, apply_filter, csp_fit, identity_filter

__all__ = [
    "EvalConfig", "ScoreRow", "PipelineScoreTable", "TrialSet",
    "stratified_kfold", "auc_roc", "run_pipeline", "parse_pipeline",
    "PIPELINE_CLASSIFIERS", "PIPELINE_FILTERS",
]

PIPELINE_CLASSIFIERS = ("MDM", "MDMF", "MF", "MF_RPME", "TS+LR")
PIPELINE_FILTERS = ("CSP", "ADCSP")


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation settings: pipeline name, fold count, and fold seed."""

    pipeline: str
    seed: int
    k: int = 5

    def __post_init__(self):
        if self.k < 2:
            raise InvalidInput("k must be at least 2")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidInput("seed must fit an unsigned 64-bit integer")
        parse_pipeline(self.pipeline)


@dataclass(frozen=True)
class ScoreRow:
    """One fold's outcome; ``auc`` is None when the fold failed or the
    metric was undefined, with the reason in ``error``."""

    dataset: str
    subject: str
    session: str
    fold: int
    auc: float | None
    fold_time_seconds: float
    error: str | None = None

    def __post_init__(self):
        if self.auc is not None and not 0.0 <= self.auc <= 1.0:
            raise InvalidInput(f"auc {self.auc} outside [0, 1]")


@dataclass(frozen=True)
class PipelineScoreTable:
    """All fold rows of one pipeline, sorted by (dataset, subject,
    session, fold)."""

    pipeline: str
    k: int
    seed: int
    rows: tuple

    def mean_auc(self):
        valid = [r.auc for r in self.rows if r.auc is not None]
        if not valid:
            raise UndefinedMetric("no valid AUC rows in table")
        return float(np.mean(valid))


@dataclass(frozen=True)
class TrialSet:
    """A dataset of labeled trials with per-trial subject/session ids.

    ``trials`` is ``(n, channels, samples)`` for time-series data or
    ``(n, d, d)`` for ready-made SPD matrices (``kind`` tells which).
    """

    dataset_id: str
    kind: str
    trials: np.ndarray
    labels: np.ndarray
    subjects: np.ndarray
    sessions: np.ndarray

    def __post_init__(self):
        trials = np.asarray(self.trials, dtype=np.float64)
        labels = np.asarray(self.labels)
        subjects = np.asarray(self.subjects)
        sessions = np.asarray(self.sessions)
        if self.kind not in ("time-series", "covariance"):
            raise InvalidInput(f"unknown trial kind {self.kind!r}")
        if trials.ndim != 3:
            raise InvalidInput("trials must be a 3-d stack")
        n = trials.shape[0]
        for name, arr in (("labels", labels), ("subjects", subjects),
                          ("sessions", sessions)):
            if arr.shape != (n,):
                raise InvalidInput(f"{name} must have one entry per trial")
        object.__setattr__(self, "trials", trials)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "subjects", subjects)
        object.__setattr__(self, "sessions", sessions)

    @property
    def n_trials(self):
        return self.trials.shape[0]

    @property
    def classes(self):
        return np.unique(self.labels)

    def groups(self):
        """(subject, session) pairs in sorted order with their trial
        indices."""
        keys = sorted({(str(s), str(e))
                       for s, e in zip(self.subjects, self.sessions)})
        out = []
        for subject, session in keys:
            mask = (self.subjects.astype(str) == subject) & (
                self.sessions.astype(str) == session)
            out.append((subject, session, np.flatnonzero(mask)))
        return out


def parse_pipeline(name):
    """Split a pipeline name into (filter, classifier) tokens.

    Valid names are a classifier from ``PIPELINE_CLASSIFIERS``
    optionally prefixed by a filter from ``PIPELINE_FILTERS`` and a
    ``+`` (e.g. ``"ADCSP+MF"``, ``"TS+LR"``, ``"CSP+TS+LR"``).
    """
    for clf in sorted(PIPELINE_CLASSIFIERS, key=len, reverse=True):
        if name == clf:
            return None, clf
        for filt in PIPELINE_FILTERS:
            if name == f"{filt}+{clf}":
                return filt, clf
    raise InvalidInput(
        f"unknown pipeline {name!r}; expected one of "
        f"{PIPELINE_CLASSIFIERS} optionally prefixed by one of "
        f"{PIPELINE_FILTERS} and '+'"
    )


def stratified_kfold(labels, k, seed):
    """Deterministic stratified fold assignment.

    Per class, trial indices are shuffled by a PCG64 generator seeded
    with ``SeedSequence([seed, class_position])`` (class position in
    the sorted class list) and dealt round-robin to the k folds, so the
    assignment is a pure function of (labels, k, seed) and per-class
    fold counts differ by at most one.

    Returns
    -------
    list of ndarray
        ``k`` disjoint index arrays covering every trial.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise InvalidInput("k must be at least 2")
    folds = [[] for _ in range(k)]
    for pos, c in enumerate(np.unique(labels)):
        idx = np.flatnonzero(labels == c)
        if idx.size < k:
            raise InvalidInput(
                f"class {c} has {idx.size} trials, fewer than k={k}"
            )
        rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([int(seed), pos]))
        )
        shuffled = idx[rng.permutation(idx.size)]
        for f in range(k):
            folds[f].extend(shuffled[f::k])
    return [np.array(sorted(f), dtype=np.intp) for f in folds]


def auc_roc(scores, labels):
    """Area under the ROC curve of binary scores.

    Equals the pair-counting statistic: the fraction of
    positive/negative pairs the positive trial outscores, ties worth
    one half. Labels must be 0/1 with both classes present.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise InvalidInput("need one score per label")
    uniq = set(np.unique(labels).tolist())
    if not uniq <= {0, 1}:
        raise InvalidInput(f"labels must be binary 0/1, got {sorted(uniq)}")
    if uniq != {0, 1}:
        raise UndefinedMetric("AUC undefined with a single class present")
    ranks = scipy.stats.rankdata(scores, method="average")
    n_pos = int(np.sum(labels == 1))
    n_neg = labels.size - n_pos
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _fit_and_score(filter_kind, clf_kind, train_covs, train_labels,
                   test_covs, config):
    if filter_kind == "CSP":
        filt = csp_fit(train_covs, train_labels)
    elif filter_kind == "ADCSP":
        filt = adcsp_fit(train_covs, train_labels, config=config)
    else:
        filt = identity_filter(train_covs.shape[-1])
    train_f = apply_filter(filt, train_covs)
    test_f = apply_filter(filt, test_covs)

    if clf_kind == "MDM":
        model = mdm_fit(train_f, train_labels, config=config)
        scores = [mdm_score(model, c)[1] for c in test_f]
    elif clf_kind == "MDMF":
        model = mdmf_fit(train_f, train_labels, config=config)
        scores = [mdmf_score(model, c)[1] for c in test_f]
    elif clf_kind in ("MF", "MF_RPME"):
        robust = RobustConfig() if clf_kind == "MF_RPME" else None
        model = mf_fit(train_f, train_labels, config=config, robust=robust)
        scores = [mf_score(model, c)[1] for c in test_f]
    else:  # TS+LR
        model = ts_lr_fit(train_f, train_labels, config=config)
        scores = [ts_lr_score(model, c)[1] for c in test_f]
    return np.asarray(scores, dtype=np.float64), filt.output_dim


def run_pipeline(trialset, config, solver=None, workers=1,
                 fit_observer=None):
    """Evaluate one pipeline on a dataset.

    Per (subject, session) group the trials are split by
    :func:`stratified_kfold`; per fold, the spatial filter and the
    classifier are fit on the training folds only and the held-out
    fold is scored with AUC-ROC and wall-clock timing. Failures are
    recorded in the affected row and the run continues.

    Parameters
    ----------
    trialset : TrialSet
        Binary-labeled trials (AUC is only defined for two classes).
    config : EvalConfig
    solver : SolverConfig, optional
        Convergence budget passed to filters and classifiers.
    workers : int, default 1
        Thread pool width over (subject, session, fold) tasks; the
        result is identical for any width.
    fit_observer : callable, optional
        Called as ``fit_observer(stage, subject, session, fold,
        trial_indices, detail)`` with the global trial indices each
        stage observed; stages are ``"fit"`` (filter and classifier
        training data) and ``"score"`` (held-out data, detail carries
        the filtered dimension).

    Returns
    -------
    PipelineScoreTable
    """
    if not isinstance(config, EvalConfig):
        raise InvalidInput("config must be an EvalConfig")
    solver = solver or SolverConfig()
    filter_kind, clf_kind = parse_pipeline(config.pipeline)
    classes = trialset.classes
    if len(classes) != 2:
        raise InvalidInput(
            f"AUC evaluation supports exactly 2 classes, got {len(classes)}"
        )
    y = np.searchsorted(classes, trialset.labels)

    if trialset.kind == "time-series":
        covs = np.stack([oas_covariance(t) for t in trialset.trials])
    else:
        covs = trialset.trials

    tasks = []
    for subject, session, idx in trialset.groups():
        folds = stratified_kfold(y[idx], config.k, config.seed)
        for f, test_local in enumerate(folds):
            train_local = np.setdiff1d(np.arange(idx.size), test_local)
            tasks.append((subject, session, f, idx, train_local, test_local))

    def run_task(task):
        subject, session, f, idx, train_local, test_local = task
        train_idx = idx[train_local]
        test_idx = idx[test_local]
        t0 = time.perf_counter()
        try:
            if fit_observer is not None:
                fit_observer("fit", subject, session, f, train_idx, None)
            scores, out_dim = _fit_and_score(
                filter_kind, clf_kind, covs[train_idx], y[train_idx],
                covs[test_idx], solver,
            )
            if fit_observer is not None:
                fit_observer("score", subject, session, f, test_idx, out_dim)
            auc = auc_roc(scores, y[test_idx])
            error = None
        except (InvalidInput, NumericalFailure, ConvergenceFailure) as exc:
            auc = None
            error = f"{type(exc).__name__}: {exc}"
        elapsed = time.perf_counter() - t0
        return ScoreRow(
            dataset=trialset.dataset_id, subject=subject, session=session,
            fold=f, auc=auc, fold_time_seconds=elapsed, error=error,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_task, tasks))
    else:
        rows = [run_task(t) for t in tasks]
    rows.sort(key=lambda r: (r.dataset, r.subject, r.session, r.fold))
    return PipelineScoreTable(
        pipeline=config.pipeline, k=config.k, seed=int(config.seed),
        rows=tuple(rows),
    )
