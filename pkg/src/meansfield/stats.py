"""Paired statistical comparison of pipeline score tables.

Per dataset, the per-subject paired difference in mean AUC is tested
one-sided (second pipeline better): by exhaustive sign-flip
enumeration for fewer than 20 subjects (an exact test) and by the
signed-rank normal approximation otherwise. Per-dataset p-values
combine across datasets through the weighted inverse-normal (Liptak)
function and effect sizes through a weighted arithmetic mean, both
with weights equal to the square root of the number of subjects.
"""

import numpy as np
import scipy.special
from dataclasses import dataclass

from .exceptions import InvalidInput, RoutedElsewhere

__all__ = [
    "normal_cdf", "normal_quantile", "exact_permutation_test",
    "wilcoxon_signed_rank", "liptak_combine", "smd", "SmdResult",
    "PairedComparison", "DatasetComparison", "MetaReport", "meta_compare",
    "paired_comparisons_from_tables",
]

# Exact-test routing threshold on the number of subjects.
EXACT_TEST_MAX_N = 20

# p-values are clamped away from {0, 1} before the normal quantile.
_P_CLAMP = 1e-15


def normal_cdf(z):
    """Standard normal CDF (absolute error well below 1e-9)."""
    return scipy.special.ndtr(z)


def normal_quantile(p):
    """Standard normal quantile (absolute error well below 1e-9)."""
    return scipy.special.ndtri(p)


def _check_diffs(diffs):
    d = np.asarray(diffs, dtype=np.float64).ravel()
    if d.size < 2:
        raise InvalidInput("need at least 2 paired differences")
    if not np.all(np.isfinite(d)):
        raise InvalidInput("differences contain non-finite values")
    return d


def exact_permutation_test(diffs):
    """Exact one-sided paired sign-flip test on the mean difference.

    Enumerates all ``2^n`` sign assignments of the differences; the
    p-value is the fraction whose mean is at least the observed mean
    (the observed assignment is included, so ``p >= 2^-n``).

    Requires ``2 <= n < 20``; larger samples raise
    :class:`RoutedElsewhere` and belong to the signed-rank test.
    """
    d = _check_diffs(diffs)
    n = d.size
    if n >= EXACT_TEST_MAX_N:
        raise RoutedElsewhere(
            f"{n} >= {EXACT_TEST_MAX_N} subjects: use the signed-rank test"
        )
    # A sign assignment's mean is >= the observed mean exactly when the
    # sum over its flipped subset is <= 0; enumerate subset sums.
    sums = np.zeros(1)
    for v in d:
        sums = np.concatenate([sums, sums + v])
    return float(np.count_nonzero(sums <= 0.0) / sums.size)


def wilcoxon_signed_rank(diffs):
    """One-sided signed-rank test via the tie-corrected normal
    approximation with continuity correction.

    Zero differences are dropped first; ranks of tied magnitudes are
    averaged. Small p favors positive differences (second pipeline
    better).

    Returns
    -------
    p : float
    degenerate : bool
        True when every difference is zero (p is then 1).
    """
    d = _check_diffs(diffs)
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        return 1.0, True
    magnitudes = np.abs(d)
    order = np.argsort(magnitudes, kind="stable")
    ranks = np.empty(n)
    sorted_m = magnitudes[order]
    i = 0
    tie_sizes = []
    while i < n:
        j = i
        while j < n and sorted_m[j] == sorted_m[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + 1 + j)
        tie_sizes.append(j - i)
        i = j
    w_plus = float(ranks[d > 0].sum())
    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    var -= sum(t**3 - t for t in tie_sizes) / 48.0
    if var <= 0.0:
        return 1.0, True
    z = (w_plus - 0.5 - mu) / np.sqrt(var)
    return float(1.0 - normal_cdf(z)), False


def liptak_combine(p_values, weights):
    """Weighted inverse-normal combination of one-sided p-values.

    ``T = sum_i w_i Phi^{-1}(1 - p_i) / sqrt(sum_i w_i^2)`` and the
    combined p is ``1 - Phi(T)``. Inputs are clamped to
    ``[1e-15, 1 - 1e-15]`` before the quantile transform.
    """
    p = np.asarray(p_values, dtype=np.float64).ravel()
    w = np.asarray(weights, dtype=np.float64).ravel()
    if p.size == 0:
        raise InvalidInput("no p-values to combine")
    if w.shape != p.shape:
        raise InvalidInput("need one weight per p-value")
    if np.any(w <= 0):
        raise InvalidInput("weights must be positive")
    p = np.clip(p, _P_CLAMP, 1.0 - _P_CLAMP)
    z = normal_quantile(1.0 - p)
    t = float(w @ z / np.sqrt(w @ w))
    return float(1.0 - normal_cdf(t))


class SmdResult:
    """Paired standardized mean difference with its large-sample CI."""

    __slots__ = ("value", "ci_low", "ci_high", "degenerate", "n")

    def __init__(self, value, ci_low, ci_high, degenerate, n):
        self.value = value
        self.ci_low = ci_low
        self.ci_high = ci_high
        self.degenerate = degenerate
        self.n = n

    def __repr__(self):
        flag = ", degenerate" if self.degenerate else ""
        return (f"SmdResult({self.value:.4f} "
                f"[{self.ci_low:.4f}, {self.ci_high:.4f}], n={self.n}{flag})")


def smd(scores_a, scores_b):
    """Paired standardized mean difference ``mean(b - a) / std(b - a)``.

    Positive values favor the second pipeline. The standard deviation
    uses the n-1 normalization; the 95% CI is ``value +/- 1.96/sqrt(n)``.
    Zero spread of the differences yields value 0 with the degenerate
    flag raised (no finite effect size exists).
    """
    a = np.asarray(scores_a, dtype=np.float64).ravel()
    b = np.asarray(scores_b, dtype=np.float64).ravel()
    if a.shape != b.shape or a.size < 2:
        raise InvalidInput("need two equal-length score lists, n >= 2")
    d = b - a
    spread = float(np.std(d, ddof=1))
    n = d.size
    half = 1.96 / np.sqrt(n)
    if spread == 0.0:
        return SmdResult(0.0, -half, half, True, n)
    value = float(d.mean() / spread)
    return SmdResult(value, value - half, value + half, False, n)


@dataclass(frozen=True)
class PairedComparison:
    """Per-subject paired mean scores of two pipelines on one dataset."""

    dataset: str
    subjects: tuple
    scores_a: np.ndarray
    scores_b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.scores_a, dtype=np.float64)
        b = np.asarray(self.scores_b, dtype=np.float64)
        if a.shape != b.shape or a.ndim != 1:
            raise InvalidInput("paired scores must be equal-length vectors")
        if a.size < 2:
            raise InvalidInput("paired comparison needs at least 2 subjects")
        object.__setattr__(self, "scores_a", a)
        object.__setattr__(self, "scores_b", b)

    @property
    def n_subjects(self):
        return self.scores_a.size


@dataclass(frozen=True)
class DatasetComparison:
    """One dataset's row of the meta report."""

    dataset: str
    n_subjects: int
    weight: float
    smd: float
    ci_low: float
    ci_high: float
    p_value: float
    test: str
    degenerate: bool


@dataclass(frozen=True)
class MetaReport:
    """Per-dataset effect rows plus the combined meta-effect."""

    pipeline_a: str
    pipeline_b: str
    datasets: tuple
    combined_smd: float
    combined_p: float


def _subject_means(table):
    """Mean AUC per (dataset, subject), rows with missing AUC excluded."""
    acc = {}
    for row in table.rows:
        key = (row.dataset, row.subject)
        acc.setdefault(key, []).append(row.auc)
    means = {}
    for key, aucs in acc.items():
        valid = [a for a in aucs if a is not None]
        means[key] = float(np.mean(valid)) if valid else None
    return means


def paired_comparisons_from_tables(table_a, table_b):
    """Align two score tables into per-dataset paired comparisons.

    Both tables must cover identical (dataset, subject, session, fold)
    cells. Per subject the score is the mean AUC over all of that
    subject's sessions and folds; subjects without a valid score on
    both sides are dropped.
    """
    cells_a = sorted((r.dataset, r.subject, r.session, r.fold)
                     for r in table_a.rows)
    cells_b = sorted((r.dataset, r.subject, r.session, r.fold)
                     for r in table_b.rows)
    if cells_a != cells_b:
        divergent = next(
            ca for ca, cb in zip(cells_a + [None], cells_b + [None])
            if ca != cb
        )
        raise InvalidInput(
            f"score tables cover different cells; first divergence at "
            f"{divergent}"
        )
    means_a = _subject_means(table_a)
    means_b = _subject_means(table_b)
    by_dataset = {}
    for dataset, subject in sorted(means_a):
        a = means_a[(dataset, subject)]
        b = means_b[(dataset, subject)]
        if a is None or b is None:
            continue
        by_dataset.setdefault(dataset, []).append((subject, a, b))
    comparisons = []
    for dataset in sorted(by_dataset):
        entries = by_dataset[dataset]
        comparisons.append(PairedComparison(
            dataset=dataset,
            subjects=tuple(s for s, _, _ in entries),
            scores_a=np.array([a for _, a, _ in entries]),
            scores_b=np.array([b for _, _, b in entries]),
        ))
    return comparisons


def meta_compare(table_a, table_b):
    """Compare two pipelines' score tables across datasets.

    Per dataset: the standardized mean difference and a one-sided
    p-value, routed to the exact sign-flip test for fewer than 20
    subjects and to the signed-rank test otherwise. Combined: the
    weighted arithmetic mean of the effect sizes and the weighted
    inverse-normal combination of the p-values, weights
    ``sqrt(n_subjects)``.
    """
    comparisons = paired_comparisons_from_tables(table_a, table_b)
    if not comparisons:
        raise InvalidInput("no complete (dataset, subject) pairs to compare")
    rows = []
    for comp in comparisons:
        diffs = comp.scores_b - comp.scores_a
        if comp.n_subjects < EXACT_TEST_MAX_N:
            p = exact_permutation_test(diffs)
            test = "exact-permutation"
        else:
            p, _ = wilcoxon_signed_rank(diffs)
            test = "signed-rank"
        effect = smd(comp.scores_a, comp.scores_b)
        rows.append(DatasetComparison(
            dataset=comp.dataset,
            n_subjects=comp.n_subjects,
            weight=float(np.sqrt(comp.n_subjects)),
            smd=effect.value,
            ci_low=effect.ci_low,
            ci_high=effect.ci_high,
            p_value=p,
            test=test,
            degenerate=effect.degenerate,
        ))
    weights = np.array([r.weight for r in rows])
    smds = np.array([r.smd for r in rows])
    ps = np.array([r.p_value for r in rows])
    combined_smd = float(weights @ smds / weights.sum())
    combined_p = liptak_combine(ps, weights)
    return MetaReport(
        pipeline_a=table_a.pipeline,
        pipeline_b=table_b.pipeline,
        datasets=tuple(rows),
        combined_smd=combined_smd,
        combined_p=combined_p,
    )
