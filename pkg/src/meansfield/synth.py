"""Seeded synthetic trial generators.

Randomness is drawn from named, portable PCG64 streams split per
(class, trial) so archives are bit-reproducible across platforms and
independent of generation order: the stream for trial ``t`` of class
``c`` is ``PCG64(SeedSequence([seed, 1, c, t]))`` and generator-global
draws (the mixing matrix) use ``PCG64(SeedSequence([seed, 0]))``.
"""

from dataclasses import dataclass

import numpy as np

from .archive import TrialArchive
from .exceptions import InvalidInput
from .geometry import check_spd, expm, sqrtm

__all__ = [
    "RiemannianGaussianSpec", "MixedSourcesSpec",
    "synth_riemannian_gaussian", "synth_mixed_sources",
]


def _trial_rng(seed, class_index, trial_index):
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([int(seed), 1, int(class_index),
                                int(trial_index)])
    ))


def _global_rng(seed):
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([int(seed), 0])
    ))


@dataclass(frozen=True)
class RiemannianGaussianSpec:
    """Covariance-kind generator: per class, a log-normal point cloud
    around an SPD center with dispersion ``sigma``."""

    dim: int
    sigmas: tuple
    trials_per_class: int
    seed: int
    centers: tuple = None

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidInput("dim must be positive")
        if len(self.sigmas) < 2:
            raise InvalidInput("need at least 2 classes")
        if any(s <= 0 for s in self.sigmas):
            raise InvalidInput("dispersions must be positive")
        if self.trials_per_class < 1:
            raise InvalidInput("trials_per_class must be positive")
        centers = self.centers
        if centers is None:
            centers = tuple(np.eye(self.dim) for _ in self.sigmas)
        if len(centers) != len(self.sigmas):
            raise InvalidInput("need one center per class")
        centers = tuple(check_spd(c, "class center") for c in centers)
        if any(c.shape != (self.dim, self.dim) for c in centers):
            raise InvalidInput("centers must match dim")
        object.__setattr__(self, "centers", centers)

    @property
    def n_classes(self):
        return len(self.sigmas)


@dataclass(frozen=True)
class MixedSourcesSpec:
    """Time-series-kind generator: fixed random mixing of independent
    sources whose per-class standard-deviation profiles differ."""

    channels: int
    samples: int
    profiles: tuple
    trials_per_class: int
    seed: int
    noise_std: float = 0.1

    def __post_init__(self):
        if len(self.profiles) < 2:
            raise InvalidInput("need at least 2 classes")
        profiles = tuple(np.asarray(p, dtype=np.float64)
                         for p in self.profiles)
        n_sources = profiles[0].size
        if any(p.shape != (n_sources,) for p in profiles):
            raise InvalidInput("profiles must share their source count")
        if any(np.any(p <= 0) for p in profiles):
            raise InvalidInput("source standard deviations must be positive")
        # identical class profiles are allowed: the null experiment
        if self.channels < n_sources:
            raise InvalidInput("need at least as many channels as sources")
        if self.samples < 2:
            raise InvalidInput("need at least 2 samples")
        if self.trials_per_class < 1:
            raise InvalidInput("trials_per_class must be positive")
        if self.noise_std < 0:
            raise InvalidInput("noise_std must be non-negative")
        object.__setattr__(self, "profiles", profiles)

    @property
    def n_classes(self):
        return len(self.profiles)

    @property
    def n_sources(self):
        return self.profiles[0].size


def _symmetric_gaussian(dim, sigma, rng):
    """Symmetric matrix with N(0, sigma^2) diagonal and N(0, sigma^2/2)
    off-diagonal entries, drawn in fixed row-major upper-tri order."""
    s = np.zeros((dim, dim))
    diag = rng.normal(0.0, sigma, dim)
    n_off = dim * (dim - 1) // 2
    off = rng.normal(0.0, sigma / np.sqrt(2.0), n_off)
    iu = np.triu_indices(dim, k=1)
    s[iu] = off
    s = s + s.T
    s[np.diag_indices(dim)] = diag
    return s


def synth_riemannian_gaussian(spec):
    """Draw SPD trials ``M^{1/2} exp(S) M^{1/2}`` per class.

    ``S`` is the symmetric Gaussian perturbation of
    :func:`_symmetric_gaussian`; dispersion 0 would reproduce the
    center exactly. Trials are ordered class-major.
    """
    trials = []
    labels = []
    for c, (sigma, center) in enumerate(zip(spec.sigmas, spec.centers)):
        root = sqrtm(center)
        for t in range(spec.trials_per_class):
            rng = _trial_rng(spec.seed, c, t)
            s = _symmetric_gaussian(spec.dim, sigma, rng)
            trials.append(root @ expm(s) @ root)
            labels.append(c)
    return TrialArchive(
        kind="covariance", trials=np.stack(trials),
        labels=np.array(labels, dtype=np.uint32),
        n_classes=spec.n_classes,
    )


def synth_mixed_sources(spec):
    """Draw time-series trials ``A diag(profile) Z + noise`` per class.

    ``A`` is one fixed random (channels x sources) mixing matrix per
    seed; ``Z`` holds independent standard-normal sources and the
    additive sensor noise is ``N(0, noise_std^2)``.
    """
    mixing = _global_rng(spec.seed).standard_normal(
        (spec.channels, spec.n_sources)
    )
    trials = []
    labels = []
    for c, profile in enumerate(spec.profiles):
        scaled = mixing * profile[None, :]
        for t in range(spec.trials_per_class):
            rng = _trial_rng(spec.seed, c, t)
            z = rng.standard_normal((spec.n_sources, spec.samples))
            x = scaled @ z
            if spec.noise_std > 0:
                x = x + rng.normal(0.0, spec.noise_std,
                                   (spec.channels, spec.samples))
            trials.append(x)
            labels.append(c)
    return TrialArchive(
        kind="time-series", trials=np.stack(trials),
        labels=np.array(labels, dtype=np.uint32),
        n_classes=spec.n_classes,
    )
