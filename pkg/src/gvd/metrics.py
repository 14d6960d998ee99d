"""Diversity metrics for a distilled feature set.

entropy
    Shannon entropy (nats) of the histogram of codeword assignments, where
    ``bins`` codewords come from k-means on a reference feature set.
coverage
    Fraction of original points whose nearest distilled point lies within
    ``tau``, the 90th percentile (linear interpolation) of the original
    points' nearest-other-point distances.
mpd
    Mean Euclidean distance over unordered pairs of L2-normalized features.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .clustering import ClusteringConfig, kmeans_direct
from .errors import ClusteringError, ConfigError


@dataclass
class MetricReport:
    entropy: float
    coverage: float
    mpd: float
    accuracy: dict[str, float] = field(default_factory=dict)

    def validate(self, bins: int | None = None) -> None:
        if not 0.0 <= self.coverage <= 1.0:
            raise ConfigError(f"coverage {self.coverage} outside [0, 1]", "coverage")
        if self.mpd < 0 or not np.isfinite(self.mpd):
            raise ConfigError(f"mpd {self.mpd} must be finite and >= 0", "mpd")
        if self.entropy < 0 or (bins is not None and self.entropy > np.log(bins) + 1e-12):
            raise ConfigError(f"entropy {self.entropy} outside [0, ln B]", "entropy")

    def to_dict(self) -> dict:
        return asdict(self)


def histogram_entropy(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def codebook(reference: np.ndarray, bins: int, seed: int = 0) -> np.ndarray:
    reference = np.asarray(reference, dtype=np.float64)
    if len(reference) < bins:
        raise ClusteringError(f"reference set has {len(reference)} points, need >= {bins} bins")
    return kmeans_direct(reference, ClusteringConfig(K=bins, restarts=2, seed=seed)).centers


def entropy_metric(features: np.ndarray, reference: np.ndarray, bins: int = 32, seed: int = 0, codewords=None) -> float:
    cw = codebook(reference, bins, seed) if codewords is None else codewords
    feats = np.asarray(features, dtype=np.float64)
    cells = np.argmin(cdist(feats, cw, "sqeuclidean"), axis=1)
    return histogram_entropy(np.bincount(cells, minlength=len(cw)))


def nn_threshold(orig: np.ndarray, q: float = 90.0) -> float:
    orig = np.asarray(orig, dtype=np.float64)
    if len(orig) < 2:
        raise ConfigError("need at least 2 original points", "orig")
    d = cdist(orig, orig)
    np.fill_diagonal(d, np.inf)
    return float(np.percentile(d.min(axis=1), q, method="linear"))


def coverage_metric(orig_feats: np.ndarray, small_feats: np.ndarray, tau: float | None = None) -> float:
    orig = np.asarray(orig_feats, dtype=np.float64)
    small = np.asarray(small_feats, dtype=np.float64)
    if len(small) == 0:
        raise ConfigError("distilled set is empty", "small")
    tau = nn_threshold(orig) if tau is None else tau
    nearest = cdist(orig, small).min(axis=1)
    return float(np.mean(nearest <= tau))


def mpd_metric(features: np.ndarray) -> float:
    x = np.asarray(features, dtype=np.float64)
    if len(x) < 2:
        raise ConfigError("need at least 2 vectors", "features")
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    x = x / np.where(norms > 0, norms, 1.0)
    return float(pdist(x).mean())


def metric_report(orig: np.ndarray, small: np.ndarray, bins: int = 32, seed: int = 0) -> MetricReport:
    r = MetricReport(
        entropy=entropy_metric(small, orig, bins, seed),
        coverage=coverage_metric(orig, small),
        mpd=mpd_metric(small),
    )
    r.validate(bins)
    return r
