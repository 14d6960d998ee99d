"""Per-class prototypes via k-means in flattened latent space.

Three ways of turning a class's videos into ``K`` guidance targets:

``direct``
    k-means on whole flattened videos (frames x latent reshaped to one row).
``real_video``
    k-means on frame 0 only; each center is replaced by the full real video
    whose first frame is nearest to it.
``dummy_video``
    k-means on frame 0; the center frame is tiled over all frames.

``frobenius`` is accepted as a metric alias of ``euclidean``: on flattened
videos the two coincide.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ClusteringError, ConfigError, DimensionError
from .seeding import derive_seed

VARIANTS = ("direct", "real_video", "dummy_video")
METRICS = ("euclidean", "cosine", "frobenius")


@dataclass
class ClusteringConfig:
    K: int = 1
    variant: str = "direct"
    metric: str = "euclidean"
    max_iters: int = 100
    restarts: int = 4
    seed: int = 0
    workers: int = 1

    def validate(self) -> None:
        if self.K < 1:
            raise ConfigError("must be >= 1", "K")
        if self.max_iters < 1:
            raise ConfigError("must be >= 1", "max_iters")
        if self.restarts < 1:
            raise ConfigError("must be >= 1", "restarts")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}", "variant")
        if self.metric not in METRICS:
            raise ConfigError(f"unknown metric {self.metric!r}", "metric")


@dataclass
class KMeansResult:
    centers: np.ndarray  # (K, n)
    labels: np.ndarray  # (N,)
    sse: float
    sse_history: list[float]


@dataclass
class ClusterCenters:
    """``centers[c]`` is a (K, F*D) array of prototypes for class ``c``."""

    centers: list[np.ndarray]
    variant: str
    frames: int
    dim: int

    @property
    def K(self) -> int:
        return len(self.centers[0])

    def as_dataset(self):
        from .dataset import VideoDataset

        labels = np.concatenate([np.full(len(m), c) for c, m in enumerate(self.centers)])
        videos = np.concatenate(self.centers).reshape(-1, self.frames, self.dim)
        return VideoDataset(labels, videos, len(self.centers))

    @classmethod
    def from_dataset(cls, d, variant: str = "direct") -> ClusterCenters:
        flat = d.flat()
        return cls([flat[d.labels == c] for c in range(d.n_classes)], variant, d.frames, d.dim)


def _sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # explicit differences: exact zeros for coincident points, no cancellation
    return np.einsum("nkd,nkd->nk", x[:, None, :] - centers[None], x[:, None, :] - centers[None])


def _normalize(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ClusteringError("cosine metric cannot handle zero vectors")
    return x / norms


def assign(x: np.ndarray, centers: np.ndarray, metric: str = "euclidean") -> int:
    """Index of the nearest center; the lowest index wins ties."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    centers = np.asarray(centers, dtype=np.float64)
    if len(centers) == 0:
        raise ClusteringError("no centers to assign to")
    if centers.shape[1] != x.shape[0]:
        raise DimensionError(f"point has length {x.shape[0]}, centers have {centers.shape[1]}")
    if metric == "cosine":
        x, centers = _normalize(x), _normalize(centers)
    return int(np.argmin(_sq_dists(x[None], centers)[0]))


def _plusplus(x: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(x, x[chosen])[:, 0]
    for _ in range(1, K):
        total = d2.sum()
        if total <= 0:
            # all remaining mass on existing centers; pick unused points in order
            unused = np.setdiff1d(np.arange(n), chosen)
            nxt = int(unused[0])
        else:
            nxt = int(rng.choice(n, p=d2 / total))
        chosen.append(nxt)
        d2 = np.minimum(d2, _sq_dists(x, x[[nxt]])[:, 0])
    return x[chosen].copy()


def _lloyd(x: np.ndarray, K: int, max_iters: int, seed: int) -> KMeansResult:
    rng = np.random.default_rng(seed)
    centers = _plusplus(x, K, rng)
    d2 = _sq_dists(x, centers)
    labels = np.argmin(d2, axis=1)
    history = [float(d2[np.arange(len(x)), labels].sum())]
    for _ in range(max_iters):
        new = centers.copy()
        for k in range(K):
            members = x[labels == k]
            if len(members):
                new[k] = members.mean(axis=0)
            else:
                # re-seed an empty cluster at the worst-served point
                worst = int(np.argmax(d2[np.arange(len(x)), labels]))
                new[k] = x[worst]
        d2 = _sq_dists(x, new)
        new_labels = np.argmin(d2, axis=1)
        sse = float(d2[np.arange(len(x)), new_labels].sum())
        # means are never worse than the previous centers for fixed labels
        if sse > history[-1] * (1 + 1e-12) + 1e-12:
            break
        centers, history = new, history + [sse]
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    d2 = _sq_dists(x, centers)
    labels = np.argmin(d2, axis=1)
    return KMeansResult(centers, labels, float(d2[np.arange(len(x)), labels].sum()), history)


def kmeans_direct(latents: np.ndarray, cfg: ClusteringConfig) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding, best of ``cfg.restarts`` by SSE."""
    cfg.validate()
    x = np.asarray(latents, dtype=np.float64)
    x = x.reshape(len(x), -1)
    if len(x) < cfg.K:
        raise ClusteringError(f"need at least K={cfg.K} points, got {len(x)}")
    if cfg.metric == "cosine":
        x = _normalize(x)
    # canonical (lexicographic) point order makes the result independent of input order
    order = np.lexsort(x.T[::-1])
    xs = x[order]
    seeds = [derive_seed(cfg.seed, "kmeans-restart", 0, r) for r in range(cfg.restarts)]
    if cfg.workers > 1 and cfg.restarts > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            runs = list(pool.map(lambda s: _lloyd(xs, cfg.K, cfg.max_iters, s), seeds))
    else:
        runs = [_lloyd(xs, cfg.K, cfg.max_iters, s) for s in seeds]
    # min() keeps the first of equal SSEs, i.e. the lowest restart index
    best = min(runs, key=lambda r: r.sse)
    labels = np.empty_like(best.labels)
    labels[order] = best.labels
    best.labels = labels
    return best


def _first_frames(videos: np.ndarray) -> np.ndarray:
    return np.asarray(videos, dtype=np.float64)[:, 0, :]


def cluster_real_video(videos: np.ndarray, cfg: ClusteringConfig) -> np.ndarray:
    """Full real videos nearest (on frame 0) to frame-0 k-means centers."""
    videos = np.asarray(videos, dtype=np.float64)
    if len(videos) < cfg.K:
        raise ClusteringError(f"need at least K={cfg.K} videos, got {len(videos)}")
    first = _first_frames(videos)
    res = kmeans_direct(first, cfg)
    if cfg.metric == "cosine":
        first = _normalize(first)
    d2 = _sq_dists(first, res.centers)
    used: set[int] = set()
    picks = []
    for k in range(cfg.K):
        # stable sort: ties resolved toward the lowest video index
        for idx in np.argsort(d2[:, k], kind="stable"):
            if int(idx) not in used:
                used.add(int(idx))
                picks.append(int(idx))
                break
    return videos[picks].reshape(cfg.K, -1)


def cluster_dummy_video(videos: np.ndarray, cfg: ClusteringConfig) -> np.ndarray:
    """Frame-0 k-means centers tiled over all frames."""
    videos = np.asarray(videos, dtype=np.float64)
    F = videos.shape[1]
    res = kmeans_direct(_first_frames(videos), cfg)
    return np.tile(res.centers, (1, F))


def cluster_class(videos: np.ndarray, cfg: ClusteringConfig) -> np.ndarray:
    """Dispatch on ``cfg.variant``; returns (K, F*D) prototypes."""
    cfg.validate()
    if cfg.variant == "direct":
        return kmeans_direct(np.asarray(videos).reshape(len(videos), -1), cfg).centers
    if cfg.variant == "real_video":
        return cluster_real_video(videos, cfg)
    return cluster_dummy_video(videos, cfg)


def cluster_dataset(d, cfg: ClusteringConfig) -> ClusterCenters:
    """Prototypes for every class; class ``c`` is clustered with its own derived seed."""
    cfg.validate()
    centers = []
    for c in range(d.n_classes):
        sub = ClusteringConfig(**{**cfg.__dict__, "seed": derive_seed(cfg.seed, "cluster", c)})
        centers.append(cluster_class(d.of_class(c), sub))
    return ClusterCenters(centers, cfg.variant, d.frames, d.dim)
