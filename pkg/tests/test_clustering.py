import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gvd.clustering import (
    ClusteringConfig,
    _lloyd,
    assign,
    cluster_dataset,
    cluster_dummy_video,
    cluster_real_video,
    kmeans_direct,
)
from gvd.dataset import VideoDataset
from gvd.errors import ClusteringError, DimensionError


def _sse(x, labels):
    return sum(((x[labels == k] - x[labels == k].mean(0)) ** 2).sum() for k in np.unique(labels))


def test_k_equals_n_saturates():
    x = np.random.default_rng(0).standard_normal((6, 3))
    res = kmeans_direct(x, ClusteringConfig(K=6, seed=1))
    assert res.sse == 0.0
    assert sorted(map(tuple, res.centers)) == sorted(map(tuple, x))


def test_k_one_is_mean():
    x = np.random.default_rng(1).standard_normal((20, 4))
    np.testing.assert_allclose(kmeans_direct(x, ClusteringConfig(K=1)).centers[0], x.mean(0), rtol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_two_means_match_exhaustive_assignment(seed):
    x = np.random.default_rng(seed).standard_normal((6, 2)) + np.array([[3.0, 0.0]] * 3 + [[0.0, 0.0]] * 3)
    best = min(
        _sse(x, np.array(lab))
        for lab in itertools.product([0, 1], repeat=6)
        if 0 < sum(lab) < 6
    )
    res = kmeans_direct(x, ClusteringConfig(K=2, restarts=8, seed=seed))
    assert res.sse == pytest.approx(best, rel=1e-12)


def test_lloyd_never_increases_sse():
    x = np.random.default_rng(2).standard_normal((200, 5))
    for seed in range(10):
        hist = _lloyd(x, 7, 100, seed).sse_history
        assert all(b <= a * (1 + 1e-12) for a, b in zip(hist, hist[1:]))


def test_permutation_stable():
    x = np.random.default_rng(3).standard_normal((60, 3))
    cfg = ClusteringConfig(K=4, seed=5)
    a = kmeans_direct(x, cfg).centers
    b = kmeans_direct(x[np.random.default_rng(9).permutation(60)], cfg).centers
    np.testing.assert_allclose(np.array(sorted(map(tuple, a))), np.array(sorted(map(tuple, b))), atol=1e-9)


def test_restarts_independent_of_workers():
    x = np.random.default_rng(4).standard_normal((80, 3))
    a = kmeans_direct(x, ClusteringConfig(K=5, seed=2, restarts=6, workers=1))
    b = kmeans_direct(x, ClusteringConfig(K=5, seed=2, restarts=6, workers=3))
    assert a.centers.tobytes() == b.centers.tobytes()


def test_too_few_points():
    with pytest.raises(ClusteringError):
        kmeans_direct(np.zeros((2, 2)), ClusteringConfig(K=3))


def test_cosine_rejects_zero_vectors():
    with pytest.raises(ClusteringError):
        kmeans_direct(np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]), ClusteringConfig(K=2, metric="cosine"))


def _videos(n=12, F=3, D=2, seed=0):
    return np.random.default_rng(seed).standard_normal((n, F, D))


def test_real_video_k_equals_n_returns_all():
    v = _videos(5)
    out = cluster_real_video(v, ClusteringConfig(K=5))
    assert sorted(map(tuple, out)) == sorted(map(tuple, v.reshape(5, -1)))


def test_real_video_shared_first_frame():
    v = _videos(6)
    v[:, 0] = 1.0
    cfg = ClusteringConfig(K=3, seed=4)
    out = cluster_real_video(v, cfg)
    np.testing.assert_array_equal(out, v[:3].reshape(3, -1))  # ties go to the lowest unused index
    np.testing.assert_array_equal(out, cluster_real_video(v, cfg))


def test_real_video_prototypes_are_records():
    v = _videos(30)
    out = cluster_real_video(v, ClusteringConfig(K=4, seed=1))
    rows = {r.tobytes() for r in v.reshape(30, -1)}
    assert all(p.tobytes() in rows for p in out)
    assert len({p.tobytes() for p in out}) == 4


def test_dummy_video_constant_frames():
    v = _videos(20, F=5)
    cfg = ClusteringConfig(K=3, seed=2)
    out = cluster_dummy_video(v, cfg).reshape(3, 5, 2)
    assert np.all(out == out[:, :1])
    np.testing.assert_array_equal(out[:, 0], kmeans_direct(v[:, 0], cfg).centers)


def test_dummy_video_k_one_is_mean_frame():
    v = _videos(20, F=4)
    out = cluster_dummy_video(v, ClusteringConfig(K=1)).reshape(4, 2)
    np.testing.assert_allclose(out, np.tile(v[:, 0].mean(0), (4, 1)), rtol=1e-12)


def test_cluster_dataset_shapes():
    rng = np.random.default_rng(0)
    d = VideoDataset(np.repeat([0, 1, 2], 10), rng.standard_normal((30, 4, 2)), 3)
    for variant in ("direct", "real_video", "dummy_video"):
        cc = cluster_dataset(d, ClusteringConfig(K=3, variant=variant, seed=1))
        assert cc.K == 3 and len(cc.centers) == 3
        assert all(m.shape == (3, 8) and np.all(np.isfinite(m)) for m in cc.centers)
        back = cc.as_dataset()
        assert len(back) == 9 and back.frames == 4


def test_assign_exact_and_tie():
    c = np.array([[0.0, 0.0], [2.0, 0.0], [5.0, 5.0]])
    assert assign(c[2], c) == 2
    assert assign([1.0, 0.0], c) == 0
    with pytest.raises(DimensionError):
        assign([1.0, 0.0, 0.0], c)


def test_frobenius_alias():
    x = np.random.default_rng(5).standard_normal((30, 4))
    a = kmeans_direct(x, ClusteringConfig(K=3, metric="euclidean"))
    b = kmeans_direct(x, ClusteringConfig(K=3, metric="frobenius"))
    assert a.centers.tobytes() == b.centers.tobytes()


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), K=st.integers(1, 6), metric=st.sampled_from(["euclidean", "cosine"]))
def test_assign_matches_linear_scan(seed, K, metric):
    rng = np.random.default_rng(seed)
    c, x = rng.standard_normal((K, 3)), rng.standard_normal(3)
    if metric == "cosine":
        cn, xn = c / np.linalg.norm(c, axis=1, keepdims=True), x / np.linalg.norm(x)
    else:
        cn, xn = c, x
    dists = [float(np.sum((xn - ck) ** 2)) for ck in cn]
    assert assign(x, c, metric) == dists.index(min(dists))
