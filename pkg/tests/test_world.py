import numpy as np
import pytest

from conftest import random_world
from gvd.errors import ConfigError
from gvd.world import (
    ClassSpec,
    ModeSpec,
    WorldSpec,
    build_world,
    default_world_spec,
    mode_moments,
    sample_dataset,
    sample_record,
    simulate_rollouts,
)


def _mode(A, b, s=1.0, q=0.5, mean=(0.0, 0.0)):
    return ModeSpec(1.0, list(mean), s, np.asarray(A, dtype=float).tolist(), list(b), q)


def test_zero_dynamics_collapse_to_drift():
    q = 1e-6
    mu, S = mode_moments(_mode(np.zeros((2, 2)), [1.5, -2.0], q=q), 5)
    mu, var = mu.reshape(5, 2), np.diag(S).reshape(5, 2)
    np.testing.assert_allclose(mu[1:], np.tile([1.5, -2.0], (4, 1)))
    assert np.all(var[1:] <= q**2 * 1.0000001)


def test_random_walk_variance_accumulates():
    s, q = 0.7, 0.3
    _, S = mode_moments(_mode(np.eye(2), [0.0, 0.0], s=s, q=q), 6)
    var = np.diag(S).reshape(6, 2)
    for f in range(6):
        np.testing.assert_allclose(var[f], s**2 + f * q**2, rtol=1e-14)


def test_moments_match_rollouts():
    spec = random_world(8, frames=4, dim=2, n_modes=1)
    m = spec.classes[0].modes[0]
    mu, S = mode_moments(m, 4)
    x = simulate_rollouts(m, 4, 100_000, np.random.default_rng(0))
    assert np.linalg.norm(x.mean(0) - mu) / np.linalg.norm(mu) < 0.02
    emp = np.cov(x, rowvar=False)
    assert np.linalg.norm(emp - S) / np.linalg.norm(S) < 0.02


def test_covariance_symmetric_positive_definite(small_world):
    for mix in small_world.classes:
        for S in mix.covs:
            np.testing.assert_array_equal(S, S.T)
            assert np.linalg.eigvalsh(S).min() > 0
        assert mix.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_default_world_is_stationary():
    spec = default_world_spec(0)
    for cls in spec.classes:
        for m in cls.modes:
            mu, S = mode_moments(m, spec.frames)
            np.testing.assert_allclose(mu.reshape(spec.frames, -1), np.tile(m.init_mean, (spec.frames, 1)), atol=1e-12)
            D = spec.dim
            for f in range(spec.frames):
                np.testing.assert_allclose(S[f * D : (f + 1) * D, f * D : (f + 1) * D], m.init_cov_scale**2 * np.eye(D), atol=1e-12)


def test_spectral_radius_guard():
    spec = random_world(0)
    spec.classes[0].modes[0].dynamics = (1.5 * np.eye(4)).tolist()
    with pytest.raises(ConfigError) as err:
        build_world(spec)
    assert "dynamics" in err.value.field


@pytest.mark.parametrize(
    "mutate",
    [
        lambda s: s.classes.pop(),
        lambda s: setattr(s, "frames", 1),
        lambda s: setattr(s.classes[0].modes[0], "weight", 0.9),
        lambda s: setattr(s.classes[0].modes[0], "process_noise_scale", 0.0),
        lambda s: setattr(s.classes[1], "modes", []),
    ],
)
def test_spec_invariants(mutate):
    spec = random_world(0)
    mutate(spec)
    with pytest.raises(ConfigError):
        build_world(spec)


def test_spec_json_round_trip(tmp_path):
    spec = default_world_spec(4, n_classes=3)
    p = tmp_path / "w.json"
    p.write_text(spec.to_json())
    assert WorldSpec.load(p) == spec


def test_two_records_two_labels(small_world):
    d = sample_dataset(small_world, 1, 0)
    assert len(d) == 2 and sorted(d.labels.tolist()) == [0, 1]


def test_dataset_determinism(small_world):
    a, b = sample_dataset(small_world, 20, 9), sample_dataset(small_world, 20, 9)
    assert a.videos.tobytes() == b.videos.tobytes()
    assert not np.array_equal(a.videos, sample_dataset(small_world, 20, 10).videos)


def test_records_depend_only_on_their_index(small_world):
    # records are generated by index, so a larger draw extends a smaller one
    small, big = sample_dataset(small_world, 5, 3), sample_dataset(small_world, 8, 3)
    np.testing.assert_array_equal(small.videos[:5], big.videos[:5])
    rec = sample_record(small_world, 1, 4, 3).astype(np.float32)
    np.testing.assert_array_equal(big.videos[8 + 4].reshape(-1), rec)


@pytest.mark.slow
def test_dataset_class_means():
    world = build_world(random_world(0, frames=4, dim=2))
    d = sample_dataset(world, 100_000, 0)
    for c in range(2):
        mean = world.classes[c].mean()
        emp = d.flat()[d.labels == c].mean(0)
        assert np.linalg.norm(emp - mean) / np.linalg.norm(mean) < 0.01
