"""Synthetic latent-video world.

Each class is a mixture of linear-Gaussian temporal processes

    z_0 ~ N(init_mean, s^2 I),    z_{f+1} = A z_f + b + eta_f,  eta_f ~ N(0, q^2 I)

whose joint law over the F frames is Gaussian with closed-form moments.  The
flattened moments (frame-major, length F*D) are what the oracle denoiser and
the Monte-Carlo checks consume.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericalError
from .seeding import rng_for

MAX_SPECTRAL_RADIUS = 1.2


@dataclass
class ModeSpec:
    weight: float
    init_mean: list[float]
    init_cov_scale: float
    dynamics: list[list[float]]
    drift: list[float]
    process_noise_scale: float


@dataclass
class ClassSpec:
    modes: list[ModeSpec]


@dataclass
class WorldSpec:
    classes: list[ClassSpec]
    frames: int
    dim: int
    seed: int = 0

    def validate(self) -> None:
        if len(self.classes) < 2:
            raise ConfigError("need at least 2 classes", "classes")
        if self.frames < 2:
            raise ConfigError("need at least 2 frames", "frames")
        if self.dim < 1:
            raise ConfigError("latent dimension must be >= 1", "dim")
        for c, cls in enumerate(self.classes):
            if not cls.modes:
                raise ConfigError("class has no modes", f"classes[{c}].modes")
            weights = np.array([m.weight for m in cls.modes], dtype=float)
            if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-9:
                raise ConfigError("mode weights must be positive and sum to 1", f"classes[{c}].modes.weight")
            for i, m in enumerate(cls.modes):
                where = f"classes[{c}].modes[{i}]"
                A = np.asarray(m.dynamics, dtype=float)
                if A.shape != (self.dim, self.dim):
                    raise ConfigError(f"dynamics must be {self.dim}x{self.dim}", f"{where}.dynamics")
                if len(m.init_mean) != self.dim or len(m.drift) != self.dim:
                    raise ConfigError("init_mean and drift must have length dim", where)
                rho = max(abs(np.linalg.eigvals(A)))
                if rho > MAX_SPECTRAL_RADIUS:
                    raise ConfigError(
                        f"spectral radius {rho:.4g} exceeds {MAX_SPECTRAL_RADIUS}", f"{where}.dynamics"
                    )
                if m.init_cov_scale <= 0 or m.process_noise_scale <= 0:
                    raise ConfigError("noise scales must be > 0", where)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> WorldSpec:
        try:
            classes = [ClassSpec([ModeSpec(**m) for m in c["modes"]]) for c in d["classes"]]
            return cls(classes=classes, frames=int(d["frames"]), dim=int(d["dim"]), seed=int(d.get("seed", 0)))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed world spec ({exc})", "world") from exc

    @classmethod
    def load(cls, path: str | Path) -> WorldSpec:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class ClassMixture:
    """Flattened Gaussian mixture for one class."""

    weights: np.ndarray  # (M,)
    means: np.ndarray  # (M, n)
    covs: np.ndarray  # (M, n, n)
    _chol: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def n_modes(self) -> int:
        return len(self.weights)

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def cov(self) -> np.ndarray:
        mu = self.mean()
        diff = self.means - mu
        return np.einsum("m,mij->ij", self.weights, self.covs) + np.einsum("m,mi,mj->ij", self.weights, diff, diff)

    def chol(self, mode: int) -> np.ndarray:
        if not self._chol:
            self._chol = [_spd_cholesky(S, f"mode {i}") for i, S in enumerate(self.covs)]
        return self._chol[mode]


@dataclass
class GaussianWorld:
    frames: int
    dim: int
    classes: list[ClassMixture]

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def flat_dim(self) -> int:
        return self.frames * self.dim

    def draw(self, c: int, n: int, rng: np.random.Generator) -> np.ndarray:
        """Vectorised draws of ``n`` flattened samples from class ``c``."""
        mix = self.classes[c]
        modes = rng.choice(mix.n_modes, size=n, p=mix.weights)
        out = np.empty((n, self.flat_dim))
        for i in range(mix.n_modes):
            sel = modes == i
            k = int(sel.sum())
            if k:
                out[sel] = mix.means[i] + rng.standard_normal((k, self.flat_dim)) @ mix.chol(i).T
        return out

    def moments_dict(self) -> dict:
        return {
            "frames": self.frames,
            "dim": self.dim,
            "classes": [
                {
                    "weights": mix.weights.tolist(),
                    "means": mix.means.tolist(),
                    "covariances": mix.covs.tolist(),
                }
                for mix in self.classes
            ],
        }


def _spd_cholesky(S: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        pass
    try:
        return np.linalg.cholesky(S + 1e-9 * np.eye(len(S)))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"covariance of {what} is not positive definite") from exc


def mode_moments(m: ModeSpec, frames: int) -> tuple[np.ndarray, np.ndarray]:
    """Joint mean and covariance of one linear-Gaussian rollout, frame-major."""
    A = np.asarray(m.dynamics, dtype=float)
    b = np.asarray(m.drift, dtype=float)
    D = len(b)
    means = np.empty((frames, D))
    covs = np.empty((frames, D, D))
    means[0] = m.init_mean
    covs[0] = m.init_cov_scale**2 * np.eye(D)
    q2 = m.process_noise_scale**2
    for f in range(1, frames):
        means[f] = A @ means[f - 1] + b
        P = A @ covs[f - 1] @ A.T + q2 * np.eye(D)
        covs[f] = 0.5 * (P + P.T)  # exact symmetry despite rounding

    sigma = np.empty((frames * D, frames * D))
    for f in range(frames):
        block = covs[f]
        for g in range(f, frames):
            # Cov(z_g, z_f) = A^(g-f) P_f
            sigma[g * D : (g + 1) * D, f * D : (f + 1) * D] = block
            sigma[f * D : (f + 1) * D, g * D : (g + 1) * D] = block.T
            block = A @ block
    return means.reshape(-1), sigma


def build_world(spec: WorldSpec) -> GaussianWorld:
    spec.validate()
    classes = []
    for cls in spec.classes:
        moments = [mode_moments(m, spec.frames) for m in cls.modes]
        classes.append(
            ClassMixture(
                weights=np.array([m.weight for m in cls.modes], dtype=float),
                means=np.stack([mu for mu, _ in moments]),
                covs=np.stack([S for _, S in moments]),
            )
        )
    return GaussianWorld(spec.frames, spec.dim, classes)


def simulate_rollouts(m: ModeSpec, frames: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Direct simulation of the recursion; independent of :func:`mode_moments`."""
    A = np.asarray(m.dynamics, dtype=float)
    b = np.asarray(m.drift, dtype=float)
    D = len(b)
    z = np.asarray(m.init_mean) + m.init_cov_scale * rng.standard_normal((n, D))
    out = np.empty((n, frames, D))
    out[:, 0] = z
    for f in range(1, frames):
        z = z @ A.T + b + m.process_noise_scale * rng.standard_normal((n, D))
        out[:, f] = z
    return out.reshape(n, -1)


def _rotation(theta: float, D: int) -> np.ndarray:
    R = np.eye(D)
    for i in range(0, D - 1, 2):
        c, s = np.cos(theta), np.sin(theta)
        R[i : i + 2, i : i + 2] = [[c, -s], [s, c]]
    return R


def default_world_spec(
    seed: int = 0,
    n_classes: int = 5,
    n_modes: int = 2,
    frames: int = 16,
    dim: int = 4,
    class_spread: float = 3.0,
    mode_spread: float = 1.0,
    frame_std: float = 2.0,
    decay: float = 0.3,
) -> WorldSpec:
    """Random benchmark world of stationary modes.

    Each mode is a damped rotation around its own fixed point, started from
    the stationary distribution, so every frame has the marginal
    ``N(fixed_point, frame_std^2 I)``.  Class identity is visible in any
    single frame and temporal structure lives in the autocorrelation.
    """
    if not 0 <= decay < 1:
        raise ConfigError("must lie in [0, 1)", "decay")
    rng = rng_for(seed, "world-spec")
    q = frame_std * np.sqrt(1.0 - decay**2)
    classes = []
    for _ in range(n_classes):
        theta = rng.uniform(-0.6, 0.6)
        A = decay * _rotation(theta, dim)
        centre = class_spread * rng.standard_normal(dim)
        weights = rng.dirichlet(np.full(n_modes, 4.0))
        weights = weights / weights.sum()
        modes = []
        for w in weights:
            point = centre + mode_spread * rng.standard_normal(dim)
            modes.append(
                ModeSpec(
                    weight=float(w),
                    init_mean=point.tolist(),
                    init_cov_scale=frame_std,
                    dynamics=A.tolist(),
                    drift=((np.eye(dim) - A) @ point).tolist(),
                    process_noise_scale=float(q),
                )
            )
        classes.append(ClassSpec(modes))
    return WorldSpec(classes=classes, frames=frames, dim=dim, seed=seed)


def sample_record(world: GaussianWorld, c: int, index: int, seed: int) -> np.ndarray:
    """One flattened draw whose randomness depends only on (seed, c, index)."""
    rng = rng_for(seed, "sample", c, index)
    mix = world.classes[c]
    mode = int(rng.choice(mix.n_modes, p=mix.weights))
    return mix.means[mode] + mix.chol(mode) @ rng.standard_normal(world.flat_dim)


def sample_dataset(world: GaussianWorld, n_per_class: int, seed: int) -> "VideoDataset":
    """Class-major dataset of ``n_per_class`` videos per class."""
    from .dataset import VideoDataset

    if n_per_class < 1:
        raise ConfigError("must be >= 1", "n_per_class")
    C = world.n_classes
    flat = np.empty((C * n_per_class, world.flat_dim))
    for c in range(C):
        for i in range(n_per_class):
            flat[c * n_per_class + i] = sample_record(world, c, i, seed)
    labels = np.repeat(np.arange(C), n_per_class)
    return VideoDataset(labels, flat.reshape(-1, world.frames, world.dim), C)
