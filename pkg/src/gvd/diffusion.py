"""Diffusion schedule, forward process and noise predictors.

Latent videos are plain ``(F, D)`` float arrays; every function here also
accepts a leading batch axis ``(..., F, D)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConfigError, DimensionError, NumericalError, PreconditionError, TrainingError
from .world import GaussianWorld

log = logging.getLogger(__name__)

JITTER = 1e-9


@dataclass(frozen=True)
class DiffusionSchedule:
    """Cumulative signal fractions ``alpha_bar[t]`` for t = 0..T."""

    T: int
    alpha_bar: np.ndarray

    def __post_init__(self):
        ab = self.alpha_bar
        if ab.shape != (self.T + 1,):
            raise ConfigError(f"alpha_bar must have length T+1={self.T + 1}", "alpha_bar")
        if ab[0] != 1.0 or not np.all(np.isfinite(ab)) or ab[-1] <= 0:
            raise ConfigError("alpha_bar must start at 1 and stay positive", "alpha_bar")
        if np.any(np.diff(ab) >= 0):
            raise ConfigError("alpha_bar must be strictly decreasing", "alpha_bar")

    def check_t(self, t: int, lo: int = 0) -> None:
        if not lo <= t <= self.T:
            raise PreconditionError(f"timestep {t} outside [{lo}, {self.T}]")


def build_schedule(T: int, beta_min: float, beta_max: float) -> DiffusionSchedule:
    """Linear-beta schedule, ``alpha_bar[t] = prod_{s<=t} (1 - beta_s)``."""
    if not isinstance(T, (int, np.integer)) or T < 1:
        raise ConfigError("must be an integer >= 1", "T")
    if not 0 < beta_min < 1:
        raise ConfigError("must lie in (0, 1)", "beta_min")
    if not beta_min <= beta_max < 1:
        raise ConfigError("must lie in [beta_min, 1)", "beta_max")
    betas = np.linspace(beta_min, beta_max, T) if T > 1 else np.array([beta_min])
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return DiffusionSchedule(int(T), alpha_bar)


def forward_diffuse(x0: np.ndarray, t: int, noise: np.ndarray, s: DiffusionSchedule) -> np.ndarray:
    s.check_t(t)
    if np.shape(x0) != np.shape(noise):
        raise DimensionError(f"x0 {np.shape(x0)} and noise {np.shape(noise)} differ")
    ab = s.alpha_bar[t]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise


def predict_x0(z_t: np.ndarray, eps: np.ndarray, t: int, s: DiffusionSchedule) -> np.ndarray:
    """Invert the forward map given a noise estimate."""
    if t == 0:
        raise PreconditionError("predict_x0 needs t >= 1")
    s.check_t(t, lo=1)
    if np.shape(z_t) != np.shape(eps):
        raise DimensionError(f"latent {np.shape(z_t)} and noise {np.shape(eps)} differ")
    ab = s.alpha_bar[t]
    return (z_t - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)


# ---------------------------------------------------------------------------
# closed-form denoiser


@dataclass
class _StepFactors:
    chol: list  # cho_factor tuples per mode
    half_logdet: np.ndarray  # (M,)


class OracleDenoiser:
    """Exact noise prediction for a Gaussian-mixture data distribution.

    For class ``c`` with modes ``N(mu_i, S_i)`` the noisy latent has marginal
    ``N(sqrt(ab) mu_i, ab S_i + (1 - ab) I)`` per mode.  The posterior mean of
    x0 is the responsibility-weighted average of the per-mode Gaussian
    conditionals, and the returned noise is the one consistent with it.
    Factorizations are cached per (class, t).
    """

    kind = "oracle"

    def __init__(self, world: GaussianWorld, schedule: DiffusionSchedule):
        self.world = world
        self.schedule = schedule
        self._cache: dict[tuple[int, int], _StepFactors] = {}

    def _factors(self, c: int, t: int) -> _StepFactors:
        key = (c, t)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        mix = self.world.classes[c]
        ab = self.schedule.alpha_bar[t]
        n = self.world.flat_dim
        chols, half_logdet = [], np.empty(mix.n_modes)
        for i, S in enumerate(mix.covs):
            C = ab * S + (1.0 - ab) * np.eye(n)
            try:
                cf = scipy.linalg.cho_factor(C, lower=True)
            except np.linalg.LinAlgError:
                log.warning("cholesky failed for class %d mode %d at t=%d; adding jitter %g", c, i, t, JITTER)
                try:
                    cf = scipy.linalg.cho_factor(C + JITTER * np.eye(n), lower=True)
                except np.linalg.LinAlgError as exc:
                    raise NumericalError(f"singular covariance system for class {c} mode {i} at t={t}") from exc
            chols.append(cf)
            half_logdet[i] = np.sum(np.log(np.diag(cf[0])))
        f = _StepFactors(chols, half_logdet)
        self._cache[key] = f
        return f

    def _check(self, c: int, t: int, shape) -> None:
        if not 0 <= c < self.world.n_classes:
            raise PreconditionError(f"class {c} not in world with {self.world.n_classes} classes")
        self.schedule.check_t(t, lo=1)
        if self.schedule.alpha_bar[t] >= 1.0:
            raise PreconditionError("alpha_bar[t] = 1 leaves the noise undefined")
        if tuple(shape[-2:]) != (self.world.frames, self.world.dim):
            raise DimensionError(f"latent shape {tuple(shape)} does not match world ({self.world.frames}, {self.world.dim})")

    def posterior(self, z_t: np.ndarray, c: int, t: int) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean of x0 and mode responsibilities, both flattened."""
        self._check(c, t, np.shape(z_t))
        lead = np.shape(z_t)[:-2]
        z = np.asarray(z_t, dtype=np.float64).reshape(-1, self.world.flat_dim)
        mix = self.world.classes[c]
        ab = self.schedule.alpha_bar[t]
        sab = np.sqrt(ab)
        fac = self._factors(c, t)

        logr = np.empty((len(z), mix.n_modes))
        cond = np.empty((mix.n_modes,) + z.shape)
        for i in range(mix.n_modes):
            r = z - sab * mix.means[i]
            sol = scipy.linalg.cho_solve(fac.chol[i], r.T).T  # C^-1 r
            logr[:, i] = np.log(mix.weights[i]) - 0.5 * np.einsum("ij,ij->i", r, sol) - fac.half_logdet[i]
            cond[i] = mix.means[i] + sab * sol @ mix.covs[i]  # S symmetric
        logr -= logr.max(axis=1, keepdims=True)
        resp = np.exp(logr)
        resp /= resp.sum(axis=1, keepdims=True)
        mean = np.einsum("ni,inj->nj", resp, cond)
        return mean.reshape(lead + (-1,)), resp.reshape(lead + (mix.n_modes,))

    def __call__(self, z_t: np.ndarray, c: int, t: int) -> np.ndarray:
        mean, _ = self.posterior(z_t, c, t)
        ab = self.schedule.alpha_bar[t]
        x0 = mean.reshape(np.shape(z_t))
        return (z_t - np.sqrt(ab) * x0) / np.sqrt(1.0 - ab)


def oracle_denoise(world: GaussianWorld, c: int, z_t: np.ndarray, t: int, s: DiffusionSchedule) -> np.ndarray:
    return OracleDenoiser(world, s)(z_t, c, t)


# ---------------------------------------------------------------------------
# trainable denoiser


@dataclass
class MLPParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> MLPParams:
        return MLPParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])

    def assign(self, flat: np.ndarray) -> None:
        pos = 0
        for arr in (a for pair in zip(self.weights, self.biases) for a in pair):
            arr[...] = flat[pos : pos + arr.size].reshape(arr.shape)
            pos += arr.size

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


def init_mlp(sizes: list[int], rng: np.random.Generator) -> MLPParams:
    ws = [rng.standard_normal((a, b)) / np.sqrt(a) for a, b in zip(sizes[:-1], sizes[1:])]
    bs = [np.zeros(b) for b in sizes[1:]]
    return MLPParams(ws, bs)


def mlp_forward(p: MLPParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Tanh hidden layers, linear output.  Returns output and layer inputs."""
    acts = [x]
    h = x
    for k, (w, b) in enumerate(zip(p.weights, p.biases)):
        h = h @ w + b
        if k < len(p.weights) - 1:
            h = np.tanh(h)
        acts.append(h)
    return h, acts


def mlp_backward(p: MLPParams, acts: list[np.ndarray], grad_out: np.ndarray) -> MLPParams:
    gw, gb = [None] * len(p.weights), [None] * len(p.biases)
    g = grad_out
    for k in range(len(p.weights) - 1, -1, -1):
        gw[k] = acts[k].T @ g
        gb[k] = g.sum(axis=0)
        if k:
            g = (g @ p.weights[k].T) * (1.0 - acts[k] ** 2)
    return MLPParams(gw, gb)


@dataclass
class DenoiserTrainConfig:
    hidden: int = 64
    depth: int = 2
    lr: float = 1e-3
    momentum: float = 0.9
    epochs: int = 50
    batch_size: int = 128
    checkpoint_every: int = 0  # epochs; 0 disables
    seed: int = 0


class MLPDenoiser:
    """Class-conditioned MLP noise predictor with a Gaussian skip.

    The prediction is ``base + net`` where ``base`` is the exact noise
    prediction for an isotropic Gaussian fit ``N(mu, var I)`` of the
    training latents, so the MLP only learns the residual.  Without the skip
    an under-scaled prediction at high t inflates the latent at every DDIM
    step.  Input features are the preconditioned latent
    ``(z - sqrt(ab) mu) / sqrt(ab var + 1 - ab)``, a one-hot class code and
    the pair (sqrt(ab_t), sqrt(1 - ab_t)).
    """

    kind = "trainable"

    def __init__(
        self, params: MLPParams, frames: int, dim: int, n_classes: int, schedule: DiffusionSchedule,
        mu: np.ndarray | None = None, var: float = 1.0,
    ):
        self.params = params
        self.frames, self.dim, self.n_classes = frames, dim, n_classes
        self.schedule = schedule
        self.mu = np.zeros(frames * dim) if mu is None else np.asarray(mu, dtype=np.float64)
        self.var = float(var)

    def _precondition(self, z_flat: np.ndarray, ts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ab = self.schedule.alpha_bar[ts][:, None]
        c_in = 1.0 / np.sqrt(ab * self.var + 1.0 - ab)
        zc = (z_flat - np.sqrt(ab) * self.mu) * c_in
        return zc, np.sqrt(1.0 - ab) * c_in * zc

    def features(self, z_flat: np.ndarray, classes: np.ndarray, ts: np.ndarray) -> np.ndarray:
        ab = self.schedule.alpha_bar[ts]
        onehot = np.eye(self.n_classes)[classes]
        zc, _ = self._precondition(z_flat, ts)
        return np.concatenate([zc, onehot, np.sqrt(ab)[:, None], np.sqrt(1 - ab)[:, None]], axis=1)

    def _predict(self, z_flat, classes, ts):
        out, acts = mlp_forward(self.params, self.features(z_flat, classes, ts))
        _, base = self._precondition(z_flat, ts)
        return base + out, acts

    def __call__(self, z_t: np.ndarray, c: int, t: int) -> np.ndarray:
        if not 0 <= c < self.n_classes:
            raise PreconditionError(f"class {c} not known to the denoiser")
        self.schedule.check_t(t, lo=1)
        shape = np.shape(z_t)
        z = np.asarray(z_t, dtype=np.float64).reshape(-1, self.frames * self.dim)
        n = len(z)
        out, _ = self._predict(z, np.full(n, c), np.full(n, t))
        return out.reshape(shape)

    def loss_and_grad(self, z_flat, classes, ts, eps_true) -> tuple[float, MLPParams]:
        """Mean over the batch of ||eps_true - eps_pred||^2 and its gradient."""
        pred, acts = self._predict(z_flat, classes, ts)
        resid = pred - eps_true
        n = len(resid)
        loss = float(np.sum(resid**2) / n)
        return loss, mlp_backward(self.params, acts, 2.0 * resid / n)


@dataclass
class DenoiserTrainResult:
    denoiser: MLPDenoiser
    losses: list[float] = field(default_factory=list)
    checkpoints: list[MLPParams] = field(default_factory=list)


def train_denoiser(train, s: DiffusionSchedule, cfg: DenoiserTrainConfig) -> DenoiserTrainResult:
    """Fit an :class:`MLPDenoiser` on noise matching with momentum SGD."""
    if len(train) == 0:
        raise ConfigError("training set is empty", "train")
    rng = np.random.default_rng(cfg.seed)
    x = train.flat()
    labels = train.labels
    n_in = x.shape[1] + train.n_classes + 2
    sizes = [n_in] + [cfg.hidden] * cfg.depth + [x.shape[1]]
    params = init_mlp(sizes, rng)
    params.weights[-1][...] = 0.0  # start from the Gaussian skip alone
    den = MLPDenoiser(params, train.frames, train.dim, train.n_classes, s, x.mean(axis=0), float(x.var(axis=0).mean()))
    result = DenoiserTrainResult(den)
    velocity = np.zeros(den.params.n_params)
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(x))
        for start in range(0, len(x), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            ts = rng.integers(1, s.T + 1, size=len(idx))
            noise = rng.standard_normal((len(idx), x.shape[1]))
            ab = s.alpha_bar[ts][:, None]
            z = np.sqrt(ab) * x[idx] + np.sqrt(1 - ab) * noise
            loss, grad = den.loss_and_grad(z, labels[idx], ts, noise)
            if not np.isfinite(loss):
                raise TrainingError("denoiser loss became non-finite", step)
            velocity = cfg.momentum * velocity - cfg.lr * grad.flatten()
            den.params.assign(den.params.flatten() + velocity)
            result.losses.append(loss)
            step += 1
        if cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            result.checkpoints.append(den.params.copy())
    return result

