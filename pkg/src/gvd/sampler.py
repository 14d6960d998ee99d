"""Prototype-guided DDIM sampling and the two unguided baselines.

One guided step at schedule time ``t`` (next time ``t_prev``):

    eps      = denoiser(Z_t, c, t)
    x0_hat   = (Z_t - sqrt(1 - ab_t) eps) / sqrt(ab_t)
    g        = m_k - x0_hat
    eps'_f   = eps_f - lambda_f sqrt(1 - ab_t) g_f      (guidance active)
    x0'      = (Z_t - sqrt(1 - ab_t) eps') / sqrt(ab_t)
    Z_prev   = sqrt(ab_prev) x0' + sqrt(1 - ab_prev) eps'

with ``lambda_f = lambda (1 - f/F)`` for zero-based frame ``f`` when frame
decay is on.  ``x0'`` equals ``x0_hat + lambda_f (1 - ab_t)/sqrt(ab_t) g``, a
step along ``g`` towards the prototype.  Setting ``x0_source="unguided"``
feeds ``x0_hat`` instead of ``x0'`` into the update; that variant only
changes the noise term and, in practice, pushes samples *away* from
the prototype, so it is kept for comparison only.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .diffusion import DiffusionSchedule, forward_diffuse
from .errors import ConfigError, DimensionError, GVDError, PreconditionError
from .seeding import derive_seed

Denoiser = Callable[[np.ndarray, int, int], np.ndarray]

PHASES = ("high_t", "low_t")


@dataclass
class GuidanceConfig:
    """Sampler settings.

    ``t_stop`` is in schedule units.  With ``guidance_phase="low_t"`` guidance
    is active while ``t < t_stop``; with ``"high_t"`` it is active while
    ``t > t_stop`` (guide first, then refine unguided).
    """

    lam: float = 0.1
    t_stop: int = 500
    frame_decay: bool = True
    sampler_steps: int = 50
    guidance_phase: str = "high_t"
    x0_source: str = "guided"

    def validate(self, T: int) -> None:
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ConfigError("must be finite and >= 0", "lambda")
        if not 0 <= self.t_stop <= T:
            raise ConfigError(f"must lie in [0, {T}]", "t_stop")
        if not 1 <= self.sampler_steps <= T:
            raise ConfigError(f"must lie in [1, {T}]", "sampler_steps")
        if self.guidance_phase not in PHASES:
            raise ConfigError(f"must be one of {PHASES}", "guidance_phase")
        if self.x0_source not in ("guided", "unguided"):
            raise ConfigError("must be 'guided' or 'unguided'", "x0_source")

    def active(self, t: int) -> bool:
        if self.guidance_phase == "low_t":
            return t < self.t_stop
        return t > self.t_stop


@dataclass
class SampleTrace:
    t: list[int] = field(default_factory=list)
    g_norm: list[float] = field(default_factory=list)
    lambdas: list[np.ndarray] = field(default_factory=list)
    x0_dist: list[float] = field(default_factory=list)

    def record(self, t: int, g: np.ndarray, lam_f: np.ndarray, x0_dist: float) -> None:
        self.t.append(int(t))
        self.g_norm.append(float(np.linalg.norm(g)))
        self.lambdas.append(lam_f)
        self.x0_dist.append(float(x0_dist))


def timesteps(T: int, steps: int) -> list[int]:
    """Uniformly strided descending times ``t_S = T > ... > t_1``; ``t_0 = 0`` is implicit."""
    ts = [int(round(i * T / steps)) for i in range(steps, 0, -1)]
    return sorted(set(ts), reverse=True)


def guidance_term(m_k: np.ndarray, x0_hat: np.ndarray) -> np.ndarray:
    x0_hat = np.asarray(x0_hat)
    m = np.asarray(m_k)
    if m.size != x0_hat.shape[-2] * x0_hat.shape[-1]:
        raise DimensionError(f"prototype of size {m.size} does not match latent {x0_hat.shape}")
    return m.reshape(x0_hat.shape[-2:]) - x0_hat


def frame_lambda(lam: float, f: int, F: int) -> float:
    if not 0 <= f < F:
        raise PreconditionError(f"frame {f} outside [0, {F})")
    return lam * (1.0 - f / F)


def frame_lambdas(cfg: GuidanceConfig, F: int) -> np.ndarray:
    if cfg.frame_decay:
        return np.array([frame_lambda(cfg.lam, f, F) for f in range(F)])
    return np.full(F, float(cfg.lam))


def guided_eps(eps: np.ndarray, g: np.ndarray, cfg: GuidanceConfig, t: int, s: DiffusionSchedule) -> np.ndarray:
    """Guided noise prediction; returns ``eps`` itself when guidance is inactive at ``t``."""
    if np.shape(eps) != np.shape(g):
        raise DimensionError(f"noise {np.shape(eps)} and guidance {np.shape(g)} differ")
    s.check_t(t, lo=1)
    if not cfg.active(t) or cfg.lam == 0:
        return eps
    lam_f = frame_lambdas(cfg, np.shape(eps)[-2])
    return eps - lam_f[:, None] * np.sqrt(1.0 - s.alpha_bar[t]) * g


def ddim_step(x0_hat: np.ndarray, eps_prime: np.ndarray, t: int, t_prev: int, s: DiffusionSchedule) -> np.ndarray:
    if not 0 <= t_prev < t <= s.T:
        raise PreconditionError(f"need 0 <= t_prev < t <= T, got t={t}, t_prev={t_prev}")
    ab = s.alpha_bar[t_prev]
    return np.sqrt(ab) * x0_hat + np.sqrt(1.0 - ab) * eps_prime


def _denoise(denoiser: Denoiser, z: np.ndarray, c: int, t: int) -> np.ndarray:
    try:
        return denoiser(z, c, t)
    except GVDError as exc:
        raise type(exc)(f"{exc} [while denoising class {c} at t={t}]") from exc


def run_ddim(
    denoiser: Denoiser,
    c: int,
    z: np.ndarray,
    s: DiffusionSchedule,
    cfg: GuidanceConfig,
    m_k: np.ndarray | None = None,
    t_start: int | None = None,
    trace: SampleTrace | None = None,
) -> np.ndarray:
    """Deterministic DDIM from ``z`` at ``t_start`` (default T) down to 0.

    ``z`` may carry a leading batch axis.  Guidance is applied only when a
    prototype is given and ``cfg.lam > 0``.
    """
    cfg.validate(s.T)
    ts = timesteps(s.T, cfg.sampler_steps)
    if t_start is not None:
        ts = [t for t in ts if t < t_start]
        ts = [t_start] + ts if t_start > 0 else []
    guided = m_k is not None and cfg.lam > 0
    lam_f = frame_lambdas(cfg, z.shape[-2])
    for i, t in enumerate(ts):
        t_prev = ts[i + 1] if i + 1 < len(ts) else 0
        ab = s.alpha_bar[t]
        eps = _denoise(denoiser, z, c, t)
        x0_hat = (z - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)
        if guided:
            g = guidance_term(m_k, x0_hat)
            eps_p = guided_eps(eps, g, cfg, t, s)
            if eps_p is not eps and cfg.x0_source == "guided":
                x0_hat = (z - np.sqrt(1.0 - ab) * eps_p) / np.sqrt(ab)
            if trace is not None:
                active = eps_p is not eps
                trace.record(t, g, lam_f if active else np.zeros_like(lam_f), np.linalg.norm(guidance_term(m_k, x0_hat)))
        else:
            eps_p = eps
            if trace is not None and m_k is not None:
                g = guidance_term(m_k, x0_hat)
                trace.record(t, g, np.zeros_like(lam_f), np.linalg.norm(g))
        z = ddim_step(x0_hat, eps_p, t, t_prev, s)
    return z


def initial_noise(seed: int, shape: tuple[int, int]) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(shape)


def _shape_of(m_k: np.ndarray, frames: int | None, dim: int | None) -> tuple[int, int]:
    m = np.asarray(m_k)
    if m.ndim == 2:
        return m.shape
    if frames is None or dim is None or frames * dim != m.size:
        raise DimensionError(f"cannot reshape prototype of size {m.size} to ({frames}, {dim})")
    return frames, dim


def sample_guided(
    denoiser: Denoiser,
    c: int,
    m_k: np.ndarray,
    cfg: GuidanceConfig,
    s: DiffusionSchedule,
    seed: int,
    frames: int | None = None,
    dim: int | None = None,
) -> tuple[np.ndarray, SampleTrace]:
    """One guided video ``(F, D)`` plus its per-step trace."""
    shape = _shape_of(m_k, frames or getattr(denoiser, "frames", None), dim or getattr(denoiser, "dim", None))
    trace = SampleTrace()
    z = run_ddim(denoiser, c, initial_noise(seed, shape), s, cfg, m_k=np.asarray(m_k).reshape(-1), trace=trace)
    return z, trace


def sample_naive(denoiser: Denoiser, c: int, cfg: GuidanceConfig, s: DiffusionSchedule, seed: int, shape: tuple[int, int]) -> np.ndarray:
    return run_ddim(denoiser, c, initial_noise(seed, shape), s, cfg)


def sample_knoise(
    denoiser: Denoiser,
    c: int,
    m_k: np.ndarray,
    t_start: int,
    cfg: GuidanceConfig,
    s: DiffusionSchedule,
    seed: int,
    shape: tuple[int, int],
) -> np.ndarray:
    """Noise the prototype to ``t_start`` and denoise it without guidance."""
    if not 0 <= t_start <= s.T:
        raise PreconditionError(f"t_start {t_start} outside [0, {s.T}]")
    m = np.asarray(m_k, dtype=np.float64).reshape(shape)
    if t_start == 0:
        return m.copy()
    z = forward_diffuse(m, t_start, initial_noise(seed, shape), s)
    return run_ddim(denoiser, c, z, s, cfg, t_start=t_start)


# ---------------------------------------------------------------------------
# per-class distillation


METHODS = ("gvd", "naive", "knoise")


@dataclass
class InstanceTask:
    method: str
    c: int
    k: int
    prototype: np.ndarray | None
    seed: int


def _run_task(args) -> tuple[np.ndarray, SampleTrace | None]:
    denoiser, task, cfg, s, shape, knoise_t = args
    if task.method == "gvd":
        return sample_guided(denoiser, task.c, task.prototype.reshape(shape), cfg, s, task.seed)
    if task.method == "knoise":
        return sample_knoise(denoiser, task.c, task.prototype, knoise_t, cfg, s, task.seed, shape), None
    return sample_naive(denoiser, task.c, cfg, s, task.seed, shape), None


def run_tasks(denoiser, tasks: list[InstanceTask], cfg, s, shape, knoise_t: int = 0, workers: int = 1):
    """Run sampling tasks; each task is computed alone so results do not depend on ``workers``."""
    jobs = [(denoiser, task, cfg, s, shape, knoise_t) for task in tasks]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_run_task, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [_run_task(j) for j in jobs]


def distill_class(
    denoiser: Denoiser,
    c: int,
    centers: np.ndarray,
    cfg: GuidanceConfig,
    s: DiffusionSchedule,
    seed: int,
    shape: tuple[int, int],
    method: str = "gvd",
    knoise_t: int | None = None,
    workers: int = 1,
) -> tuple[list[np.ndarray], list[SampleTrace | None]]:
    """One sample per prototype, in prototype order, each with its own derived seed."""
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}", "method")
    centers = np.asarray(centers, dtype=np.float64)
    if centers.ndim != 2 or centers.shape[1] != shape[0] * shape[1]:
        raise DimensionError(f"centers of shape {centers.shape} do not match video shape {shape}")
    tasks = [
        InstanceTask(method, c, k, centers[k], derive_seed(seed, "sample", c, k))
        for k in range(len(centers))
    ]
    out = run_tasks(denoiser, tasks, cfg, s, shape, knoise_t if knoise_t is not None else s.T, workers)
    return [v for v, _ in out], [tr for _, tr in out]


def write_trace_csv(path, rows: list[tuple[int, int, SampleTrace]]) -> None:
    """Rows of (instance_id, class_id, trace) flattened to one line per step."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["instance_id", "class_id", "step_t", "g_norm", "x0_dist"])
        for inst, cls, tr in rows:
            if tr is None:
                continue
            for t, gn, d in zip(tr.t, tr.g_norm, tr.x0_dist):
                w.writerow([inst, cls, t, repr(gn), repr(d)])
