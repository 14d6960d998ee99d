"""Pipeline stages shared by the CLI, the sweeps and the acceptance suite."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import classifier as clf
from .clustering import ClusterCenters, ClusteringConfig, cluster_dataset
from .compose import Composition, CompositionPlan, compose_dataset
from .config import ExperimentConfig
from .dataset import VideoDataset
from .diffusion import DiffusionSchedule, MLPDenoiser, OracleDenoiser, build_schedule, train_denoiser
from .errors import GVDError
from .sampler import SampleTrace, distill_class
from .seeding import derive_seed
from .world import GaussianWorld, WorldSpec, build_world, default_world_spec, sample_dataset

log = logging.getLogger(__name__)


def world_spec(cfg: ExperimentConfig) -> WorldSpec:
    w = cfg.world
    if w.spec_path:
        return WorldSpec.load(w.spec_path)
    return default_world_spec(
        w.seed, n_classes=w.n_classes, n_modes=w.n_modes, frames=w.frames, dim=w.dim,
        class_spread=w.class_spread, mode_spread=w.mode_spread, frame_std=w.frame_std, decay=w.decay,
    )


def schedule(cfg: ExperimentConfig) -> DiffusionSchedule:
    s = cfg.schedule
    return build_schedule(s.T, s.beta_min, s.beta_max)


def synth(cfg: ExperimentConfig) -> tuple[GaussianWorld, VideoDataset, VideoDataset]:
    world = build_world(world_spec(cfg))
    train = sample_dataset(world, cfg.world.n_train, derive_seed(cfg.master_seed, "synth-train"))
    test = sample_dataset(world, cfg.world.n_test, derive_seed(cfg.master_seed, "synth-test"))
    return world, train, test


def make_denoiser(cfg: ExperimentConfig, world: GaussianWorld, s: DiffusionSchedule, train: VideoDataset):
    if cfg.denoiser.kind == "oracle":
        den = OracleDenoiser(world, s)
    else:
        tcfg = replace(cfg.denoiser.train, seed=derive_seed(cfg.master_seed, "denoiser-train"))
        den = train_denoiser(train, s, tcfg).denoiser
    den.frames, den.dim = world.frames, world.dim
    return den


def prototypes(cfg: ExperimentConfig, train: VideoDataset, variant: str | None = None, K: int | None = None) -> ClusterCenters:
    ccfg = replace(
        cfg.clustering,
        K=K if K is not None else cfg.K,
        variant=variant or cfg.clustering.variant,
        seed=derive_seed(cfg.master_seed, "cluster"),
        workers=cfg.workers,
    )
    return cluster_dataset(train, ccfg)


@dataclass
class Distillation:
    raw: VideoDataset
    composed: Composition
    centers: ClusterCenters | None
    traces: list[tuple[int, int, SampleTrace | None]] = field(default_factory=list)

    @property
    def dataset(self) -> VideoDataset:
        return self.composed.dataset


def generate_raw(
    cfg: ExperimentConfig, denoiser, s: DiffusionSchedule, train: VideoDataset, method: str | None = None,
    centers: ClusterCenters | None = None,
) -> tuple[VideoDataset, ClusterCenters | None, list]:
    """``K = ipc * U`` raw instances per class, class-major."""
    method = method or cfg.method
    shape = (train.frames, train.dim)
    if centers is None and method != "naive":
        variant = cfg.knoise_variant if method == "knoise" else None
        centers = prototypes(cfg, train, variant)
    labels, videos, traces = [], [], []
    for c in range(train.n_classes):
        protos = centers.centers[c] if method != "naive" else np.zeros((cfg.K, shape[0] * shape[1]))
        outs, trs = distill_class(
            denoiser, c, protos, cfg.guidance, s, derive_seed(cfg.master_seed, "distill"), shape,
            method=method, knoise_t=cfg.knoise_t_start, workers=cfg.workers,
        )
        for k, (v, tr) in enumerate(zip(outs, trs)):
            traces.append((len(videos), c, tr))
            labels.append(c)
            videos.append(v)
    raw = VideoDataset(np.array(labels), np.array(videos), train.n_classes)
    return raw, centers, traces


def distill(
    cfg: ExperimentConfig, denoiser, s: DiffusionSchedule, train: VideoDataset, method: str | None = None,
    plan: CompositionPlan | None = None, centers: ClusterCenters | None = None,
) -> Distillation:
    raw, centers, traces = generate_raw(cfg, denoiser, s, train, method, centers)
    plan = plan or cfg.composition
    composed = compose_dataset(raw, plan, derive_seed(cfg.master_seed, "compose"))
    return Distillation(raw, composed, centers, traces)


def train_teacher(cfg: ExperimentConfig, train: VideoDataset, test: VideoDataset | None = None) -> clf.TrainResult:
    return clf.train_classifier(train, cfg.teacher, None, derive_seed(cfg.master_seed, "teacher"), test)


def with_soft_labels(d: VideoDataset, teacher: clf.ClassifierParams, temperature: float) -> VideoDataset:
    soft = clf.teacher_soft_labels(teacher, d, temperature)
    return VideoDataset(d.labels, d.videos, d.n_classes, soft)


@dataclass
class EvalReport:
    accuracies: list[float]
    traces: list[list[dict]]

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies))

    def to_dict(self) -> dict:
        return {"runs": len(self.accuracies), "accuracies": self.accuracies, "mean": self.mean, "std": self.std}


def evaluate_students(cfg: ExperimentConfig, distilled: VideoDataset, test: VideoDataset, soft: bool | None = None) -> EvalReport:
    """Train ``eval_runs`` students with independent seeds and score them on ``test``."""
    softcfg = cfg.soft_labels if soft is None or soft else None
    accs, traces = [], []
    for r in range(cfg.eval_runs):
        res = clf.train_classifier(distilled, cfg.train, softcfg, derive_seed(cfg.master_seed, "student", 0, r), test)
        accs.append(clf.evaluate(res.params, test))
        traces.append(res.trace)
    return EvalReport(accs, traces)


def feature_map(cfg: ExperimentConfig, teacher: clf.ClassifierParams | None):
    if cfg.metrics.feature_space == "hidden":
        return lambda x: clf.features(teacher, x)
    return lambda x: x


def run_cell(fn, *args, **kwargs):
    """Run one sweep cell; numerical and config failures become an error string."""
    try:
        return fn(*args, **kwargs), None
    except (GVDError, FloatingPointError, np.linalg.LinAlgError) as exc:
        log.warning("sweep cell failed: %s", exc)
        return None, f"{type(exc).__name__}: {exc}"
