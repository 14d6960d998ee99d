"""Multi-video instance composition.

A distilled video is stitched from ``U`` generated instances of one class.
With pattern ``(n_1, ..., n_U)`` video ``j`` contributes ``n_j`` frames:

* ``continuous``: its frames at global positions ``[o_j, o_j + n_j)`` with
  ``o_j = n_1 + ... + n_{j-1}`` (each source supplies its own time segment);
* ``random``: ``n_j`` distinct frame indices drawn uniformly, kept in
  ascending order.

Contributions are concatenated in group order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import VideoDataset
from .errors import ConfigError, DimensionError
from .seeding import rng_for

STRATEGIES = ("continuous", "random")


@dataclass
class CompositionPlan:
    pattern: tuple[int, ...] = (4, 4, 4, 4)
    strategy: str = "random"
    seed: int = 0

    def __post_init__(self):
        self.pattern = tuple(int(n) for n in self.pattern)

    @property
    def U(self) -> int:
        return len(self.pattern)

    def validate(self, frames: int | None = None) -> None:
        if not self.pattern or min(self.pattern) < 1:
            raise ConfigError("entries must be >= 1", "pattern")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"must be one of {STRATEGIES}", "strategy")
        if frames is not None and sum(self.pattern) != frames:
            raise ConfigError(f"pattern sums to {sum(self.pattern)}, videos have {frames} frames", "pattern")


def frame_selection(plan: CompositionPlan, frames: int, rng: np.random.Generator | None = None) -> list[np.ndarray]:
    """Source frame indices taken from each group member."""
    plan.validate(frames)
    picks, offset = [], 0
    for n in plan.pattern:
        if plan.strategy == "continuous":
            picks.append(np.arange(offset, offset + n))
        else:
            picks.append(np.sort(rng.choice(frames, size=n, replace=False)))
        offset += n
    return picks


def mvic_compose(
    group: list[np.ndarray], plan: CompositionPlan, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Compose one video; returns it and the per-source frame indices."""
    if len(group) != plan.U:
        raise ConfigError(f"group has {len(group)} videos, pattern expects {plan.U}", "pattern")
    shapes = {np.shape(v) for v in group}
    if len(shapes) != 1:
        raise DimensionError(f"group videos differ in shape: {sorted(shapes)}")
    frames = np.shape(group[0])[0]
    if rng is None:
        rng = np.random.default_rng(plan.seed)
    picks = frame_selection(plan, frames, rng)
    video = np.concatenate([np.asarray(v)[idx] for v, idx in zip(group, picks)], axis=0)
    return video, picks


@dataclass
class Composition:
    dataset: VideoDataset
    provenance: list[dict] = field(default_factory=list)

    def provenance_json(self) -> str:
        return json.dumps(self.provenance, indent=1)


def compose_dataset(raw: VideoDataset, plan: CompositionPlan, seed: int | None = None) -> Composition:
    """Randomly partition each class's instances into groups of ``U`` and compose each group.

    ``raw`` records keep their index as source id in the provenance map.
    """
    seed = plan.seed if seed is None else seed
    plan.validate(raw.frames)
    labels, videos, prov = [], [], []
    for c in range(raw.n_classes):
        idx = np.flatnonzero(raw.labels == c)
        if len(idx) % plan.U:
            raise ConfigError(f"class {c} has {len(idx)} instances, not divisible by U={plan.U}", "pattern")
        order = idx[rng_for(seed, "mvic-group", c).permutation(len(idx))]
        for g in range(len(idx) // plan.U):
            members = order[g * plan.U : (g + 1) * plan.U]
            rng = rng_for(seed, "mvic-frames", c, g)
            video, picks = mvic_compose([raw.videos[i] for i in members], plan, rng)
            prov.append(
                {
                    "composed_id": len(videos),
                    "class_id": c,
                    "sources": [int(i) for i in members],
                    "frames": [[int(f) for f in p] for p in picks],
                }
            )
            labels.append(c)
            videos.append(video)
    d = VideoDataset(np.array(labels, dtype=np.int64), np.array(videos).reshape(len(videos), raw.frames, raw.dim), raw.n_classes)
    return Composition(d, prov)


def parse_pattern(text) -> tuple[int, ...]:
    """Accept ``[4,4,4,4]``, ``"4,4,4,4"``, ``"(2x8)"`` or ``"16"``."""
    if isinstance(text, (list, tuple)):
        return tuple(int(n) for n in text)
    s = str(text).strip().strip("()[] ")
    if "x" in s or "×" in s:
        n, reps = s.replace("×", "x").split("x")
        return (int(n),) * int(reps)
    return tuple(int(p) for p in s.split(",") if p.strip())
