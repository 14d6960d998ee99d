"""Command line front end.

Every subcommand reads an optional JSON config and works inside one output
directory, so a full run is::

    gvd synth   --out run
    gvd distill --out run --method gvd
    gvd eval    --out run --method gvd
    gvd metrics --out run

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
Errors are also printed to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import classifier as clf
from . import pipeline as P
from . import plotting
from .clustering import ClusterCenters
from .compose import CompositionPlan, compose_dataset, parse_pattern
from .config import ExperimentConfig, load_config
from .dataset import VideoDataset, load_dataset, save_dataset
from .errors import ConfigError, DimensionError, GVDError, NumericalError
from .metrics import codebook, coverage_metric, entropy_metric, mpd_metric, MetricReport
from .sampler import METHODS, write_trace_csv
from .seeding import derive_seed

log = logging.getLogger("gvd")

SWEEP_LAMBDAS = [0.01, 0.05, 0.1, 0.2, 0.5]


class Stage:
    """Shared state for one command: config, output dir and cached artefacts."""

    def __init__(self, cfg: ExperimentConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self._world = None
        self._teacher = None

    def path(self, name: str) -> Path:
        return self.out / name

    def load(self, name: str, what: str) -> VideoDataset:
        p = self.path(name)
        if not p.exists():
            raise ConfigError(f"missing input {p} (run the stage that writes it first)", what)
        return load_dataset(p)

    @property
    def world(self):
        if self._world is None:
            from .world import build_world

            self._world = build_world(P.world_spec(self.cfg))
        return self._world

    def train(self) -> VideoDataset:
        d = self.load("train.gvds", "train")
        if (d.frames, d.dim) != (self.world.frames, self.world.dim):
            raise DimensionError(
                f"train file has F={d.frames}, D={d.dim} but the world has F={self.world.frames}, D={self.world.dim}"
            )
        return d

    def test(self) -> VideoDataset:
        return self.load("test.gvds", "test")

    def teacher(self) -> clf.ClassifierParams:
        if self._teacher is None:
            self._teacher = P.train_teacher(self.cfg, self.train()).params
        return self._teacher


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def write_csv(path: Path, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


# -- subcommands ---------------------------------------------------------


def cmd_synth(st: Stage, args) -> dict:
    world, train, test = P.synth(st.cfg)
    save_dataset(train, st.path("train.gvds"))
    save_dataset(test, st.path("test.gvds"))
    spec = P.world_spec(st.cfg)
    write_json(st.path("world.json"), {"spec": json.loads(spec.to_json()), "moments": world.moments_dict()})
    return {"train_records": len(train), "test_records": len(test), "frames": world.frames, "dim": world.dim}


def cmd_cluster(st: Stage, args) -> dict:
    train = st.train()
    centers = P.prototypes(st.cfg, train)
    save_dataset(centers.as_dataset(), st.path("centers.gvds"))
    rows = []
    flat = train.flat()
    for c, m in enumerate(centers.centers):
        x = flat[train.labels == c]
        d2 = ((x[:, None, :] - m[None]) ** 2).sum(-1)
        sizes = np.bincount(d2.argmin(1), minlength=len(m))
        for k in range(len(m)):
            rows.append({"class_id": c, "center": k, "size": int(sizes[k])})
    write_csv(st.path("centers.csv"), rows, ["class_id", "center", "size"])
    summary = {"K": centers.K, "variant": centers.variant, "classes": len(centers.centers)}
    write_json(st.path("centers.json"), summary)
    return summary


def _method(args, cfg) -> str:
    m = args.method or cfg.method
    if m not in METHODS:
        raise ConfigError(f"must be one of {METHODS}", "method")
    return m


def _trace_rows(traces) -> list[dict]:
    rows = []
    for inst, cls, tr in traces:
        if tr is None:
            continue
        for t, gn, d in zip(tr.t, tr.g_norm, tr.x0_dist):
            rows.append({"instance_id": inst, "class_id": cls, "step_t": t, "g_norm": gn, "x0_dist": d})
    return rows


def _finish_composition(st: Stage, method: str, raw: VideoDataset, plan: CompositionPlan) -> tuple[VideoDataset, dict]:
    comp = compose_dataset(raw, plan, derive_seed(st.cfg.master_seed, "compose"))
    d = comp.dataset
    if st.cfg.soft_labels is not None:
        d = P.with_soft_labels(d, st.teacher(), st.cfg.soft_labels.temperature)
    save_dataset(d, st.path(f"distilled_{method}.gvds"))
    st.path(f"provenance_{method}.json").write_text(comp.provenance_json() + "\n")
    return d, {"composed_records": len(d), "U": plan.U, "pattern": list(plan.pattern), "strategy": plan.strategy}


def cmd_distill(st: Stage, args) -> dict:
    cfg = st.cfg
    method = _method(args, cfg)
    train = st.train()
    s = P.schedule(cfg)
    den = P.make_denoiser(cfg, st.world, s, train)
    raw, centers, traces = P.generate_raw(cfg, den, s, train, method)
    save_dataset(raw, st.path(f"raw_{method}.gvds"))
    write_trace_csv(st.path(f"traces_{method}.csv"), traces)
    plotting.trace_figure(_trace_rows(traces), st.path(f"traces_{method}.png"))
    d, info = _finish_composition(st, method, raw, cfg.composition)
    info.update(
        method=method,
        raw_records=len(raw),
        ipc=cfg.ipc,
        K=cfg.K,
        representativeness=clf.representativeness(st.teacher(), d),
    )
    write_json(st.path(f"distill_{method}.json"), info)
    return info


def cmd_compose(st: Stage, args) -> dict:
    method = _method(args, st.cfg)
    raw = st.load(f"raw_{method}.gvds", "raw")
    _, info = _finish_composition(st, method, raw, st.cfg.composition)
    info["method"] = method
    return info


def _eval_report(st: Stage, d: VideoDataset, test: VideoDataset, name: str) -> dict:
    soft = st.cfg.soft_labels is not None and d.soft_labels is not None
    rep = P.evaluate_students(st.cfg, d, test, soft=soft)
    out = rep.to_dict()
    out.update(name=name, soft_labels=soft, train_records=len(d))
    rows = [{"run": r, "accuracy": a, **(t[-1] if t else {})} for r, (a, t) in enumerate(zip(rep.accuracies, rep.traces))]
    write_csv(st.path(f"eval_{name}.csv"), rows, ["run", "accuracy", "epoch", "loss", "train_acc"])
    write_json(st.path(f"eval_{name}.json"), out)
    plotting.accuracy_figure(rep.accuracies, st.path(f"eval_{name}.png"), name)
    return out


def cmd_eval(st: Stage, args) -> dict:
    test = st.test()
    if args.full:
        return _eval_report(st, st.train(), test, "full")
    method = _method(args, st.cfg)
    return _eval_report(st, st.load(f"distilled_{method}.gvds", "distilled"), test, method)


def degenerate_set(centers: ClusterCenters, ipc: int, frames: int, dim: int) -> VideoDataset:
    """The first prototype of each class repeated ``ipc`` times: the zero-diversity baseline."""
    labels = np.repeat(np.arange(len(centers.centers)), ipc)
    videos = np.concatenate([np.repeat(m[:1], ipc, axis=0) for m in centers.centers]).reshape(-1, frames, dim)
    return VideoDataset(labels, videos, len(centers.centers))


def metric_rows(cfg: ExperimentConfig, train: VideoDataset, sets: dict[str, VideoDataset], teacher) -> list[dict]:
    fmap = P.feature_map(cfg, teacher)
    orig = fmap(train.flat())
    cw = codebook(orig, cfg.metrics.bins, derive_seed(cfg.master_seed, "codebook"))
    rows = []
    for name, d in sets.items():
        feats = fmap(d.flat())
        r = MetricReport(
            entropy=entropy_metric(feats, orig, cfg.metrics.bins, codewords=cw),
            coverage=coverage_metric(orig, feats),
            mpd=mpd_metric(feats),
        )
        r.validate(cfg.metrics.bins)
        rows.append({"method": name, "records": len(d), **asdict(r)})
    return rows


def cmd_metrics(st: Stage, args) -> dict:
    cfg = st.cfg
    train = st.train()
    methods = args.methods or [m for m in METHODS if st.path(f"distilled_{m}.gvds").exists()]
    if not methods:
        raise ConfigError("no distilled_<method>.gvds files found; run distill first", "methods")
    sets = {m: st.load(f"distilled_{m}.gvds", "distilled") for m in methods}
    ipc = len(next(iter(sets.values()))) // train.n_classes
    sets["degenerate"] = degenerate_set(P.prototypes(cfg, train), ipc, train.frames, train.dim)
    rows = metric_rows(cfg, train, sets, st.teacher())
    for r in rows:
        r["accuracy"] = {"representativeness": clf.representativeness(st.teacher(), sets[r["method"]])}
    write_csv(st.path("metrics.csv"), rows, ["method", "records", "entropy", "coverage", "mpd"])
    write_json(st.path("metrics.json"), {"feature_space": cfg.metrics.feature_space, "bins": cfg.metrics.bins, "rows": rows})
    plotting.metrics_figure(rows, st.path("metrics.png"))
    return {"methods": [r["method"] for r in rows]}


def sweep_cells(grid: dict, cfg: ExperimentConfig) -> list[tuple[str, ExperimentConfig]]:
    """Cartesian product of the grid axes, in a fixed axis order."""
    lams = grid.get("lambda", SWEEP_LAMBDAS if not grid else [cfg.guidance.lam])
    stops = grid.get("t_stop", [cfg.guidance.t_stop])
    patterns = [parse_pattern(p) for p in grid.get("pattern", [cfg.composition.pattern])]
    strategies = grid.get("strategy", [cfg.composition.strategy])
    unknown = set(grid) - {"lambda", "t_stop", "pattern", "strategy"}
    if unknown:
        raise ConfigError(f"unknown sweep axes {sorted(unknown)}", "sweep")
    cells = []
    for lam in lams:
        for t_stop in stops:
            for pat in patterns:
                for strat in strategies:
                    c = replace(
                        cfg,
                        guidance=replace(cfg.guidance, lam=float(lam), t_stop=int(t_stop)),
                        composition=replace(cfg.composition, pattern=tuple(pat), strategy=strat),
                    )
                    c.validate()
                    name = f"lam={lam} t_stop={t_stop} pat={','.join(map(str, pat))} {strat}"
                    cells.append((name, c))
    return cells


def run_sweep_cell(cfg: ExperimentConfig, train, test, teacher, den, s) -> dict:
    dist = P.distill(cfg, den, s, train, "gvd")
    d = dist.dataset
    soft = cfg.soft_labels is not None
    if soft:
        d = P.with_soft_labels(d, teacher, cfg.soft_labels.temperature)
    rep = P.evaluate_students(cfg, d, test, soft=soft)
    return {"representativeness": clf.representativeness(teacher, d), "eval_mean": rep.mean, "eval_std": rep.std}


def cmd_sweep(st: Stage, args) -> dict:
    grid = {}
    if args.grid:
        try:
            grid = json.loads(Path(args.grid).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read grid ({exc})", "--grid") from exc
        if not isinstance(grid, dict):
            raise ConfigError("grid must be a JSON object of axis -> values", "--grid")
    cfg = st.cfg
    train, test = st.train(), st.test()
    s = P.schedule(cfg)
    den = P.make_denoiser(cfg, st.world, s, train)
    teacher = st.teacher()
    rows = []
    for name, c in sweep_cells(grid, cfg):
        log.info("sweep cell %s", name)
        res, err = P.run_cell(run_sweep_cell, c, train, test, teacher, den, s)
        row = {
            "cell": name,
            "lambda": c.guidance.lam,
            "t_stop": c.guidance.t_stop,
            "pattern": ",".join(map(str, c.composition.pattern)),
            "strategy": c.composition.strategy,
            "error": err or "",
        }
        row.update(res or {"representativeness": float("nan"), "eval_mean": float("nan"), "eval_std": float("nan")})
        rows.append(row)
    cols = ["cell", "lambda", "t_stop", "pattern", "strategy", "representativeness", "eval_mean", "eval_std", "error"]
    write_csv(st.path("sweep.csv"), rows, cols)
    write_json(st.path("sweep.json"), {"rows": rows})
    plotting.sweep_figure(rows, st.path("sweep.png"))
    return {"cells": len(rows), "failed": sum(1 for r in rows if r["error"])}


COMMANDS = {
    "synth": (cmd_synth, "sample the synthetic world into train/test files"),
    "cluster": (cmd_cluster, "k-means prototypes per class"),
    "distill": (cmd_distill, "cluster, sample and compose a distilled set"),
    "compose": (cmd_compose, "re-run composition on saved raw instances"),
    "eval": (cmd_eval, "train students on a distilled set and test them"),
    "metrics": (cmd_metrics, "entropy, coverage and MPD of distilled sets"),
    "sweep": (cmd_sweep, "grid over guidance and composition settings"),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gvd", description="Guided diffusion video distillation on a synthetic latent world.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--workers", type=int, help="parallel workers; outputs do not depend on it")
        p.add_argument("--log-level", default="WARNING")
        if name in ("distill", "compose", "eval"):
            p.add_argument("--method", choices=METHODS)
        if name == "eval":
            p.add_argument("--full", action="store_true", help="train on the full train file instead")
        if name == "metrics":
            p.add_argument("--methods", nargs="+", choices=METHODS)
        if name == "sweep":
            p.add_argument("--grid", help='JSON file, e.g. {"lambda": [0.01, 0.1, 0.5]}')
    return ap


def _resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.workers is not None:
        cfg.workers = args.workers
    cfg.validate()
    return cfg


def _fail(exc: BaseException, code: int, stage: str) -> int:
    payload = exc.to_dict() if isinstance(exc, GVDError) else {"error": type(exc).__name__, "message": str(exc)}
    payload["stage"] = stage
    payload["exit_code"] = code
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve(args)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        summary = COMMANDS[args.command][0](Stage(cfg, out), args)
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return _fail(exc, 3, args.command)
    except (GVDError, OSError) as exc:
        return _fail(exc, 2, args.command)
    print(json.dumps({"command": args.command, **summary}, sort_keys=True, default=_jsonable))
    return 0


if __name__ == "__main__":
    sys.exit(main())
