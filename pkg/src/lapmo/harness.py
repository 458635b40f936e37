"""Training loop and the three-configuration loss ablation.

Each (mode, seed) cell trains a fresh network from the seed's initial
weights, so the modes differ only in the loss. Batches are shuffled from
``(seed, epoch)`` alone, which makes the sample order identical across modes
too. Test metrics are computed with frozen parameters on the held-out split.
"""
from __future__ import annotations

import csv
import io
import json
import math
import statistics
from contextlib import nullcontext
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .losses import LossConfig, LossMode
from .metrics import METRICS, MetricReport, aggregate_reports, evaluate_pair
from .motion import MotionSequence, MotionSequence2D
from .report import table_rows, to_csv, to_markdown
from .synth import Corpus, Projection, SynthConfig, load_corpus, make_corpus, project_2d
from .tcn import (
    AdamConfig,
    NetworkSpec,
    NetworkState,
    TrainingDiverged,
    _from_channels,
    _to_channels,
    forward_array,
    train_step,
)

__all__ = [
    "AblationConfig",
    "CellResult",
    "AblationResult",
    "make_pairs",
    "train",
    "evaluate",
    "run_ablation",
    "write_outputs",
    "MODE_LABELS",
    "REFERENCE_DELTAS",
]

MODE_LABELS = {
    LossMode.P_ONLY: "TCN",
    LossMode.P_PLUS_M: "TCN + L_M",
    LossMode.P_PLUS_LAP: "TCN + L_Lap",
}

# Full-scale Human3.6M improvements over the position-only baseline, quoted
# for comparison next to the desk-scale numbers (not reproduced here).
REFERENCE_DELTAS = {
    ("mpjpe", LossMode.P_PLUS_M): 14.48,
    ("mpjpe", LossMode.P_PLUS_LAP): 41.85,
    ("mpjve", LossMode.P_PLUS_LAP): 1.49,
}

METRIC_UNITS = {"mpjpe": "mm", "mpjve": "mm/frame", "mpjacce": "mm/frame^2"}


@dataclass
class AblationConfig:
    """Everything that determines an ablation run.

    ``corpus_dir`` points at a directory written by ``lapmo synth``; when it
    is ``None`` the corpus is generated in memory from ``synth`` with
    ``n_train + n_test`` sequences. ``network`` holds keyword arguments for
    :meth:`NetworkSpec.default` (hidden, kernel_size, dilations, residual, unit).
    """

    corpus_dir: str | None = None
    synth: SynthConfig = field(default_factory=SynthConfig)
    n_train: int = 200
    n_test: int = 50
    modes: tuple[LossMode, ...] = (LossMode.P_ONLY, LossMode.P_PLUS_M, LossMode.P_PLUS_LAP)
    epochs: int = 30
    seeds: tuple[int, ...] = tuple(range(10))
    network: dict = field(default_factory=dict)
    loss: LossConfig = field(default_factory=LossConfig)
    batch_size: int = 16
    lr: float = 1e-3
    projection: str = "ortho"
    focal: float = 1000.0
    output_dir: str | None = None
    deterministic: bool = True

    def __post_init__(self):
        if isinstance(self.synth, dict):
            self.synth = SynthConfig.from_dict(self.synth)
        if isinstance(self.loss, dict):
            self.loss = LossConfig.from_dict(self.loss)
        self.modes = tuple(LossMode.parse(m) for m in self.modes)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.network = dict(self.network)
        if "dilations" in self.network:
            self.network["dilations"] = tuple(self.network["dilations"])
        Projection(self.projection)
        if not self.modes:
            raise ValueError("ablation needs at least one mode")
        if not self.seeds:
            raise ValueError("ablation needs at least one seed")
        if len(set(self.modes)) != len(self.modes) or len(set(self.seeds)) != len(self.seeds):
            raise ValueError("modes and seeds must not repeat")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs >= 0 and batch_size >= 1 required")
        if self.corpus_dir is None and (self.n_train < 1 or self.n_test < 1):
            raise ValueError("n_train and n_test must be positive")

    def to_dict(self) -> dict:
        net = dict(self.network)
        if "dilations" in net:
            net["dilations"] = list(net["dilations"])
        return {
            "corpus_dir": self.corpus_dir,
            "synth": self.synth.to_dict(),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "modes": [m.value for m in self.modes],
            "epochs": self.epochs,
            "seeds": list(self.seeds),
            "network": net,
            "loss": self.loss.to_dict(),
            "batch_size": self.batch_size,
            "lr": self.lr,
            "projection": self.projection,
            "focal": self.focal,
            "output_dir": self.output_dir,
            "deterministic": self.deterministic,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AblationConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown ablation config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "AblationConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def load_corpus(self) -> Corpus:
        if self.corpus_dir is not None:
            return load_corpus(self.corpus_dir)
        count = self.n_train + self.n_test
        return make_corpus(self.synth, count, test_fraction=self.n_test / count)

    def network_spec(self, n_joints: int) -> NetworkSpec:
        return NetworkSpec.default(n_joints, **self.network)


Pair = tuple[MotionSequence2D, MotionSequence]


def make_pairs(
    seqs: list[MotionSequence],
    projection=Projection.ORTHO_XY,
    focal: float = 1000.0,
    noise_std: float = 0.0,
    seed: int = 0,
) -> list[Pair]:
    """(2D input, 3D target) pairs; noise for sequence ``k`` is seeded by ``(seed, k)``."""
    return [
        (project_2d(s, projection, focal, noise_std, seed=[seed, k]), s)
        for k, s in enumerate(seqs)
    ]


def train(
    state: NetworkState,
    pairs: list[Pair],
    mode=LossMode.P_ONLY,
    loss_config: LossConfig | None = None,
    epochs: int = 30,
    batch_size: int = 16,
    seed: int = 0,
    opt: AdamConfig | None = None,
) -> tuple[NetworkState, float | None]:
    """Mini-batch training. Returns the state and the mean loss of the last epoch."""
    if not pairs:
        raise ValueError("no training pairs")
    opt = opt or AdamConfig()
    last = None
    for epoch in range(epochs):
        order = np.random.default_rng([seed, epoch]).permutation(len(pairs))
        losses = []
        for start in range(0, len(order), batch_size):
            batch = [pairs[i] for i in order[start : start + batch_size]]
            state, loss = train_step(state, batch, mode, loss_config, opt)
            losses.append(loss)
        last = math.fsum(losses) / len(losses)
    return state, last


def evaluate(state: NetworkState, pairs: list[Pair]) -> MetricReport:
    reports = []
    for x, gt in pairs:
        y, _ = forward_array(state, _to_channels(x.positions2d)[None])
        est = _from_channels(y[0])
        if not np.all(np.isfinite(est)):
            raise TrainingDiverged("non-finite network output at evaluation")
        reports.append(evaluate_pair(MotionSequence(gt.skeleton, gt.fps, est), gt, gt.action or "all"))
    return aggregate_reports(reports)


@dataclass
class CellResult:
    mode: LossMode
    seed: int
    status: str = "ok"
    train_loss: float | None = None
    report: MetricReport | None = None
    error: str | None = None

    @property
    def finite(self) -> bool:
        return self.status == "ok"

    def metric(self, name: str) -> float | None:
        return None if self.report is None else self.report.get(name)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "seed": self.seed,
            "status": self.status,
            "train_loss": self.train_loss,
            "report": None if self.report is None else self.report.to_dict(),
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CellResult":
        rep = d.get("report")
        if rep is not None:
            rep = MetricReport(rep["mpjpe"], rep["mpjve"], rep["mpjacce"], rep.get("per_action", {}))
        return cls(LossMode.parse(d["mode"]), int(d["seed"]), d["status"], d["train_loss"], rep, d.get("error"))


@dataclass
class AblationResult:
    config: dict
    cells: dict[tuple[LossMode, int], CellResult]

    @property
    def modes(self) -> list[LossMode]:
        return list(dict.fromkeys(m for m, _ in self.cells))

    @property
    def seeds(self) -> list[int]:
        return list(dict.fromkeys(s for _, s in self.cells))

    @property
    def all_finite(self) -> bool:
        return all(c.finite for c in self.cells.values())

    def median(self, mode, metric: str) -> float | None:
        vals = [c.metric(metric) for (m, _), c in self.cells.items() if m == LossMode.parse(mode)]
        vals = [v for v in vals if v is not None]
        return statistics.median(vals) if vals else None

    def median_report(self, mode) -> MetricReport:
        """Across-seed medians per action and for Avg."""
        mode = LossMode.parse(mode)
        cells = [c for (m, _), c in self.cells.items() if m == mode and c.report is not None]
        actions = list(dict.fromkeys(a for c in cells for a in c.report.per_action))
        per_action = {}
        for a in actions:
            per_action[a] = {}
            for k in METRICS:
                vals = [c.report.per_action[a][k] for c in cells if c.report.per_action.get(a, {}).get(k) is not None]
                per_action[a][k] = statistics.median(vals) if vals else None
        return MetricReport(*(self.median(mode, k) for k in METRICS), per_action=per_action)

    def paired_wins(self, mode, baseline, metric: str) -> tuple[int, int]:
        """(seeds where ``mode`` <= ``baseline``, seeds where both are finite)."""
        mode, baseline = LossMode.parse(mode), LossMode.parse(baseline)
        wins = total = 0
        for s in self.seeds:
            a = self.cells.get((mode, s))
            b = self.cells.get((baseline, s))
            if a is None or b is None or a.metric(metric) is None or b.metric(metric) is None:
                continue
            total += 1
            wins += a.metric(metric) <= b.metric(metric)
        return wins, total

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "cells": [c.to_dict() for c in self.cells.values()],
            "medians": {m.value: {k: self.median(m, k) for k in METRICS} for m in self.modes},
            "all_finite": self.all_finite,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AblationResult":
        cells = [CellResult.from_dict(c) for c in d["cells"]]
        return cls(d["config"], {(c.mode, c.seed): c for c in cells})

    # -- tables -------------------------------------------------------------

    def table(self, metric: str, fmt: str = "md", digits: int = 3) -> str:
        rows = table_rows([(MODE_LABELS[m], self.median_report(m)) for m in self.modes], metric)
        return to_markdown(rows, digits) if fmt == "md" else to_csv(rows)

    def cells_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mode", "seed", "status", "train_loss", *METRICS])
        for c in self.cells.values():
            vals = [c.train_loss, *(c.metric(k) for k in METRICS)]
            w.writerow([c.mode.value, c.seed, c.status, *("" if v is None else repr(v) for v in vals)])
        return buf.getvalue()

    def summary_markdown(self) -> str:
        out = ["# Loss ablation", ""]
        out.append(
            f"{len(self.seeds)} seed(s), modes {', '.join(m.value for m in self.modes)}. "
            "Cells are medians across seeds."
        )
        out.append("")
        for k, title in (("mpjpe", "MPJPE"), ("mpjve", "MPJVE"), ("mpjacce", "MPJAccE")):
            out += [f"## {title} ({METRIC_UNITS[k]})", "", self.table(k, "md"), ""]
        base = LossMode.P_ONLY
        if base in self.modes and len(self.modes) > 1:
            out += ["## Improvement over the position-only baseline", ""]
            out += ["| Metric | Mode | Median delta | Paired seeds <= baseline | Full-scale reference |", "|---|---|---|---|---|"]
            for k in METRICS:
                for m in self.modes:
                    if m is base:
                        continue
                    a, b = self.median(m, k), self.median(base, k)
                    delta = "-" if a is None or b is None else f"{b - a:.4f}"
                    wins, total = self.paired_wins(m, base, k)
                    ref = REFERENCE_DELTAS.get((k, m))
                    ref_s = "-" if ref is None else f"{ref:.2f}"
                    out.append(f"| {k} | {m.value} | {delta} | {wins}/{total} | {ref_s} |")
            out.append("")
        bad = [c for c in self.cells.values() if not c.finite]
        if bad:
            out += ["## Diverged cells", ""]
            out += [f"- {c.mode.value} seed {c.seed}: {c.error}" for c in bad]
            out.append("")
        return "\n".join(out)


def run_cell(config: AblationConfig, corpus: Corpus, mode: LossMode, seed: int, cache: dict) -> CellResult:
    key = ("pairs",)
    if key not in cache:
        noise = corpus.manifest.get("config", {}).get("noise_std_2d", config.synth.noise_std_2d)
        cache[key] = (
            make_pairs(corpus.train, config.projection, config.focal, noise, seed=1),
            make_pairs(corpus.test, config.projection, config.focal, noise, seed=2),
        )
    train_pairs, test_pairs = cache[key]
    spec = config.network_spec(train_pairs[0][1].J)
    state = NetworkState.init(spec, seed)
    try:
        state, loss = train(
            state, train_pairs, mode, config.loss, config.epochs, config.batch_size, seed, AdamConfig(lr=config.lr)
        )
        report = evaluate(state, test_pairs)
    except TrainingDiverged as exc:
        return CellResult(mode, seed, "diverged", None, None, str(exc))
    return CellResult(mode, seed, "ok", loss, report)


def run_ablation(config: AblationConfig, progress=None) -> AblationResult:
    """Train and evaluate every (mode, seed) cell. Divergent cells are
    recorded and the run carries on. Writes tables when ``output_dir`` is set."""
    corpus = config.load_corpus()
    if not corpus.train or not corpus.test:
        raise ValueError("corpus needs nonempty train and test splits")
    cache: dict = {}
    cells: dict[tuple[LossMode, int], CellResult] = {}
    limit = threadpool_limits(limits=1) if config.deterministic else nullcontext()
    with limit:
        for mode in config.modes:
            for seed in config.seeds:
                cells[(mode, seed)] = run_cell(config, corpus, mode, seed, cache)
                if progress is not None:
                    progress(cells[(mode, seed)])
    stored = config.to_dict()
    # where the files land must not change their content
    stored.pop("output_dir")
    result = AblationResult(stored, cells)
    if config.output_dir is not None:
        write_outputs(result, config.output_dir)
    return result


def write_outputs(result: AblationResult, out_dir: str | Path) -> list[Path]:
    """result.json, cells.csv, summary.md and one md/csv table per metric."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "result.json": json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n",
        "cells.csv": result.cells_csv(),
        "summary.md": result.summary_markdown(),
    }
    for k in METRICS:
        files[f"table_{k}.md"] = result.table(k, "md")
        files[f"table_{k}.csv"] = result.table(k, "csv")
    written = []
    for name, text in files.items():
        p = out / name
        p.write_text(text, encoding="utf-8")
        written.append(p)
    return written
