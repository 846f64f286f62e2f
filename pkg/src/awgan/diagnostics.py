"""Batch studies over training runs: gradient angles, counterfactual score gaps,
per-mode discriminator scores, and the (alpha1, alpha2) grid.

Every table exports to CSV (documented header, repr-precision floats) and
reads back losslessly; plots are static SVG.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import svg
from .synthdata import mode_coverage, sample_mode
from .trainer import (
    RunLog,
    StepRecord,
    TrainConfig,
    counterfactual_step,
    discriminator_step,
    draw_batches,
    generate,
    generator_step,
    init_state,
    train,
)

# -- CSV helpers -------------------------------------------------------------------


def export_csv(table, path) -> Path:
    """Write any table exposing ``csv_header()`` and ``csv_rows()``."""
    header, rows = table.csv_header(), table.csv_rows()
    if not rows:
        raise ValueError("refusing to export an empty table")
    path = Path(path)
    try:
        fh = path.open("w", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    with fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[float]]]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    return header, rows


def export_svg(figure: svg.Figure, path) -> Path:
    return figure.save(path)


# -- angles ------------------------------------------------------------------------

ANGLE_FIELDS = ["iteration", "angle_rf", "angle_rd", "angle_fd", "branch"]


def _deg(c: float) -> float:
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


@dataclass
class AngleTrace:
    iterations: np.ndarray
    angles: np.ndarray  # (n, 3): (g_r, g_f), (g_r, d), (g_f, d) in degrees
    branches: np.ndarray

    def fraction_obtuse(self) -> dict[str, float]:
        obtuse = (self.angles > 90.0).mean(axis=0)
        return {"rf": float(obtuse[0]), "rd": float(obtuse[1]), "fd": float(obtuse[2])}

    def csv_header(self):
        return ANGLE_FIELDS

    def csv_rows(self):
        return [[int(i), float(a[0]), float(a[1]), float(a[2]), int(b)]
                for i, a, b in zip(self.iterations, self.angles, self.branches)]

    @classmethod
    def from_csv(cls, path) -> "AngleTrace":
        _, rows = read_csv(path)
        arr = np.array(rows).reshape(-1, 5)
        return cls(arr[:, 0].astype(int), arr[:, 1:4], arr[:, 4].astype(int))

    def figure(self, title: str = "Angles between gradients") -> svg.Figure:
        fig = svg.Figure(640, 320, title)
        xs = self.iterations.tolist()
        ax = fig.axes(60, 40, 540, 230, xlim=svg.limits(xs, 0.0) if len(xs) > 1 else (xs[0] - 1, xs[0] + 1),
                      ylim=(0.0, 180.0), xlabel="discriminator iteration", ylabel="degrees")
        labels = ["angle(g_r, g_f)", "angle(g_r, d)", "angle(g_f, d)"]
        for j, label in enumerate(labels):
            ax.line(xs, self.angles[:, j].tolist(), svg.PALETTE[j], label)
        ax.hline(90.0, label="90 deg")
        ax.legend()
        return fig


def angle_trace(log: RunLog | list[StepRecord], window: tuple[int, int] | None = None) -> AngleTrace:
    """Degrees of the logged cosines over ``records[start:stop]``."""
    records = log.records if isinstance(log, RunLog) else list(log)
    start, stop = window if window is not None else (0, len(records))
    if not (0 <= start < stop <= len(records)):
        raise ValueError(f"window {start}:{stop} is empty or outside [0, {len(records)}]")
    recs = records[start:stop]
    angles = np.array([[_deg(r.cos_rf), _deg(r.cos_rd), _deg(r.cos_fd)] for r in recs])
    return AngleTrace(np.array([r.iteration for r in recs]), angles, np.array([r.branch for r in recs]))


# -- counterfactual score gaps --------------------------------------------------------

GAP_FIELDS = ["iteration", "real_before", "fake_before", "real_plain", "fake_plain",
              "real_aw", "fake_aw", "gbt", "gaot", "gaawt", "branch"]


@dataclass
class ScoreGapTable:
    """Per-iteration mean logits before and after the plain and adaptive steps."""

    rows: list[list[float]] = field(default_factory=list)
    steps_per_epoch: int = 1

    def add(self, iteration, before, plain, aw, branch) -> None:
        rb, fb = before
        rp, fp = plain
        ra, fa = aw
        self.rows.append([iteration, rb, fb, rp, fp, ra, fa, rb - fb, rp - fp, ra - fa, branch])

    def column(self, name: str) -> np.ndarray:
        return np.array([r[GAP_FIELDS.index(name)] for r in self.rows], dtype=np.float64)

    def epoch_means(self) -> list[dict[str, float]]:
        out = []
        n = len(self.rows)
        for start in range(0, n, self.steps_per_epoch):
            chunk = self.rows[start:start + self.steps_per_epoch]
            arr = np.array(chunk, dtype=np.float64)
            out.append({name: float(arr[:, j].mean()) for j, name in enumerate(GAP_FIELDS[1:10], start=1)})
        return out

    def csv_header(self):
        return GAP_FIELDS

    def csv_rows(self):
        return [[int(r[0]), *map(float, r[1:10]), int(r[10])] for r in self.rows]

    @classmethod
    def from_csv(cls, path, steps_per_epoch: int = 1) -> "ScoreGapTable":
        _, rows = read_csv(path)
        return cls([[int(r[0]), *r[1:10], int(r[10])] for r in rows], steps_per_epoch)

    def figure(self) -> svg.Figure:
        fig = svg.Figure(640, 820, "Mean discriminator logits and real-fake gaps")
        xs = self.column("iteration").tolist()
        xlim = svg.limits(xs, 0.0) if len(xs) > 1 else (xs[0] - 1, xs[0] + 1)
        panels = [
            ("before step", "real_before", "fake_before"),
            ("after plain step", "real_plain", "fake_plain"),
            ("after adaptive step", "real_aw", "fake_aw"),
        ]
        all_scores = np.concatenate([self.column(c) for _, a, b in panels for c in (a, b)])
        ylim = svg.limits(all_scores.tolist())
        for i, (title, real_col, fake_col) in enumerate(panels):
            ax = fig.axes(70, 40 + 195 * i, 520, 140, xlim=xlim, ylim=ylim, title=title, ylabel="mean logit")
            ax.line(xs, self.column(real_col).tolist(), svg.PALETTE[0], "real")
            ax.line(xs, self.column(fake_col).tolist(), svg.PALETTE[2], "fake")
            ax.legend()
        gaps = [self.column(c) for c in ("gbt", "gaot", "gaawt")]
        ax = fig.axes(70, 40 + 195 * 3, 520, 140, xlim=xlim, ylim=svg.limits(np.concatenate(gaps).tolist()),
                      title="real - fake gap", xlabel="iteration", ylabel="gap")
        for j, (label, col) in enumerate(zip(("GBT", "GAOT", "GAAWT"), gaps)):
            ax.line(xs, col.tolist(), svg.PALETTE[j + 3], label)
        ax.legend()
        return fig


def score_gap_study(cfg: TrainConfig, epochs: int = 1) -> ScoreGapTable:
    """Train with plain-sum steps persisted, probing an adaptive step from the same state each time.

    Scores are raw discriminator logits averaged over the minibatch.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    state = init_state(cfg)
    table = ScoreGapTable(steps_per_epoch=cfg.steps_per_epoch * cfg.d_steps)
    plain_cfg = cfg.with_mode("plain")
    for _ in range(epochs * cfg.steps_per_epoch):
        for _ in range(cfg.d_steps):
            real, fake = draw_batches(state, cfg)
            plain, aw = counterfactual_step(state, real, fake, cfg)
            table.add(plain.step.iteration, (plain.step.logit_r, plain.step.logit_f),
                      (plain.post_logit_r, plain.post_logit_f), (aw.post_logit_r, aw.post_logit_f),
                      aw.step.branch)
            discriminator_step(state, real, fake, plain_cfg)
        z = state.latent_rng.standard_normal((cfg.batch_size, cfg.latent_dim))
        generator_step(state, z, cfg)
    return table


# -- per-mode panel ------------------------------------------------------------------


@dataclass
class ModeScorePanel:
    checkpoints: list[int]
    mode_logits: np.ndarray  # (n_checkpoints, n_modes)
    scatter: np.ndarray  # (n_checkpoints, scatter_n, 2)
    coverage: list[int]
    centers: np.ndarray

    def csv_header(self):
        return ["checkpoint", "coverage"] + [f"mode_{j}" for j in range(self.mode_logits.shape[1])]

    def csv_rows(self):
        return [[int(c), int(cov), *map(float, row)]
                for c, cov, row in zip(self.checkpoints, self.coverage, self.mode_logits)]

    @classmethod
    def from_csv(cls, path, centers=None) -> "ModeScorePanel":
        _, rows = read_csv(path)
        arr = np.array(rows)
        return cls([int(v) for v in arr[:, 0]], arr[:, 2:], np.zeros((len(arr), 0, 2)),
                   [int(v) for v in arr[:, 1]], np.zeros((0, 2)) if centers is None else centers)

    def figure(self, title: str = "Generated samples and per-mode mean logits") -> svg.Figure:
        n = len(self.checkpoints)
        fig = svg.Figure(40 + 170 * n, 400, title)
        lim = 1.5 * float(np.abs(self.centers).max()) if self.centers.size else 1.5
        ymin = min(0.0, float(self.mode_logits.min()))
        ymax = max(0.0, float(self.mode_logits.max()))
        ylim = svg.limits([ymin, ymax]) if ymax > ymin else (-1.0, 1.0)
        for i, ckpt in enumerate(self.checkpoints):
            x = 45 + 170 * i
            ax = fig.axes(x, 40, 140, 140, xlim=(-lim, lim), ylim=(-lim, lim), title=f"step {ckpt}")
            ax.scatter(self.centers[:, 0], self.centers[:, 1], "#d62728", r=3.0)
            ax.scatter(self.scatter[i, :, 0], self.scatter[i, :, 1], svg.PALETTE[0], r=1.2)
            bx = fig.axes(x, 230, 140, 120, xlim=(-0.5, self.mode_logits.shape[1] - 0.5), ylim=ylim,
                          xlabel="mode", ylabel="mean logit" if i == 0 else "")
            bx.bars(self.mode_logits[i].tolist(), svg.PALETTE[1])
            bx.hline(0.0)
        return fig


def probe_modes(disc, mix, probe_n: int, rng: np.random.Generator) -> np.ndarray:
    return np.array([float(disc(sample_mode(mix, j, probe_n, rng)).mean()) for j in range(mix.n_modes)])


def mode_panel(cfg: TrainConfig, checkpoint_every: int, probe_n: int = 100, scatter_n: int = 512,
               probe_seed: int = 2024) -> tuple[ModeScorePanel, RunLog]:
    """Train and, every ``checkpoint_every`` generator steps (and at step 0), score
    ``probe_n`` real points per mode and draw a fixed-size generated scatter."""
    if probe_n < 1 or checkpoint_every < 1:
        raise ValueError("probe_n and checkpoint_every must be >= 1")
    mix = cfg.mixture
    checkpoints, logits, scatters, coverage = [], [], [], []

    def record(it, state):
        rng = np.random.default_rng([probe_seed, it])
        checkpoints.append(it)
        logits.append(probe_modes(state.discriminator, mix, probe_n, rng))
        pts = generate(state.generator, scatter_n, probe_seed + it, cfg.latent_dim)
        scatters.append(pts)
        coverage.append(mode_coverage(generate(state.generator, 8000, probe_seed, cfg.latent_dim), mix)[0])

    run = train(cfg, record, checkpoint_every)
    panel = ModeScorePanel(checkpoints, np.array(logits), np.array(scatters), coverage, mix.centers)
    return panel, run


# -- alpha grid ----------------------------------------------------------------------

GRID_FIELDS = ["alpha1", "alpha2", "valid", "coverage", "mean_real_logit"]


@dataclass
class GridResult:
    alpha1: list[float]
    alpha2: list[float]
    coverage: np.ndarray  # (len(alpha1), len(alpha2)); NaN where invalid
    mean_real_logit: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        return np.array([[a1 <= a2 for a2 in self.alpha2] for a1 in self.alpha1])

    def csv_header(self):
        return GRID_FIELDS

    def csv_rows(self):
        rows = []
        for i, a1 in enumerate(self.alpha1):
            for j, a2 in enumerate(self.alpha2):
                rows.append([float(a1), float(a2), int(self.valid[i, j]),
                             float(self.coverage[i, j]), float(self.mean_real_logit[i, j])])
        return rows

    @classmethod
    def from_csv(cls, path) -> "GridResult":
        _, rows = read_csv(path)
        a1 = sorted({r[0] for r in rows})
        a2 = sorted({r[1] for r in rows})
        cov = np.full((len(a1), len(a2)), np.nan)
        logit = np.full_like(cov, np.nan)
        for r in rows:
            i, j = a1.index(r[0]), a2.index(r[1])
            cov[i, j], logit[i, j] = r[3], r[4]
        return cls(a1, a2, cov, logit)

    def figure(self) -> svg.Figure:
        fig = svg.Figure(760, 330, "alpha grid (toy metrics)")
        for k, (title, mat) in enumerate((("mode coverage", self.coverage),
                                          ("mean real logit", self.mean_real_logit))):
            ax = fig.axes(70 + 370 * k, 50, 300, 230, xlim=(0, len(self.alpha2)), ylim=(0, len(self.alpha1)),
                          title=f"{title} (rows alpha1, cols alpha2)")
            ax.heatmap(mat.tolist(), [f"{a:g}" for a in self.alpha1], [f"{a:g}" for a in self.alpha2])
        return fig


def _grid_cell(args) -> tuple[float, float]:
    cfg, budget = args
    covs, logits = [], []
    for k in range(budget):
        run = train(dataclasses.replace(cfg, seed=cfg.seed + k))
        pts = generate(run.generator, 8000, 12345, cfg.latent_dim)
        covs.append(mode_coverage(pts, cfg.mixture)[0])
        rng = np.random.default_rng([cfg.seed + k, 7])
        logits.append(float(probe_modes(run.discriminator, cfg.mixture, 100, rng).mean()))
    return float(np.mean(covs)), float(np.mean(logits))


def alpha_grid(base_cfg: TrainConfig, alpha1s, alpha2s, budget: int = 1, workers: int = 1) -> GridResult:
    """Train ``budget`` seeds per valid (alpha1, alpha2) cell; cells with alpha1 > alpha2 are skipped."""
    alpha1s, alpha2s = [float(a) for a in alpha1s], [float(a) for a in alpha2s]
    if budget < 1:
        raise ValueError("budget must be >= 1 run per cell")
    if not alpha1s or not alpha2s:
        raise ValueError("alpha lists must be non-empty")
    jobs, cells = [], []
    for i, a1 in enumerate(alpha1s):
        for j, a2 in enumerate(alpha2s):
            if a1 <= a2:
                aw = dataclasses.replace(base_cfg.aw, alpha1=a1, alpha2=a2)
                jobs.append((dataclasses.replace(base_cfg, aw=aw), budget))
                cells.append((i, j))
    if not jobs:
        raise ValueError("every grid cell has alpha1 > alpha2")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_grid_cell, jobs))
    else:
        results = [_grid_cell(job) for job in jobs]
    cov = np.full((len(alpha1s), len(alpha2s)), np.nan)
    logit = np.full_like(cov, np.nan)
    for (i, j), (c, l) in zip(cells, results):
        cov[i, j], logit[i, j] = c, l
    return GridResult(alpha1s, alpha2s, cov, logit)


__all__ = [
    "AngleTrace", "ScoreGapTable", "ModeScorePanel", "GridResult",
    "angle_trace", "score_gap_study", "mode_panel", "alpha_grid", "export_csv", "export_svg", "read_csv",
]
