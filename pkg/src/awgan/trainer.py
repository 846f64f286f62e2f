"""GAN training on the ring task with plain-sum or adaptive-weighted discriminator steps."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .autodiff import Graph, NonFiniteError
from .awweights import (
    AwConfig,
    AwWeights,
    GradientPair,
    ScoreStats,
    aw_select,
    combine_direction,
    is_degenerate_direction,
)
from .losses import FAMILIES, GENERATOR_FAMILIES, discriminator_pair, generator_term
from .nn import (
    AdamState,
    LrSchedule,
    Mlp,
    ParamVector,
    adam_step,
    default_discriminator,
    default_generator,
    flatten,
    flatten_grads,
    lr_at,
    unflatten,
)
from .synthdata import RingMixture, sample

log = logging.getLogger(__name__)

MODES = ("plain", "aw-normalized", "aw-nonnormalized")
PLAIN_BRANCH = -1  # branch id logged when no selection ran (plain or pinned weights)


class TrainingError(RuntimeError):
    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message if iteration is None else f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "bce"
    generator_loss: str = "bce-nonsaturating"
    mode: str = "aw-normalized"
    aw: AwConfig = AwConfig()
    pin_weights: tuple[float, float] | None = None
    optimizer: str = "adam"  # or "sgd" (plain gradient steps)
    d_lr: float = 1e-3
    g_lr: float = 1e-3
    beta1: float = 0.0
    beta2: float = 0.999
    adam_eps: float = 1e-8
    lr_decay: str = "constant"  # or "linear"
    batch_size: int = 128
    latent_dim: int = 2
    hidden: int = 64
    d_steps: int = 1
    iterations: int = 25000
    seed: int = 0
    n_modes: int = 8
    radius: float = 1.0
    std: float = 0.05
    steps_per_epoch: int = 400
    zero_init_disc_output: bool = False

    def __post_init__(self):
        if self.loss not in FAMILIES:
            raise ValueError(f"unknown loss family {self.loss!r}")
        if self.generator_loss not in GENERATOR_FAMILIES:
            raise ValueError(f"unknown generator loss {self.generator_loss!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.lr_decay not in ("constant", "linear"):
            raise ValueError(f"unknown lr decay {self.lr_decay!r}")
        if self.d_steps < 1:
            raise ValueError("d_steps must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.batch_size < 1 or self.latent_dim < 1 or self.hidden < 1:
            raise ValueError("batch_size, latent_dim and hidden must be positive")
        if self.d_lr < 0 or self.g_lr < 0:
            raise ValueError("learning rates must be non-negative")
        if self.pin_weights is not None and len(self.pin_weights) != 2:
            raise ValueError("pin_weights must be a pair")

    @property
    def mixture(self) -> RingMixture:
        return RingMixture(self.n_modes, self.radius, self.std, self.seed)

    def with_mode(self, mode: str) -> "TrainConfig":
        return dataclasses.replace(self, mode=mode)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["aw"] = dataclasses.asdict(self.aw)
        return d


@dataclass
class StepRecord:
    iteration: int
    L_r: float
    L_f: float
    s_r: float
    s_f: float
    norm_r: float
    norm_f: float
    cos_rf: float
    cos_rd: float
    cos_fd: float
    w_r: float
    w_f: float
    branch: int
    logit_r: float  # mean raw logit, real minibatch
    logit_f: float  # mean raw logit, fake minibatch
    skipped: bool = False


STEP_FIELDS = [f.name for f in dataclasses.fields(StepRecord)]


@dataclass
class TrainState:
    disc: ParamVector
    gen: ParamVector
    d_opt: AdamState
    g_opt: AdamState
    data_rng: np.random.Generator
    latent_rng: np.random.Generator
    d_iter: int = 0
    g_iter: int = 0

    @property
    def discriminator(self) -> Mlp:
        return unflatten(self.disc)

    @property
    def generator(self) -> Mlp:
        return unflatten(self.gen)


@dataclass
class RunLog:
    config: TrainConfig
    records: list[StepRecord] = field(default_factory=list)
    g_losses: list[float] = field(default_factory=list)
    generator: Mlp | None = None
    discriminator: Mlp | None = None

    def write_csv(self, path) -> Path:
        return write_records_csv(self.records, path)


def init_state(cfg: TrainConfig) -> TrainState:
    seeds = np.random.SeedSequence(cfg.seed).spawn(4)
    d_seed, g_seed = (int(s.generate_state(1)[0]) for s in seeds[:2])
    disc = default_discriminator(d_seed, cfg.hidden, zero_last_layer=cfg.zero_init_disc_output)
    gen = default_generator(g_seed, cfg.latent_dim, cfg.hidden)
    dv, gv = flatten(disc), flatten(gen)
    return TrainState(
        disc=dv,
        gen=gv,
        d_opt=AdamState.zeros(len(dv), cfg.beta1, cfg.beta2, cfg.adam_eps),
        g_opt=AdamState.zeros(len(gv), cfg.beta1, cfg.beta2, cfg.adam_eps),
        data_rng=np.random.default_rng(seeds[2]),
        latent_rng=np.random.default_rng(seeds[3]),
    )


def _safe_cos(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return min(1.0, max(-1.0, float(np.dot(u, v)) / (nu * nv)))


def _apply(params: ParamVector, direction: np.ndarray, opt: AdamState, lr: float,
           cfg: TrainConfig, ascend: bool) -> ParamVector:
    # Ascent is run as descent on the negated direction so both networks share one code path.
    step_dir = -direction if ascend else direction
    if cfg.optimizer == "adam":
        return adam_step(params, step_dir, opt, lr, "descend")
    return ParamVector(params.data - lr * step_dir, params.layout)


def _lr(cfg: TrainConfig, base: float, t: int) -> float:
    total = max(cfg.iterations, t)
    return lr_at(LrSchedule(base, total, "linear" if cfg.lr_decay == "linear" else "constant"), t)


def discriminator_step(state: TrainState, real: np.ndarray, fake: np.ndarray,
                       cfg: TrainConfig) -> StepRecord:
    """One discriminator update from two separate backward sweeps."""
    if len(real) == 0 or len(fake) == 0:
        raise ValueError("empty minibatch")
    it = state.d_iter
    disc = unflatten(state.disc)
    try:
        pair, real_logits, fake_logits = discriminator_pair(disc, real, fake, cfg.loss)
    except NonFiniteError as err:
        raise TrainingError(str(err), it) from err
    layout = state.disc.layout
    g_r = flatten_grads(pair.real_grad(), layout, "D.").data
    g_f = flatten_grads(pair.fake_grad(), layout, "D.").data
    if not (np.all(np.isfinite(g_r)) and np.all(np.isfinite(g_f))):
        raise TrainingError("non-finite discriminator gradient", it)
    grads = GradientPair(g_r, g_f)
    scores = ScoreStats.from_logits(real_logits, fake_logits)

    if cfg.mode == "plain":
        weights = AwWeights(1.0, 1.0, PLAIN_BRANCH)
    elif cfg.pin_weights is not None:
        weights = AwWeights(float(cfg.pin_weights[0]), float(cfg.pin_weights[1]), PLAIN_BRANCH)
    else:
        aw_cfg = dataclasses.replace(cfg.aw, normalized=(cfg.mode == "aw-normalized"))
        weights = aw_select(grads, scores, aw_cfg)
    d = combine_direction(grads, weights)

    skipped = is_degenerate_direction(d, grads, weights)
    if skipped:
        log.warning("iteration %d: combined direction cancels (branch %d); step skipped", it, weights.branch)
    else:
        state.disc = _apply(state.disc, d, state.d_opt, _lr(cfg, cfg.d_lr, state.g_iter), cfg, ascend=True)
    state.d_iter += 1

    return StepRecord(
        iteration=it,
        L_r=pair.real,
        L_f=pair.fake,
        s_r=scores.s_r,
        s_f=scores.s_f,
        norm_r=float(np.linalg.norm(g_r)),
        norm_f=float(np.linalg.norm(g_f)),
        cos_rf=_safe_cos(g_r, g_f),
        cos_rd=_safe_cos(g_r, d),
        cos_fd=_safe_cos(g_f, d),
        w_r=weights.w_r,
        w_f=weights.w_f,
        branch=weights.branch,
        logit_r=float(real_logits.mean()),
        logit_f=float(fake_logits.mean()),
        skipped=skipped,
    )


def generator_step(state: TrainState, z: np.ndarray, cfg: TrainConfig) -> float:
    """One descent step on the generator loss; the discriminator is read-only."""
    gen, disc = unflatten(state.gen), unflatten(state.disc)
    g = Graph()
    samples = gen.build(g, g.input("z"), "G.")
    logits = disc.build(g, samples, "D.", trainable=False)
    out = generator_term(g, logits, cfg.generator_loss)
    try:
        loss = float(g.forward({**gen.bindings("G."), **disc.bindings("D."), "z": z}, out))
        grad = flatten_grads(g.backward(out), state.gen.layout, "G.").data
    except NonFiniteError as err:
        raise TrainingError(str(err), state.g_iter) from err
    if not np.all(np.isfinite(grad)):
        raise TrainingError("non-finite generator gradient", state.g_iter)
    state.gen = _apply(state.gen, grad, state.g_opt, _lr(cfg, cfg.g_lr, state.g_iter), cfg, ascend=False)
    state.g_iter += 1
    return loss


def draw_batches(state: TrainState, cfg: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    real = sample(cfg.mixture, cfg.batch_size, state.data_rng).points
    z = state.latent_rng.standard_normal((cfg.batch_size, cfg.latent_dim))
    return real, unflatten(state.gen)(z)


def param_checksum(state: TrainState) -> str:
    h = hashlib.sha256()
    for arr in (state.disc.data, state.d_opt.m, state.d_opt.v, np.array([state.d_opt.t], dtype=np.float64)):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


@dataclass
class CounterfactualRecord:
    step: StepRecord
    post_logit_r: float
    post_logit_f: float


def counterfactual_step(state: TrainState, real: np.ndarray, fake: np.ndarray,
                        cfg: TrainConfig) -> tuple[CounterfactualRecord, CounterfactualRecord]:
    """Take a plain step and an adaptive step from the same state and minibatch.

    The state is restored afterwards, so the caller decides which update persists.
    """
    aw_mode = cfg.mode if cfg.mode != "plain" else "aw-normalized"
    snap_disc, snap_opt, snap_iter = state.disc.copy(), state.d_opt.copy(), state.d_iter
    checksum = param_checksum(state)

    out = []
    for mode in ("plain", aw_mode):
        if param_checksum(state) != checksum:
            raise TrainingError("snapshot restore mismatch", state.d_iter)
        rec = discriminator_step(state, real, fake, dataclasses.replace(cfg, mode=mode, pin_weights=None))
        disc = unflatten(state.disc)
        out.append(CounterfactualRecord(rec, float(disc(real).mean()), float(disc(fake).mean())))
        state.disc, state.d_opt, state.d_iter = snap_disc.copy(), snap_opt.copy(), snap_iter
    if param_checksum(state) != checksum:
        raise TrainingError("snapshot restore mismatch", state.d_iter)
    return out[0], out[1]


def train(cfg: TrainConfig, on_checkpoint: Callable[[int, TrainState], None] | None = None,
          checkpoint_every: int | None = None) -> RunLog:
    """Alternate ``d_steps`` discriminator steps with one generator step.

    ``on_checkpoint(g_iter, state)`` runs before the first iteration and then
    every ``checkpoint_every`` generator iterations.
    """
    state = init_state(cfg)
    run = RunLog(cfg)
    if on_checkpoint is not None:
        on_checkpoint(0, state)
    for _ in range(cfg.iterations):
        for _ in range(cfg.d_steps):
            real, fake = draw_batches(state, cfg)
            run.records.append(discriminator_step(state, real, fake, cfg))
        z = state.latent_rng.standard_normal((cfg.batch_size, cfg.latent_dim))
        run.g_losses.append(generator_step(state, z, cfg))
        if on_checkpoint is not None and checkpoint_every and state.g_iter % checkpoint_every == 0:
            on_checkpoint(state.g_iter, state)
    run.generator = state.generator
    run.discriminator = state.discriminator
    return run


def generate(gen: Mlp, n: int, seed: int, latent_dim: int = 2) -> np.ndarray:
    z = np.random.default_rng(seed).standard_normal((n, latent_dim))
    return gen(z)


# -- CSV -----------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_records_csv(records: list[StepRecord], path) -> Path:
    """Header: ``STEP_FIELDS``; floats at repr precision; ``skipped`` as 0/1."""
    if not records:
        raise ValueError("no records to write")
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(STEP_FIELDS)
        for rec in records:
            writer.writerow([_fmt(getattr(rec, name)) for name in STEP_FIELDS])
    return path


def read_records_csv(path) -> list[StepRecord]:
    types = {f.name: f.type for f in dataclasses.fields(StepRecord)}
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            kwargs = {}
            for name in STEP_FIELDS:
                t = types[name]
                if t in ("int", int):
                    kwargs[name] = int(row[name])
                elif t in ("bool", bool):
                    kwargs[name] = row[name] == "1"
                else:
                    kwargs[name] = float(row[name])
            out.append(StepRecord(**kwargs))
    return out


def run_summary(run: RunLog, n_samples: int = 8000, seed: int = 12345) -> dict:
    from .synthdata import mode_coverage

    if run.generator is None:
        raise ValueError("run has no generator")
    pts = generate(run.generator, n_samples, seed, run.config.latent_dim)
    covered, counts = mode_coverage(pts, run.config.mixture)
    last = run.records[-1] if run.records else None
    return {
        "coverage": covered,
        "per_mode": counts.tolist(),
        "L_r": last.L_r if last else math.nan,
        "L_f": last.L_f if last else math.nan,
        "g_loss": run.g_losses[-1] if run.g_losses else math.nan,
    }
