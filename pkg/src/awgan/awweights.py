"""Adaptive weights for the real/fake discriminator objective.

Given the component gradients ``g_r`` (real term) and ``g_f`` (fake term),
choose ``(w_r, w_f)`` so the ascent direction ``d = w_r g_r + w_f g_f``
either bisects the two gradients or increases one term while leaving the
other unchanged to first order. :func:`aw_select` runs the five-branch
ladder that picks among those constructions from the minibatch scores.
"""

from __future__ import annotations

import contextlib
import contextvars
import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

DEGENERATE_NORM = 1e-12
ANTIPARALLEL_TOL = 1e-12
DEGENERATE_DIRECTION = 1e-10

BRANCH_NAMES = {
    0: "degenerate",
    1: "favor-real-obtuse",
    2: "favor-real-acute",
    3: "favor-fake-obtuse",
    4: "favor-fake-acute",
    5: "bisector",
}


class DegenerateDirectionError(ValueError):
    pass


# -- instrumentation --------------------------------------------------------


@dataclass
class PassCounter:
    """Counts length-k vector traversals and scalar flops over them."""

    passes: int = 0
    flops: int = 0


_counter: contextvars.ContextVar[PassCounter | None] = contextvars.ContextVar("aw_pass_counter", default=None)


@contextlib.contextmanager
def count_vector_passes():
    counter = PassCounter()
    token = _counter.set(counter)
    try:
        yield counter
    finally:
        _counter.reset(token)


def _tick(passes: int, flops: int) -> None:
    counter = _counter.get()
    if counter is not None:
        counter.passes += passes
        counter.flops += flops


def _dot(u: np.ndarray, v: np.ndarray) -> float:
    _tick(1, 2 * u.size)  # multiply + accumulate per coordinate
    return float(np.dot(u, v))


# -- types ----------------------------------------------------------------------


def _vec(x) -> np.ndarray:
    data = getattr(x, "data", x)
    return np.asarray(data, dtype=np.float64).reshape(-1)


@dataclass(frozen=True)
class GradientPair:
    g_r: np.ndarray
    g_f: np.ndarray

    def __post_init__(self):
        g_r, g_f = _vec(self.g_r), _vec(self.g_f)
        if g_r.shape != g_f.shape:
            raise ValueError(f"gradient lengths differ: {g_r.size} vs {g_f.size}")
        if not (np.all(np.isfinite(g_r)) and np.all(np.isfinite(g_f))):
            raise ValueError("gradients must be finite")
        object.__setattr__(self, "g_r", g_r)
        object.__setattr__(self, "g_f", g_f)


@dataclass(frozen=True)
class AwWeights:
    w_r: float
    w_f: float
    branch: int = 5

    @property
    def branch_name(self) -> str:
        return BRANCH_NAMES[self.branch]


@dataclass(frozen=True)
class AwConfig:
    alpha1: float = 0.5
    alpha2: float = 0.75
    epsilon: float = 0.05
    delta: float = 0.05
    normalized: bool = True

    def __post_init__(self):
        if not (0.0 <= self.alpha1 <= self.alpha2 <= 1.0):
            raise ValueError(f"need 0 <= alpha1 <= alpha2 <= 1, got {self.alpha1}, {self.alpha2}")
        if self.epsilon < 0 or self.delta < 0:
            raise ValueError("epsilon and delta must be non-negative")


@dataclass(frozen=True)
class ScoreStats:
    """Mean sigmoid scores of the real and fake minibatches."""

    s_r: float
    s_f: float
    n: int = 0

    @classmethod
    def from_logits(cls, real_logits, fake_logits) -> "ScoreStats":
        real = np.asarray(real_logits, dtype=np.float64)
        fake = np.asarray(fake_logits, dtype=np.float64)
        return cls(float(_sigmoid(real).mean()), float(_sigmoid(fake).mean()), int(real.size))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# -- geometry ---------------------------------------------------------------------


def cos_angle(u, v) -> float:
    u, v = _vec(u), _vec(v)
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine undefined for a zero vector")
    return min(1.0, max(-1.0, float(np.dot(u, v)) / (nu * nv)))


def angle_degrees(u, v) -> float:
    return math.degrees(math.acos(cos_angle(u, v)))


def is_obtuse(u, v) -> bool:
    """Strictly obtuse: <u, v> < 0. A right angle is not obtuse."""
    u, v = _vec(u), _vec(v)
    if not (np.any(u) and np.any(v)):
        raise ValueError("angle undefined for a zero vector")
    return float(np.dot(u, v)) < 0.0


# -- closed-form weights from inner products ------------------------------------
#
# rr = <g_r, g_r>, ff = <g_f, g_f>, rf = <g_r, g_f>. Every construction below is
# a function of these three numbers only, which is what keeps one selection at
# three inner products.


def _bisector(rr, ff, rf):
    return 1.0 / math.sqrt(rr), 1.0 / math.sqrt(ff)


def _favor_real(rr, ff, rf):
    nr = math.sqrt(rr)
    return 1.0 / nr, -rf / (ff * nr)


def _favor_fake(rr, ff, rf):
    nf = math.sqrt(ff)
    return -rf / (rr * nf), 1.0 / nf


def _favor_real_nonnorm(rr, ff, rf):
    return 1.0, -rf / ff


def _favor_fake_nonnorm(rr, ff, rf):
    return -rf / rr, 1.0


def _products(g: GradientPair) -> tuple[float, float, float]:
    return _dot(g.g_r, g.g_r), _dot(g.g_f, g.g_f), _dot(g.g_r, g.g_f)


def _require_norms(rr: float, ff: float, need_r: bool = True, need_f: bool = True) -> None:
    if (need_r and rr <= 0.0) or (need_f and ff <= 0.0):
        raise ValueError("zero-norm gradient")


def bisector_weights(g: GradientPair) -> AwWeights:
    """w = (1/|g_r|, 1/|g_f|): d bisects the angle between g_r and g_f."""
    rr, ff, rf = _products(g)
    _require_norms(rr, ff)
    if rf / math.sqrt(rr * ff) <= -1.0 + ANTIPARALLEL_TOL:
        raise DegenerateDirectionError("antiparallel gradients have no bisector direction")
    return AwWeights(*_bisector(rr, ff, rf), branch=5)


def favor_real_weights(g: GradientPair) -> AwWeights:
    """d is orthogonal to g_f and makes a non-obtuse angle with g_r."""
    rr, ff, rf = _products(g)
    _require_norms(rr, ff)
    return AwWeights(*_favor_real(rr, ff, rf), branch=1)


def favor_fake_weights(g: GradientPair) -> AwWeights:
    """d is orthogonal to g_r and makes a non-obtuse angle with g_f."""
    rr, ff, rf = _products(g)
    _require_norms(rr, ff)
    return AwWeights(*_favor_fake(rr, ff, rf), branch=3)


def favor_real_weights_nonnorm(g: GradientPair) -> AwWeights:
    rr, ff, rf = _products(g)
    _require_norms(rr, ff, need_r=False)
    return AwWeights(*_favor_real_nonnorm(rr, ff, rf), branch=1)


def favor_fake_weights_nonnorm(g: GradientPair) -> AwWeights:
    rr, ff, rf = _products(g)
    _require_norms(rr, ff, need_f=False)
    return AwWeights(*_favor_fake_nonnorm(rr, ff, rf), branch=3)


# -- selection ----------------------------------------------------------------------


def select_branch(s_r: float, s_f: float, obtuse: bool, cfg: AwConfig) -> int:
    """Branch id of the selection ladder; all comparisons strict."""
    if s_r < s_f - cfg.delta or s_r < cfg.alpha1:
        return 1 if obtuse else 2
    if s_r > s_f - cfg.delta and s_r > cfg.alpha2:
        return 3 if obtuse else 4
    return 5


def aw_select(g: GradientPair, s: ScoreStats, cfg: AwConfig) -> AwWeights:
    """Pick ``(w_r, w_f)`` for one discriminator step; weights include epsilon.

    If either gradient norm is below 1e-12 the selection falls back to the
    plain sum, ``(1, 1)`` with branch 0.
    """
    if not isinstance(cfg, AwConfig):
        raise TypeError("cfg must be an AwConfig")
    rr, ff, rf = _products(g)
    if math.sqrt(rr) < DEGENERATE_NORM or math.sqrt(ff) < DEGENERATE_NORM:
        log.info("degenerate gradient (|g_r|=%.3g, |g_f|=%.3g); using weights (1, 1)",
                 math.sqrt(rr), math.sqrt(ff))
        return AwWeights(1.0, 1.0, branch=0)

    branch = select_branch(s.s_r, s.s_f, rf < 0.0, cfg)
    eps = cfg.epsilon
    if cfg.normalized:
        if branch == 1:
            w_r, w_f = _favor_real(rr, ff, rf)
        elif branch == 2:
            w_r, w_f = 1.0 / math.sqrt(rr), 0.0
        elif branch == 3:
            w_r, w_f = _favor_fake(rr, ff, rf)
        elif branch == 4:
            w_r, w_f = 0.0, 1.0 / math.sqrt(ff)
        else:
            w_r, w_f = _bisector(rr, ff, rf)
    else:
        if branch == 1:
            w_r, w_f = _favor_real_nonnorm(rr, ff, rf)
        elif branch == 2:
            w_r, w_f = 1.0, 0.0
        elif branch == 3:
            w_r, w_f = _favor_fake_nonnorm(rr, ff, rf)
        elif branch == 4:
            w_r, w_f = 0.0, 1.0
        else:
            w_r, w_f = 1.0, 1.0
    return AwWeights(w_r + eps, w_f + eps, branch)


def combine_direction(g: GradientPair, w: AwWeights) -> np.ndarray:
    """d = w_r g_r + w_f g_f."""
    k = g.g_r.size
    _tick(3, 3 * k)  # scale g_r, scale g_f, sum
    return w.w_r * g.g_r + w.w_f * g.g_f


def is_degenerate_direction(d, g: GradientPair, w: AwWeights) -> bool:
    """True when the combination cancels: |d| < 1e-10 * (|w_r||g_r| + |w_f||g_f|)."""
    scale = abs(w.w_r) * float(np.linalg.norm(g.g_r)) + abs(w.w_f) * float(np.linalg.norm(g.g_f))
    return float(np.linalg.norm(_vec(d))) < DEGENERATE_DIRECTION * scale
