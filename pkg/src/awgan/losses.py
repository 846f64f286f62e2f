"""Real/fake discriminator objectives, generator losses, and the discrete optimality oracle.

Sign convention: discriminator components ``L_r`` and ``L_f`` are quantities
to *maximize*. Generator losses are quantities to *minimize*.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Graph, Node
from .nn import Mlp

FAMILIES = ("bce", "hinge")
GENERATOR_FAMILIES = ("bce-nonsaturating", "hinge")


# -- graph heads ----------------------------------------------------------------


def real_term(g: Graph, logits: Node, family: str) -> Node:
    """bce: mean log sigmoid(D(x)); hinge: mean min(0, D(x) - 1)."""
    if family == "bce":
        return g.mean(g.log_sigmoid(logits))
    if family == "hinge":
        return g.mean(g.minimum(g.sub(logits, g.const(1.0)), 0.0))
    raise ValueError(f"unknown loss family {family!r}")


def fake_term(g: Graph, logits: Node, family: str) -> Node:
    """bce: mean log(1 - sigmoid(D(y))); hinge: mean min(0, -1 - D(y))."""
    if family == "bce":
        # log(1 - sigmoid(t)) == log sigmoid(-t)
        return g.mean(g.log_sigmoid(g.neg(logits)))
    if family == "hinge":
        return g.mean(g.minimum(g.sub(g.const(-1.0), logits), 0.0))
    raise ValueError(f"unknown loss family {family!r}")


def generator_term(g: Graph, logits: Node, family: str) -> Node:
    if family in ("bce", "bce-nonsaturating"):
        return g.neg(g.mean(g.log_sigmoid(logits)))
    if family == "hinge":
        return g.neg(g.mean(logits))
    raise ValueError(f"unknown generator loss family {family!r}")


# -- loss pairs -----------------------------------------------------------------


@dataclass
class LossPair:
    """``L_r`` and ``L_f`` with their own graphs; never pre-summed."""

    real: float
    fake: float
    real_graph: Graph
    fake_graph: Graph

    def real_grad(self) -> dict[str, np.ndarray]:
        return self.real_graph.backward()

    def fake_grad(self) -> dict[str, np.ndarray]:
        return self.fake_graph.backward()


def _logit_pair(real_logits, fake_logits, family: str) -> LossPair:
    real_logits = np.asarray(real_logits, dtype=np.float64)
    fake_logits = np.asarray(fake_logits, dtype=np.float64)
    gr = Graph()
    real_term(gr, gr.param("logits"), family)
    gf = Graph()
    fake_term(gf, gf.param("logits"), family)
    lr = float(gr.forward({"logits": real_logits}))
    lf = float(gf.forward({"logits": fake_logits}))
    return LossPair(lr, lf, gr, gf)


def bce_pair(real_logits, fake_logits) -> LossPair:
    """Cross-entropy components; gradients are taken w.r.t. the logits."""
    return _logit_pair(real_logits, fake_logits, "bce")


def hinge_pair(real_logits, fake_logits) -> LossPair:
    """Negative-hinge components; both are <= 0."""
    return _logit_pair(real_logits, fake_logits, "hinge")


def discriminator_pair(disc: Mlp, real: np.ndarray, fake: np.ndarray, family: str,
                       prefix: str = "D.") -> tuple[LossPair, np.ndarray, np.ndarray]:
    """Build the two loss graphs over the discriminator's parameters.

    Returns the pair plus the real and fake logits (shape ``(n,)``).
    """
    params = disc.bindings(prefix)

    gr = Graph()
    real_logits = disc.build(gr, gr.input("x"), prefix)
    real_out = real_term(gr, real_logits, family)
    lr = float(gr.forward({**params, "x": real}, real_out))

    gf = Graph()
    fake_logits = disc.build(gf, gf.input("x"), prefix)
    fake_out = fake_term(gf, fake_logits, family)
    lf = float(gf.forward({**params, "x": fake}, fake_out))

    pair = LossPair(lr, lf, gr, gf)
    return pair, gr.value(real_logits).reshape(-1), gf.value(fake_logits).reshape(-1)


def generator_loss(fake_logits, family: str = "bce-nonsaturating") -> float:
    """bce-nonsaturating: -mean log sigmoid(D(G(z))); hinge: -mean D(G(z))."""
    g = Graph()
    generator_term(g, g.param("logits"), family)
    return float(g.forward({"logits": np.asarray(fake_logits, dtype=np.float64)}))


# -- discrete optimality oracle -----------------------------------------------


@dataclass(frozen=True)
class DiscreteDistribution:
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probabilities must be a non-empty vector")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite and non-negative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "p", p)

    @property
    def m(self) -> int:
        return self.p.size


def _check_weights(w_r: float, w_f: float) -> None:
    if not (w_r > 0 and w_f > 0):
        raise ValueError(f"weights must be positive, got w_r={w_r}, w_f={w_f}")


def _xlogy(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """x * log(y) with 0 * log(anything) = 0."""
    x = np.asarray(x, dtype=np.float64)
    safe = np.where(x > 0, y, 1.0)
    return np.where(x > 0, x * np.log(safe), 0.0)


def _as_dist(d) -> DiscreteDistribution:
    return d if isinstance(d, DiscreteDistribution) else DiscreteDistribution(np.asarray(d))


def optimal_discriminator(p_d, p_g, w_r: float, w_f: float) -> np.ndarray:
    """D*_i = w_r p_d,i / (w_r p_d,i + w_f p_g,i); NaN off the joint support."""
    _check_weights(w_r, w_f)
    pd, pg = _as_dist(p_d).p, _as_dist(p_g).p
    if pd.shape != pg.shape:
        raise ValueError("distributions have different support sizes")
    num = w_r * pd
    den = num + w_f * pg
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


def aw_value(p_d, p_g, d: np.ndarray, w_r: float, w_f: float) -> float:
    """w_r sum p_d log D + w_f sum p_g log(1 - D), skipping points outside the joint support."""
    pd, pg = _as_dist(p_d).p, _as_dist(p_g).p
    d = np.asarray(d, dtype=np.float64)
    support = (pd + pg) > 0
    d = np.where(support, d, 0.5)
    return float(w_r * _xlogy(pd, d).sum() + w_f * _xlogy(pg, 1.0 - d).sum())


def minimax_value(w_r: float, w_f: float) -> float:
    _check_weights(w_r, w_f)
    s = w_r + w_f
    return float(_xlogy(w_r, w_r / s) + _xlogy(w_f, w_f / s))


def discrete_kl(p, q) -> float:
    """KL(p || q) = sum p log(p/q), with 0 log 0 = 0."""
    p, q = _as_dist(p).p, _as_dist(q).p
    if p.shape != q.shape:
        raise ValueError("distributions have different support sizes")
    if np.any((p > 0) & (q <= 0)):
        raise ValueError("p is not absolutely continuous with respect to q")
    safe_q = np.where(p > 0, q, 1.0)
    return float(max(0.0, (_xlogy(p, p) - _xlogy(p, safe_q)).sum()))


def value_decomposition_check(p_d, p_g, w_r: float, w_f: float) -> tuple[float, float, float]:
    """Compare max_D value against minimax_value + w_r KL(p_d||mix) + w_f KL(p_g||mix).

    Returns ``(lhs, rhs, |lhs - rhs|)``.
    """
    _check_weights(w_r, w_f)
    pd, pg = _as_dist(p_d), _as_dist(p_g)
    d_star = optimal_discriminator(pd, pg, w_r, w_f)
    lhs = aw_value(pd, pg, d_star, w_r, w_f)
    mix_p = (w_r * pd.p + w_f * pg.p) / (w_r + w_f)
    rhs = minimax_value(w_r, w_f) + w_r * _kl_raw(pd.p, mix_p) + w_f * _kl_raw(pg.p, mix_p)
    return lhs, rhs, abs(lhs - rhs)


def _kl_raw(p: np.ndarray, q: np.ndarray) -> float:
    # mix_p may miss the 1e-12 sum tolerance by rounding, so skip DiscreteDistribution.
    safe_q = np.where(p > 0, q, 1.0)
    return float((_xlogy(p, p) - _xlogy(p, safe_q)).sum())
