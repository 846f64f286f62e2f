"""Self-check suites run by ``awgan verify``.

Each suite returns a :class:`SuiteResult`; nothing here raises on a failed
property, so one report can cover every suite.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .autodiff import numeric_gradient
from .awweights import (
    AwConfig,
    GradientPair,
    ScoreStats,
    aw_select,
    bisector_weights,
    combine_direction,
    count_vector_passes,
    favor_fake_weights,
    favor_fake_weights_nonnorm,
    favor_real_weights,
    favor_real_weights_nonnorm,
    select_branch,
)
from .losses import (
    DiscreteDistribution,
    discriminator_pair,
    minimax_value,
    optimal_discriminator,
    value_decomposition_check,
)
from .nn import LEAKY_SLOPE, flatten, flatten_grads, mlp_init, unflatten
from .trainer import TrainConfig, draw_batches, init_state, discriminator_step, generator_step

DEFAULT_DIMS = (2, 10, 1000, 10000)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str
    skipped: bool = False

    def line(self) -> str:
        status = "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")
        return f"[{status}] {self.name}: {self.detail}"


def robust_angle(u: np.ndarray, v: np.ndarray) -> float:
    """Angle in radians via 2*atan2(|u^ - v^|, |u^ + v^|); accurate near 0 and pi."""
    uh = u / np.linalg.norm(u)
    vh = v / np.linalg.norm(v)
    return 2.0 * math.atan2(float(np.linalg.norm(uh - vh)), float(np.linalg.norm(uh + vh)))


def _rel_orth(d: np.ndarray, g: np.ndarray) -> float:
    return abs(float(np.dot(d, g))) / (float(np.linalg.norm(d)) * float(np.linalg.norm(g)))


def geometry_suite(dims=DEFAULT_DIMS, pairs: int = 1000, seed: int = 0, epsilon: float = 0.0) -> SuiteResult:
    """Bisector and favor-* identities for the normalized and non-normalized weights."""
    name = "geometry (bisector / orthogonality)"
    if epsilon != 0.0:
        return SuiteResult(name, True, f"skipped: exact identities need epsilon=0, got {epsilon}", skipped=True)
    rng = np.random.default_rng(seed)
    worst = {"bisector": 0.0, "half": 0.0, "orth": 0.0, "acute": 0.0, "scaling": 0.0}
    for dim in dims:
        for _ in range(pairs):
            g_r, g_f = rng.standard_normal(dim), rng.standard_normal(dim)
            g = GradientPair(g_r, g_f)

            w = bisector_weights(g)
            d = combine_direction(g, w)
            a_r, a_f, a_rf = robust_angle(d, g_r), robust_angle(d, g_f), robust_angle(g_r, g_f)
            worst["bisector"] = max(worst["bisector"], abs(a_r - a_f))
            worst["half"] = max(worst["half"], abs(a_r - a_rf / 2))

            for fav, fav_nn, other, favored in (
                (favor_real_weights, favor_real_weights_nonnorm, g_f, g_r),
                (favor_fake_weights, favor_fake_weights_nonnorm, g_r, g_f),
            ):
                d1 = combine_direction(g, fav(g))
                d2 = combine_direction(g, fav_nn(g))
                for dd in (d1, d2):
                    worst["orth"] = max(worst["orth"], _rel_orth(dd, other))
                    worst["acute"] = min(worst["acute"], float(np.dot(dd, favored)))
                c = float(np.dot(d1, d2)) / (float(np.linalg.norm(d1)) * float(np.linalg.norm(d2)))
                worst["scaling"] = max(worst["scaling"], 1.0 - c)
    ok = (worst["bisector"] < 1e-9 and worst["half"] < 1e-9 and worst["orth"] < 1e-9
          and worst["acute"] >= -1e-12 and worst["scaling"] < 1e-9)
    detail = (f"dims={list(dims)} pairs={pairs}; max|a_r-a_f|={worst['bisector']:.2e} "
              f"max|a_r-a_rf/2|={worst['half']:.2e} max|cos orth|={worst['orth']:.2e} "
              f"min<d,favored>={worst['acute']:.2e} max(1-cos(norm,nonnorm))={worst['scaling']:.2e}")
    return SuiteResult(name, ok, detail)


def random_distribution(rng: np.random.Generator, m: int, zero_prob: float = 0.2) -> np.ndarray:
    p = rng.random(m) * (rng.random(m) > zero_prob)
    if p.sum() == 0:
        p[rng.integers(m)] = 1.0
    p = p / p.sum()
    # Push the rounding residue into the largest entry so the sum is exactly 1 within 1e-12.
    p[np.argmax(p)] += 1.0 - p.sum()
    return p


def grid_argmax(a: float, b: float, resolution: float = 1e-6) -> float:
    """argmax over t in (0, 1) of a log t + b log(1 - t) on a uniform grid."""
    t = np.arange(resolution, 1.0, resolution)
    with np.errstate(divide="ignore"):
        vals = (a * np.log(t) if a > 0 else 0.0) + (b * np.log1p(-t) if b > 0 else 0.0)
    return float(t[int(np.argmax(vals))])


def theorem1_suite(pairs: int = 100, m: int = 4, seed: int = 1) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst_d = worst_res = 0.0
    for _ in range(pairs):
        pd = DiscreteDistribution(random_distribution(rng, m))
        pg = DiscreteDistribution(random_distribution(rng, m))
        w_r, w_f = rng.uniform(0.1, 10.0, size=2)
        d_star = optimal_discriminator(pd, pg, w_r, w_f)
        for i in range(m):
            a, b = w_r * pd.p[i], w_f * pg.p[i]
            if a + b == 0:
                continue
            if b == 0:
                target = 1.0
            elif a == 0:
                target = 0.0
            else:
                target = grid_argmax(a, b)
            worst_d = max(worst_d, abs(d_star[i] - target))
        worst_res = max(worst_res, value_decomposition_check(pd, pg, w_r, w_f)[2])
    mm = abs(minimax_value(1.0, 1.0) + 2.0 * math.log(2.0))
    ok = worst_d < 1e-5 and worst_res < 1e-9 and mm < 1e-12
    return SuiteResult("theorem-1 oracle / decomposition", ok,
                       f"max|D*-grid|={worst_d:.2e} max residual={worst_res:.2e} |minimax(1,1)+2ln2|={mm:.2e}")


def _kink_free(model, x, family, margin: float = 1e-4) -> bool:
    h = x
    for layer in model.layers:
        pre = h @ layer.weight.T + layer.bias
        if layer.activation == "leaky_relu" and np.any(np.abs(pre) < margin):
            return False
        h = np.where(pre > 0, pre, LEAKY_SLOPE * pre) if layer.activation == "leaky_relu" else (
            np.tanh(pre) if layer.activation == "tanh" else pre)
    if family == "hinge":
        if np.any(np.abs(h - 1.0) < margin) or np.any(np.abs(h + 1.0) < margin):
            return False
    return True


def finite_difference_suite(trials: int = 4, seed: int = 2, step: float = 1e-5) -> SuiteResult:
    """Analytic vs central-difference gradients of 3-layer MLP discriminator losses."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    attempts = 0
    while done < trials and attempts < 100 * trials:
        attempts += 1
        model = mlp_init([2, 6, 5, 1], ["leaky_relu", "tanh", "linear"], int(rng.integers(2**31)))
        real, fake = rng.uniform(-2, 2, (7, 2)), rng.uniform(-2, 2, (5, 2))
        family = ("bce", "hinge")[done % 2]
        if not (_kink_free(model, real, family) and _kink_free(model, fake, family)):
            continue
        pair, _, _ = discriminator_pair(model, real, fake, family)
        vec = flatten(model)
        for part, grads in (("real", pair.real_grad()), ("fake", pair.fake_grad())):
            analytic = flatten_grads(grads, vec.layout, "D.").data

            def f(theta, part=part):
                p, _, _ = discriminator_pair(unflatten(theta, vec.layout), real, fake, family)
                return p.real if part == "real" else p.fake

            numeric = numeric_gradient(f, vec.data, step)
            scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-300)
            worst = max(worst, float(np.linalg.norm(analytic - numeric) / scale))
        done += 1
    ok = done == trials and worst < 1e-5
    return SuiteResult("finite differences", ok, f"{done} models, both families; max rel err={worst:.2e}")


def _kink_signature(model, x, family) -> list[np.ndarray]:
    """Which side of every kink each sample sits on (leaky units, and hinge margins)."""
    sides = []
    h = x
    for layer in model.layers:
        pre = h @ layer.weight.T + layer.bias
        if layer.activation == "leaky_relu":
            sides.append(pre > 0)
        h = np.where(pre > 0, pre, LEAKY_SLOPE * pre) if layer.activation == "leaky_relu" else (
            np.tanh(pre) if layer.activation == "tanh" else pre)
    if family == "hinge":
        sides += [h > 1.0, h > -1.0]
    return sides


TAYLOR_LADDER = (1.0, 1 / 2, 1 / 5, 1 / 10, 1 / 20, 1 / 50)


def _smooth_ladder(theta, d, layout, batches, family, start: float = 1e-2, floor: float = 1e-6) -> np.ndarray:
    # Shrink the step range until no sample crosses a kink anywhere on the ladder;
    # past the floor, roundoff would swamp the quadratic term anyway.
    base = [_kink_signature(unflatten(theta, layout), x, family) for x in batches]
    top = start
    while top > floor:
        lams = top * np.array(TAYLOR_LADDER)
        if all(all(np.array_equal(a, b) for a, b in
                   zip(base[k], _kink_signature(unflatten(theta + lam * d, layout), x, family)))
               for lam in lams for k, x in enumerate(batches)):
            return lams
        top /= 3.0
    return top * np.array(TAYLOR_LADDER)


def taylor_remainders(cfg: TrainConfig, warmup: int = 300, lambdas=None):
    """First-order Taylor remainders of L_r and L_f along the adaptive direction.

    Returns ``(lambdas, remainders_r, remainders_f)`` at a state reached after
    ``warmup`` generator iterations. Without explicit ``lambdas`` the step sizes
    are chosen so the path crosses no activation kink.
    """
    state = init_state(cfg)
    for _ in range(warmup):
        real, fake = draw_batches(state, cfg)
        discriminator_step(state, real, fake, cfg)
        generator_step(state, state.latent_rng.standard_normal((cfg.batch_size, cfg.latent_dim)), cfg)
    real, fake = draw_batches(state, cfg)
    disc = state.discriminator
    pair, rl, fl = discriminator_pair(disc, real, fake, cfg.loss)
    layout = state.disc.layout
    g = GradientPair(flatten_grads(pair.real_grad(), layout, "D.").data,
                     flatten_grads(pair.fake_grad(), layout, "D.").data)
    aw_cfg = dataclasses.replace(cfg.aw, normalized=cfg.mode != "aw-nonnormalized")
    d = combine_direction(g, aw_select(g, ScoreStats.from_logits(rl, fl), aw_cfg))
    d = d / np.linalg.norm(d)
    theta = state.disc.data
    if lambdas is None:
        lambdas = _smooth_ladder(theta, d, layout, (real, fake), cfg.loss)
    lambdas = np.asarray(lambdas, dtype=np.float64)
    rem_r, rem_f = [], []
    for lam in lambdas:
        moved, _, _ = discriminator_pair(unflatten(theta + lam * d, layout), real, fake, cfg.loss)
        rem_r.append(abs(moved.real - pair.real - lam * float(np.dot(g.g_r, d))))
        rem_f.append(abs(moved.fake - pair.fake - lam * float(np.dot(g.g_f, d))))
    return lambdas, np.array(rem_r), np.array(rem_f)


def loglog_slope(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def taylor_suite(cfg: TrainConfig | None = None) -> SuiteResult:
    cfg = cfg or TrainConfig(iterations=300)
    lam, rr, rf = taylor_remainders(cfg)
    s_r, s_f = loglog_slope(lam, rr), loglog_slope(lam, rf)
    ok = abs(s_r - 2.0) <= 0.2 and abs(s_f - 2.0) <= 0.2
    return SuiteResult("taylor remainder slope", ok, f"slope L_r={s_r:.3f} slope L_f={s_f:.3f} (target 2 +- 0.2)")


# Selection ladder written out case by case:
# key = (sign(s_r - (s_f - delta)), sign(s_r - alpha1), sign(s_r - alpha2), obtuse) -> branch
BRANCH_TABLE = {
    (-1, -1, -1, True): 1, (-1, -1, -1, False): 2,
    (-1, 0, -1, True): 1, (-1, 0, -1, False): 2,
    (-1, 1, -1, True): 1, (-1, 1, -1, False): 2,
    (-1, 1, 0, True): 1, (-1, 1, 0, False): 2,
    (-1, 1, 1, True): 1, (-1, 1, 1, False): 2,
    (0, -1, -1, True): 1, (0, -1, -1, False): 2,
    (0, 0, -1, True): 5, (0, 0, -1, False): 5,
    (0, 1, -1, True): 5, (0, 1, -1, False): 5,
    (0, 1, 0, True): 5, (0, 1, 0, False): 5,
    (0, 1, 1, True): 5, (0, 1, 1, False): 5,
    (1, -1, -1, True): 1, (1, -1, -1, False): 2,
    (1, 0, -1, True): 5, (1, 0, -1, False): 5,
    (1, 1, -1, True): 5, (1, 1, -1, False): 5,
    (1, 1, 0, True): 5, (1, 1, 0, False): 5,
    (1, 1, 1, True): 3, (1, 1, 1, False): 4,
}


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


def _exact_tie(s_r: float, delta: float) -> tuple[float, float]:
    """A float pair with ``s_f - delta == s_r`` exactly, keeping ``s_r`` if possible."""
    up = down = s_r + delta
    for _ in range(64):
        for s_f in (up, down):
            if s_f - delta == s_r:
                return s_r, s_f
        up, down = float(np.nextafter(up, np.inf)), float(np.nextafter(down, -np.inf))
    s_f = s_r + delta
    return s_f - delta, s_f


def score_grid(cfg: AwConfig) -> list[tuple[float, float]]:
    """Score pairs in [0, 1] hitting every feasible sign pattern, including exact ties."""
    pairs = []
    for s_r in (0.1, cfg.alpha1, (cfg.alpha1 + cfg.alpha2) / 2, cfg.alpha2, 0.9):
        tie = s_r + cfg.delta
        pairs.append((s_r, tie / 2))
        pairs.append((s_r, tie + (1.0 - tie) / 2))
        pairs.append(_exact_tie(s_r, cfg.delta))
    return pairs


def branch_table_suite(cfg: AwConfig | None = None) -> SuiteResult:
    cfg = cfg or AwConfig()
    mismatches = []
    seen = set()
    for s_r, s_f in score_grid(cfg):
        for obtuse in (True, False):
            key = (_sign(s_r - (s_f - cfg.delta)), _sign(s_r - cfg.alpha1), _sign(s_r - cfg.alpha2), obtuse)
            seen.add(key)
            got = select_branch(s_r, s_f, obtuse, cfg)
            g = GradientPair(np.array([1.0, 0.0]), np.array([-1.0 if obtuse else 1.0, 1.0]))
            via_select = aw_select(g, ScoreStats(s_r, s_f), cfg).branch
            if got != BRANCH_TABLE[key] or via_select != BRANCH_TABLE[key]:
                mismatches.append((s_r, s_f, obtuse, got, via_select, BRANCH_TABLE[key]))
    ok = not mismatches and seen == set(BRANCH_TABLE)
    return SuiteResult("branch table", ok,
                       f"{len(seen)}/{len(BRANCH_TABLE)} sign patterns covered, {len(mismatches)} mismatches")


def budget_suite(k: int = 4417, seed: int = 3) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst_passes = worst_flops = 0
    for normalized in (True, False):
        for s_r, s_f in ((0.3, 0.9), (0.9, 0.2), (0.6, 0.6)):
            for sign in (-1.0, 1.0):
                g_r = rng.standard_normal(k)
                g_f = sign * np.abs(g_r) * np.sign(g_r) + 0.1 * rng.standard_normal(k)
                g = GradientPair(g_r, g_f)
                with count_vector_passes() as counter:
                    w = aw_select(g, ScoreStats(s_r, s_f), AwConfig(normalized=normalized))
                    combine_direction(g, w)
                worst_passes = max(worst_passes, counter.passes)
                worst_flops = max(worst_flops, counter.flops)
    ok = worst_passes <= 9 and worst_flops <= 9 * k
    return SuiteResult("operation budget", ok,
                       f"max vector passes={worst_passes} (<= 9), max flops={worst_flops} (<= 9k = {9 * k})")


def run_all(dims=DEFAULT_DIMS, pairs: int = 1000, epsilon: float = 0.0) -> list[SuiteResult]:
    return [
        geometry_suite(dims, pairs, epsilon=epsilon),
        theorem1_suite(),
        finite_difference_suite(),
        taylor_suite(),
        branch_table_suite(),
        budget_suite(),
    ]
