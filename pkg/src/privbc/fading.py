"""Ergodic rate pairs over block-fading channels.

Gains are magnitude-squared values. With a circularly symmetric complex
model the per-block rates use ``ln`` rather than ``1/2 ln``:

    A1 = [ln(1 + Q h) - ln(1 + Q g)]^+
    A2 = [ln((1 + P g)/(1 + Q g)) - ln((1 + P h)/(1 + Q h))]^+

for a group-1 receiver with gain ``h`` and the group-2 receiver with gain
``g``. ``R1 = min_k E[A1_k]`` and ``R2 = min_k E[A2_k]``; the minimum is
taken over the per-receiver expectations.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .gaussian import RatePair, _a1, _a2

log = logging.getLogger(__name__)

__all__ = [
    "GainLaw",
    "FadingScenario",
    "Threshold",
    "ConstantSplit",
    "Tabulated",
    "QuantGrid",
    "McEstimate",
    "fading_rates_mc",
    "threshold_curve",
    "threshold_rates",
    "quantized_rates",
    "weighted_state_rates",
    "time_sharing_baseline",
    "exponential_theta_grid",
    "fig2_sweep",
    "worker_count",
]

N_BATCHES = 32


def worker_count() -> int:
    env = os.environ.get("RBC_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"RBC_THREADS must be a positive integer, got {env!r}") from None
        if n < 1:
            raise ValueError(f"RBC_THREADS must be a positive integer, got {env!r}")
        return n
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1


@dataclass(frozen=True)
class GainLaw:
    """Law of a magnitude-squared gain: ``exponential`` (Rayleigh fading)
    with the given mean, or ``gamma`` (Nakagami) with ``shape`` and mean."""

    kind: str = "exponential"
    mean: float = 1.0
    shape: float = 1.0

    def __post_init__(self):
        if self.kind not in ("exponential", "gamma"):
            raise ValueError(f"unknown gain law {self.kind!r}")
        if not (self.mean > 0 and self.shape > 0):
            raise ValueError("gain mean and shape must be positive")

    def sample(self, rng, n):
        if self.kind == "exponential":
            return rng.exponential(self.mean, n)
        return rng.gamma(self.shape, self.mean / self.shape, n)

    def cell_mass(self, lo, hi):
        """P(lo <= gain < hi), closed form for exponential laws."""
        if self.kind != "exponential":
            raise NotImplementedError
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        return np.exp(-lo / self.mean) - np.exp(-hi / self.mean)

    def quantile(self, u):
        if self.kind == "exponential":
            return stats.expon.ppf(u, scale=self.mean)
        return stats.gamma.ppf(u, self.shape, scale=self.mean / self.shape)


@dataclass(frozen=True)
class FadingScenario:
    K: int
    power: float
    seed: int = 0
    h: tuple = ()
    g: GainLaw = field(default_factory=GainLaw)

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if not (self.power > 0 and math.isfinite(self.power)):
            raise ValueError("power budget must be positive and finite")
        h = tuple(self.h) if self.h else (GainLaw(),) * self.K
        if len(h) != self.K:
            raise ValueError(f"{len(h)} gain laws given for K={self.K} receivers")
        object.__setattr__(self, "h", h)

    def with_power(self, power: float) -> "FadingScenario":
        return FadingScenario(self.K, power, self.seed, self.h, self.g)

    def sample(self, rng, n):
        """Gains ``(h, g)`` with ``h`` of shape (n, K)."""
        h = np.column_stack([law.sample(rng, n) for law in self.h])
        return h, self.g.sample(rng, n)


# --------------------------------------------------------------------------
# policies
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Threshold:
    """Full power every block; ``Q = P`` when ``g < theta``, else ``Q = 0``."""

    theta: float

    def __post_init__(self):
        if not self.theta >= 0:
            raise ValueError("theta must be nonnegative")

    def powers(self, budget, h, g):
        p = np.full(g.shape, budget)
        return p, np.where(g < self.theta, budget, 0.0)


@dataclass(frozen=True)
class ConstantSplit:
    """Full power every block and ``Q = fraction * P``."""

    fraction: float

    def __post_init__(self):
        if not 0 <= self.fraction <= 1:
            raise ValueError("fraction must lie in [0, 1]")

    def powers(self, budget, h, g):
        p = np.full(g.shape, budget)
        return p, self.fraction * p


@dataclass(frozen=True, eq=False)
class QuantGrid:
    """Finite levels ``0 = A_1 < ... < A_{N+1} = J`` plus the tail cell
    ``[J, inf)``; every gain falls into one of ``N + 1`` cells."""

    levels: np.ndarray

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=float)
        if lv.ndim != 1 or lv.size < 2 or lv[0] != 0 or not np.all(np.diff(lv) > 0) \
                or not np.isfinite(lv[-1]):
            raise ValueError("levels must be finite, strictly increasing and start at 0")
        lv.setflags(write=False)
        object.__setattr__(self, "levels", lv)

    @classmethod
    def uniform(cls, n: int, j: float) -> "QuantGrid":
        if n < 1:
            raise ValueError("N must be at least 1")
        return cls(np.linspace(0.0, j, n + 1))

    @property
    def N(self) -> int:
        return self.levels.size - 1

    @property
    def n_cells(self) -> int:
        return self.N + 1

    @property
    def floors(self) -> np.ndarray:
        return self.levels.copy()

    @property
    def ceilings(self) -> np.ndarray:
        return np.append(self.levels[1:], np.inf)

    def cell_of(self, gain) -> np.ndarray:
        return np.searchsorted(self.levels, gain, side="right") - 1

    def n_states(self, k: int) -> int:
        return self.n_cells ** (k + 1)


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Per-state powers on a grid; arrays have shape ``(cells,)*(K+1)`` with
    the group-2 gain on the last axis."""

    grid: QuantGrid
    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p, q = np.asarray(self.p, dtype=float), np.asarray(self.q, dtype=float)
        if p.shape != q.shape or any(s != self.grid.n_cells for s in p.shape):
            raise ValueError("power tables must have one entry per grid state")
        if np.any(q < 0) or np.any(q > p):
            raise ValueError("tabulated policy needs 0 <= Q <= P in every state")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @property
    def K(self) -> int:
        return self.p.ndim - 1

    @classmethod
    def threshold(cls, grid: QuantGrid, k: int, power: float, theta: float) -> "Tabulated":
        """Tabulated form of ``Threshold(theta)``; theta must be a grid level
        (or infinite) so that every cell lies on one side of it."""
        if math.isfinite(theta) and not np.any(np.isclose(grid.levels, theta, rtol=0,
                                                          atol=1e-12)):
            raise ValueError(f"theta={theta} is not a level of the grid")
        shape = (grid.n_cells,) * (k + 1)
        below = grid.ceilings <= theta + 1e-12
        q = np.broadcast_to(np.where(below, power, 0.0), shape).copy()
        return cls(grid, np.full(shape, float(power)), q)

    def powers(self, budget, h, g):
        idx = tuple(self.grid.cell_of(h[:, k]) for k in range(h.shape[1])) \
            + (self.grid.cell_of(g),)
        return self.p[idx], self.q[idx]


# --------------------------------------------------------------------------
# Monte Carlo
# --------------------------------------------------------------------------

def _terms(p, q, h, g):
    """Per-sample (A1, A2), each (n, K)."""
    p, q, g = p[:, None], q[:, None], g[:, None]
    a1 = np.maximum(np.log1p(q * h) - np.log1p(q * g), 0.0)
    a2 = np.maximum(np.log1p(p * g) - np.log1p(q * g) - np.log1p(p * h) + np.log1p(q * h), 0.0)
    return a1, a2


def _batch_sizes(n):
    nb = min(N_BATCHES, n)
    base, extra = divmod(n, nb)
    return [base + (b < extra) for b in range(nb)]


def _batch_rng(seed, b):
    return np.random.default_rng(np.random.SeedSequence([int(seed), b]))


def _map_batches(fn, sizes, workers):
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(sizes) == 1:
        return [fn(b, n) for b, n in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(len(sizes)), sizes))


def _combine(batch_means, sizes):
    """Pooled mean and batch-means standard error along axis 0."""
    w = np.asarray(sizes, dtype=float)
    w = w / w.sum()
    mean = np.tensordot(w, batch_means, axes=1)
    nb = len(sizes)
    if nb < 2:
        return mean, np.full(np.shape(mean), np.nan)
    spread = np.tensordot(w, (batch_means - mean) ** 2, axes=1)
    return mean, np.sqrt(spread * nb / (nb - 1) / nb)


@dataclass
class McEstimate:
    rates: RatePair
    r1_se: float
    r2_se: float
    per_receiver: tuple  # (E[A1_k], E[A2_k]) arrays of length K
    mean_power: float
    power_se: float
    power_warning: bool


def fading_rates_mc(scenario: FadingScenario, policy, n_samples: int, *,
                    workers: int | None = None) -> McEstimate:
    """Sample-mean estimates of both ergodic rates under ``policy``.

    Samples are drawn in 32 batches seeded by ``(seed, batch)``; the result
    does not depend on the number of workers.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    sizes = _batch_sizes(n_samples)

    def batch(b, n):
        h, g = scenario.sample(_batch_rng(scenario.seed, b), n)
        p, q = policy.powers(scenario.power, h, g)
        a1, a2 = _terms(p, q, h, g)
        return np.concatenate([a1.mean(axis=0), a2.mean(axis=0), [p.mean()]])

    means, ses = _combine(np.array(_map_batches(batch, sizes, workers)), sizes)
    k = scenario.K
    e1, e2 = means[:k], means[k:2 * k]
    k1, k2 = int(np.argmin(e1)), int(np.argmin(e2))
    power, power_se = float(means[-1]), float(ses[-1])
    warn = bool(power > scenario.power + 3 * (power_se if np.isfinite(power_se) else 0.0))
    if warn:
        log.warning("policy spends %.6g on average against a budget of %.6g",
                    power, scenario.power)
    return McEstimate(RatePair(float(e1[k1]), float(e2[k2])), float(ses[k1]),
                      float(ses[k + k2]), (e1, e2), power, power_se, warn)


@dataclass
class ThresholdCurve:
    theta: np.ndarray
    r1: np.ndarray
    r1_se: np.ndarray
    r2: np.ndarray
    r2_se: np.ndarray
    power: float

    def rate_pairs(self):
        return [RatePair(float(a), float(b)) for a, b in zip(self.r1, self.r2)]


def threshold_curve(scenario: FadingScenario, thetas, n_samples: int, *,
                    workers: int | None = None) -> ThresholdCurve:
    """Threshold-policy rates for every ``theta`` from one set of samples.

    All thresholds share the same gain draws, so the curve is exactly
    monotone: R1 nondecreasing and R2 nonincreasing in theta.
    """
    thetas = np.asarray(thetas, dtype=float)
    if np.any(~(thetas >= 0)):
        raise ValueError("theta must be nonnegative")
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    sizes = _batch_sizes(n_samples)
    budget = scenario.power
    k = scenario.K

    def batch(b, n):
        h, g = scenario.sample(_batch_rng(scenario.seed, b), n)
        order = np.argsort(g, kind="stable")
        g, h = g[order], h[order]
        d = np.log1p(budget * h) - np.log1p(budget * g[:, None])
        zeros = np.zeros((1, k))
        c1 = np.vstack([zeros, np.cumsum(np.maximum(d, 0.0), axis=0)])
        c2 = np.vstack([zeros, np.cumsum(np.maximum(-d, 0.0), axis=0)])
        cut = np.searchsorted(g, thetas, side="left")  # samples with g < theta
        s1 = c1[cut] / n
        s2 = (c2[-1] - c2[cut]) / n
        return np.concatenate([s1, s2], axis=1)  # (T, 2K)

    means, ses = _combine(np.array(_map_batches(batch, sizes, workers)), sizes)
    e1, e2 = means[:, :k], means[:, k:]
    k1, k2 = np.argmin(e1, axis=1), np.argmin(e2, axis=1)
    rows = np.arange(len(thetas))
    return ThresholdCurve(thetas, e1[rows, k1], ses[rows, k1], e2[rows, k2],
                          ses[rows, k + k2], budget)


def threshold_rates(scenario: FadingScenario, theta: float, n_samples: int, **kw):
    """``(RatePair, r1_se, r2_se)`` of the threshold policy at ``theta``."""
    c = threshold_curve(scenario, [theta], n_samples, **kw)
    return RatePair(float(c.r1[0]), float(c.r2[0])), float(c.r1_se[0]), float(c.r2_se[0])


# --------------------------------------------------------------------------
# quantization grid
# --------------------------------------------------------------------------

def _cell_masses(law: GainLaw, grid: QuantGrid, mc_samples: int, seed: int):
    try:
        return law.cell_mass(grid.floors, grid.ceilings)
    except NotImplementedError:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 10_007]))
        cells = grid.cell_of(law.sample(rng, mc_samples))
        return np.bincount(cells, minlength=grid.n_cells) / mc_samples


def _pessimistic_a1(q, h_floor, g_ceil):
    # ln(1+Qh) - ln(1+Qg); an infinite eavesdropper ceiling kills the term
    with np.errstate(invalid="ignore"):
        val = np.log1p(q * h_floor) - np.where(np.isinf(g_ceil), np.inf, np.log1p(q * g_ceil))
    val = np.where((q == 0), 0.0, val)
    return np.maximum(val, 0.0)


def _pessimistic_a2(p, q, g_floor, h_ceil):
    # ln((1+Pg)/(1+Qg)) - ln((1+Ph)/(1+Qh)); the second term tends to ln(P/Q)
    # (or infinity when Q = 0) for an unbounded gain
    with np.errstate(divide="ignore", invalid="ignore"):
        finite = np.log1p(p * h_ceil) - np.log1p(q * h_ceil)
        tail = np.where(q > 0, np.log(p / np.where(q > 0, q, 1.0)), np.inf)
        leak = np.where(np.isinf(h_ceil), tail, finite)
        val = np.log1p(p * g_floor) - np.log1p(q * g_floor) - leak
    val = np.where(p == q, 0.0, val)
    return np.maximum(np.nan_to_num(val, nan=0.0, neginf=0.0), 0.0)


def quantized_rates(scenario: FadingScenario, grid: QuantGrid, policy: Tabulated, *,
                    mc_samples: int = 1_000_000) -> RatePair:
    """Rate pair of a tabulated policy using pessimistic per-state gains.

    The intended receiver of each message is credited with the floor of its
    cell and the other side with the ceiling. State probabilities are exact
    for exponential gains and estimated otherwise.
    """
    if not isinstance(policy, Tabulated) or policy.grid is not grid and \
            not np.array_equal(policy.grid.levels, grid.levels):
        raise ValueError("policy must be tabulated on the same grid")
    k = scenario.K
    if policy.K != k:
        raise ValueError(f"policy tabulated for K={policy.K}, scenario has K={k}")
    fl, ce = grid.floors, grid.ceilings
    masses = [_cell_masses(law, grid, mc_samples, scenario.seed) for law in scenario.h]
    g_mass = _cell_masses(scenario.g, grid, mc_samples, scenario.seed)
    shape = (grid.n_cells,) * (k + 1)

    def along(vec, axis):
        s = [1] * (k + 1)
        s[axis] = -1
        return vec.reshape(s)

    prob = along(g_mass, k)
    for j in range(k):
        prob = prob * along(masses[j], j)
    prob = np.broadcast_to(prob, shape)
    g_floor, g_ceil = along(fl, k), along(ce, k)
    r1 = np.empty(k)
    r2 = np.empty(k)
    for j in range(k):
        a1 = _pessimistic_a1(policy.q, along(fl, j), g_ceil)
        a2 = _pessimistic_a2(policy.p, policy.q, g_floor, along(ce, j))
        r1[j] = np.sum(prob * a1)
        r2[j] = np.sum(prob * a2)
    return RatePair(float(r1.min()), float(r2.min()))


# --------------------------------------------------------------------------
# finite state mixtures and baselines
# --------------------------------------------------------------------------

def weighted_state_rates(states) -> RatePair:
    """Rates of a channel that is in state ``j`` with probability ``p_j``.

    ``states`` holds tuples ``(p_j, (sigma_sq_1..sigma_sq_K, delta_sq), P_j, Q_j)``
    of a real Gaussian channel; the minimum over receivers is taken after
    averaging over states.
    """
    if not states:
        raise ValueError("need at least one state")
    probs = np.array([s[0] for s in states], dtype=float)
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError(f"state probabilities must be nonnegative and sum to 1, "
                         f"got sum {probs.sum():.12g}")
    k = len(states[0][1]) - 1
    r1 = np.zeros(k)
    r2 = np.zeros(k)
    for prob, noise, p, q in states:
        if len(noise) != k + 1:
            raise ValueError("every state needs K group-1 variances and one group-2 variance")
        if not 0 <= q <= p:
            raise ValueError(f"need 0 <= Q <= P in every state, got Q={q}, P={p}")
        sig = np.asarray(noise[:k], dtype=float)
        dlt = float(noise[k])
        if np.any(sig <= 0) or dlt <= 0:
            raise ValueError("noise variances must be positive")
        r1 += prob * _a1(q, sig, dlt)
        r2 += prob * _a2(p, q, sig, dlt)
    return RatePair(float(r1.min()), float(r2.min()))


def time_sharing_baseline(corner1: RatePair, corner2: RatePair, lam: float) -> RatePair:
    """Fraction ``lam`` of the time at ``corner1``, the rest at ``corner2``."""
    if not 0 <= lam <= 1:
        raise ValueError("lambda must lie in [0, 1]")
    return RatePair(lam * corner1.r1 + (1 - lam) * corner2.r1,
                    lam * corner1.r2 + (1 - lam) * corner2.r2)


def exponential_theta_grid(n: int, law: GainLaw = GainLaw()) -> np.ndarray:
    """``n`` thresholds at equally spaced quantiles of the group-2 gain,
    from 0 up to infinity inclusive."""
    if n < 2:
        raise ValueError("need at least two theta points")
    u = np.arange(n) / (n - 1)
    out = np.empty(n)
    out[:-1] = law.quantile(u[:-1])
    out[-1] = np.inf
    return out


@dataclass
class Fig2Data:
    curves: dict  # P -> ThresholdCurve
    chords: dict  # P -> (R1 corner pair, R2 corner pair)


def fig2_sweep(p_list, theta_grid, n_samples: int, *, seed: int = 7, k: int = 1,
               workers: int | None = None) -> Fig2Data:
    """Threshold curves for every power level, sharing gain draws across P,
    and the time-sharing chords between each curve's corners."""
    p_list = list(p_list)
    theta_grid = np.asarray(theta_grid, dtype=float)
    if not p_list or theta_grid.size == 0:
        raise ValueError("need at least one power level and one theta")
    ends = np.concatenate([theta_grid, [0.0, np.inf]])
    curves, chords = {}, {}
    for p in p_list:
        scen = FadingScenario(k, float(p), seed)
        full = threshold_curve(scen, ends, n_samples, workers=workers)
        t = len(theta_grid)
        curves[p] = ThresholdCurve(theta_grid, full.r1[:t], full.r1_se[:t], full.r2[:t],
                                   full.r2_se[:t], float(p))
        chords[p] = (RatePair(float(full.r1[-1]), 0.0), RatePair(0.0, float(full.r2[-2])))
    return Fig2Data(curves, chords)
