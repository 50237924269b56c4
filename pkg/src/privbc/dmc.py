"""Brute-force evaluation of the private broadcasting region of small
parallel degraded DMCs.

A scheme fixes, per sub-channel, an auxiliary law ``p(u)`` and a channel
``p(x|u)``; its rate pair is

    R1 = min_k sum_i I(x_i; y_ki | u_i, z_i),   R2 = min_k sum_i I(u_i; z_i | y_ki).

Information is in nats. ``0 log 0 = 0`` and masses below 1e-15 count as 0.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .channel import ChannelError, DegradedDMC, DegradationOrder
from .gaussian import RatePair

log = logging.getLogger(__name__)

__all__ = [
    "AuxiliaryScheme",
    "SizeGuardError",
    "entropy",
    "conditional_mi",
    "subchannel_terms",
    "dmc_rate_pair",
    "Frontier",
    "dmc_region_bruteforce",
    "bsc",
    "binary_channel",
    "degraded_pair",
    "quantized_gaussian",
]

TINY = 1e-15
JOINT_GUARD = 64


class SizeGuardError(ValueError):
    pass


def bsc(p: float) -> np.ndarray:
    return np.array([[1 - p, p], [p, 1 - p]])


def binary_channel(p01: float, p10: float) -> np.ndarray:
    """Binary asymmetric channel; ``p01`` = P(out=1 | in=0)."""
    return np.array([[1 - p01, p01], [p10, 1 - p10]])


def degraded_pair(strong: np.ndarray, link: np.ndarray):
    """``(strong, strong @ link)``; convenient for building degraded chains."""
    return strong, strong @ link


def _pam(levels: int, power: float):
    amp = np.arange(-(levels - 1), levels, 2, dtype=float)
    return amp * np.sqrt(power / np.mean(amp ** 2))


def _quantizer(points, var, cuts):
    """P(Q(a + N(0, var)) = j) for each centre ``a`` in ``points``."""
    edges = np.concatenate([[-np.inf], cuts, [np.inf]])
    cdf = norm.cdf((edges[None, :] - np.asarray(points)[:, None]) / np.sqrt(var))
    return np.diff(cdf, axis=1)


def quantized_gaussian(sigma_sq: float, delta_sq: float, power: float, levels: int = 4):
    """Single sub-channel, single group-1 receiver Gaussian channel reduced to
    a degraded DMC.

    The input is equiprobable-spaced PAM with average power ``power``; the
    stronger output is quantized to ``levels`` cells with thresholds midway
    between constellation points. The weaker output is obtained from the
    quantized stronger one by re-adding the excess noise to the cell's
    constellation point and quantizing again, so the chain is exactly degraded.
    """
    from .channel import DegradedDMC, DegradationOrder
    x = _pam(levels, power)
    cuts = (x[:-1] + x[1:]) / 2
    lo, hi = sorted((sigma_sq, delta_sq))
    strong = _quantizer(x, lo, cuts)
    link = _quantizer(x, hi - lo, cuts) if hi > lo else np.eye(levels)
    weak = strong @ link
    if sigma_sq < delta_sq:
        w_y, w_z, cut = strong, weak, 1
    else:
        w_y, w_z, cut = weak, strong, 0
    return DegradedDMC(((w_y,),), (w_z,), DegradationOrder(((0,),), (cut,)),
                       (((link,),)))


# --------------------------------------------------------------------------
# information measures
# --------------------------------------------------------------------------

def entropy(p, axis=None) -> np.ndarray:
    """Shannon entropy in nats summed over ``axis`` (all axes by default)."""
    p = np.asarray(p, dtype=float)
    safe = np.where(p > TINY, p, 1.0)
    return -np.sum(np.where(p > TINY, p * np.log(safe), 0.0), axis=axis)


def _marginal_entropy(joint, keep, batch_axes=0):
    """Entropy of the marginal on axes ``keep`` (leading ``batch_axes`` kept)."""
    nd = joint.ndim
    drop = tuple(a for a in range(batch_axes, nd) if a not in keep)
    marg = joint.sum(axis=drop) if drop else joint
    return entropy(marg, axis=tuple(range(batch_axes, marg.ndim)))


def conditional_mi(joint, a, b, c=(), batch_axes=0) -> np.ndarray:
    """``I(A; B | C)`` of a joint pmf; ``a``, ``b``, ``c`` are axis tuples.

    With ``batch_axes=n`` the first ``n`` axes index independent pmfs.
    """
    a, b, c = tuple(a), tuple(b), tuple(c)
    h = lambda axes: _marginal_entropy(joint, set(axes), batch_axes)
    val = h(a + c) + h(b + c) - h(a + b + c) - (h(c) if c else 0.0)
    return np.maximum(val, 0.0)


# --------------------------------------------------------------------------
# schemes
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AuxiliaryScheme:
    """Per sub-channel ``p_u[i]`` (length |U_i|) and ``p_x_given_u[i]``
    (|U_i| x |X_i|)."""

    p_u: tuple
    p_x_given_u: tuple

    def __post_init__(self):
        if len(self.p_u) != len(self.p_x_given_u):
            raise ValueError("p_u and p_x_given_u must cover the same sub-channels")
        pu_all, px_all = [], []
        for i, (pu, px) in enumerate(zip(self.p_u, self.p_x_given_u)):
            pu = np.asarray(pu, dtype=float)
            px = np.asarray(px, dtype=float)
            if pu.ndim != 1 or px.ndim != 2 or px.shape[0] != pu.size:
                raise ValueError(f"sub-channel {i}: p(u) and p(x|u) shapes disagree")
            if np.any(pu < 0) or abs(pu.sum() - 1) > 1e-12:
                raise ValueError(f"sub-channel {i}: p(u) is not a distribution")
            if np.any(px < 0) or np.any(np.abs(px.sum(axis=1) - 1) > 1e-12):
                raise ValueError(f"sub-channel {i}: p(x|u) rows are not distributions")
            pu_all.append(pu)
            px_all.append(px)
        object.__setattr__(self, "p_u", tuple(pu_all))
        object.__setattr__(self, "p_x_given_u", tuple(px_all))

    @classmethod
    def from_joint(cls, joints) -> "AuxiliaryScheme":
        pus, pxs = [], []
        for j in joints:
            j = np.asarray(j, dtype=float)
            pu = j.sum(axis=1)
            safe = np.where(pu > 0, pu, 1.0)[:, None]
            px = np.where(pu[:, None] > 0, j / safe, 1.0 / j.shape[1])
            pus.append(pu)
            pxs.append(px)
        return cls(tuple(pus), tuple(pxs))

    @classmethod
    def constant(cls, p_x) -> "AuxiliaryScheme":
        """``u`` independent of ``x`` (single auxiliary letter)."""
        return cls(tuple(np.ones(1) for _ in p_x),
                   tuple(np.asarray(px, dtype=float)[None, :] for px in p_x))

    @classmethod
    def copy(cls, p_x) -> "AuxiliaryScheme":
        """``u = x``."""
        return cls(tuple(np.asarray(px, dtype=float) for px in p_x),
                   tuple(np.eye(len(px)) for px in p_x))

    def joint(self, i: int) -> np.ndarray:
        return self.p_u[i][:, None] * self.p_x_given_u[i]

    def check_against(self, channels: DegradedDMC):
        if len(self.p_u) != channels.M:
            raise ValueError(f"scheme has {len(self.p_u)} sub-channels, channel has {channels.M}")
        for i in range(channels.M):
            nx = channels.input_size(i)
            if self.p_x_given_u[i].shape[1] != nx:
                raise ValueError(f"sub-channel {i}: scheme input alphabet "
                                 f"{self.p_x_given_u[i].shape[1]} != {nx}")
            bound = nx + 2 * channels.K - 1
            if self.p_u[i].size > bound:
                raise ValueError(f"sub-channel {i}: |U|={self.p_u[i].size} exceeds {bound}")


def subchannel_terms(channels: DegradedDMC, i: int, joint_ux: np.ndarray):
    """Per-receiver rate contributions of sub-channel ``i``.

    ``joint_ux`` has shape ``(S, U, X)`` (a batch of ``S`` input laws).
    Returns arrays ``(a1, a2)`` of shape ``(S, K)`` holding
    ``I(x; y_k | u, z)`` and ``I(u; z | y_k)``.
    """
    joint_ux = np.asarray(joint_ux, dtype=float)
    if joint_ux.ndim == 2:
        joint_ux = joint_ux[None]
    s = joint_ux.shape[0]
    a1 = np.empty((s, channels.K))
    a2 = np.empty((s, channels.K))
    for k in range(channels.K):
        wyz = channels.joint_yz(i, k)  # X x Y x Z
        # axes: 0 batch, 1 u, 2 x, 3 y, 4 z
        full = joint_ux[:, :, :, None, None] * wyz[None, None]
        a1[:, k] = conditional_mi(full, (2,), (3,), (1, 4), batch_axes=1)
        a2[:, k] = conditional_mi(full, (1,), (4,), (3,), batch_axes=1)
    return a1, a2


def dmc_rate_pair(channels: DegradedDMC, scheme: AuxiliaryScheme) -> RatePair:
    scheme.check_against(channels)
    s1 = np.zeros(channels.K)
    s2 = np.zeros(channels.K)
    for i in range(channels.M):
        a1, a2 = subchannel_terms(channels, i, scheme.joint(i))
        s1 += a1[0]
        s2 += a2[0]
    return RatePair(float(s1.min()), float(s2.min()))


# --------------------------------------------------------------------------
# brute force
# --------------------------------------------------------------------------

def compositions(total: int, parts: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``parts`` summing to ``total``."""
    if parts == 1:
        return np.array([[total]])
    # stars and bars via bar positions
    bars = np.array(list(itertools.combinations(range(total + parts - 1), parts - 1)))
    if bars.size == 0:
        return np.zeros((1, parts), dtype=int)
    edges = np.hstack([-np.ones((len(bars), 1), dtype=int), bars,
                       np.full((len(bars), 1), total + parts - 1)])
    return np.diff(edges, axis=1) - 1


def n_compositions(total: int, parts: int) -> int:
    return math.comb(total + parts - 1, parts - 1)


EXTREME_REFINE = 16
EXTREME_CAP = 5000


def _scheme_grid(nu: int, nx: int, steps: int) -> np.ndarray:
    """Joint laws p(u, x) with masses on multiples of 1/steps, one
    representative per relabelling of u, plus the constant-u and u=x schemes
    for every p(x) on a grid ``EXTREME_REFINE`` times finer and for the
    uniform p(x). The extreme schemes are cheap and fix the corners."""
    comp = compositions(steps, nu * nx).reshape(-1, nu, nx)
    # canonical relabelling: rows in non-increasing lexicographic order
    keys = comp.reshape(len(comp), nu, nx)
    order_ok = np.ones(len(comp), dtype=bool)
    for r in range(nu - 1):
        a, b = keys[:, r], keys[:, r + 1]
        diff = a - b
        first = np.argmax(diff != 0, axis=1)
        sign = diff[np.arange(len(diff)), first]
        order_ok &= sign >= 0
    joints = comp[order_ok] / steps
    xs = steps * EXTREME_REFINE
    while xs > steps and n_compositions(xs, nx) > EXTREME_CAP:
        xs //= 2
    px = np.vstack([compositions(xs, nx) / xs, np.full((1, nx), 1.0 / nx)])
    const = np.zeros((len(px), nu, nx))
    const[:, 0, :] = px
    copy = np.zeros((len(px), nu, nx))
    idx = np.arange(nx)
    copy[:, idx, idx] = px
    return np.concatenate([joints, const, copy])


def pareto_mask(points: np.ndarray) -> np.ndarray:
    """Mask of points not weakly dominated by another (maximisation);
    among exact duplicates the first is kept."""
    n = len(points)
    if n == 0:
        return np.zeros(0, dtype=bool)
    order = np.lexsort((-points).T[::-1])  # descending, stable among duplicates
    pts = points[order]
    keep = np.zeros(n, dtype=bool)
    front = np.empty((0, points.shape[1]))
    for start in range(0, n, 2048):
        block = pts[start:start + 2048]
        # dominated by the front accumulated so far
        if len(front):
            dom = np.zeros(len(block), dtype=bool)
            for c in range(0, len(front), 4096):
                f = front[c:c + 4096]
                dom |= np.any(np.all(f[None, :, :] >= block[:, None, :], axis=2), axis=1)
        else:
            dom = np.zeros(len(block), dtype=bool)
        # dominance within the block (earlier rows have larger first coords)
        ge = np.all(block[None, :, :] >= block[:, None, :], axis=2)  # ge[a, b]: b >= a
        eq = np.all(block[None, :, :] == block[:, None, :], axis=2)
        idx = np.arange(len(block))
        strictly = ge & ~eq
        dup_earlier = eq & (idx[None, :] < idx[:, None])
        dom |= np.any(strictly | dup_earlier, axis=1)
        kept = block[~dom]
        keep[order[start:start + 2048][~dom]] = True
        front = np.vstack([front, kept])
    return keep


def _staircase(points: np.ndarray) -> np.ndarray:
    """2-D Pareto frontier sorted by increasing R1."""
    pts = np.unique(np.round(points, 15), axis=0)
    pts = pts[pareto_mask(pts)]
    return pts[np.argsort(pts[:, 0])]


def _envelope(front: np.ndarray, r1: np.ndarray) -> np.ndarray:
    """Best R2 available at R1 >= r1 on a staircase frontier."""
    out = np.full(len(r1), -np.inf)
    for j, t in enumerate(r1):
        ok = front[:, 0] >= t - 1e-15
        if ok.any():
            out[j] = front[ok, 1].max()
    return out


def frontier_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Largest vertical gap between two staircase frontiers."""
    grid = np.union1d(a[:, 0], b[:, 0])
    ea, eb = _envelope(a, grid), _envelope(b, grid)
    both = np.isfinite(ea) & np.isfinite(eb)
    gap = np.abs(ea[both] - eb[both]).max() if both.any() else 0.0
    # a frontier that reaches further in R1 counts with the full R2 of the other
    lone = np.isfinite(ea) ^ np.isfinite(eb)
    if lone.any():
        gap = max(gap, np.nanmax(np.where(np.isfinite(ea[lone]), ea[lone], eb[lone])))
    return float(gap)


@dataclass
class Frontier:
    points: np.ndarray  # (n, 2) rows (R1, R2), sorted by R1
    grid_steps: int
    movement: float
    converged: bool
    schemes_evaluated: int

    def rate_pairs(self) -> list[RatePair]:
        return [RatePair(float(a), float(b)) for a, b in self.points]

    @property
    def r1_corner(self) -> float:
        return float(self.points[:, 0].max())

    @property
    def r2_corner(self) -> float:
        return float(self.points[:, 1].max())


def _frontier_at(channels: DegradedDMC, steps: int):
    k = channels.K
    combined = None
    total = 0
    for i in range(channels.M):
        nx = channels.input_size(i)
        nu = nx + 2 * k - 1
        joints = _scheme_grid(nu, nx, steps)
        total += len(joints)
        vecs = []
        for start in range(0, len(joints), 4096):
            a1, a2 = subchannel_terms(channels, i, joints[start:start + 4096])
            vecs.append(np.hstack([a1, a2]))
        vec = np.unique(np.round(np.vstack(vecs), 12), axis=0)
        if channels.M > 1:
            vec = vec[pareto_mask(vec)]
        if combined is None:
            combined = vec
        else:
            sums = (combined[:, None, :] + vec[None, :, :]).reshape(-1, 2 * k)
            sums = np.unique(np.round(sums, 12), axis=0)
            combined = sums[pareto_mask(sums)] if i < channels.M - 1 else sums
    rates = np.column_stack([combined[:, :k].min(axis=1), combined[:, k:].min(axis=1)])
    return _staircase(rates), total


def dmc_region_bruteforce(channels: DegradedDMC, grid_steps: int = 4, *, refine: bool = True,
                          tol: float = 1e-3, max_steps: int = 64,
                          max_schemes: int = 400_000) -> Frontier:
    """Pareto frontier of the rate pairs of all schemes on a simplex grid.

    Masses of ``p(u, x)`` are multiples of ``1/grid_steps`` with ``|U|`` at the
    cardinality bound ``|X| + 2K - 1``. With ``refine`` the grid is doubled
    until the frontier moves by less than ``tol`` or the next level would
    exceed ``max_steps`` or ``max_schemes`` grid compositions per sub-channel.
    """
    for i in range(channels.M):
        if channels.joint_size(i) > JOINT_GUARD:
            raise SizeGuardError(f"sub-channel {i}: joint alphabet {channels.joint_size(i)} "
                                 f"exceeds {JOINT_GUARD}")
    if grid_steps < 1:
        raise ValueError("grid_steps must be at least 1")

    def affordable(steps):
        for i in range(channels.M):
            nx = channels.input_size(i)
            nu = nx + 2 * channels.K - 1
            if n_compositions(steps, nu * nx) > max_schemes:
                return False
        return True

    if not affordable(grid_steps):
        raise SizeGuardError(f"grid_steps={grid_steps} exceeds the scheme budget {max_schemes}")
    steps = grid_steps
    front, count = _frontier_at(channels, steps)
    movement = math.inf
    converged = not refine
    while refine:
        nxt = 2 * steps
        if nxt > max_steps or not affordable(nxt):
            log.info("brute force stopped at grid_steps=%d (budget); movement %.3g",
                     steps, movement)
            break
        new, c = _frontier_at(channels, nxt)
        count += c
        movement = frontier_distance(front, new)
        front, steps = new, nxt
        if movement < tol:
            converged = True
            break
    return Frontier(front, steps, movement, converged, count)
