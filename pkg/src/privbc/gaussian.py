"""Capacity region of parallel Gaussian private broadcasting.

A boundary point is described by the cloud-layer power split ``Q`` (the
power carrying the group-2 message); the remainder ``P_i - Q_i`` of each
sub-channel carries the group-1 satellite layer. Rates are in nats.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize

from .channel import (ChannelError, ParallelGaussianChannel, PerSubChannel, Total,
                      validate_power_split)
from .kkt import KktCertificate, certify

log = logging.getLogger(__name__)

__all__ = [
    "RatePair",
    "InfeasibleTarget",
    "rate_term_a1",
    "rate_term_a2",
    "per_receiver_sums",
    "region_point",
    "corner_rates",
    "BoundarySolution",
    "BoundaryPoint",
    "max_r2_given_r1",
    "boundary_sweep",
    "TotalPowerPoint",
    "total_power_region",
]

FEAS_TOL = 1e-9
GRID_POINTS = 33


@dataclass(frozen=True)
class RatePair:
    r1: float
    r2: float

    def __post_init__(self):
        if self.r1 < 0 or self.r2 < 0:
            raise ValueError(f"negative rate in ({self.r1}, {self.r2})")


class InfeasibleTarget(ValueError):
    pass


def _finite(*xs):
    for x in xs:
        if not math.isfinite(x):
            raise ValueError(f"non-finite argument {x!r}")


def rate_term_a1(q: float, sigma_sq: float, delta_sq: float) -> float:
    """Satellite-layer secrecy rate of one receiver on one sub-channel,
    ``[1/2 ln((Q+s)/s) - 1/2 ln((Q+d)/d)]^+``."""
    _finite(q, sigma_sq, delta_sq)
    if q < 0 or sigma_sq <= 0 or delta_sq <= 0:
        raise ValueError("need Q >= 0 and positive variances")
    val = 0.5 * (math.log1p(q / sigma_sq) - math.log1p(q / delta_sq))
    return val if val > 0 else 0.0


def rate_term_a2(p: float, q: float, sigma_sq: float, delta_sq: float) -> float:
    """Cloud-layer secrecy rate against one group-1 receiver,
    ``[1/2 ln((P+d)/(Q+d)) - 1/2 ln((P+s)/(Q+s))]^+``."""
    _finite(p, q, sigma_sq, delta_sq)
    if sigma_sq <= 0 or delta_sq <= 0:
        raise ValueError("variances must be positive")
    if not 0 <= q <= p:
        raise ValueError(f"need 0 <= Q <= P, got Q={q}, P={p}")
    gap = p - q
    val = 0.5 * (math.log1p(gap / (q + delta_sq)) - math.log1p(gap / (q + sigma_sq)))
    return val if val > 0 else 0.0


# vectorised forms; shapes broadcast as (K, M) against (M,)

def _a1(q, sigma, delta):
    return np.maximum(0.5 * (np.log1p(q / sigma) - np.log1p(q / delta)), 0.0)


def _a2(p, q, sigma, delta):
    gap = p - q
    return np.maximum(0.5 * (np.log1p(gap / (q + delta)) - np.log1p(gap / (q + sigma))), 0.0)


def per_receiver_sums(channel: ParallelGaussianChannel, q, caps=None):
    """Per-receiver totals ``(sum_i A1[k,i], sum_i A2[k,i])``, each length K."""
    caps = channel.caps if caps is None else np.asarray(caps, dtype=float)
    q = np.asarray(q, dtype=float)
    s, d = channel.sigma_sq, channel.delta_sq
    return _a1(q, s, d).sum(axis=1), _a2(caps, q, s, d).sum(axis=1)


def region_point(channel: ParallelGaussianChannel, q, caps=None) -> RatePair:
    """Rate pair supported by power split ``q``.

    ``caps`` overrides the channel's per-sub-channel powers and is required
    for channels under a total-power constraint.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (channel.M,):
        raise ChannelError(f"power split has shape {q.shape}, expected ({channel.M},)")
    if caps is None and isinstance(channel.power, Total):
        raise ChannelError("total-power channel: pass the per-sub-channel allocation as caps")
    if caps is None:
        check = validate_power_split(channel, q)
    else:
        check = validate_power_split(channel.with_caps(caps), q)
    if not check:
        raise ChannelError(check.message)
    s1, s2 = per_receiver_sums(channel, q, caps)
    return RatePair(float(s1.min()), float(s2.min()))


def corner_rates(channel: ParallelGaussianChannel, caps=None) -> RatePair:
    """``(R1 at Q=P, R2 at Q=0)``: the two single-message capacities."""
    caps = channel.caps if caps is None else np.asarray(caps, dtype=float)
    r1 = region_point(channel, caps, caps).r1
    r2 = region_point(channel, np.zeros(channel.M), caps).r2
    return RatePair(r1, r2)


# --------------------------------------------------------------------------
# boundary program: maximise R2 subject to R1 >= target
# --------------------------------------------------------------------------

def _slopes(q, sigma, delta):
    """d/dQ of the unclipped rate terms (identical expression for A1 and A2)."""
    return 0.5 * (1.0 / (q + sigma) - 1.0 / (q + delta))


def _active_average(values, grads, tol=1e-12):
    """Average of the gradients of the minimising rows."""
    active = values <= values.min() + tol
    return grads[active].mean(axis=0)


class BoundarySolution(NamedTuple):
    q: np.ndarray
    r2: float
    certificate: KktCertificate
    iterations: int
    solver_ok: bool


@dataclass
class BoundaryPoint:
    r1_target: float
    rates: RatePair | None
    q: np.ndarray | None
    certificate: KktCertificate | None
    converged: bool
    iterations: int = 0
    error: str | None = None

    @property
    def max_kkt_residual(self) -> float:
        return self.certificate.max_residual if self.certificate else math.nan


def _grid_warm_start(caps, sigma, delta, r1, points=GRID_POINTS):
    axes = [np.linspace(0.0, c, points) for c in caps]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(caps))
    s1 = _a1(mesh[:, None, :], sigma, delta).sum(axis=2).min(axis=1)
    s2 = _a2(caps, mesh[:, None, :], sigma, delta).sum(axis=2).min(axis=1)
    feasible = s1 >= r1 - FEAS_TOL
    # Q = P is always on the grid and always feasible
    best = np.flatnonzero(feasible)[np.argmax(s2[feasible])]
    return mesh[best].copy()


def _subgradient(q0, caps, sigma, delta, r1, max_iter, penalty=10.0, window=50):
    """Projected subgradient ascent on ``R2 - penalty * (r1 - R1)^+``.

    Returns the best feasible iterate seen and the iteration count.
    """
    y_mask = sigma < delta
    z_mask = sigma > delta
    # unclipped A1 and A2 are both affine in L(Q) = ln(Q+s) - ln(Q+d)
    l_zero = np.log(sigma) - np.log(delta)
    l_cap = np.log(caps + sigma) - np.log(caps + delta)
    q = q0.copy()
    best_q, best_val = None, -np.inf
    step0 = 0.1 * max(float(caps.max()), 1e-12)
    checkpoint = -np.inf
    it = 0
    for it in range(1, max_iter + 1):
        qs, qd = q + sigma, q + delta
        lq = np.log(qs / qd)
        s1 = np.maximum(0.5 * (lq - l_zero), 0.0).sum(axis=1)
        s2 = np.maximum(0.5 * (lq - l_cap), 0.0).sum(axis=1)
        s1_min, s2_min = s1.min(), s2.min()
        if s1_min >= r1 - FEAS_TOL and s2_min > best_val:
            best_q, best_val = q.copy(), s2_min
        if it % window == 0:
            # stalled: less than 1e-7 gained over the last window
            if best_val - checkpoint < 1e-7 * (1.0 + abs(best_val)):
                break
            checkpoint = best_val
        slope = 0.5 * (1.0 / qs - 1.0 / qd)
        g = (slope * z_mask)[s2 <= s2_min + 1e-12].mean(axis=0)
        if s1_min < r1:
            g = g + penalty * (slope * y_mask)[s1 <= s1_min + 1e-12].mean(axis=0)
        nrm = np.abs(g).max()
        if nrm == 0:
            break
        new = np.clip(q + step0 / math.sqrt(it) * g / nrm, 0.0, caps)
        moved = np.abs(new - q).max()
        q = new
        if moved < 1e-9:
            break
    if best_q is None:
        best_q = caps.copy()
    return best_q, it


def _polish(q0, caps, sigma, delta, r1):
    """Local refinement of the epigraph form with SLSQP."""
    m = len(caps)
    y_mask = sigma < delta
    z_mask = sigma > delta
    use_r1 = r1 > 0
    live1 = y_mask.any(axis=1)
    live2 = z_mask.any(axis=1)
    if not live2.any():
        return q0, True

    def cons(v):
        q, t = v[:m], v[m]
        out = [_a2(caps, q, sigma, delta).sum(axis=1)[live2] - t]
        if use_r1:
            out.append(_a1(q, sigma, delta).sum(axis=1)[live1] - r1)
        return np.concatenate(out)

    def cons_jac(v):
        q = v[:m]
        slope = _slopes(q, sigma, delta)
        rows2 = np.hstack([np.where(z_mask, slope, 0.0)[live2],
                           -np.ones((int(live2.sum()), 1))])
        if not use_r1:
            return rows2
        rows1 = np.hstack([np.where(y_mask, slope, 0.0)[live1],
                           np.zeros((int(live1.sum()), 1))])
        return np.vstack([rows2, rows1])

    t0 = _a2(caps, q0, sigma, delta).sum(axis=1).min()
    v0 = np.append(q0, t0)
    obj = np.zeros(m + 1)
    obj[m] = -1.0
    res = minimize(lambda v: -v[m], v0, jac=lambda v: obj, method="SLSQP",
                   bounds=[(0.0, c) for c in caps] + [(None, None)],
                   constraints=[{"type": "ineq", "fun": cons, "jac": cons_jac}],
                   options={"ftol": 1e-15, "maxiter": 500})
    q = np.clip(res.x[:m], 0.0, caps)
    s1 = _a1(q, sigma, delta).sum(axis=1).min()
    s2 = _a2(caps, q, sigma, delta).sum(axis=1).min()
    if s1 >= r1 - FEAS_TOL and s2 >= t0 - 1e-12:
        return q, bool(res.success)
    return q0, False


def _restore_feasibility(q, caps, sigma, delta, r1):
    """Push ``q`` toward ``caps`` by bisection until ``R1 >= r1`` holds exactly."""
    if _a1(q, sigma, delta).sum(axis=1).min() >= r1:
        return q
    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        trial = q + mid * (caps - q)
        if _a1(trial, sigma, delta).sum(axis=1).min() >= r1:
            hi = mid
        else:
            lo = mid
    return q + hi * (caps - q)


def max_r2_given_r1(channel: ParallelGaussianChannel, r1_target: float, *,
                    caps=None, max_iter: int = 100_000, warm_start=None):
    """Largest R2 compatible with ``R1 >= r1_target``.

    Returns ``(q, r2, certificate, iterations, solver_ok)``. The search is a projected subgradient
    ascent started from a 33-point-per-axis grid scan (M <= 3) or from P/2,
    refined by SLSQP; multipliers are then fitted to the active constraints.
    """
    if caps is None:
        if not isinstance(channel.power, PerSubChannel):
            raise ChannelError("max_r2_given_r1 needs per-sub-channel power caps")
        caps = channel.caps
    caps = np.asarray(caps, dtype=float)
    sigma, delta = channel.sigma_sq, channel.delta_sq
    r1_corner = float(_a1(caps, sigma, delta).sum(axis=1).min())
    if r1_target < 0 or not math.isfinite(r1_target):
        raise InfeasibleTarget(f"R1 target {r1_target} must be finite and nonnegative")
    if r1_target > r1_corner + FEAS_TOL:
        raise InfeasibleTarget(
            f"R1 target {r1_target:.9g} exceeds the R1 corner {r1_corner:.9g}")
    r1 = min(float(r1_target), r1_corner)

    if r1 == 0.0:
        # R2 is nonincreasing in every Q_i, so Q = 0 is optimal
        q, iters, ok = np.zeros(channel.M), 0, True
    elif r1 == r1_corner and np.all(caps == 0):
        q, iters, ok = caps.copy(), 0, True
    else:
        if warm_start is not None:
            q0 = np.clip(np.asarray(warm_start, dtype=float), 0.0, caps)
        elif channel.M <= 3:
            q0 = _grid_warm_start(caps, sigma, delta, r1)
        else:
            q0 = caps / 2.0
        q, iters = _subgradient(q0, caps, sigma, delta, r1, max_iter)
        q, ok = _polish(q, caps, sigma, delta, r1)
        q = _restore_feasibility(q, caps, sigma, delta, r1)
    r2 = float(_a2(caps, q, sigma, delta).sum(axis=1).min())
    cert = certify(channel, q, r1, r2, caps=caps)
    return BoundarySolution(q, r2, cert, iters, ok)


def _solve_point(channel, r1_target, caps, tol):
    try:
        q, r2, cert, iters, ok = max_r2_given_r1(channel, r1_target, caps=caps)
    except (InfeasibleTarget, ChannelError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return BoundaryPoint(r1_target, None, None, None, False, error=str(exc))
    rates = region_point(channel.with_caps(caps), q)
    converged = cert.max_residual <= tol
    if not converged:
        log.warning("R1 target %.6g: solver flagged non-converged (max KKT residual %.3g)",
                    r1_target, cert.max_residual)
    return BoundaryPoint(r1_target, rates, q, cert, converged, iters)


def boundary_sweep(channel: ParallelGaussianChannel, n_points: int, *,
                   tol: float = 1e-6) -> list[BoundaryPoint]:
    """Solve the boundary program at ``n_points`` R1 targets spread evenly over
    ``[0, R1 corner]``. A failing point is reported, not raised."""
    if n_points < 2:
        raise ValueError("n_points must be at least 2")
    caps = channel.caps
    r1c = corner_rates(channel).r1
    targets = np.linspace(0.0, r1c, n_points)
    points = [_solve_point(channel, float(t), caps, tol) for t in targets]
    return sorted(points, key=lambda p: (p.rates.r1 if p.rates else p.r1_target))


# --------------------------------------------------------------------------
# total power constraint
# --------------------------------------------------------------------------

@dataclass
class TotalPowerPoint:
    r1_target: float
    rates: RatePair | None
    allocation: np.ndarray | None
    q: np.ndarray | None
    converged: bool
    certificate: KktCertificate | None = None
    error: str | None = None

    @property
    def max_kkt_residual(self) -> float:
        return self.certificate.max_residual if self.certificate else math.nan


def _project_shifted_simplex(v, floor, total):
    """Euclidean projection of ``v`` onto ``{p >= floor, sum(p) = total}``."""
    budget = total - floor.sum()
    w = v - floor
    # standard simplex projection of w onto {s >= 0, sum s = budget}
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - budget
    idx = np.arange(1, len(w) + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return floor + np.maximum(w - theta, 0.0)


def _r1_corner_total(channel, budget):
    sigma, delta = channel.sigma_sq, channel.delta_sq
    m = channel.M
    y_mask = sigma < delta
    live = y_mask.any(axis=1)
    if not live.all():
        return 0.0, np.full(m, budget / m)

    def cons(v):
        return _a1(v[:m], sigma, delta).sum(axis=1) - v[m]

    def cons_jac(v):
        return np.hstack([np.where(y_mask, _slopes(v[:m], sigma, delta), 0.0),
                          -np.ones((channel.K, 1))])

    best = None
    starts = [np.full(m, budget / m)] + [budget * np.eye(m)[i] for i in range(m)]
    for p0 in starts:
        v0 = np.append(p0, _a1(p0, sigma, delta).sum(axis=1).min())
        res = minimize(lambda v: -v[m], v0, jac=lambda v: -np.eye(m + 1)[m],
                       method="SLSQP", bounds=[(0.0, budget)] * m + [(None, None)],
                       constraints=[{"type": "ineq", "fun": cons, "jac": cons_jac},
                                    {"type": "ineq", "fun": lambda v: budget - v[:m].sum(),
                                     "jac": lambda v: np.append(-np.ones(m), 0.0)}],
                       options={"ftol": 1e-15, "maxiter": 500})
        p = np.clip(res.x[:m], 0.0, None)
        if p.sum() > budget:
            p *= budget / p.sum()
        val = _a1(p, sigma, delta).sum(axis=1).min()
        if best is None or val > best[0]:
            best = (val, p)
    return float(best[0]), best[1]


def _joint_polish(p0, q0, channel, budget, r1):
    """SLSQP over (P, Q, t) for the total-power program."""
    sigma, delta = channel.sigma_sq, channel.delta_sq
    m = channel.M
    y_mask = sigma < delta
    z_mask = sigma > delta
    live1 = y_mask.any(axis=1)
    live2 = z_mask.any(axis=1)
    if not live2.any():
        return p0, q0, True
    use_r1 = r1 > 0

    def unpack(v):
        return v[:m], v[m:2 * m], v[2 * m]

    def cons(v):
        p, q, t = unpack(v)
        q = np.minimum(q, p)
        out = [_a2(p, q, sigma, delta).sum(axis=1)[live2] - t]
        if use_r1:
            out.append(_a1(q, sigma, delta).sum(axis=1)[live1] - r1)
        out.append(p - q)
        out.append([budget - p.sum()])
        return np.concatenate(out)

    def cons_jac(v):
        p, q, _ = unpack(v)
        sq = _slopes(q, sigma, delta)
        sp = 0.5 * (1.0 / (p + delta) - 1.0 / (p + sigma))
        rows = [np.hstack([np.where(z_mask, sp, 0.0)[live2], np.where(z_mask, sq, 0.0)[live2],
                           -np.ones((int(live2.sum()), 1))])]
        if use_r1:
            rows.append(np.hstack([np.zeros((int(live1.sum()), m)),
                                   np.where(y_mask, sq, 0.0)[live1],
                                   np.zeros((int(live1.sum()), 1))]))
        rows.append(np.hstack([np.eye(m), -np.eye(m), np.zeros((m, 1))]))
        rows.append(np.append(np.append(-np.ones(m), np.zeros(m)), 0.0)[None, :])
        return np.vstack(rows)

    t0 = _a2(p0, q0, sigma, delta).sum(axis=1).min()
    v0 = np.concatenate([p0, q0, [t0]])
    res = minimize(lambda v: -v[2 * m], v0, jac=lambda v: -np.eye(2 * m + 1)[2 * m],
                   method="SLSQP", bounds=[(0.0, budget)] * (2 * m) + [(None, None)],
                   constraints=[{"type": "ineq", "fun": cons, "jac": cons_jac}],
                   options={"ftol": 1e-15, "maxiter": 1000})
    p, q, _ = unpack(res.x)
    p = np.clip(p, 0.0, None)
    if p.sum() > budget:
        p *= budget / p.sum()
    q = np.clip(q, 0.0, p)
    q = _restore_feasibility(q, p, sigma, delta, r1)
    s1 = _a1(q, sigma, delta).sum(axis=1).min()
    s2 = _a2(p, q, sigma, delta).sum(axis=1).min()
    if s1 >= r1 - FEAS_TOL and s2 >= t0 - 1e-12:
        return p, q, bool(res.success)
    return p0, q0, False


def _alternate(channel, budget, r1, p_start, rounds):
    """Alternating ascent: exact Q-step at fixed P, projected subgradient P-step."""
    sigma, delta = channel.sigma_sq, channel.delta_sq
    z_mask = sigma > delta
    p = p_start.copy()
    q = None
    best = None
    for t in range(1, rounds + 1):
        r1_here = min(r1, float(_a1(p, sigma, delta).sum(axis=1).min()))
        q, r2, _, _, _ = max_r2_given_r1(channel, r1_here, caps=p, max_iter=2000,
                                         warm_start=q)
        if r1_here >= r1 - FEAS_TOL and (best is None or r2 > best[0]):
            best = (r2, p.copy(), q.copy())
        s2 = _a2(p, q, sigma, delta).sum(axis=1)
        sp = 0.5 * (1.0 / (p + delta) - 1.0 / (p + sigma))
        g = _active_average(s2, np.where(z_mask, sp, 0.0))
        if r1_here < r1:
            # allocation cannot reach the R1 target yet: move toward the R1 corner
            g = g + np.where(sigma < delta, _slopes(p, sigma, delta), 0.0).mean(axis=0)
        nrm = np.abs(g).max()
        if nrm == 0:
            break
        p = _project_shifted_simplex(p + 0.2 * budget / math.sqrt(t) * g / nrm, q, budget)
    return best


def total_power_region(channel: ParallelGaussianChannel, n_points: int, *,
                       rounds: int = 12, tol: float = 1e-6) -> list[TotalPowerPoint]:
    """Boundary of the region under ``sum(P_i) <= P``, jointly over (P, Q)."""
    if not isinstance(channel.power, Total):
        raise ChannelError("total_power_region needs a channel with a total power constraint")
    if n_points < 2:
        raise ValueError("n_points must be at least 2")
    budget = channel.power.budget
    m = channel.M
    r1c, p_corner = _r1_corner_total(channel, budget)
    out = []
    for r1 in np.linspace(0.0, r1c, n_points):
        r1 = float(r1)
        try:
            if r1 == r1c and r1c > 0:
                # the corner allocation is pinned; Q may still leave room for R2
                p = p_corner
                q, _, _, _, ok = max_r2_given_r1(channel, r1, caps=p)
            else:
                starts = [np.full(m, budget / m), p_corner]
                cands = [b for b in (_alternate(channel, budget, r1, s, rounds) for s in starts)
                         if b is not None]
                if not cands:
                    raise InfeasibleTarget(f"no allocation reaches R1 = {r1:.6g}")
                _, p, q = max(cands, key=lambda c: c[0])
                p, q, ok = _joint_polish(p, q, channel, budget, r1)
            rates = region_point(channel, q, caps=p)
            cert = certify(channel, q, min(r1, rates.r1), rates.r2, caps=p)
            # the certificate covers the Q-program at the reported allocation
            out.append(TotalPowerPoint(r1, rates, p, q, cert.max_residual <= tol, cert))
        except (InfeasibleTarget, ChannelError, np.linalg.LinAlgError) as exc:
            out.append(TotalPowerPoint(r1, None, None, None, False, error=str(exc)))
    return sorted(out, key=lambda pt: (pt.rates.r1 if pt.rates else pt.r1_target))
