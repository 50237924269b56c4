"""Channel descriptions shared by every solver in the package.

Receivers of group 1 are indexed ``0..K-1`` and sub-channels ``0..M-1``.
All variances are relative to a unit signal scale and carry no units.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

__all__ = [
    "ChannelError",
    "PerSubChannel",
    "Total",
    "ParallelGaussianChannel",
    "DegradationOrder",
    "DegradedDMC",
    "SplitCheck",
    "infer_degradation_order",
    "validate_power_split",
    "load_gaussian_channel",
    "load_dmc",
]

DEGRADE_TOL = 1e-9


class ChannelError(ValueError):
    """Raised for malformed or inconsistent channel descriptions."""


@dataclass(frozen=True)
class PerSubChannel:
    caps: tuple[float, ...]


@dataclass(frozen=True)
class Total:
    budget: float


def _as_float_array(values, name) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ChannelError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class ParallelGaussianChannel:
    """M independent real Gaussian sub-channels, K group-1 receivers and one
    group-2 receiver.

    ``sigma_sq[k, i]`` is the noise variance of receiver ``k`` on sub-channel
    ``i`` and ``delta_sq[i]`` the group-2 noise variance there.
    """

    sigma_sq: np.ndarray
    delta_sq: np.ndarray
    power: PerSubChannel | Total

    def __post_init__(self):
        sigma = _as_float_array(self.sigma_sq, "sigma_sq")
        delta = _as_float_array(self.delta_sq, "delta_sq")
        if sigma.ndim != 2 or sigma.shape[0] < 1 or sigma.shape[1] < 1:
            raise ChannelError("sigma_sq must be a non-empty K x M matrix")
        if delta.shape != (sigma.shape[1],):
            raise ChannelError(
                f"delta_sq has shape {delta.shape}, expected ({sigma.shape[1]},)")
        if np.any(sigma <= 0) or np.any(delta <= 0):
            raise ChannelError("noise variances must be strictly positive")
        if isinstance(self.power, PerSubChannel):
            caps = _as_float_array(self.power.caps, "power caps")
            if caps.shape != delta.shape:
                raise ChannelError(
                    f"{caps.size} power caps given for {delta.size} sub-channels")
            if np.any(caps < 0):
                raise ChannelError("power caps must be nonnegative")
            power = PerSubChannel(tuple(float(c) for c in caps))
        elif isinstance(self.power, Total):
            budget = float(self.power.budget)
            if not np.isfinite(budget) or budget < 0:
                raise ChannelError("total power must be finite and nonnegative")
            power = Total(budget)
        else:
            raise ChannelError(f"unknown power constraint {self.power!r}")
        sigma.setflags(write=False)
        delta.setflags(write=False)
        object.__setattr__(self, "sigma_sq", sigma)
        object.__setattr__(self, "delta_sq", delta)
        object.__setattr__(self, "power", power)

    @property
    def K(self) -> int:
        return self.sigma_sq.shape[0]

    @property
    def M(self) -> int:
        return self.sigma_sq.shape[1]

    @property
    def caps(self) -> np.ndarray:
        if not isinstance(self.power, PerSubChannel):
            raise ChannelError("channel has a total power constraint, not per-sub-channel caps")
        return np.array(self.power.caps)

    def with_caps(self, caps: Sequence[float]) -> "ParallelGaussianChannel":
        return ParallelGaussianChannel(self.sigma_sq, self.delta_sq,
                                       PerSubChannel(tuple(float(c) for c in caps)))

    def to_json(self) -> dict:
        if isinstance(self.power, PerSubChannel):
            power = {"per_subchannel": list(self.power.caps)}
        else:
            power = {"total": self.power.budget}
        return {"M": self.M, "K": self.K, "sigma_sq": self.sigma_sq.tolist(),
                "delta_sq": self.delta_sq.tolist(), "power": power}


@dataclass(frozen=True)
class DegradationOrder:
    """Per sub-channel: receivers from strongest to weakest (``perms[i]``)
    and the number ``cuts[i]`` of them that are stronger than group 2."""

    perms: tuple[tuple[int, ...], ...]
    cuts: tuple[int, ...]

    def __post_init__(self):
        if len(self.perms) != len(self.cuts):
            raise ChannelError("one permutation and one cut index per sub-channel")
        for perm, cut in zip(self.perms, self.cuts):
            if sorted(perm) != list(range(len(perm))):
                raise ChannelError(f"{perm} is not a permutation of 0..{len(perm) - 1}")
            if not 0 <= cut <= len(perm):
                raise ChannelError(f"cut index {cut} outside 0..{len(perm)}")

    def chain(self, i: int) -> list:
        """Chain of sub-channel ``i`` as labels; group 2 is the string ``"z"``."""
        perm, cut = self.perms[i], self.cuts[i]
        return list(perm[:cut]) + ["z"] + list(perm[cut:])

    def stronger_than_z(self, i: int) -> frozenset[int]:
        return frozenset(self.perms[i][:self.cuts[i]])


def infer_degradation_order(channel: ParallelGaussianChannel) -> DegradationOrder:
    """Sort receivers by noise variance on every sub-channel.

    Group-1 receivers with the same variance as group 2 are placed on the
    degraded side, after group 2.
    """
    perms, cuts = [], []
    for i in range(channel.M):
        col = channel.sigma_sq[:, i]
        perm = tuple(int(k) for k in np.argsort(col, kind="stable"))
        perms.append(perm)
        cuts.append(int(np.sum(col < channel.delta_sq[i])))
    return DegradationOrder(tuple(perms), tuple(cuts))


@dataclass(frozen=True)
class SplitCheck:
    valid: bool
    index: int | None = None
    bound: str | None = None
    message: str = "ok"

    def __bool__(self):
        return self.valid


def validate_power_split(channel: ParallelGaussianChannel, q, allocation=None) -> SplitCheck:
    """Check ``0 <= Q_i <= P_i``; in total-power mode also ``sum(P_i) <= P``.

    ``allocation`` supplies the per-sub-channel powers in total-power mode
    and is ignored otherwise.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (channel.M,):
        raise ChannelError(f"power split has shape {q.shape}, expected ({channel.M},)")
    if isinstance(channel.power, PerSubChannel):
        caps = channel.caps
    else:
        if allocation is None:
            raise ChannelError("total-power mode needs a power allocation")
        caps = np.asarray(allocation, dtype=float)
        if caps.shape != (channel.M,):
            raise ChannelError("allocation has the wrong length")
    for i in range(channel.M):
        if not np.isfinite(q[i]):
            return SplitCheck(False, i, "finite", f"Q[{i}] is not finite")
        if q[i] < 0:
            return SplitCheck(False, i, "lower", f"Q[{i}]={q[i]:g} is below 0")
        if q[i] > caps[i]:
            return SplitCheck(False, i, "upper", f"Q[{i}]={q[i]:g} exceeds P[{i}]={caps[i]:g}")
    if isinstance(channel.power, Total):
        if np.any(caps < 0):
            i = int(np.argmax(caps < 0))
            return SplitCheck(False, i, "allocation", f"P[{i}]={caps[i]:g} is negative")
        if caps.sum() > channel.power.budget * (1 + 1e-12):
            return SplitCheck(False, None, "total",
                              f"sum(P)={caps.sum():g} exceeds total power {channel.power.budget:g}")
    return SplitCheck(True)


# --------------------------------------------------------------------------
# discrete memoryless channels
# --------------------------------------------------------------------------

def _check_stochastic(mat: np.ndarray, name: str) -> np.ndarray:
    mat = _as_float_array(mat, name)
    if mat.ndim != 2:
        raise ChannelError(f"{name} must be a matrix")
    if np.any(mat < -1e-15) or not np.allclose(mat.sum(axis=1), 1.0, atol=1e-12, rtol=0):
        raise ChannelError(f"{name} is not row-stochastic")
    return np.clip(mat, 0.0, None)


def find_degrading_map(upstream: np.ndarray, downstream: np.ndarray) -> np.ndarray | None:
    """Stochastic ``D`` with ``upstream @ D == downstream``, or None.

    Solved as an LP feasibility problem; the caller re-verifies the result.
    """
    nx, ny = upstream.shape
    nz = downstream.shape[1]
    if np.linalg.matrix_rank(upstream) == ny and nx >= ny:
        # unique candidate when upstream has full column rank
        d = np.linalg.lstsq(upstream, downstream, rcond=None)[0]
        if np.all(d > -1e-10):
            d = np.clip(d, 0.0, None)
            return d / d.sum(axis=1, keepdims=True)
        return None
    nvar = ny * nz
    a_eq, b_eq = [], []
    for x in range(nx):
        for z in range(nz):
            row = np.zeros(nvar)
            row[np.arange(ny) * nz + z] = upstream[x]
            a_eq.append(row)
            b_eq.append(downstream[x, z])
    for y in range(ny):
        row = np.zeros(nvar)
        row[y * nz:(y + 1) * nz] = 1.0
        a_eq.append(row)
        b_eq.append(1.0)
    res = linprog(np.zeros(nvar), A_eq=np.array(a_eq), b_eq=np.array(b_eq),
                  bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10})
    if res.status != 0:
        return None
    d = np.clip(res.x.reshape(ny, nz), 0.0, None)
    return d / d.sum(axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class DegradedDMC:
    """Parallel degraded discrete memoryless broadcast channel.

    ``w_y[i][k]`` is receiver ``k``'s transition matrix on sub-channel ``i``
    (rows indexed by input letter), ``w_z[i]`` the group-2 matrix. The
    degradation chain given by ``order`` is verified on construction and the
    maps between consecutive chain members are kept in ``links``.
    """

    w_y: tuple[tuple[np.ndarray, ...], ...]
    w_z: tuple[np.ndarray, ...]
    order: DegradationOrder
    links: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if len(self.w_y) != len(self.w_z) or len(self.w_z) != len(self.order.perms):
            raise ChannelError("w_y, w_z and order must cover the same sub-channels")
        w_y, w_z, links = [], [], []
        supplied = self.links or (None,) * len(self.w_z)
        for i, (ys, z) in enumerate(zip(self.w_y, self.w_z)):
            z = _check_stochastic(z, f"w_z[{i}]")
            ys = tuple(_check_stochastic(y, f"w_y[{i}][{k}]") for k, y in enumerate(ys))
            if len(ys) != len(self.order.perms[i]):
                raise ChannelError(f"sub-channel {i}: order has {len(self.order.perms[i])} "
                                   f"receivers but {len(ys)} matrices were given")
            for k, y in enumerate(ys):
                if y.shape[0] != z.shape[0]:
                    raise ChannelError(f"w_y[{i}][{k}] input alphabet differs from w_z[{i}]")
            chain = self.order.chain(i)
            mats = [z if c == "z" else ys[c] for c in chain]
            given = supplied[i]
            steps = []
            for j in range(len(mats) - 1):
                if given is not None:
                    d = _check_stochastic(given[j], f"links[{i}][{j}]")
                else:
                    d = find_degrading_map(mats[j], mats[j + 1])
                if d is None or d.shape != (mats[j].shape[1], mats[j + 1].shape[1]) \
                        or np.max(np.abs(mats[j] @ d - mats[j + 1])) > DEGRADE_TOL:
                    raise ChannelError(
                        f"sub-channel {i}: {chain[j + 1]!r} is not a degraded version of "
                        f"{chain[j]!r}")
                d.setflags(write=False)
                steps.append(d)
            for m in (z, *ys):
                m.setflags(write=False)
            w_y.append(ys)
            w_z.append(z)
            links.append(tuple(steps))
        object.__setattr__(self, "w_y", tuple(w_y))
        object.__setattr__(self, "w_z", tuple(w_z))
        object.__setattr__(self, "links", tuple(links))

    @property
    def M(self) -> int:
        return len(self.w_z)

    @property
    def K(self) -> int:
        return len(self.w_y[0])

    def input_size(self, i: int) -> int:
        return self.w_z[i].shape[0]

    def joint_size(self, i: int) -> int:
        """|X_i| times the product of all output alphabet sizes on sub-channel i."""
        size = self.input_size(i) * self.w_z[i].shape[1]
        for y in self.w_y[i]:
            size *= y.shape[1]
        return size

    def map_between(self, i: int, a, b) -> np.ndarray:
        """Composite degrading map from chain member ``a`` down to ``b``."""
        chain = self.order.chain(i)
        ia, ib = chain.index(a), chain.index(b)
        if ia > ib:
            raise ChannelError(f"{b!r} is upstream of {a!r} on sub-channel {i}")
        d = np.eye(self._matrix(i, a).shape[1])
        for step in self.links[i][ia:ib]:
            d = d @ step
        return d

    def _matrix(self, i, label):
        return self.w_z[i] if label == "z" else self.w_y[i][label]

    def joint_yz(self, i: int, k: int) -> np.ndarray:
        """p(y_k, z | x) on sub-channel i as an ``|X| x |Y| x |Z|`` array."""
        chain = self.order.chain(i)
        wy, wz = self.w_y[i][k], self.w_z[i]
        if chain.index(k) < chain.index("z"):
            d = self.map_between(i, k, "z")
            return wy[:, :, None] * d[None, :, :]
        d = self.map_between(i, "z", k)
        return wz[:, None, :] * d.T[None, :, :]

    def to_json(self) -> dict:
        return {"subchannels": [
            {"w_y": [y.tolist() for y in self.w_y[i]], "w_z": self.w_z[i].tolist(),
             "order": list(self.order.perms[i]), "cut": self.order.cuts[i]}
            for i in range(self.M)]}


# --------------------------------------------------------------------------
# JSON documents
# --------------------------------------------------------------------------

def _strict_keys(doc: dict, allowed: set, required: set, where: str):
    if not isinstance(doc, dict):
        raise ChannelError(f"{where}: expected an object")
    unknown = set(doc) - allowed
    if unknown:
        raise ChannelError(f"{where}: unknown keys {sorted(unknown)}")
    missing = required - set(doc)
    if missing:
        raise ChannelError(f"{where}: missing keys {sorted(missing)}")


def gaussian_channel_from_json(doc: dict) -> ParallelGaussianChannel:
    _strict_keys(doc, {"M", "K", "sigma_sq", "delta_sq", "power"},
                 {"M", "K", "sigma_sq", "delta_sq", "power"}, "channel")
    power = doc["power"]
    _strict_keys(power, {"per_subchannel", "total"}, set(), "channel.power")
    if len(power) != 1:
        raise ChannelError("channel.power needs exactly one of per_subchannel / total")
    if "total" in power:
        constraint = Total(power["total"])
    else:
        constraint = PerSubChannel(tuple(power["per_subchannel"]))
    ch = ParallelGaussianChannel(np.array(doc["sigma_sq"], dtype=float),
                                 np.array(doc["delta_sq"], dtype=float), constraint)
    if ch.M != doc["M"] or ch.K != doc["K"]:
        raise ChannelError(f"declared M={doc['M']}, K={doc['K']} but matrices give "
                           f"M={ch.M}, K={ch.K}")
    return ch


def load_gaussian_channel(path) -> ParallelGaussianChannel:
    return gaussian_channel_from_json(json.loads(Path(path).read_text()))


def dmc_from_json(doc: dict) -> DegradedDMC:
    """Parse ``{"subchannels": [{"w_y": [...], "w_z": [...], "order": [...],
    "cut": l, "links": [...]?}, ...]}``."""
    _strict_keys(doc, {"subchannels"}, {"subchannels"}, "dmc")
    w_y, w_z, perms, cuts, links = [], [], [], [], []
    for j, sub in enumerate(doc["subchannels"]):
        _strict_keys(sub, {"w_y", "w_z", "order", "cut", "links"},
                     {"w_y", "w_z", "order", "cut"}, f"dmc.subchannels[{j}]")
        w_y.append(tuple(np.array(y, dtype=float) for y in sub["w_y"]))
        w_z.append(np.array(sub["w_z"], dtype=float))
        perms.append(tuple(int(k) for k in sub["order"]))
        cuts.append(int(sub["cut"]))
        links.append(None if "links" not in sub
                     else tuple(np.array(d, dtype=float) for d in sub["links"]))
    if any(l is not None for l in links) and any(l is None for l in links):
        raise ChannelError("links must be given for all sub-channels or none")
    order = DegradationOrder(tuple(perms), tuple(cuts))
    return DegradedDMC(tuple(w_y), tuple(w_z), order,
                       tuple(links) if links and links[0] is not None else ())


def load_dmc(path) -> DegradedDMC:
    return dmc_from_json(json.loads(Path(path).read_text()))
