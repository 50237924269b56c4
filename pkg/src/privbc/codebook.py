"""Toy-scale superposition codes for private broadcasting.

Cloud centres carry the group-2 message through a binned product codebook,
one book per sub-channel; satellites carry the group-1 message through a
secure multicast codebook conditioned on each cloud centre. At blocklengths
up to about a dozen symbols everything can be enumerated, so decoding is
maximum likelihood and leakage is computed exactly.

All sizes are powers of two, ``2^b`` with ``b`` the exponent in bits rounded
half up; mutual informations are in nats and converted with ``ln 2``.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import sparse, stats

from .channel import ChannelError, DegradedDMC, _strict_keys, dmc_from_json
from .dmc import AuxiliaryScheme, conditional_mi, dmc_rate_pair, entropy
from .fading import worker_count

__all__ = [
    "ToyCodeConfig",
    "ToyCode",
    "CodeSizeError",
    "build_code",
    "encode",
    "simulate",
    "exact_leakage",
    "check_conditional_independence",
    "round_half_up",
    "scaled_rates",
    "code_config_from_json",
]

ENUM_GUARD = 2 ** 24
LEAK_GUARD = 2 ** 34
LN2 = math.log(2.0)


class CodeSizeError(ValueError):
    pass


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-12))


@dataclass(frozen=True, eq=False)
class ToyCodeConfig:
    """Blocklength, channel, target rates (nats/symbol), slack ``epsilon``
    (nats) and seed."""

    n: int
    channel: DegradedDMC
    r1: float
    r2: float
    epsilon: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.n <= 14:
            raise CodeSizeError("blocklength must lie in 1..14")
        if self.r1 < 0 or self.r2 < 0 or self.epsilon < 0:
            raise ValueError("rates and epsilon must be nonnegative")
        for i in range(self.channel.M):
            nx = self.channel.input_size(i)
            outs = [self.channel.w_z[i].shape[1]] + [w.shape[1] for w in self.channel.w_y[i]]
            size = (nx * max(outs)) ** self.n
            if size > ENUM_GUARD:
                raise CodeSizeError(f"sub-channel {i}: (|X| |out|)^n = {size} exceeds "
                                    f"the enumeration guard 2^24")

    @property
    def M(self) -> int:
        return self.channel.M


@dataclass(eq=False)
class ToyCode:
    config: ToyCodeConfig
    scheme: AuxiliaryScheme
    n2_bits: tuple  # per sub-channel log2 |C_2,i|
    l1_bits: tuple  # per sub-channel log2 L_1,i
    m1_bits: int
    bin_bits: int
    clouds: tuple  # per sub-channel (|C_2,i|, n) symbols of u
    satellites: tuple  # per sub-channel (|C_2,i|, n_m1, L_1,i, n) symbols of x
    bin_of: np.ndarray  # product index of (m2_1..m2_M) -> bin
    members: np.ndarray  # (n_bins, L2) product indices
    shared_index: bool = False

    @property
    def n(self) -> int:
        return self.config.n

    @property
    def M(self) -> int:
        return self.config.M

    @property
    def n_m1(self) -> int:
        return 2 ** self.m1_bits

    @property
    def n_bins(self) -> int:
        return 2 ** self.bin_bits

    @property
    def cloud_sizes(self) -> tuple:
        return tuple(2 ** b for b in self.n2_bits)

    @property
    def l1_sizes(self) -> tuple:
        return tuple(2 ** b for b in self.l1_bits)

    @property
    def l2(self) -> int:
        return self.members.shape[1]

    def split_product(self, idx):
        """Product index -> per-sub-channel cloud indices (last varies fastest)."""
        return np.unravel_index(idx, self.cloud_sizes)

    def to_bytes(self) -> bytes:
        parts = [np.array(self.n2_bits + self.l1_bits + (self.m1_bits, self.bin_bits),
                          dtype=np.int64).tobytes()]
        for a in (*self.clouds, *self.satellites, self.bin_of, self.members):
            parts.append(np.ascontiguousarray(a, dtype=np.int64).tobytes())
        return b"".join(parts)

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def with_shared_index(self) -> "ToyCode":
        """Variant whose encoder reuses one cloud index on every sub-channel,
        which couples the sub-channel inputs given m1."""
        return ToyCode(**{**self.__dict__, "shared_index": True})


def scheme_informations(channel: DegradedDMC, scheme: AuxiliaryScheme):
    """Per sub-channel ``(I(u;z), I(x;z|u))`` in nats."""
    out = []
    for i in range(channel.M):
        joint = scheme.joint(i)[:, :, None] * channel.w_z[i][None]
        out.append((float(conditional_mi(joint, (0,), (2,))),
                    float(conditional_mi(joint, (1,), (2,), (0,)))))
    return out


def scaled_rates(channel: DegradedDMC, scheme: AuxiliaryScheme, fraction: float):
    """``fraction`` times the scheme's rate pair, e.g. 0.9 for a point 10% inside."""
    rp = dmc_rate_pair(channel, scheme)
    return fraction * rp.r1, fraction * rp.r2


def code_config_from_json(doc: dict):
    """Parse a simulation config into ``(ToyCodeConfig, AuxiliaryScheme)``.

    Keys: ``n``, ``channel`` (DMC document), ``scheme`` with ``p_u`` and
    ``p_x_given_u`` per sub-channel, and either ``rates`` ``{"r1", "r2"}`` or
    ``rate_fraction`` (a multiple of the scheme's rate pair); optional
    ``epsilon`` and ``seed``.
    """
    _strict_keys(doc, {"n", "channel", "scheme", "rates", "rate_fraction", "epsilon", "seed"},
                 {"n", "channel", "scheme"}, "code")
    ch = dmc_from_json(doc["channel"])
    _strict_keys(doc["scheme"], {"p_u", "p_x_given_u"}, {"p_u", "p_x_given_u"}, "code.scheme")
    scheme = AuxiliaryScheme(tuple(np.array(v, dtype=float) for v in doc["scheme"]["p_u"]),
                             tuple(np.array(v, dtype=float)
                                   for v in doc["scheme"]["p_x_given_u"]))
    if ("rates" in doc) == ("rate_fraction" in doc):
        raise ChannelError("code: give exactly one of rates / rate_fraction")
    if "rates" in doc:
        _strict_keys(doc["rates"], {"r1", "r2"}, {"r1", "r2"}, "code.rates")
        r1, r2 = float(doc["rates"]["r1"]), float(doc["rates"]["r2"])
    else:
        r1, r2 = scaled_rates(ch, scheme, float(doc["rate_fraction"]))
    cfg = ToyCodeConfig(int(doc["n"]), ch, r1, r2, float(doc.get("epsilon", 0.02)),
                        int(doc.get("seed", 0)))
    return cfg, scheme


def _sample_rows(rng, probs, shape):
    """Draw symbols with ``P(s) = probs[..., s]`` for every entry of ``shape``."""
    cdf = np.cumsum(probs, axis=-1)
    cdf[..., -1] = 1.0
    u = rng.random(shape)
    return (u[..., None] >= cdf).sum(axis=-1)


def build_code(config: ToyCodeConfig, scheme: AuxiliaryScheme, *,
               l1_extra_bits: int = 0) -> ToyCode:
    """Draw the cloud books, bin map and satellite books.

    ``|C_2,i| = 2^round(n (I(u_i;z_i) - 2 eps)/ln 2)``,
    ``L_1,i = 2^round(n (I(x_i;z_i|u_i) + eps)/ln 2)``; the numbers of group-1
    messages and of bins are ``2^round(n R/ln 2)``. Negative exponents are
    clamped to zero (one codeword). ``l1_extra_bits`` enlarges every
    satellite book by that many bits beyond the prescribed size.
    """
    ch = config.channel
    scheme.check_against(ch)
    n, eps = config.n, config.epsilon
    info = scheme_informations(ch, scheme)
    n2 = tuple(max(0, round_half_up(n * (iuz - 2 * eps) / LN2)) for iuz, _ in info)
    l1 = tuple(max(0, round_half_up(n * (ixz + eps) / LN2)) + l1_extra_bits
               for _, ixz in info)
    m1_bits = round_half_up(n * config.r1 / LN2)
    bin_bits = round_half_up(n * config.r2 / LN2)
    if bin_bits > sum(n2):
        raise CodeSizeError(f"R2 needs 2^{bin_bits} bins but the product codebook has only "
                            f"2^{sum(n2)} sequences")
    total = sum(2 ** (b + m1_bits + l) * n for b, l in zip(n2, l1))
    if total > 2 ** 27:
        raise CodeSizeError(f"codebooks would hold {total} symbols")
    rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), 0]))
    clouds, sats = [], []
    for i in range(ch.M):
        cu = _sample_rows(rng, scheme.p_u[i], (2 ** n2[i], n))
        px = scheme.p_x_given_u[i][cu]  # (C, n, |X|)
        xs = _sample_rows(rng, px[:, None, None, :, :],
                          (2 ** n2[i], 2 ** m1_bits, 2 ** l1[i], n))
        clouds.append(cu)
        sats.append(xs)
    size = 2 ** sum(n2)
    perm = rng.permutation(size)
    l2 = size // 2 ** bin_bits
    members = perm.reshape(2 ** bin_bits, l2)
    bin_of = np.empty(size, dtype=np.int64)
    bin_of[members.ravel()] = np.repeat(np.arange(2 ** bin_bits), l2)
    return ToyCode(config, scheme, n2, l1, m1_bits, bin_bits, tuple(clouds), tuple(sats),
                   bin_of, members)


def encode(code: ToyCode, m1, m2, rng):
    """Input words for messages ``m1``, ``m2`` (scalars or equal-length arrays).

    Returns a list over sub-channels of symbol arrays of shape ``(..., n)``
    and the chosen per-sub-channel cloud indices.
    """
    m1 = np.asarray(m1)
    m2 = np.asarray(m2)
    if np.any((m1 < 0) | (m1 >= code.n_m1)):
        raise ValueError(f"m1 must lie in [0, {code.n_m1})")
    if np.any((m2 < 0) | (m2 >= code.n_bins)):
        raise ValueError(f"m2 must lie in [0, {code.n_bins})")
    shape = np.broadcast(m1, m2).shape
    pick = rng.integers(0, code.l2, shape)
    seq = code.members[m2, pick]
    if code.shared_index:
        first = code.split_product(seq)[0]
        clouds = tuple(first % c for c in code.cloud_sizes)
    else:
        clouds = code.split_product(seq)
    words = []
    for i in range(code.M):
        sat = rng.integers(0, code.l1_sizes[i], shape)
        words.append(code.satellites[i][clouds[i], m1, sat])
    return words, clouds


# --------------------------------------------------------------------------
# likelihood tables
# --------------------------------------------------------------------------

def _word_index(words, base):
    """Integer index of symbol words (last axis), most significant first."""
    n = words.shape[-1]
    weights = base ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (words.astype(np.int64) * weights).sum(axis=-1)


def _likelihoods(words, w):
    """``W^n(y | x)`` for every input word (rows of ``words``) and every
    output word."""
    nx, ny = w.shape
    n = words.shape[-1]
    outs = np.array(np.unravel_index(np.arange(ny ** n), (ny,) * n)).T
    out_ind = [(outs == b).astype(float).T for b in range(ny)]
    logw = np.log(np.where(w > 0, w, 1.0))
    logp = np.zeros((len(words), ny ** n))
    dead = np.zeros((len(words), ny ** n), dtype=bool)
    for a in range(nx):
        xa = (words == a).astype(float)
        if not xa.any():
            continue
        for b in range(ny):
            counts = xa @ out_ind[b]
            if w[a, b] > 0:
                logp += counts * logw[a, b]
            else:
                dead |= counts > 0
    np.exp(logp, out=logp)
    logp[dead] = 0.0
    return logp


class _Book:
    """Distinct satellite words of one sub-channel with their likelihoods
    under ``w`` and the frequency of each word per (cloud, m1)."""

    def __init__(self, code: ToyCode, i: int, w):
        sats = code.satellites[i]  # (C, m1, L, n)
        c, m, l, n = sats.shape
        base = code.config.channel.input_size(i)
        keys, inv = np.unique(_word_index(sats, base), return_inverse=True)
        size = len(keys) * w.shape[1] ** n
        if size > 2 ** 27:
            raise CodeSizeError(f"likelihood table of {size} entries exceeds the guard")
        uniq = np.array(np.unravel_index(keys, (base,) * n)).T
        self.lik = _likelihoods(uniq, w)
        self.inv = inv.reshape(c, m, l)
        self.shape = (c, m, l)
        # row a*m + k holds the frequency of each distinct word among the
        # satellites of (cloud a, m1 = k)
        rows = np.broadcast_to(np.arange(c)[:, None, None] * m
                               + np.arange(m)[None, :, None], (c, m, l))
        self.counts = sparse.csr_matrix(
            (np.full(rows.size, 1.0 / l), (rows.ravel(), self.inv.ravel())),
            shape=(c * m, len(keys)))

    def rows_for(self, k: int):
        return self.counts[k::self.shape[1]]

    def table(self, k: int) -> np.ndarray:
        """``P(y | m1 = k, cloud)`` as ``(C, out)``."""
        return self.rows_for(k) @ self.lik

    def _average(self, by_m1: bool) -> np.ndarray:
        c, m, _ = self.shape
        idx = np.arange(c * m)
        target, size, norm = (idx % m, m, c) if by_m1 else (idx // m, c, m)
        avg = sparse.csr_matrix((np.full(c * m, 1.0 / norm), (target, idx)),
                                shape=(size, c * m))
        return (avg @ self.counts).toarray() @ self.lik

    def by_m1(self) -> np.ndarray:
        """``P(y | m1)``, clouds and satellites averaged: ``(n_m1, out)``."""
        return self._average(True)

    def by_cloud(self) -> np.ndarray:
        """``P(y | cloud)``, m1 and satellites averaged: ``(C, out)``."""
        return self._average(False)

    def best(self) -> np.ndarray:
        """Max of ``W^n(y | x)`` over cloud and satellite, per m1."""
        m = self.shape[1]
        out = np.empty((m, self.lik.shape[1]))
        for k in range(m):
            out[k] = self.lik[np.unique(self.inv[:, k])].max(axis=0)
        return out

    def varies(self) -> bool:
        """Whether ``P(y | m1, cloud)`` depends on m1."""
        first_rows = self.rows_for(0)
        first = None
        for k in range(1, self.shape[1]):
            if (self.rows_for(k) != first_rows).nnz == 0:
                continue
            first = self.table(0) if first is None else first
            if np.any(np.abs(self.table(k) - first) > 1e-15):
                return True
        return False


def _full_table(book: _Book) -> np.ndarray:
    """``P(y | m1, cloud)`` as an ``(n_m1, C, out)`` array."""
    c, m, _ = book.shape
    size = m * c * book.lik.shape[1]
    if size > 2 ** 27:
        raise CodeSizeError(f"exact leakage would tabulate {size} likelihoods; refusing")
    return np.stack([book.table(k) for k in range(m)])


# --------------------------------------------------------------------------
# simulation
# --------------------------------------------------------------------------

def _pick_max(scores, rng):
    """Row-wise argmax with uniformly random tie-breaking."""
    top = scores.max(axis=1, keepdims=True)
    tied = scores >= top * (1 - 1e-12)
    keys = rng.random(scores.shape) * tied
    return keys.argmax(axis=1)


@dataclass
class SimulationReport:
    trials: int
    group1_error: tuple
    group2_error: float


def _decoder_tables(code: ToyCode):
    ch = code.config.channel
    z_tabs, y_tabs = [], []
    for i in range(code.M):
        # group 2 knows neither m1 nor the satellite index
        z_tabs.append(_Book(code, i, ch.w_z[i]).by_cloud())
        strong = ch.order.stronger_than_z(i)
        # receiver k scores each m1 by the best cloud and satellite explanation
        y_tabs.append([_Book(code, i, ch.w_y[i][k]).best()
                       if k in strong else None
                       for k in range(ch.K)])
    return z_tabs, y_tabs


def _channel_outputs(rng, words, w):
    n_out = w.shape[1]
    sym = _sample_rows(rng, w[words], words.shape)
    return _word_index(sym, n_out)


def simulate(code: ToyCode, n_trials: int, *, seed: int | None = None,
             workers: int | None = None) -> SimulationReport:
    """Empirical error rates of ML decoding.

    Receiver k maximises, for each candidate m1, the product over its
    sub-channels ``J_k`` of the best likelihood over cloud and satellite
    indices. The group-2 receiver decodes each cloud index from its own
    sub-channel output (satellites and m1 averaged out) and maps the
    recovered sequence to its bin.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    ch = code.config.channel
    seed = code.config.seed if seed is None else seed
    z_tabs, y_tabs = _decoder_tables(code)
    n_batches = min(32, n_trials)
    sizes = [n_trials // n_batches + (b < n_trials % n_batches) for b in range(n_batches)]

    def batch(b, size):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1, b]))
        m1 = rng.integers(0, code.n_m1, size)
        m2 = rng.integers(0, code.n_bins, size)
        words, _ = encode(code, m1, m2, rng)
        errs1 = np.zeros(ch.K)
        for k in range(ch.K):
            score = np.ones((size, code.n_m1))
            for i in range(code.M):
                if y_tabs[i][k] is None:
                    continue
                y = _channel_outputs(rng, words[i], ch.w_y[i][k])
                score = score * y_tabs[i][k][:, y].T
                # rescale to keep long products away from underflow
                score /= np.maximum(score.max(axis=1, keepdims=True), 1e-300)
            errs1[k] = np.sum(_pick_max(score, rng) != m1)
        est = []
        for i in range(code.M):
            z = _channel_outputs(rng, words[i], ch.w_z[i])
            est.append(_pick_max(z_tabs[i][:, z].T, rng))
        seq = np.ravel_multi_index(tuple(est), code.cloud_sizes)
        errs2 = np.sum(code.bin_of[seq] != m2)
        return np.append(errs1, errs2)

    nw = worker_count() if workers is None else workers
    if nw <= 1:
        counts = [batch(b, s) for b, s in enumerate(sizes)]
    else:
        with ThreadPoolExecutor(max_workers=nw) as pool:
            counts = list(pool.map(batch, range(n_batches), sizes))
    total = np.sum(counts, axis=0) / n_trials
    return SimulationReport(n_trials, tuple(float(v) for v in total[:-1]), float(total[-1]))


# --------------------------------------------------------------------------
# exact leakage
# --------------------------------------------------------------------------

def _row_entropy(p):
    return entropy(p, axis=-1)


def mixture_entropy(factors, weights) -> float:
    """Entropy of ``sum_c w_c prod_i factors[i][c, z_i]`` over all output
    tuples ``(z_1..z_M)``; each factor row is a distribution."""
    weights = np.asarray(weights, dtype=float)
    keep, total = [], 0.0
    for f in factors:
        if np.all(np.abs(f - f[0]) <= 1e-15):
            total += float(_row_entropy(f[0]))
        else:
            keep.append(f)
    if not keep:
        return total
    # merge components that coincide on every remaining factor
    stacked = np.concatenate(keep, axis=1)
    uniq, inv = np.unique(stacked, axis=0, return_inverse=True)
    if len(uniq) < len(stacked):
        weights = np.bincount(inv.ravel(), weights=weights, minlength=len(uniq))
        edges = np.cumsum([0] + [f.shape[1] for f in keep])
        keep = [uniq[:, a:b] for a, b in zip(edges[:-1], edges[1:])]
    if len(weights) == 1:
        return total + float(sum(_row_entropy(f[0]) for f in keep))
    if len(keep) == 1:
        return total + float(_row_entropy(weights @ keep[0]))
    sizes = [f.shape[1] for f in keep]
    work = len(weights) * math.prod(sizes)
    if work > LEAK_GUARD:
        raise CodeSizeError(f"exact leakage needs {work:.3g} products; refusing")
    head, last = keep[:-1], keep[-1]
    head_size = math.prod(sizes[:-1])
    wl = weights[:, None] * last
    block = max(1, 2 ** 22 // max(1, sizes[-1]))
    h = 0.0
    for start in range(0, head_size, block):
        idx = np.unravel_index(np.arange(start, min(start + block, head_size)), sizes[:-1])
        g = np.ones((len(weights), len(idx[0])))
        for f, ix in zip(head, idx):
            g *= f[:, ix]
        p = g.T @ wl
        h += float(entropy(p))
    return total + h


@dataclass
class LeakageReport:
    m1_to_z: float  # I(m1; z^n)/n
    m2_to_y: tuple  # I(m2; y_k^n)/n per group-1 receiver


def exact_leakage(code: ToyCode) -> LeakageReport:
    """``I(m1; z^n)/n`` and ``I(m2; y_k^n)/n`` in nats by full enumeration.

    Messages are uniform. Given m1 the sub-channel outputs are independent,
    because the cloud indices are uniform over the product codebook.
    """
    if code.shared_index:
        raise CodeSizeError("exact leakage assumes independent cloud indices")
    ch = code.config.channel
    n = code.n
    # m1 -> z: the mixture components are the group-1 messages
    pz = [_Book(code, i, ch.w_z[i]).by_m1() for i in range(code.M)]
    h_z = mixture_entropy(pz, np.full(code.n_m1, 1.0 / code.n_m1))
    h_z_m1 = float(np.mean(sum(_row_entropy(p) for p in pz)))
    leak1 = max(0.0, h_z - h_z_m1) / n

    leak2 = []
    for k in range(ch.K):
        books = [_Book(code, i, ch.w_y[i][k]) for i in range(code.M)]
        varies = [i for i in range(code.M) if books[i].varies()]
        if len(varies) <= 1:
            # m1 touches at most one sub-channel, so it can be averaged there
            per_seq = [b.by_cloud() for b in books]
            full = None
        else:
            full = [_full_table(books[i]) for i in range(code.M)]

        def mixture_for(seqs):
            idx = code.split_product(np.asarray(seqs))
            if full is None:
                facs = [per_seq[i][idx[i]] for i in range(code.M)]
                return mixture_entropy(facs, np.full(len(seqs), 1.0 / len(seqs)))
            m = code.n_m1
            facs = [full[i][:, idx[i]].reshape(m * len(seqs), -1) for i in range(code.M)]
            return mixture_entropy(facs, np.full(m * len(seqs), 1.0 / (m * len(seqs))))

        h_y = mixture_for(np.arange(code.bin_of.size))
        h_y_m2 = float(np.mean([mixture_for(code.members[b]) for b in range(code.n_bins)]))
        leak2.append(max(0.0, h_y - h_y_m2) / n)
    return LeakageReport(leak1, tuple(leak2))


# --------------------------------------------------------------------------
# conditional independence of the sub-channel inputs
# --------------------------------------------------------------------------

def _pool(labels, n_groups):
    """Lump labels into about ``n_groups`` groups of similar total count.

    The grouping depends on one side's marginal only, which keeps the null
    of independence intact.
    """
    uniq, inv, counts = np.unique(labels, return_inverse=True, return_counts=True)
    order = np.argsort(-counts, kind="stable")
    before = np.cumsum(counts[order]) - counts[order]
    group = np.empty(len(uniq), dtype=np.int64)
    group[order] = np.minimum(before * n_groups // counts.sum(), n_groups - 1)
    return group[inv.ravel()]


def _williams(table) -> float:
    """Williams' divisor for the G statistic of an r x c table."""
    n = table.sum()
    r, c = table.shape
    rows = n * np.sum(1.0 / table.sum(axis=1)) - 1
    cols = n * np.sum(1.0 / table.sum(axis=0)) - 1
    return 1.0 + rows * cols / (6.0 * n * (r - 1) * (c - 1))


@dataclass
class IndependenceReport:
    p_values: tuple  # per m1 value
    adjusted_p: float  # Bonferroni-adjusted smallest p-value
    rejected: bool


def check_conditional_independence(code: ToyCode, n_draws: int, *, alpha: float = 0.01,
                                   seed: int | None = None) -> IndependenceReport:
    """G-test of ``p(x_1^n, x_2^n | m1) = p(x_1^n | m1) p(x_2^n | m1)``.

    For each m1, ``n_draws`` encodings with a uniform m2 are tabulated by
    (word on sub-channel 1, word on the remaining sub-channels), rare words
    pooled. G carries Williams' correction and the smallest p-value is
    Bonferroni-adjusted over m1.
    """
    if code.M < 2:
        raise ValueError("the factorization test needs at least two sub-channels")
    seed = code.config.seed if seed is None else seed
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 2]))
    base = [code.config.channel.input_size(i) for i in range(code.M)]
    # about 20 expected counts per cell; sparser tables make G anti-conservative
    n_groups = max(2, int(math.sqrt(n_draws / 20)))
    pvals = []
    for m1 in range(code.n_m1):
        m2 = rng.integers(0, code.n_bins, n_draws)
        words, _ = encode(code, np.full(n_draws, m1), m2, rng)
        a = _word_index(words[0], base[0])
        rest = np.zeros(n_draws, dtype=np.int64)
        for i in range(1, code.M):
            rest = rest * base[i] ** code.n + _word_index(words[i], base[i])
        ai = np.unique(_pool(a, n_groups), return_inverse=True)[1].ravel()
        bi = np.unique(_pool(rest, n_groups), return_inverse=True)[1].ravel()
        if ai.max() == 0 or bi.max() == 0:
            pvals.append(1.0)
            continue
        table = np.zeros((ai.max() + 1, bi.max() + 1))
        np.add.at(table, (ai, bi), 1)
        g, _, dof, _ = stats.chi2_contingency(table, correction=False,
                                              lambda_="log-likelihood")
        pvals.append(float(stats.chi2.sf(g / _williams(table), dof)))
    adjusted = min(1.0, min(pvals) * len(pvals))
    return IndependenceReport(tuple(pvals), adjusted, adjusted < alpha)
