"""Independent reference computations used by the tests.

Nothing here imports the package: each oracle is a direct transcription of
a closed form or an exhaustive scan.
"""

import numpy as np


def gaussian_terms(q, p, s, d):
    a1 = np.maximum(0.5 * np.log((q + s) / s) - 0.5 * np.log((q + d) / d), 0.0)
    a2 = np.maximum(0.5 * np.log((p + d) / (q + d)) - 0.5 * np.log((p + s) / (q + s)), 0.0)
    return a1, a2


def gaussian_grid_oracle(sigma_sq, delta_sq, caps, targets, step=1e-3):
    """Best R2 with R1 >= target over a dense grid of Q (M <= 2)."""
    sigma_sq = np.asarray(sigma_sq, dtype=float)
    m = len(caps)
    axes = [np.linspace(0.0, p, int(np.ceil(p / step)) + 1) for p in caps]
    cols = [gaussian_terms(axes[i][None, :], caps[i], sigma_sq[:, i][:, None], delta_sq[i])
            for i in range(m)]
    best = np.full(len(targets), -np.inf)
    if m == 1:
        r1, r2 = cols[0][0].min(axis=0), cols[0][1].min(axis=0)
        for j, t in enumerate(targets):
            best[j] = r2[r1 >= t - 1e-12].max()
        return best
    if m != 2:
        raise ValueError("grid oracle handles at most two sub-channels")
    (a1, a2), (b1, b2) = cols
    for c in range(0, a1.shape[1], 400):
        r1 = (a1[:, c:c + 400, None] + b1[:, None, :]).min(axis=0)
        r2 = (a2[:, c:c + 400, None] + b2[:, None, :]).min(axis=0)
        for j, t in enumerate(targets):
            ok = r1 >= t - 1e-12
            if ok.any():
                best[j] = max(best[j], r2[ok].max())
    return best


def random_tradeoff_instance(rng, max_k=3):
    """M=2 Gaussian instance where every group-1 receiver is stronger than
    group 2 on one sub-channel and weaker on the other, so both corners are
    positive and the region is not a rectangle."""
    k = int(rng.integers(2, max_k + 1))
    delta = rng.uniform(0.8, 3.0, 2)
    sigma = np.empty((k, 2))
    strong_on = rng.permutation(np.arange(k) % 2)
    for r in range(k):
        i = strong_on[r]
        sigma[r, i] = rng.uniform(0.25, delta[i] * 0.8)
        sigma[r, 1 - i] = rng.uniform(min(delta[1 - i] * 1.25, 3.9), 4.0)
    caps = rng.uniform(0.5, 8.0, 2)
    return sigma, delta, caps


def binary_mi(px, w):
    """I(x; y) in nats for input law ``px`` and channel matrix ``w``."""
    joint = px[:, None] * w
    py = joint.sum(axis=0)
    prod = px[:, None] * py[None, :]
    mask = joint > 0
    return float(np.sum(joint[mask] * np.log(joint[mask] / prod[mask])))


def secrecy_scan(w_strong, w_weak, step=1e-4):
    """max over binary input bias of I(x; strong) - I(x; weak)."""
    best = 0.0
    for a in np.arange(0.0, 1.0 + step / 2, step):
        px = np.array([1.0 - a, a])
        best = max(best, binary_mi(px, w_strong) - binary_mi(px, w_weak))
    return best


def brute_leakage(satellites, members, cloud_sizes, channels, target):
    """I(message; outputs) in nats for a toy superposition code.

    Enumerates every (m1, m2, bin member, satellite indices) tuple and every
    output tuple. ``satellites[i]`` has shape (C_i, n_m1, L_i, n);
    ``members`` lists the product indices of each bin; ``channels[i]`` is the
    observer's matrix on sub-channel i; ``target`` is "m1" or "m2".
    """
    import itertools

    n = satellites[0].shape[-1]
    n_m1 = satellites[0].shape[1]
    n_bins, l2 = members.shape
    outs = [list(itertools.product(range(w.shape[1]), repeat=n)) for w in channels]

    def word_prob(x, y, w):
        p = 1.0
        for a, b in zip(x, y):
            p *= w[a, b]
        return p

    n_msg = n_m1 if target == "m1" else n_bins
    joint = {}
    for m1 in range(n_m1):
        for m2 in range(n_bins):
            for seq in members[m2]:
                clouds = np.unravel_index(seq, cloud_sizes)
                sat_ranges = [range(s.shape[2]) for s in satellites]
                for sats in itertools.product(*sat_ranges):
                    w0 = 1.0 / (n_m1 * n_bins * l2 * np.prod([len(r) for r in sat_ranges]))
                    words = [satellites[i][clouds[i], m1, sats[i]] for i in range(len(channels))]
                    per = [np.array([word_prob(words[i], y, channels[i]) for y in outs[i]])
                           for i in range(len(channels))]
                    full = per[0]
                    for p in per[1:]:
                        full = np.outer(full, p).ravel()
                    key = m1 if target == "m1" else m2
                    joint[key] = joint.get(key, 0.0) + w0 * full
    table = np.array([joint[k] for k in range(n_msg)])
    py = table.sum(axis=0)
    pm = table.sum(axis=1)
    mask = table > 0
    denom = (pm[:, None] * py[None, :])[mask]
    return float(np.sum(table[mask] * np.log(table[mask] / denom)))
