import math

import numpy as np
import pytest
from scipy import stats

from instances import (REF_EPSILON, REF_P, REF_Q, REF_SEED, copy_pair_dmc, copy_scheme,
                       reference_dmc, reference_scheme)
from oracles import binary_mi, brute_leakage
from privbc.channel import DegradationOrder, DegradedDMC
from privbc.codebook import (CodeSizeError, ToyCodeConfig, build_code,
                             check_conditional_independence, encode, exact_leakage,
                             round_half_up, scaled_rates, simulate)
from privbc.dmc import AuxiliaryScheme, bsc

LN2 = math.log(2)


def reference_code(n, fraction=0.9, **kw):
    ch, sch = reference_dmc(), reference_scheme()
    r1, r2 = scaled_rates(ch, sch, fraction)
    cfg = ToyCodeConfig(n, ch, r1, r2, REF_EPSILON, REF_SEED)
    return build_code(cfg, sch, **kw)


@pytest.fixture(scope="module")
def ref10():
    return reference_code(10)


def noisy_scheme():
    return AuxiliaryScheme((np.full(2, 0.5),) * 2, (np.array([[0.85, 0.15], [0.15, 0.85]]),) * 2)


# -- sizes -------------------------------------------------------------------

def test_sizes_match_closed_form():
    code = reference_code(12)
    n, eps = 12, REF_EPSILON
    half = np.full(2, 0.5)
    # constant u on sub-channel 0, u = x on sub-channel 1
    iuz = [0.0, binary_mi(half, np.eye(2))]
    ixz = [binary_mi(half, bsc(REF_Q)), 0.0]
    want_n2 = tuple(max(0, round_half_up(n * (a - 2 * eps) / LN2)) for a in iuz)
    want_l1 = tuple(max(0, round_half_up(n * (b + eps) / LN2)) for b in ixz)
    assert code.n2_bits == want_n2 == (0, 9)
    assert code.l1_bits == want_l1 == (5, 1)
    assert [len(c) for c in code.clouds] == [2 ** b for b in want_n2]
    assert [s.shape[2] for s in code.satellites] == [2 ** b for b in want_l1]


def test_bin_accounting():
    code = reference_code(12)
    assert sum(code.n2_bits) == code.bin_bits + math.log2(code.l2)
    sizes = np.bincount(code.bin_of, minlength=code.n_bins)
    assert sizes.max() - sizes.min() <= 1
    assert np.array_equal(np.sort(code.members.ravel()), np.arange(code.bin_of.size))


def test_full_rate_gives_singleton_bins():
    ch, sch = reference_dmc(), reference_scheme()
    probe = build_code(ToyCodeConfig(8, ch, 0.1, 0.0, REF_EPSILON, 3), sch)
    r2 = sum(probe.n2_bits) * LN2 / 8
    code = build_code(ToyCodeConfig(8, ch, 0.1, r2, REF_EPSILON, 3), sch)
    assert code.l2 == 1
    rng = np.random.default_rng(0)
    picks = {int(encode(code, 0, 1, rng)[1][1]) for _ in range(20)}
    assert len(picks) == 1


def test_single_subchannel_is_one_binned_book():
    order = DegradationOrder(((0,),), (0,))
    ch = DegradedDMC(((bsc(0.1),),), (np.eye(2),), order)
    sch = AuxiliaryScheme((np.full(2, 0.5),), (np.eye(2),))
    code = build_code(ToyCodeConfig(8, ch, 0.0, 0.15, 0.02, 0), sch)
    assert code.M == 1 and len(code.clouds) == 1
    assert code.bin_of.size == len(code.clouds[0])
    # with u = x the satellites are the cloud centres themselves
    assert np.array_equal(code.satellites[0][:, 0, 0], code.clouds[0])


def test_satellites_follow_p_x_given_u():
    ch = reference_dmc()
    sch = AuxiliaryScheme((np.full(2, 0.5),) * 2,
                          (np.array([[1.0, 0.0], [0.3, 0.7]]),) * 2)
    code = build_code(ToyCodeConfig(8, ch, 0.2, 0.0, 0.02, 5), sch)
    for cu, xs in zip(code.clouds, code.satellites):
        zero_cloud = np.broadcast_to(cu[:, None, None, :] == 0, xs.shape)
        assert np.all(xs[zero_cloud] == 0)
        ones = xs[~zero_cloud]
        if ones.size > 200:
            assert abs(ones.mean() - 0.7) < 5 * math.sqrt(0.21 / ones.size)


def test_deterministic_bytes():
    a, b = reference_code(8), reference_code(8)
    assert a.to_bytes() == b.to_bytes()
    ch, sch = reference_dmc(), reference_scheme()
    r1, r2 = scaled_rates(ch, sch, 0.9)
    other = build_code(ToyCodeConfig(8, ch, r1, r2, REF_EPSILON, REF_SEED + 1), sch)
    assert other.digest() != a.digest()


def test_size_guards():
    ch = DegradedDMC(((np.eye(3),),), (np.eye(3),), DegradationOrder(((0,),), (0,)))
    with pytest.raises(CodeSizeError):
        ToyCodeConfig(8, ch, 0.1, 0.1)  # (3*3)^8 > 2^24
    with pytest.raises(CodeSizeError):
        ToyCodeConfig(15, reference_dmc(), 0.1, 0.1)
    with pytest.raises(CodeSizeError):
        build_code(ToyCodeConfig(8, reference_dmc(), 0.1, 0.9, 0.02), reference_scheme())


# -- encoding ----------------------------------------------------------------

def test_encode_rejects_bad_messages():
    code = reference_code(8)
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        encode(code, code.n_m1, 0, rng)
    with pytest.raises(ValueError):
        encode(code, 0, -1, rng)


def test_encode_reproducible():
    code = reference_code(8)
    w1, _ = encode(code, np.arange(4), np.zeros(4, int), np.random.default_rng(9))
    w2, _ = encode(code, np.arange(4), np.zeros(4, int), np.random.default_rng(9))
    assert all(np.array_equal(a, b) for a, b in zip(w1, w2))


def test_bin_member_uniform():
    code = reference_code(12)
    rng = np.random.default_rng(4)
    draws = 10_000
    _, clouds = encode(code, np.zeros(draws, int), np.zeros(draws, int), rng)
    seq = np.ravel_multi_index(clouds, code.cloud_sizes)
    assert set(seq.tolist()) <= set(code.members[0].tolist())
    counts = np.array([np.sum(seq == s) for s in code.members[0]])
    assert stats.chisquare(counts).pvalue > 0.01


# -- simulation --------------------------------------------------------------

def test_noiseless_channels_decode_perfectly():
    order = DegradationOrder(((0,),), (0,))
    ch = DegradedDMC(((np.eye(2),),), (np.eye(2),), order)
    sch = AuxiliaryScheme((np.full(2, 0.5),), (np.eye(2),))
    code = build_code(ToyCodeConfig(8, ch, 0.0, 0.09, 0.3, 1), sch)
    assert len({tuple(c) for c in code.clouds[0]}) == len(code.clouds[0])
    rep = simulate(code, 5000)
    assert rep.group2_error == 0.0 and rep.group1_error == (0.0,)


def test_simulate_requires_trials():
    with pytest.raises(ValueError):
        simulate(reference_code(6), 0)


def test_group1_fails_above_region():
    code = reference_code(12, fraction=1.3)
    assert simulate(code, 20_000).group1_error[0] > 0.5


def test_simulation_reproducible():
    code = reference_code(8)
    assert simulate(code, 3000, workers=1) == simulate(code, 3000, workers=3)


# -- leakage -----------------------------------------------------------------

def test_exact_leakage_matches_enumeration():
    ch = reference_dmc()
    code = build_code(ToyCodeConfig(4, ch, 0.3, 0.1, 0.0, 2), noisy_scheme())
    assert code.n_m1 >= 2 and code.n_bins >= 2 and code.l2 >= 2
    got = exact_leakage(code)
    want1 = brute_leakage(code.satellites, code.members, code.cloud_sizes, ch.w_z, "m1")
    want2 = brute_leakage(code.satellites, code.members, code.cloud_sizes,
                          [w[0] for w in ch.w_y], "m2")
    assert want1 > 1e-3 and want2 > 1e-3
    assert got.m1_to_z == pytest.approx(want1 / 4, abs=1e-12)
    assert got.m2_to_y[0] == pytest.approx(want2 / 4, abs=1e-12)


def test_single_message_has_no_leakage():
    ch = reference_dmc()
    code = build_code(ToyCodeConfig(6, ch, 0.3, 0.0, 0.02, 0), noisy_scheme())
    assert code.n_bins == 1
    assert exact_leakage(code).m2_to_y == (0.0,)


def test_reference_leakage_small(ref10):
    rep = exact_leakage(ref10)
    assert rep.m1_to_z < 0.1
    assert rep.m2_to_y[0] < 0.1


def test_oversized_satellites_do_not_raise_leakage(ref10):
    base = exact_leakage(ref10).m1_to_z
    bigger = exact_leakage(reference_code(10, l1_extra_bits=1)).m1_to_z
    assert bigger <= base


def test_unbinned_code_leaks(ref10):
    ch, sch = reference_dmc(), reference_scheme()
    r1, _ = scaled_rates(ch, sch, 0.9)
    full = sum(ref10.n2_bits) * LN2 / 10
    code = build_code(ToyCodeConfig(10, ch, r1, full, REF_EPSILON, REF_SEED), sch)
    assert code.l2 == 1
    assert exact_leakage(code).m2_to_y[0] > 0.2


def test_leakage_refuses_shared_index(ref10):
    with pytest.raises(CodeSizeError):
        exact_leakage(ref10.with_shared_index())


# -- conditional independence ------------------------------------------------

def test_factorization_not_rejected(ref10):
    rep = check_conditional_independence(ref10, 4000)
    assert not rep.rejected and rep.adjusted_p > 0.01


def test_factorization_holds_with_two_cloud_books():
    code = build_code(ToyCodeConfig(6, copy_pair_dmc(), 0.0, 0.2, 0.02, 1), copy_scheme())
    assert min(code.cloud_sizes) > 1
    assert not check_conditional_independence(code, 4000).rejected


def test_shared_index_rejected():
    code = build_code(ToyCodeConfig(6, copy_pair_dmc(), 0.0, 0.2, 0.02, 1), copy_scheme())
    rep = check_conditional_independence(code.with_shared_index(), 100_000)
    assert rep.rejected and rep.adjusted_p < 1e-6


def test_constant_messages_trivially_independent():
    ch = reference_dmc()
    code = build_code(ToyCodeConfig(6, ch, 0.0, 0.0, 0.5, 0), noisy_scheme())
    assert code.bin_of.size == 1
    assert not check_conditional_independence(code, 2000).rejected


def test_independence_needs_two_subchannels():
    order = DegradationOrder(((0,),), (0,))
    ch = DegradedDMC(((bsc(0.1),),), (np.eye(2),), order)
    sch = AuxiliaryScheme((np.full(2, 0.5),), (np.eye(2),))
    code = build_code(ToyCodeConfig(6, ch, 0.0, 0.1, 0.02, 0), sch)
    with pytest.raises(ValueError):
        check_conditional_independence(code, 100)
