"""Shared channel instances for the codebook and acceptance tests."""

import numpy as np

from privbc.channel import DegradationOrder, DegradedDMC
from privbc.dmc import AuxiliaryScheme, bsc

# K=1, M=2 binary: the receiver is noiseless where group 2 sees a BSC(0.2),
# and sees a BSC(0.03) where group 2 is noiseless.
REF_Q = 0.2
REF_P = 0.03
REF_EPSILON = 0.08
REF_SEED = 1


def reference_dmc() -> DegradedDMC:
    order = DegradationOrder(((0,), (0,)), (1, 0))
    return DegradedDMC(((np.eye(2),), (bsc(REF_P),)), (bsc(REF_Q), np.eye(2)), order)


def reference_scheme() -> AuxiliaryScheme:
    """Constant u on the first sub-channel, u = x on the second, uniform x."""
    return AuxiliaryScheme((np.ones(1), np.full(2, 0.5)),
                           (np.full((1, 2), 0.5), np.eye(2)))


def copy_pair_dmc(p=0.1) -> DegradedDMC:
    """Two sub-channels on which group 2 is noiseless and the receiver sees a BSC."""
    order = DegradationOrder(((0,), (0,)), (0, 0))
    return DegradedDMC(((bsc(p),), (bsc(p),)), (np.eye(2), np.eye(2)), order)


def copy_scheme(m=2) -> AuxiliaryScheme:
    return AuxiliaryScheme((np.full(2, 0.5),) * m, (np.eye(2),) * m)
