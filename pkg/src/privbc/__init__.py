"""Rate regions for private broadcasting over parallel degraded channels."""

from .channel import (ChannelError, DegradationOrder, DegradedDMC, ParallelGaussianChannel,
                      PerSubChannel, Total, infer_degradation_order, validate_power_split)
from .gaussian import (RatePair, boundary_sweep, corner_rates, max_r2_given_r1, rate_term_a1,
                       rate_term_a2, region_point, total_power_region)
from .kkt import KktCertificate, certify, kkt_residuals

__version__ = "0.1.0"
