"""First-order optimality certificates for the Gaussian boundary program.

The program maximises ``R2`` over ``(Q, R2)`` subject to

    r1 <= sum_i A1[k,i](Q),  R2 <= sum_i A2[k,i](Q),  0 <= Q_i <= P_i,

with multipliers ``alpha_k``, ``beta_k``, ``M1_i``, ``M2_i``. Stationarity
in ``Q_i`` is written with the factor 1/2 absorbed into the multipliers:

    sum_{k in Y_i} alpha_k/(Q_i+s_ki) + sum_{k in Z_i} beta_k/(Q_i+s_ki) + M1_i
        = (sum_{Y_i} alpha_k + sum_{Z_i} beta_k)/(Q_i+d_i) + M2_i

where ``Y_i = {k: s_ki < d_i}`` and ``Z_i = {k: s_ki > d_i}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

__all__ = ["KktCertificate", "kkt_residuals", "certify", "CONDITIONS"]

CONDITIONS = ("stationarity", "normalization", "slack_r1", "slack_r2",
              "slack_lower", "slack_upper", "dual_rates", "dual_power", "primal")


@dataclass
class KktCertificate:
    alpha: np.ndarray
    beta: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    residuals: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values()) if self.residuals else float("nan")


def _sums(channel, q, caps):
    s, d = channel.sigma_sq, channel.delta_sq
    a1 = np.maximum(0.5 * (np.log1p(q / s) - np.log1p(q / d)), 0.0)
    gap = caps - q
    a2 = np.maximum(0.5 * (np.log1p(gap / (q + d)) - np.log1p(gap / (q + s))), 0.0)
    return a1.sum(axis=1), a2.sum(axis=1)


def _stationarity_matrix(channel, q):
    """Columns for (alpha, beta, M1, M2); row i is the KKT1 balance of Q_i."""
    s, d = channel.sigma_sq, channel.delta_sq
    slope = 1.0 / (q + s) - 1.0 / (q + d)  # K x M
    y_set = s < d
    z_set = s > d
    m = channel.M
    return np.hstack([np.where(y_set, slope, 0.0).T,
                      np.where(z_set, slope, 0.0).T,
                      np.eye(m), -np.eye(m)])


def kkt_residuals(channel, q, certificate: KktCertificate, r1_target: float, r2: float,
                  caps=None) -> dict:
    """Largest violation of each optimality condition at ``(q, r2)``."""
    caps = channel.caps if caps is None else np.asarray(caps, dtype=float)
    q = np.asarray(q, dtype=float)
    alpha, beta = np.asarray(certificate.alpha), np.asarray(certificate.beta)
    m1, m2 = np.asarray(certificate.m1), np.asarray(certificate.m2)
    s1, s2 = _sums(channel, q, caps)
    x = np.concatenate([alpha, beta, m1, m2])
    stat = _stationarity_matrix(channel, q) @ x
    return {
        "stationarity": float(np.abs(stat).max()),
        "normalization": float(abs(beta.sum() - 1.0)),
        "slack_r1": float(np.abs(alpha * (s1 - r1_target)).max()),
        "slack_r2": float(np.abs(beta * (s2 - r2)).max()),
        "slack_lower": float(np.abs(m1 * q).max()),
        "slack_upper": float(np.abs(m2 * (caps - q)).max()),
        "dual_rates": float(max(0.0, -min(alpha.min(), beta.min()))),
        "dual_power": float(max(0.0, -min(m1.min(), m2.min()))),
        "primal": float(max(0.0, r1_target - s1.min(), r2 - s2.min(),
                            -q.min(), (q - caps).max())),
    }


def certify(channel, q, r1_target: float, r2: float, caps=None,
            active_tol: float = 1e-8) -> KktCertificate:
    """Fit nonnegative multipliers to the constraints active at ``q`` and
    report the residuals of the full KKT system."""
    caps = channel.caps if caps is None else np.asarray(caps, dtype=float)
    q = np.asarray(q, dtype=float)
    k, m = channel.K, channel.M
    s1, s2 = _sums(channel, q, caps)
    scale_q = np.maximum(caps, 1.0)
    active = np.concatenate([
        np.abs(s1 - r1_target) <= active_tol,
        s2 - r2 <= active_tol,
        q <= active_tol * scale_q,
        caps - q <= active_tol * scale_q,
    ])
    a = _stationarity_matrix(channel, q)
    # normalisation row sum(beta) = 1, weighted to dominate the fit
    weight = 1e3
    norm_row = np.concatenate([np.zeros(k), np.ones(k), np.zeros(2 * m)]) * weight
    full = np.vstack([a, norm_row])
    rhs = np.concatenate([np.zeros(m), [weight]])
    cols = np.flatnonzero(active)
    x = np.zeros(2 * k + 2 * m)
    sol, _ = nnls(full[:, cols], rhs, maxiter=50 * full.shape[1])
    x[cols] = sol
    bsum = x[k:2 * k].sum()
    if bsum > 0:
        x /= bsum
    cert = KktCertificate(x[:k], x[k:2 * k], x[2 * k:2 * k + m], x[2 * k + m:])
    cert.residuals = kkt_residuals(channel, q, cert, r1_target, r2, caps)
    return cert
