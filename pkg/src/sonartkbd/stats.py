"""Likelihood ratios for a steered broadband source in whitened noise.

The measurement model for one whitened batch z (stacked channel-major as an
NM vector) is heavy tailed: z is multivariate t with dof nu and scale matrix
Sigma = eta H H^T + I under the target hypothesis, or Sigma = I under noise
only, where H stacks the per-channel steering operators for the hypothesised
bearing. Because H^T H is (near) M I_N, the ratio collapses to a function of
just the beamformed energy B = ||H^T z||^2 and the batch energy ||z||^2, so
no NM x NM matrix is ever formed. `t_logpdf_full` keeps the explicit dense
route alive for verification.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.special import gammaln


class DomainError(ValueError):
    """Raised when likelihood inputs leave the valid domain."""


@dataclass(frozen=True)
class TModelParams:
    """Shape of the per-batch measurement model.

    dof : degrees of freedom nu of the multivariate t (must exceed 2)
    n_samples : batch length N
    n_channels : channel count M
    """

    dof: float
    n_samples: int
    n_channels: int

    def __post_init__(self):
        if not self.dof > 2:
            raise DomainError(f"dof must exceed 2, got {self.dof}")
        if self.n_samples < 2 or self.n_channels < 1:
            raise DomainError("batch dimensions must be positive")


def t_log_lr(energy, z_norm_sq, eta, params: TModelParams):
    """Log likelihood ratio of target-at-eta versus noise only, t model.

    Parameters
    ----------
    energy : float or ndarray
        Beamformed energy B at the hypothesised bearing.
    z_norm_sq : float
        Squared norm of the whole whitened batch.
    eta : float or ndarray
        Hypothesised linear SNR, >= 0. Broadcast against `energy`.
    params : TModelParams

    Returns
    -------
    float or ndarray
        ln L = -(N/2) ln(M eta + 1) - ((nu + NM)/2) ln(1 - c B) with
        c = eta / ((nu + ||z||^2)(1 + M eta)). Exactly zero at eta = 0.
    """
    b = np.asarray(energy, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < 0):
        raise DomainError("eta must be nonnegative")
    if z_norm_sq < 0:
        raise DomainError("z_norm_sq must be nonnegative")
    n, m, nu = params.n_samples, params.n_channels, params.dof
    c = eta / ((nu + z_norm_sq) * (1.0 + m * eta))
    arg = -c * b
    if np.any(arg <= -1.0):
        raise DomainError("c * B reached 1; energy exceeds its admissible bound")
    out = -0.5 * n * np.log1p(m * eta) - 0.5 * (nu + n * m) * np.log1p(arg)
    return out if out.ndim else float(out)


def gauss_log_lr(energy, eta, params: TModelParams):
    """Gaussian-model counterpart of :func:`t_log_lr`.

    ln L = -(N/2) ln(M eta + 1) + eta B / (2 (1 + M eta)). This is the
    nu -> inf limit of the t ratio and ignores the batch energy.
    """
    b = np.asarray(energy, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < 0):
        raise DomainError("eta must be nonnegative")
    n, m = params.n_samples, params.n_channels
    out = -0.5 * n * np.log1p(m * eta) + eta * b / (2.0 * (1.0 + m * eta))
    return out if out.ndim else float(out)


def t_logpdf_full(z: np.ndarray, dof: float, scale: np.ndarray) -> float:
    """Dense multivariate-t log density, for verification only.

    Evaluates ln t_d(z; dof, 0, scale) with an explicit Cholesky of the
    scale matrix. The tracker never calls this; tests use it to check the
    collapsed ratio against the full covariance route.
    """
    z = np.asarray(z, dtype=float).ravel()
    d = z.shape[0]
    scale = np.asarray(scale, dtype=float)
    if scale.shape != (d, d):
        raise DomainError(f"scale must be ({d}, {d}), got {scale.shape}")
    lower = cholesky(scale, lower=True)
    half = solve_triangular(lower, z, lower=True)
    maha = float(half @ half)
    logdet = 2.0 * float(np.log(np.diag(lower)).sum())
    return float(
        gammaln(0.5 * (dof + d)) - gammaln(0.5 * dof)
        - 0.5 * d * np.log(dof * np.pi) - 0.5 * logdet
        - 0.5 * (dof + d) * np.log1p(maha / dof)
    )
