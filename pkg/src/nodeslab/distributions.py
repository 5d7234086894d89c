"""Reparameterized samplers and closed-form KL terms.

The slab is a diagonal Gaussian sampled as mu + sigma * zeta (non-centered
form). The spike indicator is a Bernoulli(gamma) coupled to its binary
Gumbel-softmax relaxation through a shared uniform:

    eta    = logit(gamma) + logit(u)
    z_soft = sigmoid(eta / tau)
    z_hard = 1 exactly when z_soft > 0.5   (equivalently u > 1 - gamma)

so the hard draw has marginal Bernoulli(gamma) and the soft draw is its
differentiable surrogate. The tie z_soft == 0.5 maps to z_hard = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GumbelDraw",
    "gumbel_softmax_sample",
    "inverse_softplus",
    "kl_bernoulli",
    "kl_gaussian_diag",
    "logit",
    "reparam_gaussian",
    "sigmoid",
    "softplus",
]

_U_CLAMP = 1e-12


def sigmoid(x):
    """Overflow-safe logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def logit(p):
    """log(p) - log(1-p) with p clamped to [1e-12, 1 - 1e-12]."""
    p = np.clip(np.asarray(p, dtype=np.float64), _U_CLAMP, 1.0 - _U_CLAMP)
    out = np.log(p) - np.log1p(-p)
    if out.ndim == 0:
        return float(out)
    return out


def softplus(rho):
    """log(1 + exp(rho)), overflow-safe for large |rho|."""
    rho = np.asarray(rho, dtype=np.float64)
    out = np.logaddexp(0.0, rho)
    if out.ndim == 0:
        return float(out)
    return out


def inverse_softplus(sigma):
    """Inverse of softplus; requires sigma > 0."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0.0):
        raise ValueError("inverse_softplus requires sigma > 0")
    # expm1 is accurate for moderate sigma; switch to the asymptotic form
    # before expm1 overflows.
    small = sigma <= 30.0
    out = np.empty_like(sigma)
    out[small] = np.log(np.expm1(sigma[small]))
    out[~small] = sigma[~small] + np.log1p(-np.exp(-sigma[~small]))
    if out.ndim == 0:
        return float(out)
    return out


@dataclass
class GumbelDraw:
    """One coupled spike draw: relaxation z_soft and hard indicator z_hard."""

    z_soft: np.ndarray
    z_hard: np.ndarray
    eta: np.ndarray
    u: np.ndarray


def gumbel_softmax_sample(gamma, tau: float, u) -> GumbelDraw:
    """Coupled (z_hard, z_soft) draw for Bernoulli(gamma) at temperature tau.

    Accepts scalars or same-shape arrays for ``gamma`` and ``u``.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if tau <= 0.0:
        raise ValueError(f"temperature must be positive, got {tau}")
    if np.any(gamma <= 0.0) or np.any(gamma >= 1.0):
        raise ValueError("gamma must lie strictly inside (0, 1)")
    eta = logit(gamma) + logit(u)
    z_soft = sigmoid(eta / tau)
    z_hard = (np.asarray(z_soft) > 0.5).astype(np.float64)
    if np.ndim(z_soft) == 0:
        z_hard = float(z_hard)
    return GumbelDraw(z_soft=z_soft, z_hard=z_hard, eta=eta, u=u)


def kl_bernoulli(gamma: float, lam: float) -> float:
    """KL( Ber(gamma) || Ber(lam) ), with 0 log 0 = 0.

    Raises OverflowError when lam sits on the boundary {0, 1} with a
    mismatching gamma, where the divergence is infinite.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    if lam == 0.0 and gamma > 0.0:
        raise OverflowError("infinite divergence: lambda = 0 with gamma > 0")
    if lam == 1.0 and gamma < 1.0:
        raise OverflowError("infinite divergence: lambda = 1 with gamma < 1")
    total = 0.0
    if gamma > 0.0:
        total += gamma * (np.log(gamma) - np.log(lam))
    if gamma < 1.0:
        total += (1.0 - gamma) * (np.log1p(-gamma) - np.log1p(-lam))
    return float(total)


def kl_gaussian_diag(mu, sigma2, sigma0_2: float) -> float:
    """KL( N(mu, diag(sigma2)) || N(0, sigma0_2 I) ) for entrywise arrays."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma2 = np.asarray(sigma2, dtype=np.float64)
    if mu.shape != sigma2.shape or mu.size < 1:
        raise ValueError("mu and sigma2 must share a nonempty shape")
    if sigma0_2 <= 0.0 or np.any(sigma2 <= 0.0):
        raise ValueError("variances must be positive")
    ratio = sigma2 / sigma0_2
    return float(0.5 * np.sum(ratio + mu * mu / sigma0_2 - 1.0 - np.log(ratio)))


def reparam_gaussian(mu, sigma, zeta):
    """Entrywise mu + sigma * zeta; all operands must share a shape."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    zeta = np.asarray(zeta, dtype=np.float64)
    if not (mu.shape == sigma.shape == zeta.shape):
        raise ValueError(
            f"shape mismatch: mu {mu.shape}, sigma {sigma.shape}, zeta {zeta.shape}"
        )
    return mu + sigma * zeta
