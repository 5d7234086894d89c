"""Layer-wise prior hyperparameter calculus.

For a network with widths k = (k_0, ..., k_{L+1}) trained on n observations,
these functions evaluate, in natural logarithms throughout:

    u_l        = (L+1)^2 (log n + log(L+1) + log k_{l+1} + log(k_l + 1))
    vartheta_l = B_l^2/(k_l+1) + sum_{m != l} log B_m + L + log k_{l+1}
                 + log(k_l + 1) + log n + log(sum_m u_m)
    r_l        = s_l (k_l + 1) vartheta_l / n
    lambda_l   = (1/k_{l+1}) exp(-C_l (k_l + 1) vartheta_l)   for l < L
    lambda_L   = 1                       (no selection in the output layer)
    epsilon_n  = sqrt( (sum_l r_l + xi) * sum_l u_l )

for l = 0..L. The norm-bound default is B_l = k_l + 1 and the sparsity
default is s_l = k_{l+1} (no sparsity knowledge). xi, the squared sup-norm
approximation error of the best network in the constrained class, is a user
input defaulting to 0; it is not computable from data.

C_l is picked per hidden layer from the grid {1e-1, 1e-2, ..., 1e-16} as the
largest value whose lambda_l stays at or above a floor (default 1e-50),
because inclusion probabilities that underflow toward 0 prune every node.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LambdaUnderflowError",
    "PriorReport",
    "build_prior_report",
    "compute_epsilon_n",
    "compute_lambda",
    "compute_r",
    "compute_u",
    "compute_vartheta",
    "default_B",
    "select_C",
]

C_GRID = tuple(10.0 ** -e for e in range(1, 17))


class LambdaUnderflowError(ValueError):
    """A prior inclusion probability underflowed to exactly 0."""


def _check_widths(k) -> np.ndarray:
    k = np.asarray(k, dtype=np.int64)
    if k.ndim != 1 or k.size < 2:
        raise ValueError("width vector needs at least (input_dim, output_dim)")
    if np.any(k < 1):
        raise ValueError("all layer widths must be >= 1")
    return k


def compute_u(k, n: float) -> np.ndarray:
    """Per-layer log-complexity terms u_l for l = 0..L."""
    k = _check_widths(k)
    if n < 2:
        raise ValueError(f"need n >= 2 so that log n > 0, got {n}")
    L = k.size - 2
    kl = k[:-1].astype(np.float64)
    klp1 = k[1:].astype(np.float64)
    return (L + 1) ** 2 * (math.log(n) + math.log(L + 1) + np.log(klp1) + np.log(kl + 1))


def default_B(k) -> np.ndarray:
    """Default per-layer L1 norm bounds: B_l = k_l + 1."""
    k = _check_widths(k)
    return (k[:-1] + 1).astype(np.float64)


def compute_vartheta(k, B, n: float, u) -> np.ndarray:
    """Per-layer complexity factors vartheta_l for l = 0..L."""
    k = _check_widths(k)
    B = np.asarray(B, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    L = k.size - 2
    if B.shape != (L + 1,) or u.shape != (L + 1,):
        raise ValueError(f"B and u must have length L+1 = {L + 1}")
    if np.any(B <= 0.0):
        raise ValueError("norm bounds B must be positive")
    u_sum = float(u.sum())
    if u_sum <= 0.0:
        raise ValueError("sum of u must be positive")
    kl = k[:-1].astype(np.float64)
    klp1 = k[1:].astype(np.float64)
    logB = np.log(B)
    log_others = logB.sum() - logB  # sum over m != l
    return (
        B * B / (kl + 1.0)
        + log_others
        + L
        + np.log(klp1)
        + np.log(kl + 1.0)
        + math.log(n)
        + math.log(u_sum)
    )


def compute_r(s, k, vartheta, n: float) -> np.ndarray:
    """Per-layer rate contributions r_l = s_l (k_l + 1) vartheta_l / n."""
    k = _check_widths(k)
    s = np.asarray(s, dtype=np.float64)
    vartheta = np.asarray(vartheta, dtype=np.float64)
    L = k.size - 2
    if s.shape != (L + 1,) or vartheta.shape != (L + 1,):
        raise ValueError(f"s and vartheta must have length L+1 = {L + 1}")
    klp1 = k[1:].astype(np.float64)
    if np.any(s < 0.0) or np.any(s > klp1):
        raise ValueError("sparsity targets must satisfy 0 <= s_l <= k_{l+1}")
    kl = k[:-1].astype(np.float64)
    return s * (kl + 1.0) * vartheta / n


def compute_lambda(k, vartheta, C) -> np.ndarray:
    """Prior inclusion probabilities; lambda for the output layer is 1."""
    k = _check_widths(k)
    vartheta = np.asarray(vartheta, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    L = k.size - 2
    if C.shape not in ((L,), (L + 1,)):
        raise ValueError(f"C must cover the {L} hidden layers")
    if np.any(C < 0.0):
        raise ValueError("C entries must be nonnegative")
    lam = np.ones(L + 1)
    for l in range(L):
        klp1 = float(k[l + 1])
        kl1 = float(k[l]) + 1.0
        lam[l] = math.exp(-math.log(klp1) - C[l] * kl1 * vartheta[l])
        if lam[l] == 0.0:
            raise LambdaUnderflowError(
                f"lambda underflowed to 0 in layer {l}; shrink C_{l} = {C[l]}"
            )
    return lam


def select_C(k, vartheta, floor: float = 1e-50):
    """Largest grid C_l keeping lambda_l >= floor, per hidden layer.

    Returns (C, infeasible) arrays of length L+1; the output-layer slot is
    C = 0 and never flagged. A hidden layer where even the smallest grid
    value fails gets C = 0 with its infeasible flag set.
    """
    k = _check_widths(k)
    vartheta = np.asarray(vartheta, dtype=np.float64)
    if not 0.0 < floor < 1.0:
        raise ValueError(f"floor must be in (0, 1), got {floor}")
    L = k.size - 2
    C = np.zeros(L + 1)
    infeasible = np.zeros(L + 1, dtype=bool)
    log_floor = math.log(floor)
    for l in range(L):
        klp1 = float(k[l + 1])
        kl1 = float(k[l]) + 1.0
        for c in C_GRID:
            # log lambda_l at this grid value, compared in log space so that
            # underflowing candidates are simply rejected.
            if -math.log(klp1) - c * kl1 * vartheta[l] >= log_floor:
                C[l] = c
                break
        else:
            infeasible[l] = True
    return C, infeasible


def compute_epsilon_n(r, xi: float, u) -> float:
    """Contraction-rate diagnostic sqrt((sum r + xi) * sum u)."""
    if xi < 0.0:
        raise ValueError(f"xi must be nonnegative, got {xi}")
    r = np.asarray(r, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    return float(math.sqrt((r.sum() + xi) * u.sum()))


@dataclass
class PriorReport:
    """End-to-end hyperparameter report for one architecture."""

    n: int
    xi: float
    s: np.ndarray
    B: np.ndarray
    u: np.ndarray
    vartheta: np.ndarray
    r: np.ndarray
    C: np.ndarray
    lam: np.ndarray
    epsilon_n: float
    c_infeasible: np.ndarray

    def to_dict(self) -> dict:
        return {
            "n": int(self.n),
            "xi": float(self.xi),
            "s": [float(v) for v in self.s],
            "B": [float(v) for v in self.B],
            "u": [float(v) for v in self.u],
            "vartheta": [float(v) for v in self.vartheta],
            "r": [float(v) for v in self.r],
            "C": [float(v) for v in self.C],
            "lambda": [float(v) for v in self.lam],
            "epsilon_n": float(self.epsilon_n),
            "C_infeasible": [bool(v) for v in self.c_infeasible],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def build_prior_report(
    k,
    n: int,
    s=None,
    B=None,
    xi: float = 0.0,
    floor: float = 1e-50,
    C=None,
) -> PriorReport:
    """Run the full pipeline with defaults; C=None selects C from the grid."""
    k = _check_widths(k)
    if B is None:
        B = default_B(k)
    if s is None:
        s = k[1:].astype(np.float64)
    u = compute_u(k, n)
    vartheta = compute_vartheta(k, B, n, u)
    if C is None:
        C, infeasible = select_C(k, vartheta, floor=floor)
    else:
        C = np.asarray(C, dtype=np.float64)
        infeasible = np.zeros(k.size - 1, dtype=bool)
    lam = compute_lambda(k, vartheta, C)
    r = compute_r(s, k, vartheta, n)
    eps = compute_epsilon_n(r, xi, u)
    return PriorReport(
        n=int(n),
        xi=float(xi),
        s=np.asarray(s, dtype=np.float64),
        B=np.asarray(B, dtype=np.float64),
        u=u,
        vartheta=vartheta,
        r=r,
        C=C if C.shape == (k.size - 1,) else np.append(C, 0.0),
        lam=lam,
        epsilon_n=eps,
        c_infeasible=infeasible,
    )
