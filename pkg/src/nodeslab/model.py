"""Spike-and-slab variational MLP: state, coupled sampling, forward, gradients.

A network with widths k = (k_0, ..., k_{L+1}) has L+1 weight layers. Layer l
owns a matrix of shape (k_{l+1}, k_l + 1) whose row j holds node j's bias
(column 0) followed by its incoming weights. Every hidden node carries a
spike indicator z_lj with variational inclusion probability
gamma_lj = sigmoid(phi_lj); the indicator multiplies the node's whole weight
row, so a pruned node still emits psi(0) (0.5 for sigmoid), not 0. Output
nodes are never pruned.

Gradient contract: loss_and_gradients returns the exact pathwise gradients of
the surrogate loss in which every hard z is replaced by its coupled
relaxation z_soft and the weights are mu + softplus(rho) * zeta. In "soft"
mask mode the reported loss is that same surrogate, so central finite
differences of the reported loss reproduce the gradients. In "hard" mask mode
the reported data term is recomputed with the hard masks (the quantity the
trainer logs) while the gradients are unchanged for the same (zeta, u).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import objective
from .distributions import gumbel_softmax_sample, logit, sigmoid, softplus
from .numerics import RandomStream, sample_standard_normal, sample_uniform

__all__ = [
    "ACTIVATIONS",
    "Architecture",
    "GAMMA_MAX",
    "GAMMA_MIN",
    "Gradients",
    "PriorConfig",
    "RealizedSample",
    "VariationalState",
    "draw_sample",
    "forward",
    "init_state",
    "loss_and_gradients",
    "state_from_dict",
    "state_to_dict",
]

GAMMA_MIN = 1e-7
GAMMA_MAX = 1.0 - 1e-7
DEFAULT_TAU = 0.5
MODES = ("ssig", "dense-baseline")
INIT_SCHEMES = ("uniform-range", "fan-in-uniform")
TASKS = ("regression", "classification")
CHECKPOINT_FORMAT_VERSION = 1


def _relu(x):
    return np.maximum(x, 0.0)


def _swish(x):
    return x * sigmoid(x)


def _sigmoid_deriv(x, fx):
    return fx * (1.0 - fx)


def _tanh_deriv(x, fx):
    return 1.0 - fx * fx


def _relu_deriv(x, fx):
    # relu'(0) is defined as 0 so gradients are deterministic everywhere.
    return (x > 0.0).astype(np.float64)


def _swish_deriv(x, fx):
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


# name -> (psi, psi') where psi' receives the pre-activation and psi's value.
ACTIVATIONS = {
    "sigmoid": (sigmoid, _sigmoid_deriv),
    "tanh": (np.tanh, _tanh_deriv),
    "relu": (_relu, _relu_deriv),
    "swish": (_swish, _swish_deriv),
}


@dataclass(frozen=True)
class Architecture:
    """Static network shape: widths (k_0, ..., k_{L+1}), activation, task."""

    k: tuple
    activation: str = "sigmoid"
    task: str = "regression"

    def __post_init__(self):
        k = tuple(int(w) for w in self.k)
        object.__setattr__(self, "k", k)
        if len(k) < 2:
            raise ValueError("need at least (input_dim, output_dim) widths")
        if any(w < 1 for w in k):
            raise ValueError(f"all widths must be >= 1, got {k}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")

    @property
    def L(self) -> int:
        """Number of hidden layers."""
        return len(self.k) - 2


@dataclass
class PriorConfig:
    """Fixed prior: slab variance, inclusion probabilities, noise variance."""

    lam: np.ndarray
    sigma0_2: float = 1.0
    sigma_e2: float = 1.0

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=np.float64)
        if self.sigma0_2 <= 0.0 or self.sigma_e2 <= 0.0:
            raise ValueError("sigma0_2 and sigma_e2 must be positive")


class VariationalState:
    """Per-layer variational parameters (mu, rho, phi) plus the fixed prior.

    mu[l] and rho[l] are (k_{l+1} x (k_l+1)) matrices, bias in column 0.
    phi[l] is the length-k_{l+1} inclusion-logit vector of hidden layer l;
    there is no phi for the output layer, whose inclusion is fixed at 1.
    """

    def __init__(self, arch, prior, mu, rho, phi, mode="ssig"):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        L = arch.L
        if prior.lam.shape != (L + 1,):
            raise ValueError(f"prior lambda must have length L+1 = {L + 1}")
        if prior.lam[L] != 1.0:
            raise ValueError("output-layer prior inclusion must be exactly 1")
        if np.any(prior.lam <= 0.0) or np.any(prior.lam > 1.0):
            raise ValueError("prior inclusion probabilities must lie in (0, 1]")
        if len(mu) != L + 1 or len(rho) != L + 1 or len(phi) != L:
            raise ValueError("wrong number of per-layer parameter arrays")
        self.arch = arch
        self.prior = prior
        self.mode = mode
        self.mu = []
        self.rho = []
        self.phi = []
        for l in range(L + 1):
            shape = (arch.k[l + 1], arch.k[l] + 1)
            m = np.ascontiguousarray(mu[l], dtype=np.float64)
            r = np.ascontiguousarray(rho[l], dtype=np.float64)
            if m.shape != shape or r.shape != shape:
                raise ValueError(f"layer {l} parameters must have shape {shape}")
            self.mu.append(m)
            self.rho.append(r)
            if l < L:
                p = np.ascontiguousarray(phi[l], dtype=np.float64)
                if p.shape != (arch.k[l + 1],):
                    raise ValueError(f"phi[{l}] must have length {arch.k[l + 1]}")
                self.phi.append(p)

    def sigma(self, l: int) -> np.ndarray:
        """Slab standard deviations softplus(rho) of layer l."""
        return softplus(self.rho[l])

    def gamma(self, l: int) -> np.ndarray:
        """Clamped inclusion probabilities of layer l; ones for the output
        layer and in dense-baseline mode."""
        if l == self.arch.L or self.mode == "dense-baseline":
            return np.ones(self.arch.k[l + 1])
        return np.clip(sigmoid(self.phi[l]), GAMMA_MIN, GAMMA_MAX)

    def copy(self) -> "VariationalState":
        return VariationalState(
            self.arch,
            PriorConfig(self.prior.lam.copy(), self.prior.sigma0_2, self.prior.sigma_e2),
            [m.copy() for m in self.mu],
            [r.copy() for r in self.rho],
            [p.copy() for p in self.phi],
            mode=self.mode,
        )


def state_to_dict(state: VariationalState) -> dict:
    """JSON-ready checkpoint document; floats round-trip exactly."""
    return {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "arch": {
            "k": list(state.arch.k),
            "activation": state.arch.activation,
            "task": state.arch.task,
        },
        "prior": {
            "sigma0_2": state.prior.sigma0_2,
            "sigma_e2": state.prior.sigma_e2,
            "lambda": [float(v) for v in state.prior.lam],
        },
        "mode": state.mode,
        "mu": [m.tolist() for m in state.mu],
        "rho": [r.tolist() for r in state.rho],
        "phi": [p.tolist() for p in state.phi],
    }


def state_from_dict(doc: dict) -> VariationalState:
    version = doc.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version: {version!r}")
    arch = Architecture(
        tuple(doc["arch"]["k"]), doc["arch"]["activation"], doc["arch"]["task"]
    )
    prior = PriorConfig(
        np.asarray(doc["prior"]["lambda"], dtype=np.float64),
        sigma0_2=float(doc["prior"]["sigma0_2"]),
        sigma_e2=float(doc["prior"]["sigma_e2"]),
    )
    return VariationalState(
        arch, prior, doc["mu"], doc["rho"], doc["phi"], mode=doc["mode"]
    )


def init_state(
    arch: Architecture,
    prior: PriorConfig,
    seed: int,
    init_scheme: str | None = None,
    gamma_init: float = 0.99,
    mode: str = "ssig",
) -> VariationalState:
    """Fresh state: mu uniform, rho = -6, all hidden gamma = gamma_init.

    init_scheme defaults to "uniform-range" (U(-0.6, 0.6)) for regression and
    "fan-in-uniform" (U(-sqrt(6/fan_in), sqrt(6/fan_in))) for classification;
    fan_in counts the bias input. Draw order: layer by layer, mu entries
    row-major, from stream (seed, 0).
    """
    if init_scheme is None:
        init_scheme = "uniform-range" if arch.task == "regression" else "fan-in-uniform"
    if init_scheme not in INIT_SCHEMES:
        raise ValueError(f"init_scheme must be one of {INIT_SCHEMES}")
    if not 0.0 < gamma_init < 1.0:
        raise ValueError(f"gamma_init must be in (0, 1), got {gamma_init}")
    stream = RandomStream(seed, 0)
    mu, rho, phi = [], [], []
    for l in range(arch.L + 1):
        rows, cols = arch.k[l + 1], arch.k[l] + 1
        bound = 0.6 if init_scheme == "uniform-range" else math.sqrt(6.0 / cols)
        u = sample_uniform(stream, rows * cols)
        mu.append(((2.0 * u - 1.0) * bound).reshape(rows, cols))
        rho.append(np.full((rows, cols), -6.0))
        if l < arch.L:
            phi.append(np.full(rows, logit(gamma_init)))
    return VariationalState(arch, prior, mu, rho, phi, mode=mode)


@dataclass
class RealizedSample:
    """One Monte Carlo realization of the network weights.

    Per layer: zeta is the standard-normal noise, u the uniforms behind the
    spike draw (None for the output layer and in mean mode), z_hard/z_soft
    the coupled masks, and W_realized the mask-scaled weight matrix used by
    forward (soft mask in "soft" mode, hard mask otherwise).
    """

    mask_mode: str
    tau: float
    zeta: list
    u: list
    z_hard: list
    z_soft: list
    W_realized: list


def draw_sample(
    state: VariationalState,
    stream: RandomStream,
    mask_mode: str = "hard",
    tau: float = DEFAULT_TAU,
) -> RealizedSample:
    """Sample (zeta, u) and realize the masked weights.

    Draw order per layer: zeta (row-major), then the layer's u vector (hidden
    layers only; drawn even in dense-baseline mode, where it is ignored).
    "mean" mode draws nothing: zeta = 0 and z = 1{gamma > 0.5}.
    """
    if mask_mode not in ("hard", "soft", "mean"):
        raise ValueError(f"unknown mask_mode {mask_mode!r}")
    if tau <= 0.0:
        raise ValueError(f"temperature must be positive, got {tau}")
    arch = state.arch
    L = arch.L
    zetas, us, zh, zs, ws = [], [], [], [], []
    for l in range(L + 1):
        rows, cols = arch.k[l + 1], arch.k[l] + 1
        if mask_mode == "mean":
            zeta = np.zeros((rows, cols))
            u = None
            z_soft = z_hard = (state.gamma(l) > 0.5).astype(np.float64)
        else:
            zeta = sample_standard_normal(stream, rows * cols).reshape(rows, cols)
            if l < L:
                u = sample_uniform(stream, rows)
                if state.mode == "dense-baseline":
                    z_soft = z_hard = np.ones(rows)
                else:
                    draw = gumbel_softmax_sample(state.gamma(l), tau, u)
                    z_soft = np.asarray(draw.z_soft)
                    z_hard = np.asarray(draw.z_hard)
            else:
                u = None
                z_soft = z_hard = np.ones(rows)
        V = state.mu[l] + state.sigma(l) * zeta
        z_used = z_soft if mask_mode == "soft" else z_hard
        zetas.append(zeta)
        us.append(u)
        zh.append(z_hard)
        zs.append(z_soft)
        ws.append(z_used[:, None] * V)
    return RealizedSample(mask_mode, tau, zetas, us, zh, zs, ws)


def _apply_layers(arch: Architecture, weights: list, x2d: np.ndarray) -> np.ndarray:
    act, _ = ACTIVATIONS[arch.activation]
    L = arch.L
    a = x2d
    for l, w in enumerate(weights):
        z = a @ w[:, 1:].T + w[:, 0]
        a = act(z) if l < L else z
    return a


def forward(arch: Architecture, sample: RealizedSample, x) -> np.ndarray:
    """Network output for one point (1-D x) or a batch (rows of x).

    No activation is applied to the output layer.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.ndim != 2 or a.shape[1] != arch.k[0]:
        raise ValueError(f"input must have {arch.k[0]} features, got shape {x.shape}")
    out = _apply_layers(arch, sample.W_realized, a)
    return out[0] if single else out


@dataclass
class Gradients:
    """Per-layer gradients matching the mu/rho/phi shapes of a state."""

    mu: list
    rho: list
    phi: list

    @classmethod
    def zeros_like(cls, state: VariationalState) -> "Gradients":
        return cls(
            mu=[np.zeros_like(m) for m in state.mu],
            rho=[np.zeros_like(r) for r in state.rho],
            phi=[np.zeros_like(p) for p in state.phi],
        )

    def as_flat_list(self) -> list:
        return self.mu + self.rho + self.phi


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _prepare_batch(arch: Architecture, x, y):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != arch.k[0]:
        raise ValueError(f"batch features must be (m x {arch.k[0]}), got {x.shape}")
    m = x.shape[0]
    if m < 1:
        raise ValueError("empty batch")
    if arch.task == "regression":
        y2 = np.asarray(y, dtype=np.float64)
        if y2.ndim == 1:
            y2 = y2[:, None]
        if y2.shape != (m, arch.k[-1]):
            raise ValueError(f"targets must be (m x {arch.k[-1]}), got {y2.shape}")
    else:
        y2 = np.asarray(y, dtype=np.int64).reshape(-1)
        if y2.shape[0] != m:
            raise ValueError("one class label per batch row required")
        if y2.min() < 0 or y2.max() >= arch.k[-1]:
            raise ValueError(f"labels must lie in [0, {arch.k[-1]})")
    return x, y2, m


def loss_and_gradients(
    state: VariationalState,
    x,
    y,
    n_total: int,
    S: int = 1,
    tau: float = DEFAULT_TAU,
    stream: RandomStream | None = None,
    mask_mode: str = "hard",
):
    """Negative-ELBO breakdown and exact surrogate gradients for one batch.

    Returns (LossBreakdown, Gradients). The data term is averaged over S
    Monte Carlo draws from ``stream`` and scaled by n_total / batch_size; the
    KL terms and their gradients are added once, in closed form.
    """
    if mask_mode not in ("hard", "soft"):
        raise ValueError("loss_and_gradients needs mask_mode 'hard' or 'soft'")
    if S < 1:
        raise ValueError(f"need at least one Monte Carlo draw, got S={S}")
    if stream is None:
        raise ValueError("an explicit RandomStream is required")
    arch = state.arch
    L = arch.L
    x, y2, m = _prepare_batch(arch, x, y)
    act, act_df = ACTIVATIONS[arch.activation]
    coef = float(n_total) / (m * S)
    grads = Gradients.zeros_like(state)
    preds = []
    rho_sig = [sigmoid(r) for r in state.rho]

    for _ in range(S):
        sample = draw_sample(state, stream, mask_mode=mask_mode, tau=tau)
        V = [state.mu[l] + state.sigma(l) * sample.zeta[l] for l in range(L + 1)]
        # Forward through the soft surrogate, caching what backprop needs:
        # augmented activations, unmasked and masked pre-activations.
        aaug, raw, pre = [], [], []
        a = x
        for l in range(L + 1):
            aa = np.concatenate([np.ones((m, 1)), a], axis=1)
            r = aa @ V[l].T
            p = r * sample.z_soft[l][None, :]
            aaug.append(aa)
            raw.append(r)
            pre.append(p)
            a = act(p) if l < L else p
        soft_out = a

        if mask_mode == "hard":
            hard_w = [sample.z_hard[l][:, None] * V[l] for l in range(L + 1)]
            preds.append(_apply_layers(arch, hard_w, x))
        else:
            preds.append(soft_out)

        # Reverse pass: dA starts as the gradient of the scaled data term
        # with respect to the network output.
        if arch.task == "regression":
            da = (soft_out - y2) * (coef / state.prior.sigma_e2)
        else:
            probs = _softmax_rows(soft_out)
            probs[np.arange(m), y2] -= 1.0
            da = probs * coef
        for l in range(L, -1, -1):
            dp = da if l == L else da * act_df(pre[l], aaug[l + 1][:, 1:])
            dr = dp * sample.z_soft[l][None, :]
            if l < L and state.mode == "ssig":
                dz = np.einsum("ij,ij->j", dp, raw[l])
                z = sample.z_soft[l]
                gamma = state.gamma(l)
                interior = (gamma > GAMMA_MIN) & (gamma < GAMMA_MAX)
                grads.phi[l] += dz * z * (1.0 - z) / tau * interior
            dv = dr.T @ aaug[l]
            grads.mu[l] += dv
            grads.rho[l] += dv * sample.zeta[l] * rho_sig[l]
            if l > 0:
                da = dr @ V[l][:, 1:]

    breakdown = objective.negative_elbo(state, y2, preds, n_total)
    _add_kl_gradients(state, grads)
    return breakdown, grads


def _add_kl_gradients(state: VariationalState, grads: Gradients) -> None:
    """Closed-form gradients of KL_bern + KL_gauss, accumulated in place."""
    L = state.arch.L
    s0 = state.prior.sigma0_2
    for l in range(L + 1):
        gamma = state.gamma(l)
        sig = state.sigma(l)
        grads.mu[l] += gamma[:, None] * state.mu[l] / s0
        grads.rho[l] += gamma[:, None] * (sig / s0 - 1.0 / sig) * sigmoid(state.rho[l])
        if l < L and state.mode == "ssig":
            lam = float(state.prior.lam[l])
            # d/dgamma KL(Ber(gamma)||Ber(lam)) = logit(gamma) - logit(lam);
            # lam may be far below the generic logit clamp, so expand it.
            dbern = logit(gamma) - (math.log(lam) - math.log1p(-lam))
            per_node = objective.slab_kl_per_node(state.mu[l], sig, s0)
            interior = (gamma > GAMMA_MIN) & (gamma < GAMMA_MAX)
            grads.phi[l] += (dbern + per_node) * gamma * (1.0 - gamma) * interior
