"""Stochastic optimization loop: Adam over the negative ELBO, with trace
logging, convergence detection, checkpointing, and experiment presets.

Stream layout for a run with seed s: (s, 0) initialization, (s, 1) epoch
shuffles, (s, 2) Monte Carlo draws during training, (s, 3, epoch, 0/1)
train/test metric evaluation at logged epochs. Keying evaluation streams by
epoch makes resumed runs bit-identical to uninterrupted ones.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import evaluate
from .model import (
    VariationalState,
    loss_and_gradients,
    state_from_dict,
    state_to_dict,
)
from .numerics import RandomStream

__all__ = [
    "AdamConfig",
    "PRESETS",
    "TraceEntry",
    "TraceLog",
    "TrainConfig",
    "TrainingDivergedError",
    "adam_step",
    "load_checkpoint",
    "median_sparsity_over_window",
    "metric_stats_over_window",
    "resolve_preset",
    "save_checkpoint",
    "train",
]

# Canned experiment settings. batch_size 0 means full batch. The
# standardize flag z-scores features and regression targets by train
# statistics; RMSE is still reported on the original target scale. The
# teacher-network presets train on raw data (inputs already lie in [-1,1]
# and the noise level is defined in original units); the others z-score.
PRESETS = {
    "sim1-20": {
        "hidden": (20,),
        "activation": "sigmoid",
        "task": "regression",
        "learning_rate": 3e-3,
        "batch_size": 400,
        "max_epochs": 10000,
        "standardize": False,
    },
    "sim1-100": {
        "hidden": (100,),
        "activation": "sigmoid",
        "task": "regression",
        "learning_rate": 1e-3,
        "batch_size": 400,
        "max_epochs": 20000,
        "standardize": False,
    },
    "sim2": {
        "hidden": (20, 20),
        "activation": "sigmoid",
        "task": "regression",
        "learning_rate": 5e-3,
        "batch_size": 0,
        "max_epochs": 10000,
        "standardize": True,
    },
    "uci-small": {
        "hidden": (50,),
        "activation": "sigmoid",
        "task": "regression",
        "learning_rate": 1e-3,
        "batch_size": 128,
        "max_epochs": 500,
        "standardize": True,
    },
    "uci-large": {
        "hidden": (100,),
        "activation": "sigmoid",
        "task": "regression",
        "learning_rate": 1e-3,
        "batch_size": 256,
        "max_epochs": 100,
        "standardize": True,
    },
}


def resolve_preset(name: str):
    """Map a preset name to (settings, mode); a "dense-baseline-" prefix
    selects the same settings with all inclusion probabilities pinned at 1."""
    mode = "ssig"
    base = name
    if name.startswith("dense-baseline-"):
        mode = "dense-baseline"
        base = name[len("dense-baseline-"):]
    if base not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    return dict(PRESETS[base]), mode


class TrainingDivergedError(RuntimeError):
    """The loss became non-finite during training."""

    def __init__(self, epoch: int, value: float):
        super().__init__(f"non-finite loss {value} at epoch {epoch}")
        self.epoch = epoch
        self.value = value


@dataclass
class AdamConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8


@dataclass
class TrainConfig:
    learning_rate: float
    batch_size: int
    max_epochs: int
    S: int = 1
    tau: float = 0.5
    elbo_tol: float | None = None
    elbo_window: int = 50
    seed: int = 0
    adam: AdamConfig = field(default_factory=AdamConfig)
    checkpoint_every: int = 10
    snapshot_every: int = 0
    eval_S: int = 30

    def validate(self, n: int) -> None:
        problems = []
        if self.learning_rate < 0.0:
            problems.append(
                f"learning_rate must be nonnegative, got {self.learning_rate}"
            )
        if self.batch_size < 0 or self.batch_size > n:
            problems.append(f"batch_size must lie in [0, n={n}], got {self.batch_size}")
        if self.max_epochs < 1:
            problems.append(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.S < 1:
            problems.append(f"S must be >= 1, got {self.S}")
        if self.tau <= 0.0:
            problems.append(f"tau must be positive, got {self.tau}")
        if self.elbo_tol is not None and self.elbo_tol <= 0.0:
            problems.append(f"elbo_tol must be positive, got {self.elbo_tol}")
        if self.elbo_window < 1:
            problems.append(f"elbo_window must be >= 1, got {self.elbo_window}")
        if self.checkpoint_every < 1:
            problems.append(f"checkpoint_every must be >= 1, got {self.checkpoint_every}")
        if problems:
            raise ValueError("; ".join(problems))


@dataclass
class TraceEntry:
    epoch: int
    nll: float
    kl_bern: float
    kl_gauss: float
    total: float
    sparsity: np.ndarray
    train_metric: float | None = None
    test_metric: float | None = None


class TraceLog:
    """Per-logged-epoch loss breakdown, hidden-layer sparsities, metrics."""

    def __init__(self, n_hidden: int, metric_name: str = "rmse"):
        self.n_hidden = n_hidden
        self.metric_name = metric_name
        self.entries: list = []

    def append(self, entry: TraceEntry) -> None:
        if self.entries and entry.epoch <= self.entries[-1].epoch:
            raise ValueError("trace epochs must be strictly increasing")
        self.entries.append(entry)

    def header(self) -> str:
        cols = ["epoch", "nll", "kl_bern", "kl_gauss", "total"]
        cols += [f"sparsity_l{i}" for i in range(1, self.n_hidden + 1)]
        if self.entries and self.entries[0].train_metric is not None:
            cols += [f"train_{self.metric_name}", f"test_{self.metric_name}"]
        return ",".join(cols)

    def to_csv(self, path) -> None:
        lines = [self.header()]
        with_metrics = self.entries and self.entries[0].train_metric is not None
        for e in self.entries:
            cells = [str(e.epoch), repr(e.nll), repr(e.kl_bern), repr(e.kl_gauss),
                     repr(e.total)]
            cells += [repr(float(v)) for v in e.sparsity]
            if with_metrics:
                cells += [repr(e.train_metric), repr(e.test_metric)]
            lines.append(",".join(cells))
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def adam_step(params, grads, m, v, t: int, adam: AdamConfig, learning_rate: float):
    """One bias-corrected Adam update, in place; t counts from 1."""
    if not len(params) == len(grads) == len(m) == len(v):
        raise ValueError("parameter and moment lists must have equal length")
    if t < 1:
        raise ValueError("step count t starts at 1")
    b1c = 1.0 - adam.beta1 ** t
    b2c = 1.0 - adam.beta2 ** t
    for p, g, mi, vi in zip(params, grads, m, v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        mi *= adam.beta1
        mi += (1.0 - adam.beta1) * g
        vi *= adam.beta2
        vi += (1.0 - adam.beta2) * (g * g)
        p -= learning_rate * (mi / b1c) / (np.sqrt(vi / b2c) + adam.eps_hat)
    return params, m, v


def _flat_params(state: VariationalState) -> list:
    return state.mu + state.rho + state.phi


def save_checkpoint(path, state: VariationalState, trainer_section: dict | None = None):
    doc = state_to_dict(state)
    if trainer_section is not None:
        doc["trainer"] = trainer_section
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    """Returns (state, trainer_section or None)."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return state_from_dict(doc), doc.get("trainer")


def train(
    state: VariationalState,
    train_ds,
    config: TrainConfig,
    eval_ds=None,
    out_dir=None,
    resume: dict | None = None,
):
    """Run Algorithm-style minibatch optimization until max_epochs or the
    smoothed full-data loss stabilizes (when elbo_tol is set).

    Per step: draw (zeta, u), log the hard-mask loss, apply the exact
    surrogate gradients through Adam. Returns (state, TraceLog). ``resume``
    takes the trainer section of a checkpoint and continues that run so the
    combined trajectory is bit-identical to an uninterrupted one.
    """
    x, y = train_ds.features, train_ds.targets
    n = x.shape[0]
    if n < 1:
        raise ValueError("empty training set")
    config.validate(n)
    arch = state.arch
    batch = config.batch_size if config.batch_size > 0 else n
    metric_name = "rmse" if arch.task == "regression" else "acc"
    trace = TraceLog(arch.L, metric_name)

    params = _flat_params(state)
    adam_m = [np.zeros_like(p) for p in params]
    adam_v = [np.zeros_like(p) for p in params]
    step = 0
    start_epoch = 0
    shuffle_stream = RandomStream(config.seed, 1)
    sample_stream = RandomStream(config.seed, 2)
    if resume is not None:
        start_epoch = int(resume["epoch"])
        step = int(resume["step"])
        for tgt, src in zip(adam_m, resume["adam_m"]):
            tgt[...] = np.asarray(src)
        for tgt, src in zip(adam_v, resume["adam_v"]):
            tgt[...] = np.asarray(src)
        shuffle_stream.set_state(resume["shuffle_state"])
        sample_stream.set_state(resume["sample_state"])

    eval_base = RandomStream(config.seed, 3)
    recent = []  # per-epoch full-data loss estimates for the stopping rule

    epoch = start_epoch
    for epoch in range(start_epoch + 1, config.max_epochs + 1):
        perm = shuffle_stream.generator().permutation(n)
        epoch_nll = epoch_kb = epoch_kg = 0.0
        for lo in range(0, n, batch):
            idx = perm[lo:lo + batch]
            breakdown, grads = loss_and_gradients(
                state,
                x[idx],
                y[idx],
                n_total=n,
                S=config.S,
                tau=config.tau,
                stream=sample_stream,
                mask_mode="hard",
            )
            if not breakdown.is_finite():
                raise TrainingDivergedError(epoch, breakdown.total)
            step += 1
            adam_step(
                params,
                grads.as_flat_list(),
                adam_m,
                adam_v,
                step,
                config.adam,
                config.learning_rate,
            )
            w = idx.size / n
            epoch_nll += w * breakdown.nll
            epoch_kb += w * breakdown.kl_bern
            epoch_kg += w * breakdown.kl_gauss
        epoch_total = epoch_nll + epoch_kb + epoch_kg

        stop = False
        if config.elbo_tol is not None:
            recent.append(epoch_total)
            w = config.elbo_window
            if len(recent) > w:
                ma_now = float(np.mean(recent[-w:]))
                ma_prev = float(np.mean(recent[-w - 1:-1]))
                stop = abs(ma_now - ma_prev) <= config.elbo_tol * max(1.0, abs(ma_prev))

        if epoch % config.checkpoint_every == 0 or epoch == config.max_epochs or stop:
            sparsity = evaluate.sparsity_estimate(state)[: arch.L]
            train_metric = test_metric = None
            if eval_ds is not None:
                epoch_streams = eval_base.split(epoch)
                train_metric = evaluate.dataset_metric(
                    state, train_ds, S=config.eval_S, stream=epoch_streams.split(0)
                )
                test_metric = evaluate.dataset_metric(
                    state, eval_ds, S=config.eval_S, stream=epoch_streams.split(1)
                )
            trace.append(
                TraceEntry(
                    epoch=epoch,
                    nll=epoch_nll,
                    kl_bern=epoch_kb,
                    kl_gauss=epoch_kg,
                    total=epoch_total,
                    sparsity=sparsity,
                    train_metric=train_metric,
                    test_metric=test_metric,
                )
            )

        if out_dir is not None and config.snapshot_every > 0 and (
            epoch % config.snapshot_every == 0 or stop
        ):
            save_checkpoint(
                os.path.join(out_dir, f"ckpt_{epoch}.state"),
                state,
                trainer_section=trainer_section(epoch, step, adam_m, adam_v,
                                                shuffle_stream, sample_stream),
            )

        if stop:
            break

    if out_dir is not None:
        save_checkpoint(
            os.path.join(out_dir, f"ckpt_{epoch}.state"),
            state,
            trainer_section=trainer_section(epoch, step, adam_m, adam_v,
                                            shuffle_stream, sample_stream),
        )
    return state, trace


def trainer_section(epoch, step, adam_m, adam_v, shuffle_stream, sample_stream) -> dict:
    """Optimizer and stream state needed to resume a run bit-identically."""
    return {
        "epoch": int(epoch),
        "step": int(step),
        "adam_m": [a.tolist() for a in adam_m],
        "adam_v": [a.tolist() for a in adam_v],
        "shuffle_state": shuffle_stream.get_state(),
        "sample_state": sample_stream.get_state(),
    }


def _window_entries(trace: TraceLog, window: int, stride: int) -> list:
    if not trace.entries:
        raise ValueError("empty trace")
    last = trace.entries[-1].epoch
    sel = [
        e
        for e in trace.entries
        if (last - e.epoch) < window and (last - e.epoch) % stride == 0
    ]
    if not sel:
        raise ValueError(
            f"no trace entries inside window {window} with stride {stride}"
        )
    return sel


def median_sparsity_over_window(trace: TraceLog, window: int = 1000, stride: int = 10):
    """Per-layer median sparsity over the trailing epoch window."""
    sel = _window_entries(trace, window, stride)
    return np.median(np.stack([e.sparsity for e in sel]), axis=0)


def metric_stats_over_window(trace: TraceLog, window: int = 1000, stride: int = 10):
    """Mean, s.d., and median of the logged train/test metrics over the
    trailing window, plus the median sparsities; None metrics give None."""
    sel = _window_entries(trace, window, stride)
    out = {"window": window, "stride": stride, "n_samples": len(sel)}
    for name in ("train_metric", "test_metric"):
        vals = [getattr(e, name) for e in sel]
        if any(v is None for v in vals):
            out[name] = None
        else:
            arr = np.asarray(vals, dtype=np.float64)
            out[name] = {
                "mean": float(arr.mean()),
                "sd": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
                "median": float(np.median(arr)),
            }
    out["median_sparsity"] = np.median(
        np.stack([e.sparsity for e in sel]), axis=0
    ).tolist()
    return out
