"""Posterior-mean prediction, metrics, sparsity estimates, and node summaries."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .model import DEFAULT_TAU, VariationalState, draw_sample, forward
from .numerics import RandomStream

__all__ = [
    "MetricsReport",
    "accuracy",
    "dataset_metric",
    "node_weight_summary",
    "predict_posterior_mean",
    "rmse",
    "sparsity_estimate",
    "write_node_summary_csv",
]

NODE_SUMMARY_HEADER = "layer,node,gamma,min,q1,median,q3,max,active"


def predict_posterior_mean(
    state: VariationalState, x, S: int = 30, stream: RandomStream | None = None
):
    """Average the network output over S hard-mask Monte Carlo draws.

    Regression returns the mean prediction, squeezed to a vector for a
    one-dimensional output. Classification averages the per-draw class
    probabilities and returns argmax labels (ties to the lowest index).
    """
    if S < 1:
        raise ValueError(f"need S >= 1 Monte Carlo samples, got {S}")
    if stream is None:
        stream = RandomStream(0, 20)
    x = np.asarray(x, dtype=np.float64)
    batch = x if x.ndim == 2 else x[None, :]
    acc = np.zeros((batch.shape[0], state.arch.k[-1]))
    for _ in range(S):
        sample = draw_sample(state, stream, mask_mode="hard", tau=DEFAULT_TAU)
        out = forward(state.arch, sample, batch)
        if state.arch.task == "classification":
            out = _softmax_rows(out)
        acc += out
    acc /= S
    if state.arch.task == "classification":
        labels = acc.argmax(axis=1)
        return labels[0] if x.ndim == 1 else labels
    if acc.shape[1] == 1:
        acc = acc[:, 0]
        return float(acc[0]) if x.ndim == 1 else acc
    return acc[0] if x.ndim == 1 else acc


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def rmse(preds, targets) -> float:
    """Root mean squared error between two equal-length vectors."""
    preds = np.asarray(preds, dtype=np.float64).reshape(-1)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    if preds.shape != targets.shape or preds.size < 1:
        raise ValueError(
            f"need equal nonempty lengths, got {preds.shape} vs {targets.shape}"
        )
    return float(np.sqrt(np.mean((preds - targets) ** 2)))


def accuracy(pred_labels, targets) -> float:
    """Fraction of exactly matching class labels."""
    pred_labels = np.asarray(pred_labels).reshape(-1)
    targets = np.asarray(targets).reshape(-1)
    if pred_labels.shape != targets.shape or pred_labels.size < 1:
        raise ValueError("need equal nonempty lengths")
    return float(np.mean(pred_labels == targets))


def dataset_metric(state, ds, S: int = 30, stream: RandomStream | None = None) -> float:
    """RMSE (original target scale when the dataset was standardized) or
    accuracy of the posterior-mean prediction on a dataset."""
    preds = predict_posterior_mean(state, ds.features, S=S, stream=stream)
    if state.arch.task == "classification":
        return accuracy(preds, ds.targets)
    value = rmse(preds, ds.targets)
    std = ds.standardization
    if std is not None and std.target_scale is not None:
        value *= std.target_scale
    return value


def sparsity_estimate(state: VariationalState, threshold: float = 0.5) -> np.ndarray:
    """Per-layer fraction of nodes with gamma >= threshold; the output layer
    is reported as 1."""
    L = state.arch.L
    out = np.ones(L + 1)
    for l in range(L):
        out[l] = float(np.mean(state.gamma(l) >= threshold))
    return out


def node_weight_summary(state: VariationalState) -> list:
    """Per hidden node: gamma, five-number summary of |mu| (bias included),
    and the active flag. Layer and node indices are 1-based."""
    rows = []
    for l in range(state.arch.L):
        gamma = state.gamma(l)
        for j in range(state.arch.k[l + 1]):
            mags = np.abs(state.mu[l][j])
            q = np.percentile(mags, [0, 25, 50, 75, 100])
            rows.append(
                {
                    "layer": l + 1,
                    "node": j + 1,
                    "gamma": float(gamma[j]),
                    "min": float(q[0]),
                    "q1": float(q[1]),
                    "median": float(q[2]),
                    "q3": float(q[3]),
                    "max": float(q[4]),
                    "active": bool(gamma[j] >= 0.5),
                }
            )
    return rows


def write_node_summary_csv(state: VariationalState, path) -> None:
    lines = [NODE_SUMMARY_HEADER]
    for r in node_weight_summary(state):
        lines.append(
            f"{r['layer']},{r['node']},{r['gamma']!r},{r['min']!r},{r['q1']!r},"
            f"{r['median']!r},{r['q3']!r},{r['max']!r},{int(r['active'])}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass
class MetricsReport:
    """Windowed metric summary plus median per-layer sparsity."""

    task: str
    metric: str
    mean: float
    sd: float
    median: float
    sparsity: list
    S: int
    seed: int
    window: int

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "metric": self.metric,
            "mean": self.mean,
            "sd": self.sd,
            "median": self.median,
            "sparsity": [float(v) for v in self.sparsity],
            "S": int(self.S),
            "seed": int(self.seed),
            "window": int(self.window),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)
