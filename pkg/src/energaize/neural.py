"""Dense network core: forward, exact backprop (parameter AND input
gradients), Adam, soft target updates, JSON checkpoints.

Inputs may be single vectors (d,) or batches (B, d). `backward` returns the
gradient of the scalar whose per-output partials the caller supplies, summed
over the batch; divide dL_dy by B beforehand for a batch-mean loss.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity")

CHECKPOINT_FORMAT = "dense-mlp-v1"


class ShapeMismatchError(ValueError):
    pass


@dataclass
class Mlp:
    widths: tuple[int, ...]  # (input, hidden..., output)
    activations: tuple[str, ...]  # one tag per layer
    weights: list[np.ndarray]  # (fan_in, fan_out) each
    biases: list[np.ndarray]  # (fan_out,) each

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ShapeMismatchError("need at least one layer")
        if len(self.activations) != len(self.widths) - 1:
            raise ShapeMismatchError("activation count must equal layer count")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ShapeMismatchError(f"unknown activation {a!r}")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.widths[k], self.widths[k + 1]) or b.shape != (
                self.widths[k + 1],
            ):
                raise ShapeMismatchError(f"layer {k} parameter shapes do not chain")

    @property
    def params(self) -> list[np.ndarray]:
        """Flat view [W0, b0, W1, b1, ...]; order matches backward's grads."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out


def init_mlp(widths, activations, rng: np.random.Generator) -> Mlp:
    """Uniform +-1/sqrt(fan_in) weights, zero biases."""
    widths = tuple(int(w) for w in widths)
    weights, biases = [], []
    for k in range(len(widths) - 1):
        bound = 1.0 / np.sqrt(widths[k])
        weights.append(rng.uniform(-bound, bound, size=(widths[k], widths[k + 1])))
        biases.append(np.zeros(widths[k + 1]))
    return Mlp(widths, tuple(activations), weights, biases)


def _act(z: np.ndarray, tag: str) -> np.ndarray:
    if tag == "relu":
        return np.maximum(z, 0.0)
    if tag == "tanh":
        return np.tanh(z)
    return z


def forward(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Returns (y, cache). cache[k] is layer k's input; cache[-1] is y.
    Output ndim mirrors input ndim."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    h = x.reshape(1, -1) if squeeze else x
    if h.shape[1] != net.widths[0]:
        raise ShapeMismatchError(f"input width {h.shape[1]} != {net.widths[0]}")
    cache = [h]
    for w, b, tag in zip(net.weights, net.biases, net.activations):
        h = _act(h @ w + b, tag)
        cache.append(h)
    y = cache[-1]
    return (y[0] if squeeze else y), cache


def backward(
    net: Mlp, cache: list[np.ndarray], dL_dy: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    """Exact reverse-mode gradients: ([dW0, db0, ...], dL_dx). The input
    gradient is what carries dQ/dA through a critic into an actor."""
    g = np.asarray(dL_dy, dtype=float)
    squeeze = g.ndim == 1
    if squeeze:
        g = g.reshape(1, -1)
    if g.shape != cache[-1].shape:
        raise ShapeMismatchError(f"dL_dy shape {g.shape} != output {cache[-1].shape}")
    grads: list[np.ndarray] = [None] * (2 * len(net.weights))  # type: ignore[list-item]
    for k in range(len(net.weights) - 1, -1, -1):
        post = cache[k + 1]
        tag = net.activations[k]
        if tag == "relu":
            g = g * (post > 0)
        elif tag == "tanh":
            g = g * (1.0 - post * post)
        x_in = cache[k]
        grads[2 * k] = x_in.T @ g
        grads[2 * k + 1] = g.sum(axis=0)
        g = g @ net.weights[k].T
    return grads, (g[0] if squeeze else g)


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_init(params: list[np.ndarray], lr: float) -> AdamState:
    return AdamState(
        lr=lr,
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
    )


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], st: AdamState) -> None:
    """One bias-corrected Adam descent step, applied in place."""
    if len(params) != len(st.m) or len(params) != len(grads):
        raise ShapeMismatchError("param/grad/state length mismatch")
    st.step += 1
    b1c = 1.0 - st.beta1**st.step
    b2c = 1.0 - st.beta2**st.step
    for p, g, m, v in zip(params, grads, st.m, st.v):
        if p.shape != g.shape:
            raise ShapeMismatchError("grad shape != param shape")
        m *= st.beta1
        m += (1.0 - st.beta1) * g
        v *= st.beta2
        v += (1.0 - st.beta2) * (g * g)
        p -= st.lr * (m / b1c) / (np.sqrt(v / b2c) + st.eps)


def soft_update(target: list[np.ndarray], online: list[np.ndarray], tau: float) -> None:
    """theta_target <- tau*theta_online + (1-tau)*theta_target, in place."""
    if len(target) != len(online):
        raise ShapeMismatchError("target/online length mismatch")
    for tp, op in zip(target, online):
        if tp.shape != op.shape:
            raise ShapeMismatchError("target/online shape mismatch")
        tp *= 1.0 - tau
        tp += tau * op


def clone_mlp(net: Mlp) -> Mlp:
    return Mlp(
        net.widths,
        net.activations,
        [w.copy() for w in net.weights],
        [b.copy() for b in net.biases],
    )


def all_finite(net: Mlp) -> bool:
    return all(np.isfinite(p).all() for p in net.params)


def mlp_to_doc(net: Mlp) -> dict:
    """JSON-safe document; float repr round-trips IEEE doubles exactly."""
    return {
        "format": CHECKPOINT_FORMAT,
        "widths": list(net.widths),
        "activations": list(net.activations),
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def mlp_from_doc(doc: dict) -> Mlp:
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format: {doc.get('format')!r}")
    return Mlp(
        tuple(doc["widths"]),
        tuple(doc["activations"]),
        [np.asarray(w, dtype=float) for w in doc["weights"]],
        [np.asarray(b, dtype=float) for b in doc["biases"]],
    )


def save_mlp(net: Mlp, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(mlp_to_doc(net), fh)
        fh.write("\n")


def load_mlp(path: str | Path) -> Mlp:
    with open(path, encoding="utf-8") as fh:
        return mlp_from_doc(json.load(fh))
