"""Trainable dense classifier head: 1280 -> 800 -> 400 -> 200 -> 1.

Forward pass, binary cross-entropy, exact reverse-mode gradients, inverted
dropout, and SGD/Adam updates, all in 64-bit floats so gradients can be
checked tightly against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericError

LAYER_DIMS = ((800, 1280), (400, 800), (200, 400), (1, 200))

PROB_CLAMP = 1e-12

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class HeadParams:
    """All trainable weights and biases, in layer order."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    w4: np.ndarray
    b4: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2,
                self.w3, self.b3, self.w4, self.b4]

    def copy(self) -> "HeadParams":
        return HeadParams(*[a.copy() for a in self.arrays()])


# Gradients share the container shape of the parameters.
Gradients = HeadParams


@dataclass(frozen=True)
class DropoutSpec:
    rate: float = 0.5
    mode: str = "inference"

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate {self.rate} not in [0, 1)")
        if self.mode not in ("train", "inference"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class ForwardTrace:
    """Everything backward() needs: inputs, pre-activations, post-dropout
    activations, the dropout masks actually drawn, and the probability.

    Arrays carry a leading batch axis; the single-example API uses batch 1.
    """

    x: np.ndarray
    z1: np.ndarray
    a1: np.ndarray
    z2: np.ndarray
    a2: np.ndarray
    z3: np.ndarray
    a3: np.ndarray
    z4: np.ndarray
    prob: np.ndarray
    masks: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None


@dataclass
class OptimizerState:
    algorithm: str = "adam"
    learning_rate: float = 1e-3
    step: int = 0
    m: Gradients | None = None
    v: Gradients | None = None
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    def __post_init__(self):
        if self.algorithm not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.algorithm!r}")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be non-negative")


def init_params(seed: int) -> HeadParams:
    """He initialization for the ReLU layers, 1/fan_in for the output layer,
    zero biases.  Deterministic per seed."""
    rng = np.random.default_rng(seed)
    arrays = []
    for i, (out_dim, in_dim) in enumerate(LAYER_DIMS):
        var = (1.0 if i == len(LAYER_DIMS) - 1 else 2.0) / in_dim
        arrays.append(rng.normal(0.0, np.sqrt(var), size=(out_dim, in_dim)))
        arrays.append(np.zeros(out_dim))
    return HeadParams(*arrays)


def zeros_like_params() -> HeadParams:
    arrays = []
    for out_dim, in_dim in LAYER_DIMS:
        arrays.append(np.zeros((out_dim, in_dim)))
        arrays.append(np.zeros(out_dim))
    return HeadParams(*arrays)


def param_count(p: HeadParams) -> tuple[list[int], int]:
    """Per-layer parameter counts (weights + biases) and the total."""
    weights = p.arrays()
    per_layer = [weights[2 * i].size + weights[2 * i + 1].size
                 for i in range(len(LAYER_DIMS))]
    return per_layer, sum(per_layer)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward_batch(p: HeadParams, x: np.ndarray, dropout: DropoutSpec,
                  seed: int | None = None) -> tuple[np.ndarray, ForwardTrace]:
    """Forward pass over a (n, 1280) batch.

    In train mode an inverted-dropout mask (values 0 or 1/(1-rate)) is drawn
    per row after each hidden activation; inference mode is mask-free and
    deterministic.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    train = dropout.mode == "train" and dropout.rate > 0.0
    masks = None
    if train:
        rng = np.random.default_rng(seed)
        keep = 1.0 - dropout.rate

    def drop(a):
        mask = (rng.random(a.shape) < keep) / keep
        return a * mask, mask

    z1 = x @ p.w1.T + p.b1
    a1 = np.maximum(z1, 0.0)
    if train:
        a1, m1 = drop(a1)
    z2 = a1 @ p.w2.T + p.b2
    a2 = np.maximum(z2, 0.0)
    if train:
        a2, m2 = drop(a2)
    z3 = a2 @ p.w3.T + p.b3
    a3 = np.maximum(z3, 0.0)
    if train:
        a3, m3 = drop(a3)
        masks = (m1, m2, m3)
    z4 = (a3 @ p.w4.T + p.b4).reshape(-1)
    if not np.all(np.isfinite(z4)):
        raise NumericError("non-finite logits in forward pass")
    prob = np.clip(_sigmoid(z4), 1e-15, 1.0 - 1e-15)
    return prob, ForwardTrace(x, z1, a1, z2, a2, z3, a3, z4, prob, masks)


def forward(p: HeadParams, e: np.ndarray, dropout: DropoutSpec,
            seed: int | None = None) -> tuple[float, ForwardTrace]:
    """Probability for one 1280-length embedding, plus its trace."""
    prob, trace = forward_batch(p, e[np.newaxis, :], dropout, seed)
    return float(prob[0]), trace


def bce_loss(probability: float, label: int) -> float:
    """Binary cross-entropy with the probability clamped away from 0 and 1."""
    p = min(max(probability, PROB_CLAMP), 1.0 - PROB_CLAMP)
    y = float(label)
    return float(-(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def backward_batch(p: HeadParams, trace: ForwardTrace,
                   labels: np.ndarray) -> Gradients:
    """Mean gradient of the BCE loss over the batch recorded in the trace.

    Reuses the dropout masks drawn during the forward pass, so the gradient
    is exact for the realized stochastic network.
    """
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    n = y.shape[0]
    dz4 = ((trace.prob - y) / n)[:, np.newaxis]

    dw4 = dz4.T @ trace.a3
    db4 = dz4.sum(axis=0)
    da3 = dz4 @ p.w4
    if trace.masks is not None:
        da3 = da3 * trace.masks[2]
    dz3 = da3 * (trace.z3 > 0.0)

    dw3 = dz3.T @ trace.a2
    db3 = dz3.sum(axis=0)
    da2 = dz3 @ p.w3
    if trace.masks is not None:
        da2 = da2 * trace.masks[1]
    dz2 = da2 * (trace.z2 > 0.0)

    dw2 = dz2.T @ trace.a1
    db2 = dz2.sum(axis=0)
    da1 = dz2 @ p.w2
    if trace.masks is not None:
        da1 = da1 * trace.masks[0]
    dz1 = da1 * (trace.z1 > 0.0)

    dw1 = dz1.T @ trace.x
    db1 = dz1.sum(axis=0)

    g = Gradients(dw1, db1, dw2, db2, dw3, db3, dw4, db4)
    for a in g.arrays():
        if not np.all(np.isfinite(a)):
            raise NumericError("non-finite gradient")
    return g


def backward(p: HeadParams, trace: ForwardTrace, label: int) -> Gradients:
    """Gradient of the BCE loss for the single example in the trace."""
    return backward_batch(p, trace, np.array([label]))


def make_optimizer(algorithm: str = "adam",
                   learning_rate: float = 1e-3) -> OptimizerState:
    state = OptimizerState(algorithm=algorithm, learning_rate=learning_rate)
    if algorithm == "adam":
        state.m = zeros_like_params()
        state.v = zeros_like_params()
    return state


def apply_update(p: HeadParams, g: Gradients,
                 s: OptimizerState) -> tuple[HeadParams, OptimizerState]:
    """One optimizer step; returns fresh parameter and state objects."""
    new_p = p.copy()
    if s.algorithm == "sgd":
        for a, ga in zip(new_p.arrays(), g.arrays()):
            a -= s.learning_rate * ga
        return new_p, replace(s, step=s.step + 1)

    t = s.step + 1
    new_m = s.m.copy()
    new_v = s.v.copy()
    bc1 = 1.0 - s.beta1 ** t
    bc2 = 1.0 - s.beta2 ** t
    for a, ga, ma, va in zip(new_p.arrays(), g.arrays(),
                             new_m.arrays(), new_v.arrays()):
        ma *= s.beta1
        ma += (1.0 - s.beta1) * ga
        va *= s.beta2
        va += (1.0 - s.beta2) * ga * ga
        a -= s.learning_rate * (ma / bc1) / (np.sqrt(va / bc2) + s.eps)
    return new_p, replace(s, step=t, m=new_m, v=new_v)
