"""Feedforward sigmoid network that maps normalized QoS vectors to service levels.

Layer ``k`` computes ``o = W_k v_prev + b_k`` and ``v = sigmoid(o)`` with
``W_k`` shaped ``(s_k, s_{k-1})``.  Training is plain online gradient descent
on the mean squared error against one-hot level targets; a random
weight-perturbation trainer is kept as a baseline.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .qos_model import ServiceLevel

N_LEVELS = len(ServiceLevel)


class DivergenceError(RuntimeError):
    """Raised when training produces non-finite parameters or loss."""

    def __init__(self, msg: str = "divergence"):
        super().__init__(msg)


class Trainer(str, enum.Enum):
    BACKPROP = "backprop"
    PERTURBATION = "perturbation"


class StopMetric(str, enum.Enum):
    MSE = "mse"
    MAE = "mae"


@dataclass(frozen=True)
class LayerSpec:
    sizes: tuple[int, ...]
    activation: str = "sigmoid"

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if len(self.sizes) < 2:
            raise ValueError("need at least an input and an output layer")
        if any(s < 1 for s in self.sizes):
            raise ValueError("every layer needs at least one node")
        if self.activation != "sigmoid":
            raise ValueError("only the sigmoid activation is supported")

    @classmethod
    def default(cls, n_inputs: int = 9, hidden: Sequence[int] = (9,) * 5) -> "LayerSpec":
        return cls((n_inputs, *hidden, N_LEVELS))

    @property
    def depth(self) -> int:
        return len(self.sizes) - 1


@dataclass(frozen=True)
class NetworkParams:
    spec: LayerSpec
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        ws = tuple(np.array(w, dtype=np.float64) for w in self.weights)
        bs = tuple(np.array(b, dtype=np.float64) for b in self.biases)
        if len(ws) != self.spec.depth or len(bs) != self.spec.depth:
            raise ValueError("parameter count does not match the layer spec")
        for k, (w, b) in enumerate(zip(ws, bs), start=1):
            rows, cols = self.spec.sizes[k], self.spec.sizes[k - 1]
            if w.shape != (rows, cols) or b.shape != (rows,):
                raise ValueError(f"layer {k}: expected W {(rows, cols)} and b {(rows,)}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise DivergenceError(f"divergence: non-finite parameters in layer {k}")
            w.flags.writeable = False
            b.flags.writeable = False
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    def to_dict(self) -> dict:
        return {
            "sizes": list(self.spec.sizes),
            "activation": self.spec.activation,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkParams":
        spec = LayerSpec(tuple(d["sizes"]), d.get("activation", "sigmoid"))
        return cls(spec, tuple(np.array(w) for w in d["weights"]), tuple(np.array(b) for b in d["biases"]))

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])

    def n_weights(self) -> int:
        return sum(w.size for w in self.weights)

    def equal(self, other: "NetworkParams") -> bool:
        return self.spec == other.spec and all(
            np.array_equal(a, b) for a, b in zip(self.weights + self.biases, other.weights + other.biases)
        )


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.1
    max_epochs: int = 500
    acceptable_error: float = 0.01
    rng_seed: int = 0
    trainer: Trainer = Trainer.BACKPROP
    perturbation_step: float = 0.05
    stop_metric: StopMetric = StopMetric.MSE
    init: str = "glorot_sigmoid"

    def __post_init__(self):
        object.__setattr__(self, "trainer", Trainer(self.trainer))
        object.__setattr__(self, "stop_metric", StopMetric(self.stop_metric))
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not self.acceptable_error > 0:
            raise ValueError("acceptable_error must be positive")
        if int(self.max_epochs) < 1:
            raise ValueError("max_epochs must be a positive integer")
        if not self.perturbation_step >= 0:
            raise ValueError("perturbation_step must be non-negative")
        if self.init not in INIT_SCHEMES:
            raise ValueError(f"unknown init scheme {self.init!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["trainer"] = self.trainer.value
        d["stop_metric"] = self.stop_metric.value
        return d

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class ForwardTrace:
    pre: tuple[np.ndarray, ...]  # o^1 .. o^m
    act: tuple[np.ndarray, ...]  # v^0 .. v^m

    @property
    def output(self) -> np.ndarray:
        return self.act[-1]


def sigmoid(x):
    # split by sign so exp never overflows
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


INIT_SCHEMES = ("glorot_sigmoid", "fan_in")


def init_network(spec: LayerSpec, rng_seed: int, scheme: str = "glorot_sigmoid") -> NetworkParams:
    """Seeded uniform weights and zero biases.

    ``glorot_sigmoid`` draws from ``+-4 sqrt(6 / (fan_in + fan_out))``;
    ``fan_in`` from ``+-1 / sqrt(fan_in)``, which leaves deep sigmoid stacks on
    a long loss plateau.
    """
    if scheme not in INIT_SCHEMES:
        raise ValueError(f"unknown init scheme {scheme!r}")
    rng = np.random.default_rng(rng_seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.sizes[:-1], spec.sizes[1:]):
        if scheme == "glorot_sigmoid":
            bound = 4.0 * np.sqrt(6.0 / (fan_in + fan_out))
        else:
            bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return NetworkParams(spec, tuple(weights), tuple(biases))


def forward(net: NetworkParams, x: np.ndarray) -> ForwardTrace:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.spec.sizes[0],):
        raise ValueError(f"input has shape {x.shape}, network expects ({net.spec.sizes[0]},)")
    pre, act = [], [x]
    v = x
    for w, b in zip(net.weights, net.biases):
        o = w @ v + b
        v = sigmoid(o)
        pre.append(o)
        act.append(v)
    return ForwardTrace(tuple(pre), tuple(act))


def predict(net: NetworkParams, X: np.ndarray) -> np.ndarray:
    """Output activations for a batch, shape (n, s_m)."""
    V = np.asarray(X, dtype=np.float64)
    if V.ndim != 2 or V.shape[1] != net.spec.sizes[0]:
        raise ValueError(f"inputs must have shape (n, {net.spec.sizes[0]})")
    for w, b in zip(net.weights, net.biases):
        V = sigmoid(V @ w.T + b)
    return V


def one_hot(levels: Sequence[int], width: int = N_LEVELS) -> np.ndarray:
    levels = np.asarray(levels, dtype=np.int64)
    out = np.zeros((levels.size, width))
    out[np.arange(levels.size), levels] = 1.0
    return out


def loss(net: NetworkParams, X: np.ndarray, levels: Sequence[int]) -> float:
    """Mean squared error over samples and output nodes against one-hot targets."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("loss needs at least one sample")
    out = predict(net, X)
    return float(np.mean((out - one_hot(levels, out.shape[1])) ** 2))


def output_mae(net: NetworkParams, X: np.ndarray, levels: Sequence[int]) -> float:
    out = predict(net, X)
    return float(np.mean(np.abs(out - one_hot(levels, out.shape[1]))))


def gradients(net: NetworkParams, x: np.ndarray, level: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Analytic gradient of one sample's squared error (mean over outputs)."""
    trace = forward(net, x)
    target = one_hot([level], net.spec.sizes[-1])[0]
    v_out = trace.output
    delta = (2.0 / v_out.size) * (v_out - target) * v_out * (1.0 - v_out)
    gw = [None] * net.spec.depth
    gb = [None] * net.spec.depth
    for k in range(net.spec.depth - 1, -1, -1):
        gw[k] = np.outer(delta, trace.act[k])
        gb[k] = delta.copy()
        if k:
            v = trace.act[k]
            delta = (net.weights[k].T @ delta) * v * (1.0 - v)
    return gw, gb


def _check_samples(net: NetworkParams, X, levels):
    X = np.ascontiguousarray(X, dtype=np.float64)
    levels = np.ascontiguousarray(levels, dtype=np.int64)
    if X.ndim != 2 or X.shape[1] != net.spec.sizes[0]:
        raise ValueError(f"inputs must have shape (n, {net.spec.sizes[0]})")
    if X.shape[0] == 0 or X.shape[0] != levels.shape[0]:
        raise ValueError("need a non-empty sample set with one level per input")
    if levels.min() < 0 or levels.max() >= net.spec.sizes[-1]:
        raise ValueError("level index out of range for the output layer")
    return X, levels


def backprop_epoch(
    net: NetworkParams,
    X: np.ndarray,
    levels: Sequence[int],
    learning_rate: float,
    rng: Optional[np.random.Generator] = None,
) -> tuple[NetworkParams, float]:
    """One pass of per-sample gradient descent.

    Samples are visited in a permutation drawn from ``rng`` (input order when
    ``rng`` is None).  Returns the updated network and its full-set loss.
    """
    X, levels = _check_samples(net, X, levels)
    order = np.arange(X.shape[0]) if rng is None else rng.permutation(X.shape[0])
    weights = [w.copy() for w in net.weights]
    biases = [b.copy() for b in net.biases]
    ok = _kernels.sgd_epoch(weights, biases, X, levels, order, float(learning_rate))
    if not ok:
        raise DivergenceError()
    try:
        updated = NetworkParams(net.spec, tuple(weights), tuple(biases))
    except DivergenceError:
        raise DivergenceError() from None
    epoch_loss = loss(updated, X, levels)
    if not np.isfinite(epoch_loss):
        raise DivergenceError()
    return updated, epoch_loss


def perturbation_epoch(
    net: NetworkParams,
    X: np.ndarray,
    levels: Sequence[int],
    step: float,
    rng: np.random.Generator,
    current_loss: Optional[float] = None,
) -> tuple[NetworkParams, float]:
    """Perturb one randomly chosen weight by ``+-step``; keep it only if the loss drops."""
    X, levels = _check_samples(net, X, levels)
    if current_loss is None:
        current_loss = loss(net, X, levels)
    index = int(rng.integers(net.n_weights()))
    sign = 1.0 if rng.random() < 0.5 else -1.0
    if step == 0:
        return net, current_loss
    weights = [w.copy() for w in net.weights]
    for w in weights:
        if index < w.size:
            w.flat[index] += sign * step
            break
        index -= w.size
    candidate = NetworkParams(net.spec, tuple(weights), net.biases)
    new_loss = loss(candidate, X, levels)
    if new_loss < current_loss:
        return candidate, new_loss
    return net, current_loss


def _monitor(net, X, levels, metric: StopMetric, mse: float) -> float:
    return mse if metric is StopMetric.MSE else output_mae(net, X, levels)


def train(
    spec: LayerSpec, X: np.ndarray, levels: Sequence[int], config: TrainingConfig
) -> tuple[NetworkParams, list[float]]:
    """Train from a seeded initialization until the monitored error reaches
    ``acceptable_error`` or ``max_epochs`` have run.

    The history holds the monitored metric (MSE by default) after each epoch.
    """
    X = np.asarray(X, dtype=np.float64)
    net = init_network(spec, config.rng_seed, config.init)
    rng = np.random.default_rng([config.rng_seed, 1])
    history: list[float] = []
    current = loss(net, X, levels)
    for _ in range(int(config.max_epochs)):
        if config.trainer is Trainer.BACKPROP:
            net, current = backprop_epoch(net, X, levels, config.learning_rate, rng)
        else:
            net, current = perturbation_epoch(net, X, levels, config.perturbation_step, rng, current)
        history.append(_monitor(net, X, levels, config.stop_metric, current))
        if history[-1] <= config.acceptable_error:
            break
    return net, history


def sample_passes(trainer: Trainer, epochs: int, n_samples: int) -> int:
    """Per-sample forward passes spent by ``epochs`` epochs of a trainer.

    Backprop costs one forward/backward pass per sample plus the full-set loss;
    a perturbation step costs one full-set loss.
    """
    per_epoch = 2 * n_samples if Trainer(trainer) is Trainer.BACKPROP else n_samples
    return epochs * per_epoch


def classify_level(net: NetworkParams, x: np.ndarray) -> ServiceLevel:
    """Level of the most active output node; ties go to the lower level."""
    return ServiceLevel(int(np.argmax(forward(net, x).output)))


def classify_levels(net: NetworkParams, X: np.ndarray) -> np.ndarray:
    return np.argmax(predict(net, X), axis=1)


def gradient_check(net: NetworkParams, x: np.ndarray, level: int, epsilon: float = 1e-5) -> float:
    """Worst relative gap between analytic and central-difference gradients.

    The difference quotients are evaluated in extended precision so that
    cancellation does not swamp the small gradients of early layers in deep
    sigmoid stacks.  Components whose magnitude is below ``GRAD_FLOOR`` are
    compared against that floor instead of their own size.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    x = np.asarray(x, dtype=np.float64)
    gw, gb = gradients(net, x, level)
    analytic = np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(gw, gb)])
    return relative_error(analytic, numeric_gradient(net, x, level, epsilon))


GRAD_FLOOR = 1e-8


def numeric_gradient(net: NetworkParams, x: np.ndarray, level: int, epsilon: float = 1e-5) -> np.ndarray:
    """Central differences of one sample's squared error over all parameters."""
    ld = np.longdouble
    theta = net.flat().astype(ld)
    x = np.asarray(x, dtype=ld)
    target = np.zeros(net.spec.sizes[-1], dtype=ld)
    target[level] = 1

    def sample_loss(flat):
        v, pos = x, 0
        for fan_in, fan_out in zip(net.spec.sizes[:-1], net.spec.sizes[1:]):
            w = flat[pos : pos + fan_in * fan_out].reshape(fan_out, fan_in)
            pos += fan_in * fan_out
            v = 1 / (1 + np.exp(-(w @ v + flat[pos : pos + fan_out])))
            pos += fan_out
        return np.mean((v - target) ** 2)

    eps = ld(epsilon)
    out = np.empty(theta.size, dtype=ld)
    for i in range(theta.size):
        plus, minus = theta.copy(), theta.copy()
        plus[i] += eps
        minus[i] -= eps
        out[i] = (sample_loss(plus) - sample_loss(minus)) / (2 * eps)
    return out.astype(np.float64)


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = GRAD_FLOOR) -> float:
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / scale).max(initial=0.0))


def quartile_levels(scores: np.ndarray) -> np.ndarray:
    """Bin scalar quality scores into four levels at their quartiles."""
    scores = np.asarray(scores, dtype=np.float64)
    cuts = np.quantile(scores, [0.25, 0.5, 0.75])
    return np.searchsorted(cuts, scores, side="right").astype(np.int64)
