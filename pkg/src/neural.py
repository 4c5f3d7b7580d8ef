"""Dense q-value network, replay memory and training loop in plain numpy (double precision)."""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DimensionMismatch

RELU = "relu"
LINEAR = "linear"

HIDDEN_LAYERS = (32, 16)

Gradients = list[tuple[np.ndarray, np.ndarray]]


@dataclass
class DenseLayer:
    """Affine map ``weights @ x + bias``; ``weights`` has shape (out, in)."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str


class DenseNetwork:
    """Fully connected network: ReLU hidden layers, linear output."""

    def __init__(self, layers: list[DenseLayer]):
        for previous, current in zip(layers, layers[1:], strict=False):
            if previous.weights.shape[0] != current.weights.shape[1]:
                raise DimensionMismatch(
                    f"layer output {previous.weights.shape[0]} does not feed input "
                    f"{current.weights.shape[1]}"
                )
        self.layers = layers

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].weights.shape[1]] + [layer.weights.shape[0] for layer in self.layers]

    @property
    def input_size(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def output_size(self) -> int:
        return self.layers[-1].weights.shape[0]

    def parameters(self) -> list[np.ndarray]:
        params: list[np.ndarray] = []
        for layer in self.layers:
            params.extend((layer.weights, layer.bias))
        return params

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Q-values for one feature vector (1-D) or a batch (2-D, one row per sample)."""
        output, _ = self._forward(x)
        return output

    def _forward(self, x: np.ndarray) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        batch = x[np.newaxis, :] if single else x
        if batch.ndim != 2 or batch.shape[1] != self.input_size:
            raise DimensionMismatch(f"expected input of size {self.input_size}, got {x.shape}")

        # cache holds (layer input, pre-activation) per layer for the backward pass
        cache: list[tuple[np.ndarray, np.ndarray]] = []
        activations = batch
        for layer in self.layers:
            pre = activations @ layer.weights.T + layer.bias
            cache.append((activations, pre))
            activations = np.maximum(pre, 0.0) if layer.activation == RELU else pre
        return (activations[0] if single else activations), cache

    def backward(
        self, cache: list[tuple[np.ndarray, np.ndarray]], d_output: np.ndarray
    ) -> Gradients:
        """Parameter gradients given dL/d(output) for the cached batch."""
        grads: Gradients = []
        delta = np.atleast_2d(d_output)
        for layer, (inputs, pre) in zip(reversed(self.layers), reversed(cache), strict=True):
            if layer.activation == RELU:
                delta = delta * (pre > 0.0)
            grads.append((delta.T @ inputs, delta.sum(axis=0)))
            delta = delta @ layer.weights
        grads.reverse()
        return grads

    def mse_gradients(self, x: np.ndarray, target: np.ndarray) -> Gradients:
        """Gradients of ``mse_loss(forward(x), target)``."""
        output, cache = self._forward(x)
        output = np.atleast_2d(output)
        target = np.atleast_2d(np.asarray(target, dtype=np.float64))
        return self.backward(cache, 2.0 * (output - target) / output.size)

    def save(self, path: str | Path) -> None:
        """Text snapshot: dims line, activations line, then per layer a row-major weights line
        and a bias line."""
        lines = [
            "# edge-scaler dense network v1",
            "dims " + " ".join(str(d) for d in self.dims),
            "activations " + " ".join(layer.activation for layer in self.layers),
        ]
        for index, layer in enumerate(self.layers, 1):
            lines.append(f"W{index} " + " ".join(format(v, ".17g") for v in layer.weights.ravel()))
            lines.append(f"b{index} " + " ".join(format(v, ".17g") for v in layer.bias))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> DenseNetwork:
        rows = [
            line.split()
            for line in Path(path).read_text(encoding="utf-8").splitlines()
            if line.strip() and not line.startswith("#")
        ]
        fields = {row[0]: row[1:] for row in rows}
        try:
            dims = [int(d) for d in fields["dims"]]
            activations = fields["activations"]
            layers = []
            for index, (fan_in, fan_out) in enumerate(zip(dims, dims[1:], strict=False), 1):
                weights = np.array(fields[f"W{index}"], dtype=np.float64).reshape(fan_out, fan_in)
                bias = np.array(fields[f"b{index}"], dtype=np.float64)
                layers.append(DenseLayer(weights, bias, activations[index - 1]))
        except (KeyError, ValueError, IndexError) as exc:
            raise ConfigurationError(f"malformed network snapshot {path}: {exc}") from exc
        return cls(layers)


def init_network(dims: Sequence[int], rng: np.random.Generator) -> DenseNetwork:
    """Weights uniform in ±1/sqrt(fan_in), zero biases, ReLU everywhere but the output."""
    if len(dims) < 2:
        raise ConfigurationError("a network needs at least input and output dimensions")
    layers = []
    for index, (fan_in, fan_out) in enumerate(zip(dims, dims[1:], strict=False)):
        bound = 1.0 / np.sqrt(fan_in)
        weights = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        activation = LINEAR if index == len(dims) - 2 else RELU
        layers.append(DenseLayer(weights, np.zeros(fan_out), activation))
    return DenseNetwork(layers)


def mse_loss(output: np.ndarray, target: np.ndarray) -> float:
    return float(np.mean((np.asarray(output) - np.asarray(target)) ** 2))


def gradient_check(
    net: DenseNetwork,
    x: np.ndarray,
    target: np.ndarray,
    gradient_fn: Callable[[DenseNetwork, np.ndarray, np.ndarray], Gradients] | None = None,
    step: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients of the MSE loss."""
    analytic = (gradient_fn or DenseNetwork.mse_gradients)(net, x, target)
    worst = 0.0
    for layer, (d_weights, d_bias) in zip(net.layers, analytic, strict=True):
        for param, grad in ((layer.weights, d_weights), (layer.bias, d_bias)):
            for index in np.ndindex(param.shape):
                original = param[index]
                param[index] = original + step
                loss_plus = mse_loss(net.forward(x), target)
                param[index] = original - step
                loss_minus = mse_loss(net.forward(x), target)
                param[index] = original
                numeric = (loss_plus - loss_minus) / (2.0 * step)
                exact = float(grad[index])
                scale = max(abs(exact), abs(numeric), 1e-8)
                worst = max(worst, abs(exact - numeric) / scale)
    return worst


class SGDOptimizer:
    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        for param, grad in zip(params, grads, strict=True):
            param -= self.learning_rate * grad


class AdamOptimizer:
    def __init__(
        self,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self._m: list[np.ndarray] | None = None
        self._v: list[np.ndarray] | None = None
        self._t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self._m is None or self._v is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self._t += 1
        correction1 = 1.0 - self.beta1**self._t
        correction2 = 1.0 - self.beta2**self._t
        for param, grad, m, v in zip(params, grads, self._m, self._v, strict=True):
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            update = (m / correction1) / (np.sqrt(v / correction2) + self.epsilon)
            param -= self.learning_rate * update


OPTIMIZERS = ("adam", "sgd")


def make_optimizer(name: str, learning_rate: float) -> AdamOptimizer | SGDOptimizer:
    if name == "adam":
        return AdamOptimizer(learning_rate)
    if name == "sgd":
        return SGDOptimizer(learning_rate)
    raise ConfigurationError(f"unknown optimizer {name!r}; expected one of {OPTIMIZERS}")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 1280
    update_every: int = 2500
    gamma: float = 0.95
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    replay_capacity: int = 50_000
    minibatch_size: int = 32

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.batch_size > self.replay_capacity:
            raise ConfigurationError("drl.batch_size must be in [1, replay_capacity]")
        if self.update_every < 1:
            raise ConfigurationError("drl.update_every must be >= 1")
        if self.minibatch_size < 1:
            raise ConfigurationError("drl.minibatch_size must be >= 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError("drl.gamma must be in [0, 1)")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigurationError(f"drl.optimizer must be one of {OPTIMIZERS}")


@dataclass(frozen=True)
class Transition:
    """Experience record; ``next_mask`` flags the actions available in the next state."""

    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    next_mask: np.ndarray


class ReplayMemory:
    """Bounded FIFO experience store."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigurationError("replay capacity must be >= 1")
        self.capacity = capacity
        self.buffer: list[Transition] = []
        self._position = 0

    def __len__(self) -> int:
        return len(self.buffer)

    def push(self, transition: Transition) -> None:
        if len(self.buffer) < self.capacity:
            self.buffer.append(transition)
        else:
            self.buffer[self._position] = transition
        self._position = (self._position + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        """Uniform without replacement, or with replacement while smaller than the batch."""
        if not self.buffer:
            return []
        replace = len(self.buffer) < batch_size
        picks = rng.choice(len(self.buffer), size=batch_size, replace=replace)
        return [self.buffer[int(i)] for i in picks]


def train_batch(
    net: DenseNetwork,
    batch: Sequence[Transition],
    config: TrainConfig,
    optimizer: AdamOptimizer | SGDOptimizer,
) -> float:
    """One optimizer step on the taken-action MSE against bootstrapped targets.

    Returns the loss measured before the step.
    """
    if not batch:
        raise ValueError("cannot train on an empty batch")
    states = np.stack([t.state for t in batch])
    next_states = np.stack([t.next_state for t in batch])
    actions = np.array([t.action for t in batch])
    rewards = np.array([t.reward for t in batch], dtype=np.float64)
    masks = np.stack([t.next_mask for t in batch])

    next_q = np.where(masks, net.forward(next_states), -np.inf)
    targets = rewards + config.gamma * next_q.max(axis=1)

    output, cache = net._forward(states)
    rows = np.arange(len(batch))
    errors = output[rows, actions] - targets
    loss = float(np.mean(errors**2))

    d_output = np.zeros_like(output)
    d_output[rows, actions] = 2.0 * errors / len(batch)
    grads = net.backward(cache, d_output)
    optimizer.step(net.parameters(), [g for pair in grads for g in pair])
    return loss


def fit(
    net: DenseNetwork,
    batch: Sequence[Transition],
    config: TrainConfig,
    optimizer: AdamOptimizer | SGDOptimizer,
) -> float:
    """One pass over ``batch`` in consecutive mini-batches; mean of their pre-step losses."""
    size = config.minibatch_size
    losses = [
        train_batch(net, batch[start : start + size], config, optimizer)
        for start in range(0, len(batch), size)
    ]
    return float(np.mean(losses))
