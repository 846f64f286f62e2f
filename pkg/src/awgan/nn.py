"""MLPs, flat parameter vectors, Adam and the learning-rate schedule."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Graph, Node, _sigmoid

ACTIVATIONS = ("linear", "tanh", "leaky_relu", "sigmoid")
LEAKY_SLOPE = 0.2
CHECKPOINT_FORMAT = "awgan-mlp"
CHECKPOINT_VERSION = 1


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str


@dataclass
class Mlp:
    layers: list[Layer]
    seed: int = 0

    @property
    def sizes(self) -> list[int]:
        return [self.layers[0].weight.shape[1]] + [l.weight.shape[0] for l in self.layers]

    @property
    def activations(self) -> list[str]:
        return [l.activation for l in self.layers]

    @property
    def num_params(self) -> int:
        return sum(l.weight.size + l.bias.size for l in self.layers)

    def copy(self) -> "Mlp":
        return copy.deepcopy(self)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Plain numpy forward pass (no graph)."""
        h = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            h = _activate(h @ layer.weight.T + layer.bias, layer.activation)
        return h

    def build(self, g: Graph, x: Node, prefix: str, trainable: bool = True) -> Node:
        """Record the forward pass into ``g``.

        Weights become leaves named ``{prefix}{i}.weight`` / ``{prefix}{i}.bias``;
        with ``trainable=False`` they are data leaves and get no gradient.
        """
        leaf = g.param if trainable else g.input
        h = x
        for i, layer in enumerate(self.layers):
            w = leaf(f"{prefix}{i}.weight")
            b = leaf(f"{prefix}{i}.bias")
            h = g.add(g.matmul(h, w, transpose_b=True), b)
            if layer.activation == "tanh":
                h = g.tanh(h)
            elif layer.activation == "leaky_relu":
                h = g.leaky_relu(h, LEAKY_SLOPE)
            elif layer.activation == "sigmoid":
                h = g.sigmoid(h)
        return h

    def bindings(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"{prefix}{i}.weight"] = layer.weight
            out[f"{prefix}{i}.bias"] = layer.bias
        return out


def _activate(h: np.ndarray, activation: str) -> np.ndarray:
    if activation == "linear":
        return h
    if activation == "tanh":
        return np.tanh(h)
    if activation == "leaky_relu":
        return np.where(h > 0, h, LEAKY_SLOPE * h)
    if activation == "sigmoid":
        return _sigmoid(h)
    raise ValueError(f"unknown activation {activation!r}")


def mlp_init(layer_sizes, activations, seed: int, zero_last_layer: bool = False) -> Mlp:
    """Glorot-uniform weights, U(±sqrt(6/(fan_in+fan_out))), zero biases.

    ``activations`` has one tag per layer (``len(layer_sizes) - 1``).
    ``zero_last_layer`` zeroes the output weights so every input maps to 0.
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ValueError("need at least an input and an output size")
    if any(s <= 0 for s in sizes):
        raise ValueError(f"layer sizes must be positive: {sizes}")
    activations = list(activations)
    if len(activations) != len(sizes) - 1:
        raise ValueError(f"expected {len(sizes) - 1} activation tags, got {len(activations)}")
    for act in activations:
        if act not in ACTIVATIONS:
            raise ValueError(f"unknown activation {act!r}")

    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        layers.append(Layer(w, np.zeros(fan_out), act))
    if zero_last_layer:
        layers[-1].weight[:] = 0.0
    return Mlp(layers, seed)


def default_generator(seed: int, latent_dim: int = 2, hidden: int = 64) -> Mlp:
    return mlp_init([latent_dim, hidden, hidden, 2], ["tanh", "tanh", "linear"], seed)


def default_discriminator(seed: int, hidden: int = 64, zero_last_layer: bool = False) -> Mlp:
    return mlp_init([2, hidden, hidden, 1], ["leaky_relu", "leaky_relu", "linear"], seed,
                    zero_last_layer=zero_last_layer)


# -- flat parameter vectors ---------------------------------------------------


@dataclass(frozen=True)
class Slot:
    name: str  # "{layer}.weight" or "{layer}.bias"
    shape: tuple[int, ...]
    offset: int

    @property
    def size(self) -> int:
        return math.prod(self.shape)


@dataclass(frozen=True)
class Layout:
    slots: tuple[Slot, ...]
    activations: tuple[str, ...]
    seed: int = 0

    @property
    def size(self) -> int:
        return sum(s.size for s in self.slots)


@dataclass
class ParamVector:
    data: np.ndarray
    layout: Layout

    def __len__(self) -> int:
        return self.data.size

    def copy(self) -> "ParamVector":
        return ParamVector(self.data.copy(), self.layout)


def layout_of(model: Mlp) -> Layout:
    slots = []
    offset = 0
    for i, layer in enumerate(model.layers):
        for kind, arr in (("weight", layer.weight), ("bias", layer.bias)):
            slots.append(Slot(f"{i}.{kind}", arr.shape, offset))
            offset += arr.size
    return Layout(tuple(slots), tuple(model.activations), model.seed)


def flatten(model: Mlp) -> ParamVector:
    parts = []
    for layer in model.layers:
        parts.append(layer.weight.reshape(-1))
        parts.append(layer.bias.reshape(-1))
    return ParamVector(np.concatenate(parts), layout_of(model))


def unflatten(vector: ParamVector | np.ndarray, layout: Layout | None = None) -> Mlp:
    if isinstance(vector, ParamVector):
        data, layout = vector.data, layout or vector.layout
    else:
        data = np.asarray(vector, dtype=np.float64)
    if layout is None:
        raise ValueError("a layout is required to unflatten a bare array")
    if data.size != layout.size:
        raise ValueError(f"vector length {data.size} does not match layout size {layout.size}")
    arrays = [data[s.offset:s.offset + s.size].reshape(s.shape).copy() for s in layout.slots]
    layers = [Layer(arrays[2 * i], arrays[2 * i + 1], act) for i, act in enumerate(layout.activations)]
    return Mlp(layers, layout.seed)


def flatten_grads(grads: dict[str, np.ndarray], layout: Layout, prefix: str = "") -> ParamVector:
    """Concatenate a graph's gradient map in ``layout`` order."""
    data = np.empty(layout.size)
    for s in layout.slots:
        g = grads[prefix + s.name]
        if g.shape != s.shape:
            raise ValueError(f"gradient for {prefix + s.name} has shape {g.shape}, expected {s.shape}")
        data[s.offset:s.offset + s.size] = g.reshape(-1)
    return ParamVector(data, layout)


# -- optimizer ------------------------------------------------------------------


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.0
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, k: int, beta1: float = 0.0, beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(np.zeros(k), np.zeros(k), 0, beta1, beta2, eps)

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.t, self.beta1, self.beta2, self.eps)


def adam_step(params: ParamVector, grad: ParamVector | np.ndarray, state: AdamState,
              lr: float, direction: str = "descend") -> ParamVector:
    """Bias-corrected Adam; advances ``state`` in place and returns new params."""
    g = grad.data if isinstance(grad, ParamVector) else np.asarray(grad, dtype=np.float64)
    if g.shape != params.data.shape or state.m.shape != params.data.shape:
        raise ValueError("parameter, gradient and moment lengths disagree")
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite gradient entries")
    if direction not in ("ascend", "descend"):
        raise ValueError(f"direction must be 'ascend' or 'descend', got {direction!r}")

    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    update = lr * m_hat / (np.sqrt(v_hat) + state.eps)
    data = params.data + update if direction == "ascend" else params.data - update
    return ParamVector(data, params.layout)


@dataclass(frozen=True)
class LrSchedule:
    base: float
    total_steps: int
    mode: str = "constant"  # or "linear"

    def __post_init__(self):
        if self.base < 0 or self.total_steps < 0:
            raise ValueError("base rate and total steps must be non-negative")
        if self.mode not in ("constant", "linear"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")


def lr_at(schedule: LrSchedule, t: int) -> float:
    if t < 0 or t > schedule.total_steps:
        raise ValueError(f"step {t} outside [0, {schedule.total_steps}]")
    if schedule.mode == "constant":
        return schedule.base
    if schedule.total_steps == 0:
        return schedule.base
    return schedule.base * (1.0 - t / schedule.total_steps)


# -- checkpoints ------------------------------------------------------------------
#
# JSON text:
#   {"format": "awgan-mlp", "version": 1, "seed": int,
#    "sizes": [in, h1, ..., out], "activations": [...],
#    "params": [flat vector in layout order: layer 0 weight (row-major, out x in),
#               layer 0 bias, layer 1 weight, ...]}
# Floats are written with repr precision, so load(save(m)) is bit-identical.


def save_checkpoint(model: Mlp, path) -> Path:
    path = Path(path)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "seed": int(model.seed),
        "sizes": model.sizes,
        "activations": model.activations,
        "params": flatten(model).data.tolist(),
    }
    path.write_text(json.dumps(payload) + "\n")
    return path


def load_checkpoint(path) -> Mlp:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not an {CHECKPOINT_FORMAT} checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    template = mlp_init(payload["sizes"], payload["activations"], payload["seed"])
    return unflatten(np.array(payload["params"], dtype=np.float64), layout_of(template))
