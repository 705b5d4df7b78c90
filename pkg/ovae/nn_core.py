"""Dense feed-forward networks with hand-written reverse-mode gradients and Adam.

Layers follow the usual convention ``y = a(x @ W.T + b)`` with ``W`` stored as
(out, in). Every forward pass returns a cache that ``backward`` consumes; the cache
remembers which network (and which parameter version) produced it.
"""
import json
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .config import NN_CONFIG
from .errors import DimensionMismatchError, NonFiniteError, OvaeError, StaleCacheError

logger = logging.getLogger(__name__)


class Activation(str, Enum):
    RELU = 'relu'
    IDENTITY = 'identity'


@dataclass
class DenseLayer:
    weights: np.ndarray
    bias: np.ndarray
    activation: Activation = Activation.IDENTITY

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        self.activation = Activation(self.activation)
        if self.weights.ndim != 2:
            raise DimensionMismatchError("layer weights rank", 2, self.weights.ndim)
        if self.bias.shape != (self.weights.shape[0],):
            raise DimensionMismatchError("layer bias length", self.weights.shape[0], self.bias.shape)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class ForwardCache:
    network_id: int
    version: int
    layer_inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]
    single: bool


class Mlp:
    def __init__(self, layers: Sequence[DenseLayer]):
        if not layers:
            raise OvaeError("An Mlp needs at least one layer")
        for i in range(1, len(layers)):
            if layers[i].in_dim != layers[i - 1].out_dim:
                raise DimensionMismatchError(f"layer {i} input size", layers[i - 1].out_dim, layers[i].in_dim)
        self.layers = list(layers)
        self.version = 0

    @classmethod
    def build(cls, sizes: Sequence[int], rng: np.random.Generator,
              head_scale: float = None) -> 'Mlp':
        """He-initialised ReLU stack ending in an Identity head.

        ``sizes`` lists every width including input and output, e.g. (5, 64, 64, 8).
        """
        head_scale = NN_CONFIG['head_init_scale'] if head_scale is None else head_scale
        layers = []
        n_layers = len(sizes) - 1
        for i in range(n_layers):
            fan_in, fan_out = sizes[i], sizes[i + 1]
            is_head = i == n_layers - 1
            scale = head_scale if is_head else np.sqrt(2.0 / fan_in)
            layers.append(DenseLayer(
                weights=rng.normal(0.0, scale, size=(fan_out, fan_in)),
                bias=np.zeros(fan_out),
                activation=Activation.IDENTITY if is_head else Activation.RELU
            ))
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.ndim != 2 or h.shape[1] != self.input_dim:
            raise DimensionMismatchError("forward input width", self.input_dim, x.shape)

        inputs, pre = [], []
        for layer in self.layers:
            inputs.append(h)
            a = h @ layer.weights.T + layer.bias
            pre.append(a)
            h = np.maximum(a, 0.0) if layer.activation is Activation.RELU else a

        cache = ForwardCache(id(self), self.version, inputs, pre, single)
        return (h[0] if single else h), cache

    def backward(self, cache: ForwardCache, output_gradient: np.ndarray
                 ) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
        if cache.network_id != id(self) or cache.version != self.version:
            raise StaleCacheError("Forward cache does not belong to the current parameters of this network")

        grad = np.asarray(output_gradient, dtype=np.float64)
        if cache.single:
            grad = grad[None, :]
        expected = cache.pre_activations[-1].shape
        if grad.shape != expected:
            raise DimensionMismatchError("output gradient shape", expected, grad.shape)

        grads = {}
        for i in reversed(range(len(self.layers))):
            layer = self.layers[i]
            if layer.activation is Activation.RELU:
                grad = grad * (cache.pre_activations[i] > 0.0)
            grads[f'layers.{i}.weights'] = grad.T @ cache.layer_inputs[i]
            grads[f'layers.{i}.bias'] = grad.sum(axis=0)
            grad = grad @ layer.weights
        return grads, (grad[0] if cache.single else grad)

    def parameters(self) -> Dict[str, np.ndarray]:
        params = {}
        for i, layer in enumerate(self.layers):
            params[f'layers.{i}.weights'] = layer.weights
            params[f'layers.{i}.bias'] = layer.bias
        return params

    def set_parameters(self, params: Dict[str, np.ndarray]):
        for i, layer in enumerate(self.layers):
            w = np.asarray(params[f'layers.{i}.weights'], dtype=np.float64)
            b = np.asarray(params[f'layers.{i}.bias'], dtype=np.float64)
            if w.shape != layer.weights.shape or b.shape != layer.bias.shape:
                raise DimensionMismatchError(f"layer {i} parameter shape", layer.weights.shape, w.shape)
            layer.weights, layer.bias = w, b
        self.version += 1

    def to_dict(self) -> Dict:
        return {
            'format_version': NN_CONFIG['format_version'],
            'input_dim': self.input_dim,
            'output_dim': self.output_dim,
            'layers': [
                {
                    'in_dim': layer.in_dim,
                    'out_dim': layer.out_dim,
                    'activation': layer.activation.value,
                    'weights': layer.weights.tolist(),
                    'bias': layer.bias.tolist()
                }
                for layer in self.layers
            ]
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'Mlp':
        version = data.get('format_version')
        if version != NN_CONFIG['format_version']:
            raise OvaeError(f"Unsupported network format version: {version}")
        layers = []
        for spec in data['layers']:
            layer = DenseLayer(np.array(spec['weights'], dtype=np.float64).reshape(spec['out_dim'], spec['in_dim']),
                               np.array(spec['bias'], dtype=np.float64),
                               Activation(spec['activation']))
            layers.append(layer)
        mlp = cls(layers)
        if mlp.input_dim != data['input_dim'] or mlp.output_dim != data['output_dim']:
            raise DimensionMismatchError("serialized network dims",
                                         (data['input_dim'], data['output_dim']),
                                         (mlp.input_dim, mlp.output_dim))
        return mlp

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> 'Mlp':
        return cls.from_dict(json.loads(text))


def forward(mlp: Mlp, x: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
    return mlp.forward(x)


def backward(mlp: Mlp, cache: ForwardCache, output_gradient: np.ndarray):
    return mlp.backward(cache, output_gradient)


@dataclass
class AdamState:
    first_moment: Dict[str, np.ndarray]
    second_moment: Dict[str, np.ndarray]
    step_count: int = 0
    learning_rate: float = 1e-4
    beta1: float = NN_CONFIG['adam_beta1']
    beta2: float = NN_CONFIG['adam_beta2']
    epsilon: float = NN_CONFIG['adam_epsilon']

    @classmethod
    def for_params(cls, params: Dict[str, np.ndarray], learning_rate: float, **kwargs) -> 'AdamState':
        return cls(
            first_moment={k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()},
            second_moment={k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()},
            learning_rate=learning_rate,
            **kwargs
        )


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
              state: AdamState) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; inputs are left untouched."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"Non-finite gradient in parameter block '{name}'", block=name)
        if name not in params or np.shape(params[name]) != np.shape(g):
            raise DimensionMismatchError(f"gradient block '{name}'", np.shape(params.get(name)), np.shape(g))

    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    new_params, m_new, v_new = {}, {}, {}
    for name, p in params.items():
        g = np.asarray(grads.get(name, np.zeros_like(p)), dtype=np.float64)
        m = b1 * state.first_moment[name] + (1.0 - b1) * g
        v = b2 * state.second_moment[name] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_params[name] = p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
        m_new[name], v_new[name] = m, v

    new_state = AdamState(m_new, v_new, t, state.learning_rate, b1, b2, state.epsilon)
    return new_params, new_state
