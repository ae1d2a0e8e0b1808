"""Dense networks, He/Xavier initialisation and Adam."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from .autodiff import (
    Gradients,
    Tape,
    Tensor,
    Var,
    add_bias,
    lrelu,
    matmul,
    sigmoid_act,
    tanh_act,
    transpose,
)
from .errors import NonFiniteError, ShapeError, TapeError

ACTIVATIONS = ("tanh", "lrelu", "linear", "sigmoid")


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "linear"
    slope: float = 0.2

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ShapeError(f"layer dims must be >= 1, got {self.in_dim} -> {self.out_dim}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}, expected one of {ACTIVATIONS}")
        if self.activation == "lrelu" and not 0.0 < self.slope < 1.0:
            raise ValueError(f"lrelu slope must lie in (0, 1), got {self.slope}")


@dataclass(frozen=True, eq=False)
class Dense:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str
    slope: float = 0.2

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass(frozen=True, eq=False)
class Network:
    layers: Tuple[Dense, ...]

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def specs(self) -> List[LayerSpec]:
        return [LayerSpec(l.in_dim, l.out_dim, l.activation, l.slope) for l in self.layers]

    def parameters(self) -> List[np.ndarray]:
        params = []
        for layer in self.layers:
            params.extend((layer.weight, layer.bias))
        return params

    def with_parameters(self, params: Sequence[np.ndarray]) -> "Network":
        if len(params) != 2 * len(self.layers):
            raise ShapeError(f"expected {2 * len(self.layers)} parameter arrays, got {len(params)}")
        layers = []
        for i, layer in enumerate(self.layers):
            w, b = params[2 * i], params[2 * i + 1]
            if w.shape != layer.weight.shape or b.shape != layer.bias.shape:
                raise ShapeError(
                    f"layer {i}: got weight {w.shape} / bias {b.shape}, "
                    f"expected {layer.weight.shape} / {layer.bias.shape}"
                )
            layers.append(replace(layer, weight=_readonly(w), bias=_readonly(b)))
        return Network(tuple(layers))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


def check_chain(specs: Sequence[LayerSpec]) -> None:
    if not specs:
        raise ShapeError("a network needs at least one layer")
    for i in range(1, len(specs)):
        if specs[i - 1].out_dim != specs[i].in_dim:
            raise ShapeError(
                f"layer {i - 1} outputs {specs[i - 1].out_dim} but layer {i} expects {specs[i].in_dim}"
            )


def init_network(specs: Sequence[LayerSpec], rng: np.random.Generator) -> Network:
    """He-normal weights for LReLU layers, Xavier-uniform otherwise, zero biases."""
    check_chain(specs)
    layers = []
    for s in specs:
        if s.activation == "lrelu":
            w = rng.normal(0.0, math.sqrt(2.0 / s.in_dim), size=(s.out_dim, s.in_dim))
        else:
            limit = math.sqrt(6.0 / (s.in_dim + s.out_dim))
            w = rng.uniform(-limit, limit, size=(s.out_dim, s.in_dim))
        layers.append(Dense(_readonly(w), _readonly(np.zeros(s.out_dim)), s.activation, s.slope))
    return Network(tuple(layers))


_APPLY: Dict[str, Callable[[Var, Dense], Var]] = {
    "tanh": lambda v, l: tanh_act(v),
    "lrelu": lambda v, l: lrelu(v, l.slope),
    "sigmoid": lambda v, l: sigmoid_act(v),
    "linear": lambda v, l: v,
}


@dataclass
class BoundNetwork:
    """A network whose parameters are registered as leaves on one tape.

    Calling it several times on the same tape reuses the same leaves, so
    gradients from every use accumulate.
    """

    net: Network
    tape: Tape
    params: List[Var] = field(default_factory=list)

    def __call__(self, x: Var) -> Var:
        if x.tape is not self.tape:
            raise TapeError("input lives on a different tape than the bound network")
        if len(x.shape) != 2 or x.shape[1] != self.net.in_dim:
            raise ShapeError(f"network expects (batch, {self.net.in_dim}) input, got {x.shape}")
        h = x
        for i, layer in enumerate(self.net.layers):
            w, b = self.params[2 * i], self.params[2 * i + 1]
            h = add_bias(matmul(h, transpose(w)), b)
            h = _APPLY[layer.activation](h, layer)
        return h

    def grads(self, gradients: Gradients) -> List[np.ndarray]:
        return [gradients[p].data for p in self.params]


def bind(net: Network, tape: Tape) -> BoundNetwork:
    params = [tape.param(Tensor(p)) for p in net.parameters()]
    return BoundNetwork(net, tape, params)


def forward(net: Network, x: Tensor, tape: Tape) -> Var:
    return bind(net, tape)(tape.constant(x))


def apply(net: Network, x: np.ndarray) -> np.ndarray:
    """Inference without keeping the tape around."""
    return forward(net, Tensor(x), Tape()).value.numpy()


@dataclass(frozen=True, eq=False)
class AdamState:
    m: Tuple[np.ndarray, ...]
    v: Tuple[np.ndarray, ...]
    t: int = 0
    lr: float = 2e-4
    beta1: float = 0.7
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(
        cls,
        params: Sequence[np.ndarray],
        lr: float = 2e-4,
        beta1: float = 0.7,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> "AdamState":
        zeros = tuple(_readonly(np.zeros_like(p)) for p in params)
        return cls(zeros, zeros, 0, lr, beta1, beta2, eps)


def adam_step(
    params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState
) -> Tuple[List[np.ndarray], AdamState]:
    """One bias-corrected Adam update. Returns new arrays; inputs are untouched."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError(
            f"adam_step: {len(params)} params, {len(grads)} grads, {len(state.m)} moment slots"
        )
    t = state.t + 1
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    new_params, new_m, new_v = [], [], []
    for i, (p, g, m, v) in enumerate(zip(params, grads, state.m, state.v)):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeError(f"adam_step: gradient {i} has shape {g.shape}, parameter {p.shape}")
        if not np.isfinite(g).all():
            raise NonFiniteError(f"adam_step: gradient {i} has non-finite entries", {"param": i})
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        new_params.append(_readonly(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)))
        new_m.append(_readonly(m))
        new_v.append(_readonly(v))
    return new_params, replace(state, m=tuple(new_m), v=tuple(new_v), t=t)


def adam_update(net: Network, grads: Sequence[np.ndarray], state: AdamState) -> Tuple[Network, AdamState]:
    params, state = adam_step(net.parameters(), grads, state)
    return net.with_parameters(params), state
