"""Layer primitives (MLP block, GRU cell) with deterministic seeded init.

Every parameter's initial value is a pure function of (root_seed, name):
the name is hashed into its own RNG stream, so adding or removing sibling
parameters never perturbs existing ones. Weight matrices draw from
uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)); biases start at zero.
"""

from __future__ import annotations

import hashlib
from collections import OrderedDict
from math import sqrt

import numpy as np

from .tensor import (Tensor, ShapeError, add, add_bias, affine, matmul, mul,
                     relu, sigmoid, tanh)

ACTIVATIONS = ("relu", "tanh", "identity")


def param_rng(root_seed: int, name: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{root_seed}:{name}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def init_weight(root_seed: int, name: str, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    bound = sqrt(1.0 / fan_in)
    return param_rng(root_seed, name).uniform(-bound, bound, size=shape)


class MlpBlock:
    """Affine chain with an activation on hidden layers only.

    ``widths`` includes the input dimension, so ``[4, 3]`` is a single
    affine layer with 4*3 + 3 parameters and no nonlinearity.
    """

    def __init__(self, widths, activation: str = "relu", *, name: str, root_seed: int):
        widths = tuple(int(w) for w in widths)
        if len(widths) < 2 or any(w <= 0 for w in widths):
            raise ValueError(f"mlp '{name}': widths must be >= 2 positive ints, got {widths}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"mlp '{name}': unknown activation {activation!r}")
        self.name = name
        self.widths = widths
        self.activation = activation
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for i, (w_in, w_out) in enumerate(zip(widths[:-1], widths[1:])):
            w = Tensor(init_weight(root_seed, f"{name}.w{i}", w_in, (w_in, w_out)),
                       requires_grad=True)
            b = Tensor(np.zeros(w_out), requires_grad=True)
            self.weights.append(w)
            self.biases.append(b)

    def __call__(self, x: Tensor) -> Tensor:
        if x.data.ndim != 2 or x.shape[1] != self.widths[0]:
            raise ShapeError(
                f"mlp '{self.name}' expects (batch, {self.widths[0]}), got {x.shape}")
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = add_bias(matmul(h, w), b)
            if i < last and self.activation != "identity":
                h = relu(h) if self.activation == "relu" else tanh(h)
        return h

    def params(self) -> "OrderedDict[str, Tensor]":
        out: OrderedDict[str, Tensor] = OrderedDict()
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{self.name}.w{i}"] = w
            out[f"{self.name}.b{i}"] = b
        return out

    def param_count(self) -> int:
        return sum((a + 1) * b for a, b in zip(self.widths[:-1], self.widths[1:]))


class GruCell:
    """One GRU step. The same weights serve every sequence position.

    z = sigmoid(x W_z + h U_z + b_z)
    r = sigmoid(x W_r + h U_r + b_r)
    c = tanh(x W_h + (r * h) U_h + b_h)
    h_next = (1 - z) * h + z * c
    """

    GATES = ("z", "r", "h")

    def __init__(self, d_in: int, d_h: int, *, name: str, root_seed: int):
        if d_in <= 0 or d_h <= 0:
            raise ValueError(f"gru '{name}': dims must be positive")
        self.name = name
        self.d_in = d_in
        self.d_h = d_h
        self._p: OrderedDict[str, Tensor] = OrderedDict()
        for gate in self.GATES:
            self._p[f"{name}.W_{gate}"] = Tensor(
                init_weight(root_seed, f"{name}.W_{gate}", d_in, (d_in, d_h)),
                requires_grad=True)
            self._p[f"{name}.U_{gate}"] = Tensor(
                init_weight(root_seed, f"{name}.U_{gate}", d_h, (d_h, d_h)),
                requires_grad=True)
            self._p[f"{name}.b_{gate}"] = Tensor(np.zeros(d_h), requires_grad=True)

    def _gate(self, kind: str, x: Tensor, h: Tensor) -> Tensor:
        p = self._p
        pre = add_bias(add(matmul(x, p[f"{self.name}.W_{kind}"]),
                           matmul(h, p[f"{self.name}.U_{kind}"])),
                       p[f"{self.name}.b_{kind}"])
        return pre

    def step(self, x_t: Tensor, h_prev: Tensor) -> Tensor:
        if x_t.data.ndim != 2 or x_t.shape[1] != self.d_in:
            raise ShapeError(f"gru '{self.name}' expects input (batch, {self.d_in}), got {x_t.shape}")
        if h_prev.shape != (x_t.shape[0], self.d_h):
            raise ShapeError(
                f"gru '{self.name}' expects hidden {(x_t.shape[0], self.d_h)}, got {h_prev.shape}")
        p = self._p
        z = sigmoid(self._gate("z", x_t, h_prev))
        r = sigmoid(self._gate("r", x_t, h_prev))
        cand = tanh(add_bias(add(matmul(x_t, p[f"{self.name}.W_h"]),
                                 matmul(mul(r, h_prev), p[f"{self.name}.U_h"])),
                             p[f"{self.name}.b_h"]))
        return add(mul(affine(z, -1.0, 1.0), h_prev), mul(z, cand))

    def params(self) -> "OrderedDict[str, Tensor]":
        return OrderedDict(self._p)

    def param_count(self) -> int:
        return 3 * (self.d_in * self.d_h + self.d_h * self.d_h + self.d_h)


def forward_mlp(block: MlpBlock, x: Tensor) -> Tensor:
    return block(x)


def gru_step(cell: GruCell, x_t: Tensor, h_prev: Tensor) -> Tensor:
    return cell.step(x_t, h_prev)
