"""Fully connected regression network on concatenated context windows."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class DenseParams:
    W: np.ndarray  # out x in
    b: np.ndarray  # out

    @classmethod
    def init(cls, n_in: int, n_out: int, rng) -> "DenseParams":
        s = 1.0 / np.sqrt(n_in)
        return cls(rng.uniform(-s, s, (n_out, n_in)), np.zeros(n_out))

    def arrays(self) -> list[np.ndarray]:
        return [self.W, self.b]


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


_ACT = {
    "tanh": (np.tanh, lambda y: 1.0 - y * y),
    "sigmoid": (sigmoid, lambda y: y * (1.0 - y)),
}


@dataclass
class MlpNetwork:
    layers: list[DenseParams]
    activation: str = "tanh"
    input_dim: int = 50
    context: int = 0
    kind: str = field(default="mlp", init=False)

    @classmethod
    def init(cls, hidden=(50,), input_dim: int = 50, output_dim: int = 23,
             context: int = 0, activation: str = "tanh", rng=None) -> "MlpNetwork":
        if not 1 <= len(hidden) <= 2:
            raise ValueError("MLP takes one or two hidden layers")
        if activation not in _ACT:
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        sizes = [input_dim * (context + 1), *hidden, output_dim]
        layers = [DenseParams.init(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]
        return cls(layers, activation, input_dim, context)

    @property
    def hidden(self) -> tuple[int, ...]:
        return tuple(layer.W.shape[0] for layer in self.layers[:-1])

    @property
    def output_dim(self) -> int:
        return self.layers[-1].W.shape[0]

    def arrays(self) -> list[np.ndarray]:
        return [a for layer in self.layers for a in layer.arrays()]

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def describe(self) -> dict:
        return {"kind": "mlp", "input_dim": self.input_dim, "context": self.context,
                "hidden": list(self.hidden), "output_dim": self.output_dim,
                "activation": self.activation}


def _flatten(net: MlpNetwork, seq: np.ndarray) -> np.ndarray:
    seq = np.asarray(seq, dtype=np.float64)
    want = (net.context + 1, net.input_dim)
    if seq.shape[-2:] != want:
        raise ValueError(f"expected windows of shape {want}, got {seq.shape[-2:]}")
    return seq.reshape(seq.shape[0], -1)


def mlp_forward(net: MlpNetwork, seq: np.ndarray, train_mode: bool = False,
                rng=None, dropout: float = 0.0, return_cache: bool = False):
    """Forward pass on a batch (B, k+1, D) or a single window (k+1, D)."""
    single = np.ndim(seq) == 2
    x = _flatten(net, seq[None] if single else seq)
    act, _ = _ACT[net.activation]
    cache = {"acts": [x], "pre": [], "masks": []}
    for layer in net.layers[:-1]:
        x = act(x @ layer.W.T + layer.b)
        cache["pre"].append(x)
        mask = None
        if train_mode and dropout > 0:
            mask = (rng.random(x.shape) >= dropout) / (1.0 - dropout)
            x = x * mask
        cache["acts"].append(x)
        cache["masks"].append(mask)
    out = x @ net.layers[-1].W.T + net.layers[-1].b
    if single:
        out = out[0]
    return (out, cache) if return_cache else out


def mlp_backward(net: MlpNetwork, cache: dict, dout: np.ndarray) -> list[np.ndarray]:
    """Parameter gradients in ``net.arrays()`` order, given dLoss/dOutput (B x out)."""
    _, dact = _ACT[net.activation]
    acts, pre, masks = cache["acts"], cache["pre"], cache["masks"]
    grads = []
    d = dout
    for li in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[li]
        a_in = acts[li]
        grads.append(d.sum(axis=0))
        grads.append(d.T @ a_in)
        if li == 0:
            break
        d = d @ layer.W
        if masks[li - 1] is not None:
            d = d * masks[li - 1]
        d = d * dact(pre[li - 1])
    grads.reverse()
    return grads
