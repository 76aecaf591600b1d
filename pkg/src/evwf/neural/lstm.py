"""Stacked LSTM regression (many-to-one) with backpropagation through time.

Gate parameters are stored stacked in the order input, forget, output,
candidate: ``W`` is 4H x D, ``U`` is 4H x H, ``b`` is 4H.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mlp import DenseParams, sigmoid

GATES = ("input", "forget", "output", "candidate")
FULL_HIDDEN = (250, 300)
DESK_HIDDEN = (32, 48)


@dataclass
class LstmLayerParams:
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        h4 = self.b.shape[0]
        if h4 % 4 or self.W.shape[0] != h4 or self.U.shape != (h4, h4 // 4):
            raise ValueError(f"inconsistent LSTM shapes W{self.W.shape} U{self.U.shape} b{self.b.shape}")

    @classmethod
    def init(cls, n_in: int, hidden: int, rng, forget_bias: float = 1.0) -> "LstmLayerParams":
        sw, su = 1.0 / np.sqrt(n_in), 1.0 / np.sqrt(hidden)
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = forget_bias
        return cls(rng.uniform(-sw, sw, (4 * hidden, n_in)),
                   rng.uniform(-su, su, (4 * hidden, hidden)), b)

    @property
    def hidden(self) -> int:
        return self.U.shape[1]

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Views ``(W_g, U_g, b_g)`` of one gate."""
        H = self.hidden
        s = slice(GATES.index(name) * H, (GATES.index(name) + 1) * H)
        return self.W[s], self.U[s], self.b[s]

    def arrays(self) -> list[np.ndarray]:
        return [self.W, self.U, self.b]


@dataclass
class LstmNetwork:
    layers: list[LstmLayerParams]
    head: DenseParams
    input_dim: int = 50
    context: int = 0
    kind: str = field(default="lstm", init=False)

    def __post_init__(self):
        dims = [self.input_dim] + [layer.hidden for layer in self.layers]
        for layer, d in zip(self.layers, dims):
            if layer.input_dim != d:
                raise ValueError(f"layer expects input {layer.input_dim}, previous provides {d}")
        if self.head.W.shape[1] != dims[-1]:
            raise ValueError("dense head does not match the top LSTM layer")

    @classmethod
    def init(cls, hidden=DESK_HIDDEN, input_dim: int = 50, output_dim: int = 23,
             context: int = 0, rng=None) -> "LstmNetwork":
        rng = rng if rng is not None else np.random.default_rng(0)
        dims = [input_dim, *hidden]
        layers = [LstmLayerParams.init(a, h, rng) for a, h in zip(dims[:-1], dims[1:])]
        return cls(layers, DenseParams.init(dims[-1], output_dim, rng), input_dim, context)

    @property
    def hidden(self) -> tuple[int, ...]:
        return tuple(layer.hidden for layer in self.layers)

    @property
    def output_dim(self) -> int:
        return self.head.W.shape[0]

    def arrays(self) -> list[np.ndarray]:
        return [a for layer in self.layers for a in layer.arrays()] + self.head.arrays()

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def describe(self) -> dict:
        return {"kind": "lstm", "input_dim": self.input_dim, "context": self.context,
                "hidden": list(self.hidden), "output_dim": self.output_dim}


def lstm_cell_forward(p: LstmLayerParams, x, h_prev, c_prev):
    """One step of a forget-gate LSTM cell; works on single vectors or batches."""
    x, h_prev, c_prev = (np.asarray(a, dtype=np.float64) for a in (x, h_prev, c_prev))
    if x.shape[-1] != p.input_dim or h_prev.shape[-1] != p.hidden or c_prev.shape != h_prev.shape:
        raise ValueError("LSTM cell input dimensions do not match the parameters")
    h, c, _ = _cell(p, x, h_prev, c_prev)
    return h, c


def _cell(p, x, h_prev, c_prev):
    H = p.hidden
    a = x @ p.W.T + h_prev @ p.U.T + p.b
    i = sigmoid(a[..., :H])
    f = sigmoid(a[..., H:2 * H])
    o = sigmoid(a[..., 2 * H:3 * H])
    g = np.tanh(a[..., 3 * H:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    return o * tc, c, (i, f, o, g, tc)


def _layer_forward(p: LstmLayerParams, xs: np.ndarray):
    """Run one layer over (B, S, D); returns hidden states (B, S, H) and a step cache."""
    B, S, _ = xs.shape
    H = p.hidden
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    hs = np.empty((B, S, H))
    steps = []
    for t in range(S):
        h_prev, c_prev = h, c
        h, c, gates = _cell(p, xs[:, t], h_prev, c_prev)
        hs[:, t] = h
        steps.append((h_prev, c_prev, gates))
    return hs, steps


def _layer_backward(p: LstmLayerParams, xs: np.ndarray, steps, dhs: np.ndarray):
    """BPTT through one layer given dLoss/dh for every step; returns grads and dLoss/dx."""
    B, S, _ = xs.shape
    H = p.hidden
    dW = np.zeros_like(p.W)
    dU = np.zeros_like(p.U)
    db = np.zeros_like(p.b)
    dxs = np.empty_like(xs)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    da = np.empty((B, 4 * H))
    for t in range(S - 1, -1, -1):
        h_prev, c_prev, (i, f, o, g, tc) = steps[t]
        dh = dhs[:, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        da[:, :H] = dc * g * i * (1.0 - i)
        da[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
        da[:, 2 * H:3 * H] = dh * tc * o * (1.0 - o)
        da[:, 3 * H:] = dc * i * (1.0 - g * g)
        dW += da.T @ xs[:, t]
        dU += da.T @ h_prev
        db += da.sum(axis=0)
        dxs[:, t] = da @ p.W
        dh_next = da @ p.U
        dc_next = dc * f
    return [dW, dU, db], dxs


def _check_seq(net: LstmNetwork, seq: np.ndarray) -> np.ndarray:
    seq = np.asarray(seq, dtype=np.float64)
    want = (net.context + 1, net.input_dim)
    if seq.shape[-2:] != want:
        raise ValueError(f"expected sequences of shape {want}, got {seq.shape[-2:]}")
    return seq


def lstm_forward(net: LstmNetwork, seq: np.ndarray, train_mode: bool = False,
                 rng=None, dropout: float = 0.25, return_cache: bool = False):
    """Predict from the last hidden state of the top layer.

    ``seq`` is (k+1, D) or a batch (B, k+1, D), oldest frame first.  In
    training mode inverted dropout is applied to every LSTM layer's output.
    """
    seq = _check_seq(net, seq)
    single = seq.ndim == 2
    x = seq[None] if single else seq
    cache = {"inputs": [], "steps": [], "masks": []}
    for layer in net.layers:
        cache["inputs"].append(x)
        hs, steps = _layer_forward(layer, x)
        mask = None
        if train_mode and dropout > 0:
            mask = (rng.random(hs.shape) >= dropout) / (1.0 - dropout)
            hs = hs * mask
        cache["steps"].append(steps)
        cache["masks"].append(mask)
        x = hs
    top = x[:, -1]
    cache["top"] = top
    out = top @ net.head.W.T + net.head.b
    if single:
        out = out[0]
    return (out, cache) if return_cache else out


def lstm_backward(net: LstmNetwork, cache: dict, dout: np.ndarray) -> list[np.ndarray]:
    """Gradients in ``net.arrays()`` order, given dLoss/dOutput (B x out)."""
    dout = np.atleast_2d(dout)
    head_grads = [dout.T @ cache["top"], dout.sum(axis=0)]
    dtop = dout @ net.head.W
    B, S = cache["inputs"][0].shape[:2]
    dhs = np.zeros((B, S, net.layers[-1].hidden))
    dhs[:, -1] = dtop
    layer_grads = []
    for li in range(len(net.layers) - 1, -1, -1):
        if cache["masks"][li] is not None:
            dhs = dhs * cache["masks"][li]
        grads, dhs = _layer_backward(net.layers[li], cache["inputs"][li], cache["steps"][li], dhs)
        layer_grads = grads + layer_grads
    return layer_grads + head_grads
