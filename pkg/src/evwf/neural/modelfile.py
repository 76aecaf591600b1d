"""Binary model files.

Layout: magic ``AVNN``, u32 version, u32 descriptor length, UTF-8 JSON
descriptor, then every parameter as little-endian float64 in canonical order:
network arrays (per LSTM layer W, U, b; then head W, b / per MLP layer W, b),
followed by the standardizer's x_mean, x_std, y_mean, y_std.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .lstm import DenseParams, LstmLayerParams, LstmNetwork
from .mlp import MlpNetwork
from .train import Regressor, Standardizer

MAGIC = b"AVNN"
VERSION = 1


class ModelFormatError(ValueError):
    pass


def _blank(desc: dict):
    hidden, d_in, d_out, k = desc["hidden"], desc["input_dim"], desc["output_dim"], desc["context"]
    if desc["kind"] == "lstm":
        dims = [d_in, *hidden]
        layers = [LstmLayerParams(np.zeros((4 * h, a)), np.zeros((4 * h, h)), np.zeros(4 * h))
                  for a, h in zip(dims[:-1], dims[1:])]
        return LstmNetwork(layers, DenseParams(np.zeros((d_out, dims[-1])), np.zeros(d_out)), d_in, k)
    if desc["kind"] == "mlp":
        sizes = [d_in * (k + 1), *hidden, d_out]
        layers = [DenseParams(np.zeros((b, a)), np.zeros(b)) for a, b in zip(sizes[:-1], sizes[1:])]
        return MlpNetwork(layers, desc.get("activation", "tanh"), d_in, k)
    raise ModelFormatError(f"unknown model kind {desc['kind']!r}")


def save_model(path, model: Regressor) -> None:
    desc = model.net.describe()
    desc["param_shapes"] = [list(a.shape) for a in model.net.arrays()]
    blob = json.dumps(desc, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", VERSION, len(blob)) + blob)
        for a in model.net.arrays() + model.scaler.arrays():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_model(path) -> Regressor:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ModelFormatError(f"{path}: not an AVNN model file")
    version, n = struct.unpack("<II", data[4:12])
    if version != VERSION:
        raise ModelFormatError(f"{path}: unsupported version {version}")
    desc = json.loads(data[12:12 + n].decode("utf-8"))
    net = _blank(desc)
    d_in, d_out = desc["input_dim"], desc["output_dim"]
    scaler = Standardizer(np.zeros(d_in), np.zeros(d_in), np.zeros(d_out), np.zeros(d_out))
    targets = net.arrays() + scaler.arrays()
    need = sum(a.size for a in targets) * 8
    body = data[12 + n:]
    if len(body) != need:
        raise ModelFormatError(f"{path}: expected {need} parameter bytes, found {len(body)}")
    flat = np.frombuffer(body, dtype="<f8")
    pos = 0
    for a in targets:
        a[...] = flat[pos:pos + a.size].reshape(a.shape)
        pos += a.size
    return Regressor(net, scaler)
