"""Versioned binary checkpoints for forecasters and Q-networks.

Layout::

    magic   8 bytes   b"PMCKPT\\x00\\x00"
    version uint32 LE
    hlen    uint32 LE
    header  hlen bytes of UTF-8 JSON (kind, layout, dims, config, ...)
    payload float64 LE: parameters in header layout order, then Adam m, then Adam v
    digest  32 bytes  sha256 of everything above

Floats are stored raw so that a round trip is bit-exact.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent import QNetwork
from .errors import ChecksumMismatch, CheckpointMissing, VersionUnsupported
from .forecaster import ForecastNetwork
from .neural import AdamState, DenseLayer, LstmCell
from .timeseries import NormalizationSpec

MAGIC = b"PMCKPT\x00\x00"
FORMAT_VERSION = 1
_DIGEST = 32


@dataclass
class Checkpoint:
    kind: str
    model: object
    config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION


def _layout(params: dict[str, np.ndarray]) -> list:
    return [[k, list(v.shape)] for k, v in params.items()]


def save_checkpoint(model, path: str | Path, config: dict | None = None, extra: dict | None = None) -> None:
    if isinstance(model, ForecastNetwork):
        kind = "forecaster"
        dims = {"window": model.window, "horizon": model.horizon, "hidden": model.hidden,
                "channels": list(model.channels), "dropout": model.dropout}
        norm = model.norm.to_dict() if model.norm is not None else None
    elif isinstance(model, QNetwork):
        kind = "qnetwork"
        dims = {"state_dim": model.state_dim, "n_actions": model.n_actions, "hidden": list(model.hidden),
                "activations": [l.activation for l in model.layers]}
        norm = None
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    params = model.params()
    opt = model.optimizer
    opt_keys = [k for k in params if k in opt.m]
    header = {
        "kind": kind,
        "dims": dims,
        "layout": _layout(params),
        "n_params": int(sum(v.size for v in params.values())),
        "optimizer": {**opt.hyper(), "step": opt.step, "keys": opt_keys},
        "norm": norm,
        "config": config or {},
        "extra": extra or {},
    }
    chunks = [v.ravel() for v in params.values()]
    chunks += [opt.m[k].ravel() for k in opt_keys] + [opt.v[k].ravel() for k in opt_keys]
    payload = np.concatenate(chunks).astype("<f8").tobytes() if chunks else b""
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    body = MAGIC + struct.pack("<II", FORMAT_VERSION, len(hbytes)) + hbytes + payload
    blob = body + hashlib.sha256(body).digest()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointMissing(str(path))
    blob = path.read_bytes()
    if len(blob) < len(MAGIC) + 8 + _DIGEST or not blob.startswith(MAGIC):
        raise ChecksumMismatch(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<II", blob, len(MAGIC))
    if version > FORMAT_VERSION or version < 1:
        raise VersionUnsupported(f"{path}: format version {version}, this build reads <= {FORMAT_VERSION}")
    body, digest = blob[:-_DIGEST], blob[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumMismatch(str(path))
    start = len(MAGIC) + 8
    header = json.loads(body[start:start + hlen].decode("utf-8"))
    flat = np.frombuffer(body[start + hlen:], dtype="<f8").astype(np.float64)
    params, pos = {}, 0
    for name, shape in header["layout"]:
        n = int(np.prod(shape)) if shape else 1
        params[name] = flat[pos:pos + n].reshape(shape).copy()
        pos += n
    o = header["optimizer"]
    opt = AdamState(lr=o["lr"], beta1=o["beta1"], beta2=o["beta2"], eps=o["eps"], step=o["step"])
    for store in (opt.m, opt.v):
        for k in o["keys"]:
            n = params[k].size
            store[k] = flat[pos:pos + n].reshape(params[k].shape).copy()
            pos += n
    if pos != flat.size or header["n_params"] != sum(v.size for v in params.values()):
        raise ChecksumMismatch(f"{path}: payload length does not match header layout")
    model = _build(header, params, opt)
    return Checkpoint(header["kind"], model, header["config"], header["extra"], version)


def load_checkpoint(path: str | Path):
    return read_checkpoint(path).model


def _build(header: dict, p: dict, opt: AdamState):
    d = header["dims"]
    if header["kind"] == "forecaster":
        norm = NormalizationSpec.from_dict(header["norm"]) if header["norm"] else None
        return ForecastNetwork(
            LstmCell(p["fwd.w_input"], p["fwd.w_hidden"], p["fwd.bias"]),
            LstmCell(p["bwd.w_input"], p["bwd.w_hidden"], p["bwd.bias"]),
            DenseLayer(p["head.weights"], p["head.biases"], "identity"),
            d["window"], d["horizon"], tuple(d["channels"]), d["dropout"], norm, opt,
        )
    if header["kind"] == "qnetwork":
        layers = [DenseLayer(p[f"l{i}.weights"], p[f"l{i}.biases"], act)
                  for i, act in enumerate(d["activations"])]
        return QNetwork(layers, opt)
    raise VersionUnsupported(f"unknown model kind {header['kind']!r}")
