"""Checkpoint container and its bit-exact JSON encoding."""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from ..graph import GraphConfig
from ..layout import atomic_write_text
from ..numeric.optim import ParamStore
from .config import TrainingConfig

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class ModelCheckpoint:
    training_config: TrainingConfig
    graph_config: GraphConfig
    params: OrderedDict
    rng_state: int
    loss_trace: list = field(default_factory=list)
    optimizer: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION

    def store(self):
        """Fresh ParamStore holding copies of the parameters."""
        s = ParamStore()
        for name, arr in self.params.items():
            s.add(name, arr.copy())
        return s

    def fingerprint(self):
        h = hashlib.sha256()
        for name, arr in self.params.items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()[:12]


def _encode_array(arr):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    return {"shape": list(arr.shape), "data_b64": base64.b64encode(arr.tobytes()).decode("ascii")}


def _decode_array(name, obj):
    try:
        shape = [int(s) for s in obj["shape"]]
        raw = base64.b64decode(obj["data_b64"], validate=True)
    except (KeyError, TypeError, ValueError, binascii.Error) as exc:
        raise CheckpointError(f"parameter {name!r}: corrupt entry ({exc})") from None
    expected = int(np.prod(shape)) * 8
    if len(raw) != expected:
        raise CheckpointError(
            f"parameter {name!r}: shape mismatch, {shape} needs {expected} bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)


def _encode_optimizer(opt):
    return {
        group: {
            "t": st["t"],
            "m": {n: _encode_array(a) for n, a in st["m"].items()},
            "v": {n: _encode_array(a) for n, a in st["v"].items()},
        }
        for group, st in opt.items()
    }


def _decode_optimizer(obj):
    return {
        group: {
            "t": int(st["t"]),
            "m": OrderedDict((n, _decode_array(n, a)) for n, a in st["m"].items()),
            "v": OrderedDict((n, _decode_array(n, a)) for n, a in st["v"].items()),
        }
        for group, st in obj.items()
    }


def checkpoint_to_text(ckpt):
    obj = {
        "version": ckpt.version,
        "training_config": ckpt.training_config.to_dict(),
        "graph_config": ckpt.graph_config.to_dict(),
        "params": {n: _encode_array(a) for n, a in ckpt.params.items()},
        "rng_state": str(ckpt.rng_state),
        "loss_trace": ckpt.loss_trace,
        "optimizer": _encode_optimizer(ckpt.optimizer),
    }
    return json.dumps(obj, indent=1, allow_nan=False) + "\n"


def checkpoint_from_text(text):
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint is not valid JSON: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise CheckpointError("checkpoint must be a JSON object")
    version = obj.get("version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint version {version!r} unsupported (expected {FORMAT_VERSION})")
    try:
        tcfg = TrainingConfig.from_dict(obj["training_config"])
        gcfg = GraphConfig(**obj["graph_config"])
        params = OrderedDict((n, _decode_array(n, a)) for n, a in obj["params"].items())
        rng_state = int(obj["rng_state"])
        trace = list(obj.get("loss_trace", []))
        optimizer = _decode_optimizer(obj.get("optimizer", {}))
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise CheckpointError(f"checkpoint field missing or malformed: {exc}") from None
    ckpt = ModelCheckpoint(tcfg, gcfg, params, rng_state, trace, optimizer, version)
    _check_shapes(ckpt)
    return ckpt


def _check_shapes(ckpt):
    from .network import init_params
    from ..numeric.rng import Rng

    reference = init_params(ckpt.training_config, Rng(0))
    if list(reference) != list(ckpt.params):
        raise CheckpointError("checkpoint parameter names do not match its training_config")
    for name, arr in ckpt.params.items():
        if reference[name].shape != arr.shape:
            raise CheckpointError(
                f"parameter {name!r}: shape mismatch, expected {list(reference[name].shape)}, "
                f"got {list(arr.shape)}")


def save_checkpoint(ckpt, path):
    atomic_write_text(path, checkpoint_to_text(ckpt))


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        return checkpoint_from_text(fh.read())
