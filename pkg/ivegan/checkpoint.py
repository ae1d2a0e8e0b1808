"""Checkpoint persistence.

A checkpoint is one JSON document: every network parameter and Adam moment
as base64 little-endian float64, the iteration counter, the training RNG
state, the per-step history and the hash of the config that produced it.
Keys are sorted so save(load(save(m))) reproduces the same bytes.
"""
from __future__ import annotations

import base64
import binascii
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .errors import CheckpointError, ShapeError
from .model import (
    IveGanModel,
    Model,
    Report,
    StepReport,
    TrainState,
    VanillaGan,
    VanillaStepReport,
)
from .nn import AdamState, Dense, Network, check_chain

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
KIND_IVEGAN = "ivegan"
KIND_VANILLA = "vanilla"

PathLike = Union[str, Path]


@dataclass(eq=False)
class Checkpoint:
    model: Model
    iteration: int
    rng: np.random.Generator
    experiment: str
    config_hash: str
    history: List[Report] = field(default_factory=list)
    image_shape: Optional[Tuple[int, int]] = None

    @property
    def kind(self) -> str:
        return KIND_IVEGAN if isinstance(self.model, IveGanModel) else KIND_VANILLA

    def state(self) -> TrainState:
        return TrainState(self.model, self.iteration, self.rng, list(self.history))


def _encode_array(a: np.ndarray) -> Dict[str, Any]:
    raw = np.ascontiguousarray(a, dtype="<f8").tobytes()
    return {"shape": list(a.shape), "data": base64.b64encode(raw).decode("ascii")}


def _decode_array(obj: Dict[str, Any], where: str) -> np.ndarray:
    try:
        shape = tuple(int(s) for s in obj["shape"])
        raw = base64.b64decode(obj["data"], validate=True)
    except (KeyError, TypeError, ValueError, binascii.Error) as e:
        raise CheckpointError(f"{where}: malformed array ({e})") from None
    want = 8 * int(np.prod(shape, dtype=np.int64))
    if len(raw) != want:
        raise CheckpointError(f"{where}: shape {shape} needs {want} bytes, got {len(raw)}")
    arr = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
    if not np.isfinite(arr).all():
        raise CheckpointError(f"{where}: non-finite values")
    arr.flags.writeable = False
    return arr


def _encode_network(net: Network) -> List[Dict[str, Any]]:
    return [
        {
            "activation": l.activation,
            "slope": l.slope,
            "weight": _encode_array(l.weight),
            "bias": _encode_array(l.bias),
        }
        for l in net.layers
    ]


def _decode_network(obj: List[Dict[str, Any]], where: str) -> Network:
    if not isinstance(obj, list) or not obj:
        raise CheckpointError(f"{where}: expected a non-empty list of layers")
    layers = []
    for i, layer in enumerate(obj):
        w = _decode_array(layer["weight"], f"{where}[{i}].weight")
        b = _decode_array(layer["bias"], f"{where}[{i}].bias")
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise CheckpointError(f"{where}[{i}]: weight {w.shape} does not fit bias {b.shape}")
        layers.append(Dense(w, b, str(layer["activation"]), float(layer["slope"])))
    net = Network(tuple(layers))
    try:
        check_chain(net.specs())
    except (ShapeError, ValueError) as e:
        raise CheckpointError(f"{where}: {e}") from None
    return net


def _encode_adam(state: AdamState) -> Dict[str, Any]:
    return {
        "t": state.t,
        "lr": state.lr,
        "beta1": state.beta1,
        "beta2": state.beta2,
        "eps": state.eps,
        "m": [_encode_array(a) for a in state.m],
        "v": [_encode_array(a) for a in state.v],
    }


def _decode_adam(obj: Dict[str, Any], params: List[np.ndarray], where: str) -> AdamState:
    m = tuple(_decode_array(a, f"{where}.m[{i}]") for i, a in enumerate(obj["m"]))
    v = tuple(_decode_array(a, f"{where}.v[{i}]") for i, a in enumerate(obj["v"]))
    shapes = [p.shape for p in params]
    if [a.shape for a in m] != shapes or [a.shape for a in v] != shapes:
        raise CheckpointError(f"{where}: moment shapes do not match the parameters they track")
    return AdamState(m, v, int(obj["t"]), float(obj["lr"]), float(obj["beta1"]), float(obj["beta2"]), float(obj["eps"]))


def _encode_rng(rng: np.random.Generator) -> Dict[str, Any]:
    return rng.bit_generator.state


def _decode_rng(state: Dict[str, Any]) -> np.random.Generator:
    try:
        bit_generator = getattr(np.random, state["bit_generator"])()
        bit_generator.state = state
    except (AttributeError, KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"unusable rng state: {e}") from None
    return np.random.Generator(bit_generator)


def to_document(ckpt: Checkpoint) -> Dict[str, Any]:
    model = ckpt.model
    if isinstance(model, IveGanModel):
        dims = {"data_dim": model.data_dim, "z_dim": model.z_dim, "zprime_dim": model.zprime_dim}
    else:
        dims = {"data_dim": model.data_dim, "latent_dim": model.latent_dim}
    return {
        "format_version": FORMAT_VERSION,
        "kind": ckpt.kind,
        "experiment": ckpt.experiment,
        "config_hash": ckpt.config_hash,
        "iteration": ckpt.iteration,
        "image_shape": list(ckpt.image_shape) if ckpt.image_shape else None,
        "dims": dims,
        "networks": {name: _encode_network(net) for name, net in model.networks().items()},
        "optimizers": {name: _encode_adam(st) for name, st in model.optimizers().items()},
        "rng": _encode_rng(ckpt.rng),
        "history": [r.to_dict() for r in ckpt.history],
    }


def dumps(ckpt: Checkpoint) -> str:
    return json.dumps(to_document(ckpt), sort_keys=True, indent=1, allow_nan=False) + "\n"


def save_checkpoint(ckpt: Checkpoint, path: PathLike) -> None:
    """Write atomically: a crash mid-write leaves the previous file intact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(dumps(ckpt), encoding="utf-8")
    os.replace(tmp, path)
    log.debug("saved checkpoint at iteration %d to %s", ckpt.iteration, path)


def _build_model(doc: Dict[str, Any]) -> Model:
    nets = {name: _decode_network(layers, f"networks.{name}") for name, layers in doc["networks"].items()}
    opts = doc["optimizers"]
    dims = doc["dims"]
    if doc["kind"] == KIND_IVEGAN:
        E, G, D, Dp = nets["E"], nets["G"], nets["D"], nets["Dprime"]
        return IveGanModel(
            E, G, D, Dp, int(dims["z_dim"]), int(dims["zprime_dim"]),
            adam_GE=_decode_adam(opts["GE"], E.parameters() + G.parameters(), "optimizers.GE"),
            adam_D=_decode_adam(opts["D"], D.parameters(), "optimizers.D"),
            adam_Dprime=_decode_adam(opts["Dprime"], Dp.parameters(), "optimizers.Dprime"),
        )
    if doc["kind"] == KIND_VANILLA:
        G, D = nets["G"], nets["D"]
        return VanillaGan(
            G, D, int(dims["latent_dim"]),
            adam_G=_decode_adam(opts["G"], G.parameters(), "optimizers.G"),
            adam_D=_decode_adam(opts["D"], D.parameters(), "optimizers.D"),
        )
    raise CheckpointError(f"unknown model kind {doc['kind']!r}")


def from_document(doc: Dict[str, Any]) -> Checkpoint:
    if not isinstance(doc, dict):
        raise CheckpointError("checkpoint root is not an object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format version {version!r}, this build reads {FORMAT_VERSION}")
    try:
        model = _build_model(doc)
        if model.data_dim != int(doc["dims"]["data_dim"]):
            raise CheckpointError(f"networks map {model.data_dim}-d data, header says {doc['dims']['data_dim']}")
        report_type = StepReport if isinstance(model, IveGanModel) else VanillaStepReport
        history = [report_type(**r) for r in doc["history"]]
        image_shape = tuple(int(s) for s in doc["image_shape"]) if doc.get("image_shape") else None
        return Checkpoint(
            model=model,
            iteration=int(doc["iteration"]),
            rng=_decode_rng(doc["rng"]),
            experiment=str(doc["experiment"]),
            config_hash=str(doc["config_hash"]),
            history=history,
            image_shape=image_shape,
        )
    except CheckpointError:
        raise
    except (AttributeError, KeyError, TypeError, ValueError, FloatingPointError) as e:
        # ShapeError and NonFiniteError from the model constructors land here too
        raise CheckpointError(f"inconsistent checkpoint: {type(e).__name__}: {e}") from None


def load_checkpoint(path: PathLike) -> Checkpoint:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path}: not a JSON checkpoint ({e})") from None
    try:
        return from_document(doc)
    except CheckpointError as e:
        raise CheckpointError(f"{path}: {e}") from None


def check_resumable(ckpt: Checkpoint, kind: str, experiment: str, config_hash: str) -> None:
    if ckpt.kind != kind:
        raise CheckpointError(f"checkpoint holds a {ckpt.kind} model, config trains {kind}")
    if ckpt.experiment != experiment:
        raise CheckpointError(f"checkpoint is from the {ckpt.experiment} experiment, config is {experiment}")
    if ckpt.config_hash != config_hash:
        raise CheckpointError(
            "config differs from the one the checkpoint was trained with "
            f"(hash {config_hash[:12]} vs {ckpt.config_hash[:12]})"
        )
