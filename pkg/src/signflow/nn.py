"""The six-layer recurrent classifier, built directly on numpy.

Three recurrent layers feed three dense layers; the forward pass caches
everything backpropagation through time needs, and the backward pass
produces exact gradients of the mean categorical cross-entropy. Gate
blocks are stacked in the frozen order [input, forget, candidate, output]
along the first axis of every recurrent kernel, and serialization depends
on that order.

All in-memory math is float64 so finite-difference checks are meaningful;
checkpoints store float32.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .dataset import LabelMap
from .landmarks import (
    BadMagicError,
    DimensionMismatchError,
    TruncatedPayloadError,
    VersionMismatchError,
)

MODEL_MAGIC = b"SLRM"
MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<4sHI")

# Index of each gate block within a stacked (4h, .) kernel.
GATE_INPUT, GATE_FORGET, GATE_CANDIDATE, GATE_OUTPUT = 0, 1, 2, 3

PROB_FLOOR = 1e-7  # cross-entropy clamp; part of the loss contract


class ShapeError(ValueError):
    """Tensor shapes inconsistent with the model spec."""


def sigmoid(z):
    # exp on the non-positive branch only, so large |z| cannot overflow
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def relu(z):
    return np.maximum(z, 0.0)


def _relu_deriv(pre, activated):
    # derivative defined as 0 at exactly 0
    return (pre > 0.0).astype(np.float64)


def _tanh_deriv(pre, activated):
    return 1.0 - activated ** 2


def _identity(z):
    return z


def _identity_deriv(pre, activated):
    return np.ones_like(pre)


# name -> (apply, derivative(pre_activation, activated_value))
ACTIVATIONS = {
    "relu": (relu, _relu_deriv),
    "tanh": (np.tanh, _tanh_deriv),
    "identity": (_identity, _identity_deriv),
}


def softmax(z):
    """Row-wise stable softmax; accepts (C,) or (B, C)."""
    z = np.asarray(z, np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=-1, keepdims=True)


def cross_entropy(probs, targets) -> float:
    """Mean categorical cross-entropy with probabilities clamped at 1e-7."""
    probs = np.asarray(probs, np.float64)
    targets = np.asarray(targets, np.float64)
    if probs.shape != targets.shape:
        raise ShapeError(f"probs shape {probs.shape} != targets shape {targets.shape}")
    clamped = np.maximum(probs, PROB_FLOOR)
    per_sample = -(targets * np.log(clamped)).sum(axis=-1)
    return float(per_sample.mean())


@dataclass(frozen=True)
class LstmSpec:
    units: int
    return_sequences: bool = True
    activation: str = "relu"


@dataclass(frozen=True)
class DenseSpec:
    units: int
    activation: str = "relu"


@dataclass(frozen=True)
class ModelSpec:
    """Ordered layer stack over (frames, dim) input sequences."""

    frames: int
    dim: int
    layers: tuple

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.frames < 1 or self.dim < 1:
            raise ShapeError(f"input shape ({self.frames}, {self.dim}) must be positive")
        lstms = [l for l in self.layers if isinstance(l, LstmSpec)]
        denses = [l for l in self.layers if isinstance(l, DenseSpec)]
        if not lstms or not denses:
            raise ShapeError("need at least one recurrent and one dense layer")
        if list(self.layers) != lstms + denses:
            raise ShapeError("all recurrent layers must precede all dense layers")
        for l in lstms[:-1]:
            if not l.return_sequences:
                raise ShapeError("only the final recurrent layer may drop the time axis")
        if lstms[-1].return_sequences:
            raise ShapeError("the final recurrent layer must have return_sequences=False")
        for l in self.layers:
            kind = "relu tanh".split() if isinstance(l, LstmSpec) else "relu softmax identity".split()
            if l.activation not in kind:
                raise ShapeError(f"unsupported activation {l.activation!r}")
            if l.units < 1:
                raise ShapeError("every layer needs at least one unit")

    @property
    def num_classes(self) -> int:
        return self.layers[-1].units

    def input_dims(self) -> list:
        """Input feature dimension of each layer, in order."""
        dims, d = [], self.dim
        for layer in self.layers:
            dims.append(d)
            d = layer.units
        return dims


def sequence_classifier_spec(frames: int = 30, dim: int = 1662, classes: int = 45) -> ModelSpec:
    """The canonical 3-recurrent + 3-dense stack used throughout this package."""
    return ModelSpec(
        frames=frames,
        dim=dim,
        layers=(
            LstmSpec(64, return_sequences=True, activation="relu"),
            LstmSpec(128, return_sequences=True, activation="relu"),
            LstmSpec(64, return_sequences=False, activation="relu"),
            DenseSpec(64, activation="relu"),
            DenseSpec(32, activation="relu"),
            DenseSpec(classes, activation="softmax"),
        ),
    )


@dataclass
class LstmLayer:
    """Stacked-gate recurrent kernel set: Wx (4h, d), Wh (4h, h), b (4h,)."""

    Wx: np.ndarray
    Wh: np.ndarray
    b: np.ndarray

    @property
    def units(self) -> int:
        return self.Wh.shape[1]


@dataclass
class DenseLayer:
    W: np.ndarray  # (units, d)
    b: np.ndarray  # (units,)


@dataclass
class ModelParams:
    """All layer tensors in network order, float64 in memory."""

    spec: ModelSpec
    layers: list

    def tensors(self) -> list:
        """Flat tensor list in the fixed serialization order."""
        out = []
        for layer in self.layers:
            if isinstance(layer, LstmLayer):
                out.extend([layer.Wx, layer.Wh, layer.b])
            else:
                out.extend([layer.W, layer.b])
        return out

    def tensor_names(self) -> list:
        names = []
        for i, layer in enumerate(self.layers):
            if isinstance(layer, LstmLayer):
                names.extend([f"layer{i}.input_kernel", f"layer{i}.recurrent_kernel", f"layer{i}.bias"])
            else:
                names.extend([f"layer{i}.kernel", f"layer{i}.bias"])
        return names

    def replace_tensors(self, tensors) -> "ModelParams":
        """Rebuild a ModelParams from a flat tensor list in serialization order."""
        tensors = list(tensors)
        layers, k = [], 0
        for layer in self.layers:
            if isinstance(layer, LstmLayer):
                layers.append(LstmLayer(*tensors[k:k + 3]))
                k += 3
            else:
                layers.append(DenseLayer(*tensors[k:k + 2]))
                k += 2
        if k != len(tensors):
            raise ShapeError(f"expected {k} tensors, got {len(tensors)}")
        return ModelParams(spec=self.spec, layers=layers)


def tensor_shapes(spec: ModelSpec) -> list:
    """Shapes of every tensor in serialization order."""
    shapes = []
    for layer, d in zip(spec.layers, spec.input_dims()):
        u = layer.units
        if isinstance(layer, LstmSpec):
            shapes.extend([(4 * u, d), (4 * u, u), (4 * u,)])
        else:
            shapes.extend([(u, d), (u,)])
    return shapes


def layer_param_count(layer, input_dim: int) -> int:
    """Scalars in one layer: 4((d+h)h + h) recurrent, (d+1)u dense."""
    u = layer.units
    if isinstance(layer, LstmSpec):
        return 4 * ((input_dim + u) * u + u)
    return (input_dim + 1) * u


def param_count(spec: ModelSpec) -> int:
    """Total scalar parameter count across the stack."""
    return sum(layer_param_count(layer, d) for layer, d in zip(spec.layers, spec.input_dims()))


def init_params(spec: ModelSpec, seed: int = 0) -> ModelParams:
    """Seeded initialization.

    Input and dense kernels are uniform on +/- sqrt(6 / (fan_in + fan_out));
    recurrent kernels come from a sign-fixed QR of a Gaussian matrix, so
    their columns are orthonormal; biases are zero except the recurrent
    forget-gate block, which starts at 1.
    """
    rng = np.random.default_rng(seed)
    layers = []
    for layer, d in zip(spec.layers, spec.input_dims()):
        u = layer.units
        if isinstance(layer, LstmSpec):
            limit = np.sqrt(6.0 / (d + 4 * u))
            Wx = rng.uniform(-limit, limit, (4 * u, d))
            gauss = rng.normal(size=(4 * u, u))
            q, r = np.linalg.qr(gauss)
            Wh = q * np.sign(np.diag(r))
            b = np.zeros(4 * u)
            b[GATE_FORGET * u:(GATE_FORGET + 1) * u] = 1.0
            layers.append(LstmLayer(Wx=Wx, Wh=Wh, b=b))
        else:
            limit = np.sqrt(6.0 / (d + u))
            W = rng.uniform(-limit, limit, (u, d))
            layers.append(DenseLayer(W=W, b=np.zeros(u)))
    return ModelParams(spec=spec, layers=layers)


def _split_gates(z, units):
    i = z[..., 0 * units:1 * units]
    f = z[..., 1 * units:2 * units]
    g = z[..., 2 * units:3 * units]
    o = z[..., 3 * units:4 * units]
    return i, f, g, o


@dataclass
class LstmStepCache:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    zg: np.ndarray
    c: np.ndarray
    ac: np.ndarray  # activation applied to the new cell state


def lstm_step(x, h_prev, c_prev, layer: LstmLayer, activation: str = "relu"):
    """One recurrent cell update; returns (h, c, cache).

    z = Wx.x + Wh.h_prev + b splits into [i, f, g, o]; the three gates are
    logistic sigmoids, the candidate and the cell-output transform both use
    ``activation`` (relu replaces the conventional tanh in this model).
    """
    act, _ = ACTIVATIONS[activation]
    x = np.asarray(x, np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    h_prev = np.atleast_2d(np.asarray(h_prev, np.float64))
    c_prev = np.atleast_2d(np.asarray(c_prev, np.float64))
    units = layer.units
    if x.shape[-1] != layer.Wx.shape[1] or h_prev.shape[-1] != units:
        raise ShapeError(
            f"step got x {x.shape}, h {h_prev.shape} for kernel {layer.Wx.shape}"
        )
    z = x @ layer.Wx.T + h_prev @ layer.Wh.T + layer.b
    zi, zf, zg, zo = _split_gates(z, units)
    i, f, o = sigmoid(zi), sigmoid(zf), sigmoid(zo)
    g = act(zg)
    c = f * c_prev + i * g
    ac = act(c)
    h = o * ac
    cache = LstmStepCache(x=x, h_prev=h_prev, c_prev=c_prev, i=i, f=f, g=g, o=o, zg=zg, c=c, ac=ac)
    if single:
        return h[0], c[0], cache
    return h, c, cache


@dataclass
class LstmCache:
    """Whole-sequence bookkeeping for one recurrent layer, batch-major."""

    x: np.ndarray   # (B, T, d)
    i: np.ndarray   # (B, T, h) -- likewise f, g, o, zg, c, ac, h
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    zg: np.ndarray
    c: np.ndarray
    ac: np.ndarray
    h: np.ndarray
    activation: str


def lstm_forward(seq, layer: LstmLayer, return_sequences: bool, activation: str = "relu"):
    """Run the cell over time from zero initial state; returns (output, cache).

    Output is (B, T, h) when ``return_sequences`` else (B, h); a 2-D input
    is treated as a single sequence and the batch axis is squeezed away.
    """
    act, _ = ACTIVATIONS[activation]
    seq = np.asarray(seq, np.float64)
    single = seq.ndim == 2
    if single:
        seq = seq[None]
    if seq.ndim != 3 or seq.shape[2] != layer.Wx.shape[1]:
        raise ShapeError(f"sequence {seq.shape} does not feed kernel {layer.Wx.shape}")
    batch, steps, _ = seq.shape
    units = layer.units
    # input contribution for every step in one multiply
    zx = seq.reshape(batch * steps, -1) @ layer.Wx.T + layer.b
    zx = zx.reshape(batch, steps, 4 * units)
    shape = (batch, steps, units)
    I, F, G, O = np.empty(shape), np.empty(shape), np.empty(shape), np.empty(shape)
    ZG, C, AC, H = np.empty(shape), np.empty(shape), np.empty(shape), np.empty(shape)
    h = np.zeros((batch, units))
    c = np.zeros((batch, units))
    for t in range(steps):
        z = zx[:, t] + h @ layer.Wh.T
        zi, zf, zg, zo = _split_gates(z, units)
        i, f, o = sigmoid(zi), sigmoid(zf), sigmoid(zo)
        g = act(zg)
        c = f * c + i * g
        ac = act(c)
        h = o * ac
        I[:, t], F[:, t], G[:, t], O[:, t] = i, f, g, o
        ZG[:, t], C[:, t], AC[:, t], H[:, t] = zg, c, ac, h
    cache = LstmCache(x=seq, i=I, f=F, g=G, o=O, zg=ZG, c=C, ac=AC, h=H, activation=activation)
    out = H if return_sequences else H[:, -1]
    if single:
        out = out[0]
    return out, cache


def lstm_backward(d_out, cache: LstmCache, layer: LstmLayer, return_sequences: bool):
    """BPTT for one layer; returns (dWx, dWh, db, dX).

    ``d_out`` is (B, T, h) when the layer returned sequences, else (B, h)
    applied at the final step only.
    """
    _, act_deriv = ACTIVATIONS[cache.activation]
    batch, steps, units = cache.h.shape
    dz_all = np.empty((batch, steps, 4 * units))
    dh_next = np.zeros((batch, units))
    dc_next = np.zeros((batch, units))
    for t in range(steps - 1, -1, -1):
        dh = dh_next.copy()
        if return_sequences:
            dh += d_out[:, t]
        elif t == steps - 1:
            dh += d_out
        i, f, g, o = cache.i[:, t], cache.f[:, t], cache.g[:, t], cache.o[:, t]
        c = cache.c[:, t]
        c_prev = cache.c[:, t - 1] if t > 0 else np.zeros((batch, units))
        do = dh * cache.ac[:, t]
        dc = dc_next + dh * o * act_deriv(c, cache.ac[:, t])
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dz = dz_all[:, t]
        dz[:, 0 * units:1 * units] = di * i * (1.0 - i)
        dz[:, 1 * units:2 * units] = df * f * (1.0 - f)
        dz[:, 2 * units:3 * units] = dg * act_deriv(cache.zg[:, t], g)
        dz[:, 3 * units:4 * units] = do * o * (1.0 - o)
        dh_next = dz @ layer.Wh
        dc_next = dc * f
    # weight gradients in single multiplies over all (batch, step) pairs
    h_prev = np.concatenate([np.zeros((batch, 1, units)), cache.h[:, :-1]], axis=1)
    flat_dz = dz_all.reshape(batch * steps, 4 * units)
    dWx = flat_dz.T @ cache.x.reshape(batch * steps, -1)
    dWh = flat_dz.T @ h_prev.reshape(batch * steps, units)
    db = flat_dz.sum(axis=0)
    dX = (flat_dz @ layer.Wx).reshape(cache.x.shape)
    return dWx, dWh, db, dX


@dataclass
class DenseCache:
    x: np.ndarray
    z: np.ndarray
    out: np.ndarray
    activation: str


def dense_forward(x, layer: DenseLayer, activation: str = "relu"):
    """Affine map plus activation; returns (output, cache)."""
    x = np.asarray(x, np.float64)
    single = x.ndim == 1
    if single:
        x = x[None]
    if x.shape[-1] != layer.W.shape[1]:
        raise ShapeError(f"input {x.shape} does not feed kernel {layer.W.shape}")
    z = x @ layer.W.T + layer.b
    if activation == "softmax":
        out = softmax(z)
    else:
        out = ACTIVATIONS[activation][0](z)
    cache = DenseCache(x=x, z=z, out=out, activation=activation)
    if single:
        return out[0], cache
    return out, cache


def dense_backward(dz, cache: DenseCache, layer: DenseLayer):
    """Gradients for one dense layer given dLoss/dz (pre-activation)."""
    dW = dz.T @ cache.x
    db = dz.sum(axis=0)
    dx = dz @ layer.W
    return dW, db, dx


@dataclass
class ForwardCache:
    """Everything the backward pass needs, for every layer and time step."""

    params: ModelParams
    layer_caches: list
    probs: np.ndarray
    batch_size: int


def model_forward(params: ModelParams, batch):
    """Apply the whole stack to a (B, T, D) batch; returns (probs, cache)."""
    spec = params.spec
    batch = np.asarray(batch, np.float64)
    if batch.ndim != 3 or batch.shape[1:] != (spec.frames, spec.dim):
        raise ShapeError(
            f"batch {batch.shape} does not match input shape ({spec.frames}, {spec.dim})"
        )
    x = batch
    caches = []
    for layer_spec, layer in zip(spec.layers, params.layers):
        if isinstance(layer_spec, LstmSpec):
            x, cache = lstm_forward(x, layer, layer_spec.return_sequences, layer_spec.activation)
        else:
            x, cache = dense_forward(x, layer, layer_spec.activation)
        caches.append(cache)
    return x, ForwardCache(params=params, layer_caches=caches, probs=x, batch_size=batch.shape[0])


def model_backward(cache: ForwardCache, targets) -> list:
    """Exact gradients of mean cross-entropy w.r.t. every tensor.

    Returned as a flat list aligned with ``ModelParams.tensors()``. The
    softmax output layer and the loss are fused: dLoss/dlogits = (p - y)/B.
    """
    params = cache.params
    spec = params.spec
    targets = np.asarray(targets, np.float64)
    if targets.shape != cache.probs.shape:
        raise ShapeError(f"targets {targets.shape} do not match probs {cache.probs.shape}")
    grads_reversed = []
    d_out = None
    for idx in range(len(params.layers) - 1, -1, -1):
        layer_spec, layer, lcache = spec.layers[idx], params.layers[idx], cache.layer_caches[idx]
        if isinstance(layer_spec, DenseSpec):
            if layer_spec.activation == "softmax":
                if idx != len(params.layers) - 1:
                    raise ShapeError("softmax is only supported on the output layer")
                dz = (cache.probs - targets) / cache.batch_size
            else:
                _, act_deriv = ACTIVATIONS[layer_spec.activation]
                dz = d_out * act_deriv(lcache.z, lcache.out)
            dW, db, d_out = dense_backward(dz, lcache, layer)
            grads_reversed.extend([db, dW])
        else:
            dWx, dWh, db, d_out = lstm_backward(d_out, lcache, layer, layer_spec.return_sequences)
            grads_reversed.extend([db, dWh, dWx])
    return list(reversed(grads_reversed))


def finite_difference(loss_fn, tensors, step: float = 1e-5) -> list:
    """Central-difference gradient of ``loss_fn(tensors)`` per scalar entry."""
    if step <= 0:
        raise ValueError(f"step must be > 0, got {step}")
    tensors = [np.array(t, np.float64) for t in tensors]
    grads = [np.zeros_like(t) for t in tensors]
    for t_idx, tensor in enumerate(tensors):
        flat = tensor.reshape(-1)
        grad_flat = grads[t_idx].reshape(-1)
        for k in range(flat.size):
            original = flat[k]
            flat[k] = original + step
            hi = loss_fn(tensors)
            flat[k] = original - step
            lo = loss_fn(tensors)
            flat[k] = original
            grad_flat[k] = (hi - lo) / (2.0 * step)
    return grads


def numerical_gradient(params: ModelParams, batch, targets, step: float = 1e-5) -> list:
    """Finite-difference oracle for model_backward, tensor for tensor."""

    def loss_fn(tensors):
        probs, _ = model_forward(params.replace_tensors(tensors), batch)
        return cross_entropy(probs, targets)

    return finite_difference(loss_fn, params.tensors(), step)


def _spec_to_dict(spec: ModelSpec) -> dict:
    layers = []
    for layer in spec.layers:
        if isinstance(layer, LstmSpec):
            layers.append({
                "type": "lstm",
                "units": layer.units,
                "return_sequences": layer.return_sequences,
                "activation": layer.activation,
            })
        else:
            layers.append({"type": "dense", "units": layer.units, "activation": layer.activation})
    return {"frames": spec.frames, "dim": spec.dim, "layers": layers}


def _spec_from_dict(raw: dict) -> ModelSpec:
    layers = []
    for entry in raw["layers"]:
        if entry["type"] == "lstm":
            layers.append(LstmSpec(entry["units"], entry["return_sequences"], entry["activation"]))
        elif entry["type"] == "dense":
            layers.append(DenseSpec(entry["units"], entry["activation"]))
        else:
            raise DimensionMismatchError(f"unknown layer type {entry['type']!r}")
    return ModelSpec(frames=raw["frames"], dim=raw["dim"], layers=tuple(layers))


def encode_model(params: ModelParams, label_map: LabelMap, seed: int | None = None) -> bytes:
    """Serialize params + spec + label map as an SLRM checkpoint."""
    meta = {
        "spec": _spec_to_dict(params.spec),
        "labels": label_map.entries,
        "seed": seed,
    }
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob = bytearray(_MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, len(meta_bytes)))
    blob += meta_bytes
    for tensor in params.tensors():
        blob += np.ascontiguousarray(tensor, dtype="<f4").tobytes()
    return bytes(blob)


def decode_model(data: bytes):
    """Inverse of encode_model; returns (params, label_map, seed)."""
    if len(data) < _MODEL_HEADER.size:
        raise TruncatedPayloadError(f"checkpoint of {len(data)} bytes has no complete header")
    magic, version, meta_len = _MODEL_HEADER.unpack_from(data)
    if magic != MODEL_MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MODEL_MAGIC!r}")
    if version != MODEL_VERSION:
        raise VersionMismatchError(f"unsupported version {version}, expected {MODEL_VERSION}")
    meta_end = _MODEL_HEADER.size + meta_len
    if len(data) < meta_end:
        raise TruncatedPayloadError("checkpoint ends inside the metadata block")
    try:
        meta = json.loads(data[_MODEL_HEADER.size:meta_end].decode("utf-8"))
        spec = _spec_from_dict(meta["spec"])
        label_map = LabelMap(meta["labels"])
        seed = meta.get("seed")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, (BadMagicError, VersionMismatchError, TruncatedPayloadError,
                            DimensionMismatchError)):
            raise
        raise DimensionMismatchError(f"unusable checkpoint metadata: {exc}") from exc
    payload = data[meta_end:]
    expected = 4 * param_count(spec)
    if len(payload) != expected:
        raise TruncatedPayloadError(
            f"parameter payload is {len(payload)} bytes, spec requires {expected}"
        )
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    tensors, offset = [], 0
    for shape in tensor_shapes(spec):
        size = int(np.prod(shape))
        tensors.append(values[offset:offset + size].reshape(shape))
        offset += size
    layers, k = [], 0
    for layer_spec in spec.layers:
        if isinstance(layer_spec, LstmSpec):
            layers.append(LstmLayer(*tensors[k:k + 3]))
            k += 3
        else:
            layers.append(DenseLayer(*tensors[k:k + 2]))
            k += 2
    return ModelParams(spec=spec, layers=layers), label_map, seed
