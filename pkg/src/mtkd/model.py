"""Feed-forward classifier used for both teachers and students.

Hidden layers use tanh, the output layer is affine.  Weights are stored as
``(fan_out, fan_in)`` matrices so a layer computes ``W @ h + b``.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (CheckpointShapeError, CorruptCheckpoint, InvalidArgument,
                     UnsupportedVersion, UpdateRejected)
from .rng import SplitMix64

CHECKPOINT_MAGIC = b"MTKD"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Classifier:
    layer_dims: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        dims = self.layer_dims
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise InvalidArgument("parameter count does not match layer_dims")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
                raise InvalidArgument(f"layer {i}: expected W{(dims[i + 1], dims[i])}, b({dims[i + 1]},), "
                                      f"got W{w.shape}, b{b.shape}")

    @property
    def n_inputs(self) -> int:
        return self.layer_dims[0]

    @property
    def n_classes(self) -> int:
        return self.layer_dims[-1]

    def parameters(self) -> list[np.ndarray]:
        """Parameters in checkpoint order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def with_flat_parameters(self, flat: np.ndarray) -> "Classifier":
        flat = np.asarray(flat, dtype=np.float64)
        weights, biases, pos = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(flat[pos:pos + w.size].reshape(w.shape).copy())
            pos += w.size
            biases.append(flat[pos:pos + b.size].copy())
            pos += b.size
        if pos != flat.size:
            raise InvalidArgument("flat parameter vector has the wrong length")
        return replace(self, weights=tuple(weights), biases=tuple(biases))


@dataclass(frozen=True)
class Gradients:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def flat(self) -> np.ndarray:
        return np.concatenate([g.ravel() for pair in zip(self.weights, self.biases) for g in pair])


def _check_dims(layer_dims) -> tuple[int, ...]:
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2:
        raise InvalidArgument("need at least an input and an output dimension")
    if any(d < 1 for d in dims):
        raise InvalidArgument(f"all layer dims must be >= 1, got {dims}")
    return dims


def init_classifier(layer_dims: Sequence[int], seed: int) -> Classifier:
    """Glorot-uniform weights from a SplitMix64 stream, zero biases.

    Weights are drawn layer by layer in row-major order.
    """
    dims = _check_dims(layer_dims)
    gen = SplitMix64(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        u = gen.uniform(fan_in * fan_out).reshape(fan_out, fan_in)
        weights.append((2.0 * u - 1.0) * bound)
        biases.append(np.zeros(fan_out))
    return Classifier(dims, tuple(weights), tuple(biases))


def zeros_like_classifier(model: Classifier) -> Gradients:
    return Gradients(tuple(np.zeros_like(w) for w in model.weights),
                     tuple(np.zeros_like(b) for b in model.biases))


def _features(model: Classifier, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.shape[-1] != model.n_inputs or x.ndim not in (1, 2):
        raise InvalidArgument(f"expected features of length {model.n_inputs}, got shape {x.shape}")
    return x


def forward_with_cache(model: Classifier, features) -> tuple[np.ndarray, list[np.ndarray]]:
    """Logits plus the layer inputs needed by :func:`backward`."""
    h = _features(model, features)
    single = h.ndim == 1
    h = np.atleast_2d(h)
    activations = [h]
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w.T + b
        h = z if i == last else np.tanh(z)
        if i != last:
            activations.append(h)
    return (h[0] if single else h), activations


def forward(model: Classifier, features) -> np.ndarray:
    return forward_with_cache(model, features)[0]


def backward(model: Classifier, features, dL_dlogits, cache: list[np.ndarray] | None = None) -> Gradients:
    """Parameter gradients given the upstream gradient at the logits.

    For a batch, gradients are *summed* over rows; callers that want a mean
    scale ``dL_dlogits`` beforehand.
    """
    if cache is None:
        _, cache = forward_with_cache(model, features)
    g = np.asarray(dL_dlogits, dtype=np.float64)
    g = np.atleast_2d(g)
    if g.shape != (cache[0].shape[0], model.n_classes):
        raise InvalidArgument(f"upstream gradient shape {g.shape} does not match "
                              f"({cache[0].shape[0]}, {model.n_classes})")
    n_layers = len(model.weights)
    grad_w: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    grad_b: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for i in range(n_layers - 1, -1, -1):
        h_in = cache[i]
        grad_w[i] = g.T @ h_in
        grad_b[i] = g.sum(axis=0)
        if i > 0:
            g = (g @ model.weights[i]) * (1.0 - h_in * h_in)
    return Gradients(tuple(grad_w), tuple(grad_b))


@dataclass
class OptimizerState:
    kind: str = "adam"
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)


def init_optimizer(model: Classifier, kind: str = "adam", learning_rate: float = 1e-2) -> OptimizerState:
    if kind not in ("sgd", "adam"):
        raise InvalidArgument(f"unknown optimizer {kind!r}")
    if not learning_rate > 0:
        raise InvalidArgument("learning rate must be positive")
    params = model.parameters()
    return OptimizerState(kind=kind, learning_rate=float(learning_rate),
                          first_moment=[np.zeros_like(p) for p in params],
                          second_moment=[np.zeros_like(p) for p in params])


def optimizer_step(model: Classifier, grads: Gradients, state: OptimizerState) -> tuple[Classifier, OptimizerState]:
    """One SGD or Adam update; returns a new model and a new state."""
    flat_grads = []
    for i, (gw, gb) in enumerate(zip(grads.weights, grads.biases)):
        if gw.shape != model.weights[i].shape or gb.shape != model.biases[i].shape:
            raise InvalidArgument(f"gradient shape mismatch in layer {i}")
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise UpdateRejected(i)
        flat_grads.extend((gw, gb))

    params = model.parameters()
    step = state.step_count + 1
    lr = state.learning_rate
    if state.kind == "sgd":
        new_params = [p - lr * g for p, g in zip(params, flat_grads)]
        new_state = replace(state, step_count=step)
    elif state.kind == "adam":
        b1, b2 = state.beta1, state.beta2
        m = [b1 * m_ + (1.0 - b1) * g for m_, g in zip(state.first_moment, flat_grads)]
        v = [b2 * v_ + (1.0 - b2) * g * g for v_, g in zip(state.second_moment, flat_grads)]
        c1 = 1.0 - b1 ** step
        c2 = 1.0 - b2 ** step
        new_params = [p - lr * (m_ / c1) / (np.sqrt(v_ / c2) + state.eps)
                      for p, m_, v_ in zip(params, m, v)]
        new_state = replace(state, step_count=step, first_moment=m, second_moment=v)
    else:
        raise InvalidArgument(f"unknown optimizer {state.kind!r}")
    return replace(model, weights=tuple(new_params[0::2]), biases=tuple(new_params[1::2])), new_state


# -- checkpoints -------------------------------------------------------------

@dataclass(frozen=True)
class Checkpoint:
    model: Classifier
    language: str = ""
    seed: int = 0
    config_digest: str = "0" * 64
    format_version: int = CHECKPOINT_VERSION


def encode_checkpoint(ckpt: Checkpoint, version: int = CHECKPOINT_VERSION) -> bytes:
    """Serialize to the on-disk layout.

    Layout (all integers little-endian): ``b"MTKD"``, u32 format version,
    u32 number of dims, u32 per dim, f64 parameters (W0 row-major, b0, W1,
    b1, ...), u32 language-tag byte length, UTF-8 tag, u64 seed, 32-byte
    config digest.
    """
    model = ckpt.model
    digest = bytes.fromhex(ckpt.config_digest)
    if len(digest) != 32:
        raise InvalidArgument("config digest must be 32 bytes (64 hex characters)")
    tag = ckpt.language.encode("utf-8")
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", version, len(model.layer_dims)),
             struct.pack(f"<{len(model.layer_dims)}I", *model.layer_dims)]
    parts.extend(p.astype("<f8").tobytes() for p in model.parameters())
    parts.append(struct.pack("<I", len(tag)) + tag)
    parts.append(struct.pack("<Q", ckpt.seed & 0xFFFFFFFFFFFFFFFF))
    parts.append(digest)
    return b"".join(parts)


def decode_checkpoint(blob: bytes) -> Checkpoint:
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise CorruptCheckpoint(f"corrupt checkpoint: truncated at byte {len(blob)} (needed {pos + n})")
        chunk = blob[pos:pos + n]
        pos += n
        return chunk

    if take(4) != CHECKPOINT_MAGIC:
        raise CorruptCheckpoint("corrupt checkpoint: bad magic bytes")
    version, n_dims = struct.unpack("<II", take(8))
    if version != CHECKPOINT_VERSION:
        raise UnsupportedVersion(f"unsupported version {version} (this build reads {CHECKPOINT_VERSION})")
    if n_dims < 2 or n_dims > 1024:
        raise CheckpointShapeError(f"implausible layer count {n_dims}")
    dims = struct.unpack(f"<{n_dims}I", take(4 * n_dims))
    if any(d < 1 for d in dims):
        raise CheckpointShapeError(f"invalid layer dims {dims}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(np.frombuffer(take(8 * fan_in * fan_out), dtype="<f8").astype(np.float64)
                       .reshape(fan_out, fan_in))
        biases.append(np.frombuffer(take(8 * fan_out), dtype="<f8").astype(np.float64))
    (tag_len,) = struct.unpack("<I", take(4))
    try:
        language = take(tag_len).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptCheckpoint(f"corrupt checkpoint: language tag is not UTF-8 ({exc})") from None
    (seed,) = struct.unpack("<Q", take(8))
    digest = take(32).hex()
    if pos != len(blob):
        raise CorruptCheckpoint(f"corrupt checkpoint: {len(blob) - pos} trailing bytes")
    model = Classifier(tuple(dims), tuple(weights), tuple(biases))
    return Checkpoint(model, language, seed, digest, version)


def save_checkpoint(model: Classifier, path, language: str = "", seed: int = 0,
                    config_digest: str | None = None) -> Path:
    path = Path(path)
    ckpt = Checkpoint(model, language, seed, config_digest or "0" * 64)
    path.write_bytes(encode_checkpoint(ckpt))
    return path


def load_checkpoint(path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())


def parameter_digest(model: Classifier) -> str:
    return hashlib.sha256(b"".join(p.astype("<f8").tobytes() for p in model.parameters())).hexdigest()
