"""Set encoder for silhouette sequences.

A sequence is encoded as embed(pyramid(set_pool({frame_encode(x_k)}))):
each frame is split into horizontal bands and passed through two shared
affine+ReLU layers, frames are aggregated by an element-wise max (order
invariant), and the pooled map is read out by a multi-scale strip pyramid
whose concatenated output is L2-normalized.

Gradients are hand-written reverse mode and validated against central
finite differences in the test suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import l2_normalize

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class EncoderShape:
    """Hyper-shape of the encoder; parameter layout is a pure function of it."""

    height: int = 16
    width: int = 16
    bands: int = 4
    channels: int = 8
    scales: int = 2
    embed_dim: int = 24

    def __post_init__(self):
        for name in ("height", "width", "bands", "channels", "scales", "embed_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.height % self.bands != 0:
            raise ValueError(f"height {self.height} not divisible by bands {self.bands}")
        if self.bands % (2 ** (self.scales - 1)) != 0:
            raise ValueError(
                f"bands {self.bands} not divisible by 2^(scales-1) = {2 ** (self.scales - 1)}"
            )
        if self.embed_dim % self.n_strips != 0:
            raise ValueError(
                f"embed_dim {self.embed_dim} not divisible by strip count {self.n_strips}"
            )

    @property
    def band_rows(self) -> int:
        return self.height // self.bands

    @property
    def band_pixels(self) -> int:
        return self.band_rows * self.width

    @property
    def n_strips(self) -> int:
        # scale s contributes 2^(s-1) strips, s = 1..scales
        return 2 ** self.scales - 1

    @property
    def strip_dim(self) -> int:
        return self.embed_dim // self.n_strips

    def to_dict(self) -> dict:
        return {
            "height": self.height,
            "width": self.width,
            "bands": self.bands,
            "channels": self.channels,
            "scales": self.scales,
            "embed_dim": self.embed_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderShape":
        return cls(**d)


@dataclass
class SilhouetteSequence:
    """One walk: (K, H, W) binary frames plus its identity/condition/view tags."""

    frames: np.ndarray
    sample_id: str
    identity: str | None = None
    condition: str = "NM"
    view: str = "000"
    domain: str = ""

    def __post_init__(self):
        f = np.asarray(self.frames)
        if f.ndim != 3 or f.shape[0] < 1:
            raise ValueError(f"frames must be (K>=1, H, W), got shape {f.shape}")
        vals = np.unique(f)
        if not np.all(np.isin(vals, (0, 1))):
            raise ValueError(f"sample {self.sample_id}: frames must be binary 0/1")
        self.frames = f.astype(np.uint8)

    @property
    def length(self) -> int:
        return self.frames.shape[0]


def _param_layout(shape: EncoderShape) -> list[tuple[str, tuple[int, ...]]]:
    """Canonical (name, dims) layout; fixes init draw order and accumulation order."""
    layout = [
        ("frame.weight", (shape.channels, shape.band_pixels)),
        ("frame.bias", (shape.channels,)),
        ("mix.weight", (shape.channels, shape.channels)),
        ("mix.bias", (shape.channels,)),
    ]
    for t in range(shape.n_strips):
        layout.append((f"strip{t}.weight", (shape.strip_dim, shape.channels)))
        layout.append((f"strip{t}.bias", (shape.strip_dim,)))
    return layout


@dataclass
class EncoderParams:
    """All learnable tensors, addressable by name."""

    shape: EncoderShape
    tensors: dict[str, np.ndarray]

    def names(self) -> list[str]:
        return [name for name, _ in _param_layout(self.shape)]

    def count(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.shape, {k: v.copy() for k, v in self.tensors.items()})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]


def init_params(shape: EncoderShape, rng: np.random.Generator) -> EncoderParams:
    """Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    tensors: dict[str, np.ndarray] = {}
    for name, dims in _param_layout(shape):
        if name.endswith(".bias"):
            tensors[name] = np.zeros(dims, dtype=np.float64)
        else:
            fan_out, fan_in = dims
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            tensors[name] = rng.uniform(-bound, bound, size=dims)
    return EncoderParams(shape, tensors)


def _strip_slices(shape: EncoderShape) -> list[tuple[int, int, int]]:
    """(band_start, band_stop, strip_index) for every strip, scale-major order."""
    out = []
    t = 0
    for s in range(1, shape.scales + 1):
        groups = 2 ** (s - 1)
        size = shape.bands // groups
        for g in range(groups):
            out.append((g * size, (g + 1) * size, t))
            t += 1
    return out


def _band_split(frame: np.ndarray, shape: EncoderShape) -> np.ndarray:
    """(H, W) frame -> (bands, band_pixels) float rows of consecutive-row bands."""
    return frame.astype(np.float64).reshape(shape.bands, shape.band_pixels)


def encode_frame(frame: np.ndarray, params: EncoderParams) -> np.ndarray:
    """Per-frame feature map of shape (bands, channels)."""
    shape = params.shape
    frame = np.asarray(frame)
    if frame.shape != (shape.height, shape.width):
        raise ValueError(
            f"frame shape {frame.shape} does not match encoder ({shape.height}, {shape.width})"
        )
    x = _band_split(frame, shape)
    z1 = x @ params["frame.weight"].T + params["frame.bias"]
    u = np.maximum(z1, 0.0)
    z2 = u @ params["mix.weight"].T + params["mix.bias"]
    return np.maximum(z2, 0.0)


def set_pool(maps: list[np.ndarray]) -> np.ndarray:
    """Element-wise max over frame feature maps; order invariant by construction."""
    if len(maps) == 0:
        raise ValueError("set_pool needs at least one feature map")
    stack = np.stack(maps)
    return stack.max(axis=0)


def pyramid_map(pooled: np.ndarray, params: EncoderParams) -> np.ndarray:
    """Multi-scale strip readout of the pooled map, concatenated and normalized."""
    shape = params.shape
    pooled = np.asarray(pooled, dtype=np.float64)
    if pooled.shape != (shape.bands, shape.channels):
        raise ValueError(
            f"feature map shape {pooled.shape} does not match ({shape.bands}, {shape.channels})"
        )
    pieces = []
    for b0, b1, t in _strip_slices(shape):
        m = pooled[b0:b1].mean(axis=0)
        pieces.append(params[f"strip{t}.weight"] @ m + params[f"strip{t}.bias"])
    return l2_normalize(np.concatenate(pieces))


@dataclass
class _ForwardTrace:
    """Activations kept for the backward pass of one sequence."""

    x: np.ndarray        # (K, B, P) band inputs
    z1: np.ndarray       # (K, B, C) pre-ReLU, frame layer
    u: np.ndarray        # (K, B, C)
    z2: np.ndarray       # (K, B, C) pre-ReLU, mixing layer
    v: np.ndarray        # (K, B, C)
    argmax: np.ndarray   # (B, C) winning frame per cell (lowest index on ties)
    pooled: np.ndarray   # (B, C)
    strip_means: list[np.ndarray]
    pre_norm: np.ndarray  # (d,)
    norm: float
    embedding: np.ndarray  # (d,)


def _forward_trace(seq: SilhouetteSequence, params: EncoderParams) -> _ForwardTrace:
    shape = params.shape
    maps = []
    xs, z1s, us, z2s = [], [], [], []
    for k in range(seq.length):
        frame = seq.frames[k]
        if frame.shape != (shape.height, shape.width):
            raise ValueError(
                f"sample {seq.sample_id}: frame shape {frame.shape} does not match encoder"
            )
        x = _band_split(frame, shape)
        z1 = x @ params["frame.weight"].T + params["frame.bias"]
        u = np.maximum(z1, 0.0)
        z2 = u @ params["mix.weight"].T + params["mix.bias"]
        v = np.maximum(z2, 0.0)
        xs.append(x)
        z1s.append(z1)
        us.append(u)
        z2s.append(z2)
        maps.append(v)
    v_all = np.stack(maps)
    argmax = v_all.argmax(axis=0)  # first occurrence wins ties
    pooled = v_all.max(axis=0)

    strip_means = []
    pieces = []
    for b0, b1, t in _strip_slices(shape):
        m = pooled[b0:b1].mean(axis=0)
        strip_means.append(m)
        pieces.append(params[f"strip{t}.weight"] @ m + params[f"strip{t}.bias"])
    pre_norm = np.concatenate(pieces)
    n = float(np.linalg.norm(pre_norm))
    emb = l2_normalize(pre_norm)
    return _ForwardTrace(
        x=np.stack(xs), z1=np.stack(z1s), u=np.stack(us), z2=np.stack(z2s),
        v=v_all, argmax=argmax, pooled=pooled, strip_means=strip_means,
        pre_norm=pre_norm, norm=n, embedding=emb,
    )


def encode_sequence(seq: SilhouetteSequence, params: EncoderParams) -> np.ndarray:
    """Unit-norm embedding of one sequence; invariant to frame order."""
    return _forward_trace(seq, params).embedding


def zero_grads(shape: EncoderShape) -> dict[str, np.ndarray]:
    return {name: np.zeros(dims, dtype=np.float64) for name, dims in _param_layout(shape)}


def encode_backward(
    seqs: list[SilhouetteSequence],
    params: EncoderParams,
    grad_embeddings: list[np.ndarray] | np.ndarray,
) -> dict[str, np.ndarray]:
    """Gradient of sum_i <grad_i, encode(seq_i)> with respect to every parameter.

    Forward activations are recomputed. Max pooling routes each cell's
    gradient to the lowest-index winning frame; ReLU uses subgradient 0 at 0.
    Accumulation over sequences follows input order, so results are
    deterministic.
    """
    grad_embeddings = list(grad_embeddings)
    if len(seqs) != len(grad_embeddings):
        raise ValueError(
            f"{len(seqs)} sequences but {len(grad_embeddings)} embedding gradients"
        )
    shape = params.shape
    grads = zero_grads(shape)
    strips = _strip_slices(shape)

    for seq, demb in zip(seqs, grad_embeddings):
        demb = np.asarray(demb, dtype=np.float64)
        if demb.shape != (shape.embed_dim,):
            raise ValueError(
                f"sample {seq.sample_id}: gradient shape {demb.shape} != ({shape.embed_dim},)"
            )
        tr = _forward_trace(seq, params)

        # through y = p / ||p||:  dp = (dy - y (y . dy)) / ||p||
        y = tr.embedding
        dpre = (demb - y * float(y @ demb)) / tr.norm

        dpooled = np.zeros_like(tr.pooled)
        sd = shape.strip_dim
        for (b0, b1, t), m in zip(strips, tr.strip_means):
            dv_t = dpre[t * sd:(t + 1) * sd]
            grads[f"strip{t}.weight"] += np.outer(dv_t, m)
            grads[f"strip{t}.bias"] += dv_t
            dm = params[f"strip{t}.weight"].T @ dv_t
            dpooled[b0:b1] += dm / (b1 - b0)

        # unpool: each (b, c) cell's gradient goes to its winning frame
        dv = np.zeros_like(tr.v)
        np.put_along_axis(dv, tr.argmax[None, :, :], dpooled[None, :, :], axis=0)

        dz2 = dv * (tr.z2 > 0.0)
        flat_dz2 = dz2.reshape(-1, shape.channels)
        flat_u = tr.u.reshape(-1, shape.channels)
        grads["mix.weight"] += flat_dz2.T @ flat_u
        grads["mix.bias"] += dz2.sum(axis=(0, 1))
        du = dz2 @ params["mix.weight"]

        dz1 = du * (tr.z1 > 0.0)
        flat_dz1 = dz1.reshape(-1, shape.channels)
        flat_x = tr.x.reshape(-1, shape.band_pixels)
        grads["frame.weight"] += flat_dz1.T @ flat_x
        grads["frame.bias"] += dz1.sum(axis=(0, 1))

    return grads


def save_checkpoint(params: EncoderParams, path: str | Path) -> None:
    """Write parameters as a single JSON document; values round-trip exactly."""
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "shape": params.shape.to_dict(),
        "params": {
            name: {"dims": list(t.shape), "values": t.ravel().tolist()}
            for name, t in params.tensors.items()
        },
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_checkpoint(path: str | Path) -> EncoderParams:
    doc = json.loads(Path(path).read_text())
    version = doc.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {version!r}")
    shape = EncoderShape.from_dict(doc["shape"])
    tensors = {}
    for name, dims in _param_layout(shape):
        entry = doc["params"].get(name)
        if entry is None:
            raise ValueError(f"checkpoint missing parameter {name!r}")
        if tuple(entry["dims"]) != dims:
            raise ValueError(
                f"checkpoint parameter {name!r} has dims {entry['dims']}, expected {list(dims)}"
            )
        tensors[name] = np.asarray(entry["values"], dtype=np.float64).reshape(dims)
    return EncoderParams(shape, tensors)
