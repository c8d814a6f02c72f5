"""Deployable encoder/decoder bundle with feature normalization and a binary model format."""

from __future__ import annotations

import io
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError, TruncatedFileError, UnsupportedVersionError
from .frontend import CODE_MAGIC, FrameMatrix, FrontendConfig, read_frames, write_frames
from .nn import ACTIVATIONS, DenseNet, LayerParams, forward, identity_net

MODEL_MAGIC = b"MLSC"
MODEL_VERSION = 1
STD_FLOOR = 1e-8

_FRONTEND = struct.Struct("<ddIIdB")
_LAYER = struct.Struct("<IIB")


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64)
        std = np.maximum(np.array(self.std, dtype=np.float64), STD_FLOOR)
        if mean.ndim != 1 or mean.shape != std.shape:
            raise DimensionError("mean and std must be vectors of equal length")
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def normalize(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def denormalize(self, z) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.std + self.mean

    @classmethod
    def identity(cls, dim: int) -> "NormStats":
        return cls(np.zeros(dim), np.ones(dim))


def fit_norm(data) -> NormStats:
    """Per-dimension mean and population standard deviation."""
    x = np.asarray(getattr(data, "frames", data), dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("normalization needs at least two frames")
    return NormStats(x.mean(axis=0), x.std(axis=0))


@dataclass(frozen=True)
class ModelBundle:
    encoder: DenseNet
    decoder: DenseNet
    norm: NormStats
    frontend_cfg: FrontendConfig = field(default_factory=FrontendConfig)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.encoder.n_out != self.decoder.n_in:
            raise DimensionError(
                f"encoder emits {self.encoder.n_out} values, decoder expects {self.decoder.n_in}"
            )
        if self.encoder.n_in != self.decoder.n_out:
            raise DimensionError("encoder input and decoder output widths differ")
        if self.norm.dim != self.encoder.n_in:
            raise DimensionError("normalization statistics do not match the encoder input")
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def input_dim(self) -> int:
        return self.encoder.n_in

    @property
    def code_dim(self) -> int:
        return self.encoder.n_out


def identity_bundle(dim: int, frontend_cfg: FrontendConfig | None = None) -> ModelBundle:
    """A codec that passes frames through unchanged (useful as a reference)."""
    return ModelBundle(
        identity_net(dim), identity_net(dim), NormStats.identity(dim),
        frontend_cfg or FrontendConfig(), {"label": "identity"},
    )


def _frames(m) -> np.ndarray:
    return np.asarray(getattr(m, "frames", m), dtype=np.float64)


def encode(bundle: ModelBundle, m) -> np.ndarray:
    """Normalize rows of ``m`` and run them through the encoder."""
    x = _frames(m)
    if x.ndim != 2 or x.shape[1] != bundle.input_dim:
        raise DimensionError(f"features of width {x.shape[-1]} given to a {bundle.input_dim}-wide model")
    return forward(bundle.encoder, bundle.norm.normalize(x))


def decode_array(bundle: ModelBundle, codes) -> np.ndarray:
    c = np.asarray(codes, dtype=np.float64)
    if c.ndim != 2 or c.shape[1] != bundle.code_dim:
        raise DimensionError(f"codes of width {c.shape[-1]} given to a {bundle.code_dim}-wide decoder")
    return bundle.norm.denormalize(forward(bundle.decoder, c))


def decode(bundle: ModelBundle, codes, source_id: str = "") -> FrameMatrix:
    """Decode codes back into (denormalized) Mel log-spectral frames."""
    return FrameMatrix(decode_array(bundle, codes), source_id)


def write_codes(codes, path, source_id: str = "") -> None:
    write_frames(FrameMatrix(codes, source_id), path, CODE_MAGIC)


def read_codes(path) -> FrameMatrix:
    return read_frames(path, CODE_MAGIC)


# ---------------------------------------------------------------------------
# Model file


def _pack_net(net: DenseNet, out: io.BytesIO) -> None:
    out.write(struct.pack("<I", len(net.layers)))
    for layer in net.layers:
        out.write(_LAYER.pack(layer.n_in, layer.n_out, ACTIVATIONS.index(layer.activation)))


def model_bytes(bundle: ModelBundle) -> bytes:
    out = io.BytesIO()
    out.write(MODEL_MAGIC)
    out.write(struct.pack("<I", MODEL_VERSION))
    cfg = bundle.frontend_cfg
    out.write(_FRONTEND.pack(cfg.frame_ms, cfg.hop_ms, cfg.fft_size, cfg.num_bins,
                             cfg.floor_db, int(cfg.warp)))
    meta = json.dumps(bundle.meta, sort_keys=True, separators=(",", ":")).encode()
    out.write(struct.pack("<I", len(meta)))
    out.write(meta)
    _pack_net(bundle.encoder, out)
    _pack_net(bundle.decoder, out)
    out.write(bundle.norm.mean.astype("<f8").tobytes())
    out.write(bundle.norm.std.astype("<f8").tobytes())
    for layer in bundle.encoder.layers + bundle.decoder.layers:
        out.write(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
        out.write(layer.bias.astype("<f8").tobytes())
    return out.getvalue()


def save_model(bundle: ModelBundle, path) -> None:
    """Write atomically so a failed save never leaves a partial file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(model_bytes(bundle))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, data: bytes, name: str):
        self.data = data
        self.pos = 0
        self.name = name

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(f"{self.name}: file ends at byte {len(self.data)}, needed {self.pos + n}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, st: struct.Struct):
        return st.unpack(self.take(st.size))

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(np.float64)


def _read_shapes(r: _Reader) -> list:
    shapes = []
    for _ in range(r.u32()):
        n_in, n_out, tag = r.unpack(_LAYER)
        if tag >= len(ACTIVATIONS):
            raise FormatError(f"{r.name}: unknown activation tag {tag}")
        if shapes and shapes[-1][1] != n_in:
            raise FormatError(f"{r.name}: layer widths in header do not chain")
        shapes.append((n_in, n_out, ACTIVATIONS[tag]))
    if not shapes:
        raise FormatError(f"{r.name}: network with no layers")
    return shapes


def model_from_bytes(data: bytes, name: str = "<model>") -> ModelBundle:
    r = _Reader(data, name)
    magic = r.take(4)
    if magic != MODEL_MAGIC:
        raise FormatError(f"{name}: bad magic {magic!r}, expected {MODEL_MAGIC!r}")
    version = r.u32()
    if version != MODEL_VERSION:
        raise UnsupportedVersionError(f"{name}: model version {version} not supported (reader is v{MODEL_VERSION})")
    frame_ms, hop_ms, fft_size, num_bins, floor_db, warp = r.unpack(_FRONTEND)
    try:
        cfg = FrontendConfig(frame_ms, hop_ms, fft_size, num_bins, floor_db, bool(warp))
    except ValueError as exc:
        raise FormatError(f"{name}: invalid frontend block: {exc}") from None
    meta = json.loads(r.take(r.u32()).decode())
    enc_shapes = _read_shapes(r)
    dec_shapes = _read_shapes(r)
    dim = enc_shapes[0][0]
    if enc_shapes[-1][1] != dec_shapes[0][0] or dec_shapes[-1][1] != dim:
        raise FormatError(f"{name}: encoder and decoder topologies are inconsistent")
    norm = NormStats(r.f64(dim), r.f64(dim))
    nets = []
    for shapes in (enc_shapes, dec_shapes):
        layers = []
        for n_in, n_out, act in shapes:
            w = r.f64(n_in * n_out).reshape(n_out, n_in)
            layers.append(LayerParams(w, r.f64(n_out), act))
        nets.append(DenseNet(tuple(layers)))
    if r.pos != len(data):
        raise FormatError(f"{name}: {len(data) - r.pos} trailing bytes after payload")
    return ModelBundle(nets[0], nets[1], norm, cfg, meta)


def load_model(path) -> ModelBundle:
    return model_from_bytes(Path(path).read_bytes(), str(path))
