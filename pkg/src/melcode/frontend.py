"""Mel log-spectral front end.

Turns 16-bit mono PCM audio into a matrix of Mel log-spectral frames and
reads/writes the binary frame container shared by feature and code files.
"""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    EmptyInputError,
    FormatError,
    MalformedWavError,
    NonFiniteError,
    TruncatedFileError,
    UnsupportedEncodingError,
    UnsupportedVersionError,
)

FEATURE_MAGIC = b"MLSF"
CODE_MAGIC = b"MLSE"
CONTAINER_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")


@dataclass(frozen=True)
class AudioSignal:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise NonFiniteError("audio samples contain non-finite values")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]


@dataclass(frozen=True)
class FrontendConfig:
    """Analysis settings. ``warp=False`` keeps the linear-frequency grid."""

    frame_ms: float = 25.0
    hop_ms: float = 5.0
    fft_size: int = 512
    num_bins: int = 257
    floor_db: float = -20.0
    warp: bool = True

    def __post_init__(self):
        n = self.fft_size
        if n < 2 or n & (n - 1):
            raise ValueError(f"fft_size must be a power of two, got {n}")
        if self.num_bins != n // 2 + 1:
            raise ValueError(f"num_bins must equal fft_size/2+1 = {n // 2 + 1}")
        if self.frame_ms <= 0 or self.hop_ms <= 0:
            raise ValueError("frame_ms and hop_ms must be positive")

    def frame_length(self, sample_rate: int) -> int:
        return int(round(self.frame_ms * sample_rate / 1000.0))

    def hop_length(self, sample_rate: int) -> int:
        return int(round(self.hop_ms * sample_rate / 1000.0))

    def check_rate(self, sample_rate: int) -> None:
        if self.frame_length(sample_rate) > self.fft_size:
            raise ValueError(
                f"{self.frame_ms} ms at {sample_rate} Hz does not fit in a "
                f"{self.fft_size}-point FFT"
            )
        if self.hop_length(sample_rate) < 1:
            raise ValueError("hop rounds to zero samples")


@dataclass(frozen=True)
class FrameMatrix:
    """T x D frames stored as float32, the on-disk precision.

    Holding frames in float32 keeps file round trips bit-exact; arithmetic
    downstream promotes to float64.
    """

    frames: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        frames = np.array(self.frames, dtype=np.float32, copy=True)
        if frames.ndim == 1 and frames.size == 0:
            frames = frames.reshape(0, 0)
        if frames.ndim != 2:
            raise ValueError("frames must be a 2-D matrix")
        if not np.all(np.isfinite(frames)):
            raise NonFiniteError("frame matrix contains non-finite values")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def count(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    def __eq__(self, other):
        if not isinstance(other, FrameMatrix):
            return NotImplemented
        return (
            self.frames.shape == other.frames.shape
            and self.frames.tobytes() == other.frames.tobytes()
        )

    __hash__ = None


# ---------------------------------------------------------------------------
# WAV input


def read_wav(path) -> AudioSignal:
    """Read a 16-bit mono linear PCM file, scaling samples by 1/32768."""
    try:
        with wave.open(str(path), "rb") as w:
            channels = w.getnchannels()
            width = w.getsampwidth()
            rate = w.getframerate()
            nframes = w.getnframes()
            raw = w.readframes(nframes)
    except wave.Error as exc:
        if "unknown format" in str(exc):
            raise UnsupportedEncodingError(f"{path}: {exc}") from exc
        raise MalformedWavError(f"{path}: {exc}") from exc
    except (EOFError, struct.error) as exc:
        raise MalformedWavError(f"{path}: truncated header") from exc
    if channels != 1:
        raise UnsupportedEncodingError(f"{path}: {channels} channels, expected mono")
    if width != 2:
        raise UnsupportedEncodingError(f"{path}: {8 * width}-bit samples, expected 16")
    if len(raw) != 2 * nframes:
        raise MalformedWavError(f"{path}: data chunk shorter than header claims")
    pcm = np.frombuffer(raw, dtype="<i2")
    return AudioSignal(pcm.astype(np.float64) / 32768.0, rate)


def write_wav(path, signal: AudioSignal) -> None:
    pcm = np.clip(np.round(signal.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(signal.sample_rate)
        w.writeframes(pcm.tobytes())


# ---------------------------------------------------------------------------
# Analysis


def frame_count(n_samples: int, frame_length: int, hop: int) -> int:
    if n_samples < frame_length:
        return 0
    return (n_samples - frame_length) // hop + 1


def frame_signal(signal: AudioSignal, cfg: FrontendConfig) -> np.ndarray:
    """Cut Hamming-windowed frames, zero-padded to ``cfg.fft_size``.

    Returns a (T, fft_size) array.
    """
    cfg.check_rate(signal.sample_rate)
    length = cfg.frame_length(signal.sample_rate)
    hop = cfg.hop_length(signal.sample_rate)
    n = len(signal)
    if n < length:
        raise EmptyInputError(f"signal of {n} samples is shorter than one {length}-sample frame")
    count = frame_count(n, length, hop)
    idx = np.arange(length)[None, :] + hop * np.arange(count)[:, None]
    frames = np.zeros((count, cfg.fft_size))
    frames[:, :length] = signal.samples[idx] * np.hamming(length)
    return frames


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_warp_grid(num_bins: int, nyquist: float = 8000.0) -> np.ndarray:
    """Frequencies (Hz) of ``num_bins`` points evenly spaced in mel over [0, nyquist]."""
    top = hz_to_mel(nyquist)
    grid = mel_to_hz(np.linspace(0.0, top, num_bins))
    grid[0] = 0.0
    grid[-1] = nyquist
    return grid


def mel_warp_bins(num_bins: int, sample_rate: float = 16000.0) -> np.ndarray:
    """Fractional linear-bin positions of the mel-uniform grid (0 .. num_bins-1)."""
    nyquist = sample_rate / 2.0
    hz = mel_warp_grid(num_bins, nyquist)
    pos = hz / nyquist * (num_bins - 1)
    pos[0] = 0.0
    pos[-1] = num_bins - 1
    return pos


def log_magnitude(frame: np.ndarray, cfg: FrontendConfig) -> np.ndarray:
    """Floored natural-log magnitude of the one-sided FFT (no warping)."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape[-1] != cfg.fft_size:
        raise ValueError(f"frame length {frame.shape[-1]} != fft_size {cfg.fft_size}")
    if not np.all(np.isfinite(frame)):
        raise NonFiniteError("frame contains non-finite values")
    mag = np.abs(np.fft.rfft(frame, n=cfg.fft_size, axis=-1))
    return np.log(np.maximum(mag, np.exp(cfg.floor_db)))


def mel_log_spectrum(frame: np.ndarray, cfg: FrontendConfig, sample_rate: int = 16000) -> np.ndarray:
    """Mel log spectrum of one windowed frame (or a stack of frames).

    The log magnitude on the linear FFT grid is linearly interpolated onto
    ``num_bins`` mel-uniform points whose endpoints are 0 Hz and Nyquist.
    """
    logmag = log_magnitude(frame, cfg)
    if not cfg.warp:
        return logmag
    pos = mel_warp_bins(cfg.num_bins, sample_rate)
    lo = np.minimum(np.floor(pos).astype(int), cfg.num_bins - 2)
    frac = pos - lo
    return logmag[..., lo] * (1.0 - frac) + logmag[..., lo + 1] * frac


def featurize(signal: AudioSignal, cfg: FrontendConfig | None = None, source_id: str = "") -> FrameMatrix:
    cfg = cfg or FrontendConfig()
    frames = frame_signal(signal, cfg)
    return FrameMatrix(mel_log_spectrum(frames, cfg, signal.sample_rate), source_id)


# ---------------------------------------------------------------------------
# Frame container (feature files use MLSF, code files MLSE)


def write_frames(m: FrameMatrix, path, magic: bytes = FEATURE_MAGIC) -> None:
    frames = np.ascontiguousarray(m.frames, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(magic, CONTAINER_VERSION, m.dim, m.count))
        fh.write(frames.tobytes())


def read_frames(path, magic: bytes = FEATURE_MAGIC) -> FrameMatrix:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise TruncatedFileError(f"{path}: header truncated")
    got, version, dim, count = _HEADER.unpack_from(data)
    if got != magic:
        raise FormatError(f"{path}: bad magic {got!r}, expected {magic!r}")
    if version != CONTAINER_VERSION:
        raise UnsupportedVersionError(f"{path}: container version {version} not supported")
    payload = data[_HEADER.size:]
    need = 4 * dim * count
    if len(payload) < need:
        raise TruncatedFileError(
            f"{path}: header claims {count}x{dim} values, payload holds {len(payload) // 4}"
        )
    if len(payload) > need:
        raise FormatError(f"{path}: {len(payload) - need} trailing bytes after payload")
    frames = np.frombuffer(payload, dtype="<f4").reshape(count, dim)
    return FrameMatrix(frames, Path(path).stem)


def write_features(m: FrameMatrix, path) -> None:
    write_frames(m, path, FEATURE_MAGIC)


def read_features(path) -> FrameMatrix:
    return read_frames(path, FEATURE_MAGIC)
