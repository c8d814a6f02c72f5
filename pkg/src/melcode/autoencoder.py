"""Denoising autoencoders, greedy stacking, unwrapping, fine-tuning and splitting."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import AmbiguousBottleneckError, DimensionError
from .nn import (
    FINETUNE_DEFAULTS,
    LINEAR,
    PRETRAIN_DEFAULTS,
    SIGMOID,
    DenseNet,
    LayerParams,
    Topology,
    TrainConfig,
    init_net,
    sgd_train,
)

MASKING = "masking"
GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class Corruption:
    """Input corruption for denoising training.

    ``level`` is the masking probability for ``masking`` and the noise
    standard deviation for ``gaussian``.
    """

    kind: str = MASKING
    level: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.kind == MASKING:
            if not 0.0 <= self.level <= 1.0:
                raise ValueError(f"masking probability must be in [0, 1], got {self.level}")
        elif self.kind == GAUSSIAN:
            if not self.level >= 0.0:
                raise ValueError(f"gaussian std must be >= 0, got {self.level}")
        else:
            raise ValueError(f"unknown corruption kind {self.kind!r}")

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "Corruption":
        """Parse ``mask:0.3`` or ``gauss:0.1``."""
        kind, _, level = text.partition(":")
        kinds = {"mask": MASKING, "masking": MASKING, "gauss": GAUSSIAN, "gaussian": GAUSSIAN}
        if kind not in kinds or not level:
            raise ValueError(f"bad corruption {text!r}; expected mask:p or gauss:sigma")
        return cls(kinds[kind], float(level), seed)

    def __str__(self):
        return f"{'mask' if self.kind == MASKING else 'gauss'}:{self.level:g}"

    def with_seed(self, seed: int) -> "Corruption":
        return Corruption(self.kind, self.level, seed)

    def sampler(self) -> Callable[[np.ndarray], np.ndarray]:
        """Stateful corruptor drawing fresh noise on every call."""
        rng = np.random.default_rng(self.seed)
        return lambda x: _corrupt(x, self, rng)


def _corrupt(x: np.ndarray, c: Corruption, rng: np.random.Generator) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if c.kind == MASKING:
        keep = rng.random(x.shape) >= c.level
        return np.where(keep, x, 0.0)
    return x + rng.normal(0.0, 1.0, x.shape) * c.level


def corrupt(x, c: Corruption) -> np.ndarray:
    """Corrupt a batch with noise drawn from ``c.seed``."""
    return _corrupt(x, c, np.random.default_rng(c.seed))


@dataclass(frozen=True)
class DaPair:
    encode_layer: LayerParams
    decode_layer: LayerParams

    def __post_init__(self):
        if (self.decode_layer.n_out != self.encode_layer.n_in
                or self.decode_layer.n_in != self.encode_layer.n_out):
            raise DimensionError("decode layer does not mirror encode layer")

    def as_net(self) -> DenseNet:
        return DenseNet((self.encode_layer, self.decode_layer))

    def encode(self, x) -> np.ndarray:
        return self.encode_layer.apply(np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class Sda:
    pairs: tuple

    def __post_init__(self):
        pairs = tuple(self.pairs)
        if not pairs:
            raise ValueError("an SDA needs at least one autoencoder")
        for a, b in zip(pairs, pairs[1:]):
            if a.encode_layer.n_out != b.encode_layer.n_in:
                raise DimensionError("stacked autoencoders do not chain")
        object.__setattr__(self, "pairs", pairs)

    @property
    def input_dim(self) -> int:
        return self.pairs[0].encode_layer.n_in

    @property
    def widths(self) -> tuple:
        return (self.input_dim,) + tuple(p.encode_layer.n_out for p in self.pairs)


def train_da(
    data,
    hidden_width: int,
    corruption: Corruption,
    cfg: TrainConfig = PRETRAIN_DEFAULTS,
    io_linear: bool = False,
    hook=None,
) -> tuple[DaPair, list]:
    """Train one denoising autoencoder to map corrupted rows back to clean rows.

    The encoder is sigmoid; the decoder is linear when ``io_linear`` (the
    autoencoder that faces the log spectra) and sigmoid otherwise.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("autoencoder training data must be a non-empty 2-D array")
    dim = data.shape[1]
    topo = Topology((dim, hidden_width, dim), (SIGMOID, LINEAR if io_linear else SIGMOID))
    net = init_net(topo, cfg.seed)
    net, trace = sgd_train(net, data, data, cfg, hook=hook, input_transform=corruption.sampler())
    return DaPair(*net.layers), trace


def level_seed(seed: int, level: int) -> int:
    """Seed for stack level ``level``; level 0 uses ``seed`` itself."""
    if level == 0:
        return seed
    return int(np.random.SeedSequence([seed, level]).generate_state(1)[0])


def pretrain_sda(
    data,
    topology: Topology,
    corruption: Corruption = Corruption(),
    cfg: TrainConfig = PRETRAIN_DEFAULTS,
    hook: Optional[Callable[[int, int, float], None]] = None,
) -> tuple[Sda, list]:
    """Greedy layer-wise pretraining.

    Autoencoder ``k`` sees the clean codes of autoencoders ``1..k-1``;
    corruption is applied only at the input of the one being trained.
    ``hook(level, epoch, loss)`` observes every epoch. Returns the stack and
    one loss trace per level.
    """
    frames = getattr(data, "frames", data)
    x = np.asarray(frames, dtype=np.float64)
    widths = topology.widths
    if x.ndim != 2 or x.shape[1] != widths[0]:
        raise DimensionError(f"data width {x.shape[-1]} does not match topology input {widths[0]}")
    pairs, traces = [], []
    for level, hidden in enumerate(widths[1:]):
        level_cfg = TrainConfig(cfg.batch_size, cfg.epochs, cfg.learning_rate,
                                level_seed(cfg.seed, level), cfg.shuffle)
        level_hook = None
        if hook is not None:
            level_hook = lambda epoch, loss, net, _lv=level: hook(_lv, epoch, loss)
        pair, trace = train_da(
            x, hidden, corruption.with_seed(level_seed(corruption.seed, level)),
            level_cfg, io_linear=(level == 0), hook=level_hook,
        )
        pairs.append(pair)
        traces.append(trace)
        x = pair.encode(x)
    return Sda(tuple(pairs)), traces


def unwrap(sda: Sda) -> DenseNet:
    """Encode layers in order followed by decode layers in reverse order."""
    encoders = [p.encode_layer for p in sda.pairs]
    decoders = [p.decode_layer for p in reversed(sda.pairs)]
    return DenseNet(tuple(encoders + decoders))


def finetune(mlp: DenseNet, data, cfg: TrainConfig = FINETUNE_DEFAULTS, hook=None) -> tuple[DenseNet, list]:
    """Backpropagate clean reconstruction error through the whole unwrapped net."""
    frames = getattr(data, "frames", data)
    x = np.asarray(frames, dtype=np.float64)
    if mlp.n_in != mlp.n_out:
        raise DimensionError("fine-tuning needs a network whose output width equals its input width")
    return sgd_train(mlp, x, x, cfg, hook=hook)


def bottleneck_index(widths) -> int:
    """Index of the unique minimum interior width."""
    interior = list(widths[1:-1])
    if not interior:
        raise AmbiguousBottleneckError("network has no interior level to split at")
    low = min(interior)
    hits = [i + 1 for i, w in enumerate(interior) if w == low]
    if len(hits) != 1:
        raise AmbiguousBottleneckError(
            f"minimum width {low} occurs at levels {hits}; pass the index explicitly"
        )
    return hits[0]


def split(mlp: DenseNet, index: Optional[int] = None) -> tuple[DenseNet, DenseNet]:
    """Cut ``mlp`` at width level ``index`` into encoder and decoder nets."""
    if index is None:
        index = bottleneck_index(mlp.widths)
    if not 1 <= index < len(mlp.layers):
        raise ValueError(f"split index {index} outside 1..{len(mlp.layers) - 1}")
    return DenseNet(mlp.layers[:index]), DenseNet(mlp.layers[index:])

