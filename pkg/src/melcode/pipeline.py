"""End-to-end codec training: normalize, pretrain, unwrap, fine-tune, split."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .autoencoder import Corruption, finetune, pretrain_sda, split, unwrap
from .codec import ModelBundle, fit_norm
from .errors import DimensionError
from .frontend import FrontendConfig
from .nn import FINETUNE_DEFAULTS, PRETRAIN_DEFAULTS, DenseNet, Topology, TrainConfig

log = logging.getLogger(__name__)

DEFAULT_TOPOLOGY = Topology((257, 125, 75, 50))


@dataclass
class TrainResult:
    bundle: ModelBundle
    mlp: DenseNet
    pretrain_traces: list = field(default_factory=list)
    finetune_trace: list = field(default_factory=list)


def train_codec(
    frames,
    topology: Topology = DEFAULT_TOPOLOGY,
    corruption: Corruption = Corruption(),
    pretrain_cfg: TrainConfig = PRETRAIN_DEFAULTS,
    finetune_cfg: TrainConfig = FINETUNE_DEFAULTS,
    frontend_cfg: FrontendConfig | None = None,
    corpus_label: str = "",
) -> TrainResult:
    """Train an encoder/decoder pair on a (T, D) matrix of Mel log-spectral frames."""
    x = np.asarray(getattr(frames, "frames", frames), dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != topology.widths[0]:
        raise DimensionError(
            f"topology {topology} expects {topology.widths[0]}-dim frames, got {x.shape[-1]}"
        )
    norm = fit_norm(x)
    z = norm.normalize(x)

    def pre_hook(level, epoch, loss):
        log.debug("pretrain level %d epoch %d loss %.6g", level, epoch, loss)

    def ft_hook(epoch, loss, net):
        log.debug("finetune epoch %d loss %.6g", epoch, loss)

    sda, pre_traces = pretrain_sda(z, topology, corruption, pretrain_cfg, hook=pre_hook)
    mlp, ft_trace = finetune(unwrap(sda), z, finetune_cfg, hook=ft_hook)
    encoder, decoder = split(mlp, len(sda.pairs))
    meta = {
        "topology": str(topology),
        "corruption": str(corruption),
        "corruption_seed": corruption.seed,
        "pretrain": f"batch={pretrain_cfg.batch_size},epochs={pretrain_cfg.epochs},"
                    f"lr={pretrain_cfg.learning_rate!r},seed={pretrain_cfg.seed}",
        "finetune": f"batch={finetune_cfg.batch_size},epochs={finetune_cfg.epochs},"
                    f"lr={finetune_cfg.learning_rate!r},seed={finetune_cfg.seed}",
        "corpus": corpus_label,
        "frames": int(x.shape[0]),
    }
    bundle = ModelBundle(encoder, decoder, norm, frontend_cfg or FrontendConfig(), meta)
    return TrainResult(bundle, mlp, pre_traces, ft_trace)
