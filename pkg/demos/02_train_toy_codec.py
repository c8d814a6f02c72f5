"""
Training a small spectral codec
===============================

Greedy denoising pretraining, unwrapping, fine-tuning and splitting on a
toy corpus of 32-dim harmonic log spectra.  The reference recipe uses
257x125x75x50; here a 32x16x8 stack keeps the run to a few seconds.
"""

import tempfile
from pathlib import Path

import numpy as np

from melcode.autoencoder import Corruption
from melcode.codec import decode, encode, load_model, save_model
from melcode.nn import Topology, TrainConfig
from melcode.pipeline import train_codec
from melcode.synthetic import harmonic_log_spectra, toy_corpus

frames = harmonic_log_spectra(2000, 32, seed=0)
topology = Topology((32, 16, 8))

# batch/epoch counts follow the reference protocol; the learning rate is tuned for the toy
result = train_codec(
    frames, topology, Corruption("masking", 0.3, seed=0),
    TrainConfig(batch_size=20, epochs=50, learning_rate=2.0, seed=0),
    TrainConfig(batch_size=100, epochs=100, learning_rate=2.0, seed=1),
    corpus_label="toy",
)

for level, trace in enumerate(result.pretrain_traces):
    print(f"pretrain level {level}: loss {trace[0]:.4f} -> {trace[-1]:.4f}")
print(f"fine-tune: loss {result.finetune_trace[0]:.4f} -> {result.finetune_trace[-1]:.4f}")
print("unwrapped widths:", result.mlp.widths)

bundle = result.bundle
print("encoder", bundle.encoder.widths, "decoder", bundle.decoder.widths)

utt = toy_corpus(1, 40, 32, seed=99)[0]
codes = encode(bundle, utt)
print("codes:", codes.shape, f"range [{codes.min():.3f}, {codes.max():.3f}]")
recon = decode(bundle, codes)
print("per-entry reconstruction MSE:", float(np.mean((recon.frames - utt.frames) ** 2)))

path = Path(tempfile.mkdtemp()) / "toy_codec.mlsc"
save_model(bundle, path)
again = load_model(path)
print("reloaded model encodes identically:", np.array_equal(encode(again, utt), codes))
