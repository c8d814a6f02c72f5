"""
Evaluating a codec: resynthesis, noise and interpolation
========================================================

Mel cepstral distortion between original and reconstructed spectra, the
same with masked encoder input, and how straight decoded code
interpolations stay.
"""

import numpy as np

from melcode.autoencoder import Corruption
from melcode.codec import identity_bundle
from melcode.evaluation import analysis_resynthesis, interpolation_probe, mcd, robustness_probe
from melcode.nn import Topology, TrainConfig
from melcode.pipeline import train_codec
from melcode.synthetic import SPEAKER_B, harmonic_log_spectra, toy_corpus

# one unit of difference in a single cepstral coefficient
a = np.zeros((1, 25))
b = a.copy()
b[0, 5] = 1.0
print(f"unit MCD: {mcd(a, b):.6f} dB")

train = harmonic_log_spectra(2000, 32, seed=0)
bundle = train_codec(train, Topology((32, 16, 8)), Corruption("masking", 0.3, 0),
                     TrainConfig(20, 50, 2.0, 0), TrainConfig(100, 100, 2.0, 1)).bundle

held = toy_corpus(10, 25, 32, seed=100, prefix="held")
other = toy_corpus(10, 25, 32, SPEAKER_B, seed=100, prefix="spkB")

print(f"resynthesis, same speaker:  {analysis_resynthesis(bundle, held).corpus_mean:.3f} dB")
print(f"resynthesis, other speaker: {analysis_resynthesis(bundle, other).corpus_mean:.3f} dB")

mask = Corruption("masking", 0.3, seed=0)
print(f"degradation under 30% masking, trained codec: {robustness_probe(bundle, held, mask).degradation:+.3f} dB")
print(f"degradation under 30% masking, identity:      "
      f"{robustness_probe(identity_bundle(32), held, mask).degradation:+.3f} dB")

interp = interpolation_probe(bundle, held, n_pairs=50)
print("interpolation deviation (interior lambdas):", {k: round(v, 4) for k, v in interp.summary().items()})
