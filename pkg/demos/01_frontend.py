"""
From a waveform to Mel log spectra
==================================

A synthetic vowel-like tone is framed, windowed and turned into one
257-point Mel log-spectral vector every 5 ms.
"""

import numpy as np

from melcode.frontend import AudioSignal, FrontendConfig, featurize, hz_to_mel, mel_warp_grid

rate = 16000
t = np.arange(rate // 2) / rate

# a 150 Hz harmonic series with a 1/k roll-off
f0 = 150.0
signal = sum(np.cos(2 * np.pi * k * f0 * t) / k for k in range(1, 40))
signal *= 0.1 / np.max(np.abs(signal))

cfg = FrontendConfig()
print("frame length", cfg.frame_length(rate), "samples, hop", cfg.hop_length(rate))

m = featurize(AudioSignal(signal, rate), cfg, "tone")
print("feature matrix:", m.count, "frames x", m.dim, "bins")

# the warped grid is uniform in mel, so low frequencies get more bins
grid = mel_warp_grid(cfg.num_bins, rate / 2)
below_1k = int(np.sum(grid < 1000))
print(f"{below_1k} of {cfg.num_bins} bins lie below 1 kHz (mel(1000) = {hz_to_mel(1000.0):.3f})")

frame = m.frames[m.count // 2]
print("loudest bin at", round(float(grid[np.argmax(frame)])), "Hz")
print("floor value in silence:", cfg.floor_db)
