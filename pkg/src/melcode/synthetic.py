"""Synthetic log-spectral corpora for desk-scale experiments.

Each frame is the log of a smoothed harmonic spectrum: partials at
multiples of a random fundamental, blurred by a Gaussian kernel, weighted
by a random spectral tilt and a random overall gain. A "speaker" fixes the
ranges the per-frame parameters are drawn from, so two speakers occupy
different regions of the same spectral space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frontend import FrameMatrix


@dataclass(frozen=True)
class Speaker:
    f0_range: tuple = (0.08, 0.25)    # fraction of Nyquist
    tilt_range: tuple = (1.0, 4.0)    # decay rate of partial amplitudes
    gain_range: tuple = (0.0, 0.0)    # natural-log offset
    width: float = 0.03               # blur of each partial, fraction of Nyquist
    floor: float = 1e-3


SPEAKER_A = Speaker()
SPEAKER_B = Speaker(f0_range=(0.05, 0.12), tilt_range=(4.0, 7.0), gain_range=(-1.0, 0.0))


def harmonic_log_spectra(n_frames: int, dim: int = 32, speaker: Speaker = SPEAKER_A,
                         seed: int = 0) -> np.ndarray:
    """(n_frames, dim) array of smooth log spectra."""
    rng = np.random.default_rng(seed)
    freq = np.linspace(0.0, 1.0, dim)
    f0 = rng.uniform(*speaker.f0_range, size=n_frames)
    tilt = rng.uniform(*speaker.tilt_range, size=n_frames)
    gain = rng.uniform(*speaker.gain_range, size=n_frames)
    out = np.empty((n_frames, dim))
    for t in range(n_frames):
        h = np.arange(1, int(1.0 / f0[t]) + 1) * f0[t]
        amp = np.exp(-tilt[t] * h)
        spec = (amp[:, None] * np.exp(-0.5 * ((freq[None, :] - h[:, None]) / speaker.width) ** 2)).sum(0)
        out[t] = np.log(spec + speaker.floor) + gain[t]
    return out


def toy_corpus(n_utterances: int, frames_per_utterance: int, dim: int = 32,
               speaker: Speaker = SPEAKER_A, seed: int = 0, prefix: str = "utt") -> list:
    """A list of FrameMatrix utterances drawn from one speaker."""
    seeds = np.random.SeedSequence(seed).generate_state(n_utterances)
    return [
        FrameMatrix(harmonic_log_spectra(frames_per_utterance, dim, speaker, int(s)),
                    f"{prefix}{i:03d}")
        for i, s in enumerate(seeds)
    ]
