"""Mel cepstra, Mel Cepstral Distortion and the codec evaluation probes."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.fft import dct, idct

from .autoencoder import Corruption
from .codec import ModelBundle, decode_array, encode, model_bytes
from .errors import DimensionError
from .frontend import FrameMatrix
from .nn import forward

DEFAULT_ORDER = 25
MCD_SCALE = 10.0 / np.log(10.0)
LAMBDAS = (0.0, 0.25, 0.5, 0.75, 1.0)


def mel_cepstra(m, order: int = DEFAULT_ORDER) -> np.ndarray:
    """Orthonormal DCT-II of each Mel log-spectral frame, keeping c0..c(order-1)."""
    x = np.asarray(getattr(m, "frames", m), dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError("expected a T x D frame matrix")
    if order < 2 or order > x.shape[1]:
        raise ValueError(f"cepstral order {order} must lie in 2..{x.shape[1]}")
    if x.shape[0] == 0:
        return np.zeros((0, order))
    return dct(x, type=2, norm="ortho", axis=1)[:, :order]


def inverse_mel_cepstra(c, dim: int) -> np.ndarray:
    """Zero-pad cepstra to ``dim`` coefficients and invert the DCT."""
    c = np.asarray(c, dtype=np.float64)
    full = np.zeros((c.shape[0], dim))
    full[:, :c.shape[1]] = c
    return idct(full, type=2, norm="ortho", axis=1)


def mcd_per_frame(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise DimensionError(f"cepstra shapes differ: {a.shape} vs {b.shape}")
    diff = a[:, 1:] - b[:, 1:]
    return MCD_SCALE * np.sqrt(2.0 * np.sum(diff * diff, axis=1))


def mcd(a, b) -> float:
    """Frame-averaged Mel Cepstral Distortion in dB, c0 excluded."""
    d = mcd_per_frame(a, b)
    if d.size == 0:
        raise ValueError("cannot average distortion over zero frames")
    return float(d.mean())


@dataclass(frozen=True)
class UtteranceScore:
    utterance_id: str
    mcd_db: float
    frames: int


@dataclass(frozen=True)
class McdReport:
    per_utterance: tuple
    fingerprint: str = ""
    degradation: Optional[float] = None

    @property
    def total_frames(self) -> int:
        return sum(u.frames for u in self.per_utterance)

    @property
    def corpus_mean(self) -> float:
        total = self.total_frames
        if total == 0:
            return float("nan")
        return sum(u.mcd_db * u.frames for u in self.per_utterance) / total


def _fingerprint(bundle: ModelBundle, **fields) -> str:
    digest = hashlib.sha256(model_bytes(bundle)).hexdigest()[:12]
    parts = [f"model={digest}"] + [f"{k}={v}" for k, v in sorted(fields.items())]
    return ";".join(parts)


def _sorted_utterances(features: Iterable[FrameMatrix]) -> list:
    # aggregation order must not depend on the caller's ordering
    return sorted(enumerate(features), key=lambda p: (p[1].source_id, p[0]))


def _score(bundle: ModelBundle, features, order: int, corruption: Optional[Corruption]) -> list:
    sampler = corruption.sampler() if corruption is not None else None
    scores = []
    for _, m in _sorted_utterances(features):
        if m.dim != bundle.input_dim:
            raise DimensionError(f"{m.source_id}: width {m.dim} does not match model input {bundle.input_dim}")
        if m.count == 0:
            continue
        if sampler is None:
            codes = encode(bundle, m)
        else:
            z = sampler(bundle.norm.normalize(m.frames))
            codes = forward(bundle.encoder, z)
        recon = FrameMatrix(decode_array(bundle, codes))
        value = mcd(mel_cepstra(m, order), mel_cepstra(recon, order))
        scores.append(UtteranceScore(m.source_id, value, m.count))
    return scores


def analysis_resynthesis(bundle: ModelBundle, features: Sequence[FrameMatrix],
                         order: int = DEFAULT_ORDER) -> McdReport:
    """MCD between each utterance and its encode/decode reconstruction."""
    scores = _score(bundle, features, order, None)
    return McdReport(tuple(scores), _fingerprint(bundle, order=order, probe="resynth"))


def robustness_probe(bundle: ModelBundle, features: Sequence[FrameMatrix], corruption: Corruption,
                     order: int = DEFAULT_ORDER) -> McdReport:
    """Analysis-resynthesis with corrupted encoder input and clean reference.

    Corruption is applied to the normalized features, the domain the
    encoder operates in. ``degradation`` is the corpus-mean increase over
    the uncorrupted run.
    """
    features = list(features)
    clean = _score(bundle, features, order, None)
    noisy = _score(bundle, features, order, corruption)
    clean_mean = McdReport(tuple(clean)).corpus_mean
    report = McdReport(tuple(noisy), _fingerprint(bundle, order=order, probe="robustness",
                                                   corruption=str(corruption), seed=corruption.seed))
    return McdReport(report.per_utterance, report.fingerprint, report.corpus_mean - clean_mean)


@dataclass(frozen=True)
class InterpolationReport:
    lambdas: tuple
    deviations: np.ndarray  # (pairs, len(lambdas))
    pairs: tuple = field(default=())

    @property
    def interior(self) -> np.ndarray:
        return self.deviations[:, 1:-1]

    def summary(self) -> dict:
        d = self.interior
        if d.size == 0:
            return {"pairs": 0}
        return {
            "pairs": int(self.deviations.shape[0]),
            "mean": float(d.mean()),
            "median": float(np.median(d)),
            "p95": float(np.percentile(d, 95)),
            "max": float(d.max()),
        }


def interpolation_probe(bundle: ModelBundle, features: Sequence[FrameMatrix], n_pairs: int = 100,
                        seed: int = 0) -> InterpolationReport:
    """How far decoded code interpolations stray from the straight line.

    For frame pairs drawn from two different utterances, decode
    ``lam*e1 + (1-lam)*e2`` and measure its distance from
    ``lam*y1 + (1-lam)*y2`` (``y`` the decoded endpoints), divided by
    ``|y1 - y2|``.
    """
    utts = [m for _, m in _sorted_utterances(features) if m.count > 0]
    if len(utts) < 2:
        raise ValueError("interpolation probe needs at least two non-empty utterances")
    rng = np.random.default_rng(seed)
    lams = np.array(LAMBDAS)
    rows, picked = [], []
    for _ in range(n_pairs):
        i, j = rng.choice(len(utts), size=2, replace=False)
        ti = int(rng.integers(utts[i].count))
        tj = int(rng.integers(utts[j].count))
        x = np.stack([utts[i].frames[ti], utts[j].frames[tj]])
        e1, e2 = encode(bundle, x)
        path = decode_array(bundle, lams[:, None] * e1 + (1.0 - lams[:, None]) * e2)
        y1, y2 = path[-1], path[0]
        line = lams[:, None] * y1 + (1.0 - lams[:, None]) * y2
        span = np.linalg.norm(y1 - y2)
        dev = np.linalg.norm(path - line, axis=1)
        rows.append(dev / span if span > 0 else np.zeros_like(dev))
        picked.append((utts[i].source_id, ti, utts[j].source_id, tj))
    return InterpolationReport(tuple(LAMBDAS), np.array(rows), tuple(picked))


# ---------------------------------------------------------------------------
# Report files


def format_report(report: McdReport, title: str = "Analysis-resynthesis MCD") -> str:
    width = max([len("utterance")] + [len(u.utterance_id) for u in report.per_utterance])
    lines = [title, report.fingerprint, ""]
    lines.append(f"{'utterance':<{width}}  {'frames':>8}  {'mcd_db':>9}")
    for u in report.per_utterance:
        lines.append(f"{u.utterance_id:<{width}}  {u.frames:>8d}  {u.mcd_db:>9.4f}")
    lines.append(f"{'corpus_mean':<{width}}  {report.total_frames:>8d}  {report.corpus_mean:>9.4f}")
    if report.degradation is not None:
        lines.append(f"degradation vs clean: {report.degradation:+.4f} dB")
    return "\n".join(lines) + "\n"


def write_report(report: McdReport, prefix, title: str = "Analysis-resynthesis MCD") -> tuple:
    prefix = Path(prefix)
    txt = prefix.with_suffix(".txt")
    out_csv = prefix.with_suffix(".csv")
    txt.write_text(format_report(report, title))
    with open(out_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["utterance_id", "frames", "mcd_db"])
        for u in report.per_utterance:
            w.writerow([u.utterance_id, u.frames, repr(u.mcd_db)])
        w.writerow(["corpus_mean", report.total_frames, repr(report.corpus_mean)])
    return txt, out_csv


def read_report_csv(path) -> McdReport:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    scores = [UtteranceScore(r["utterance_id"], float(r["mcd_db"]), int(r["frames"]))
              for r in rows if r["utterance_id"] != "corpus_mean"]
    return McdReport(tuple(scores))


def write_interpolation_report(report: InterpolationReport, prefix) -> tuple:
    prefix = Path(prefix)
    txt = prefix.with_suffix(".txt")
    out_csv = prefix.with_suffix(".csv")
    stats = report.summary()
    lines = ["Interpolation smoothness (deviation / endpoint distance, interior lambdas)"]
    lines += [f"{k}: {v}" for k, v in stats.items()]
    txt.write_text("\n".join(lines) + "\n")
    with open(out_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pair", "lambda", "deviation"])
        for p, row in enumerate(report.deviations):
            for lam, dev in zip(report.lambdas, row):
                w.writerow([p, lam, repr(float(dev))])
    return txt, out_csv
