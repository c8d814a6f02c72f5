import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from melcode.autoencoder import Corruption
from melcode.codec import identity_bundle
from melcode.errors import DimensionError
from melcode.evaluation import (
    LAMBDAS,
    McdReport,
    UtteranceScore,
    analysis_resynthesis,
    interpolation_probe,
    inverse_mel_cepstra,
    mcd,
    mcd_per_frame,
    mel_cepstra,
    read_report_csv,
    robustness_probe,
    write_interpolation_report,
    write_report,
)
from melcode.frontend import FrameMatrix
from melcode.synthetic import SPEAKER_B, toy_corpus

from .oracles import brute_dct_ortho, brute_mcd


class TestCepstra:
    def test_constant_spectrum(self):
        c = mel_cepstra(np.full((2, 257), 3.0), 25)
        assert c.shape == (2, 25)
        assert np.allclose(c[:, 0], 3.0 * math.sqrt(257), rtol=1e-12)
        assert np.max(np.abs(c[:, 1:])) < 1e-12

    def test_linear(self, rng):
        a, b = rng.standard_normal((2, 4, 40))
        assert np.allclose(mel_cepstra(a + b, 20), mel_cepstra(a, 20) + mel_cepstra(b, 20), atol=1e-12)

    def test_matches_defining_sum(self, rng):
        x = rng.standard_normal((3, 33))
        assert np.allclose(mel_cepstra(x, 33), brute_dct_ortho(x), rtol=1e-12, atol=1e-12)

    def test_full_order_inverts(self, rng):
        x = rng.normal(0, 4, (6, 257))
        back = inverse_mel_cepstra(mel_cepstra(x, 257), 257)
        assert np.max(np.abs(back - x) / np.abs(x).max()) < 1e-9

    def test_order_above_dim(self):
        with pytest.raises(ValueError):
            mel_cepstra(np.zeros((1, 10)), 11)

    def test_empty(self):
        assert mel_cepstra(np.zeros((0, 30)), 25).shape == (0, 25)


class TestMcd:
    def test_identical_is_zero(self, rng):
        c = rng.standard_normal((5, 25))
        assert mcd(c, c) == 0.0

    def test_unit_difference(self):
        a = np.zeros((1, 25))
        b = a.copy()
        b[0, 3] = 1.0
        assert mcd(a, b) == pytest.approx(10.0 / math.log(10.0) * math.sqrt(2.0), rel=1e-14)
        assert mcd(a, b) == pytest.approx(6.14185, abs=1e-5)

    def test_c0_ignored(self):
        a = np.zeros((1, 25))
        b = a.copy()
        b[0, 0] = 10.0
        assert mcd(a, b) == 0.0

    def test_homogeneous(self, rng):
        a, b = rng.standard_normal((2, 7, 25))
        assert np.allclose(mcd_per_frame(a, a + 2 * (b - a)), 2 * mcd_per_frame(a, b), rtol=1e-12)

    def test_matches_brute_force(self, rng):
        for _ in range(100):
            t = int(rng.integers(1, 6))
            a, b = rng.normal(0, 3, (2, t, 25))
            assert mcd(a, b) == pytest.approx(brute_mcd(a, b), rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            mcd(np.zeros((2, 25)), np.zeros((3, 25)))

    def test_constant_shift_invariant(self, rng):
        x, y = rng.normal(0, 5, (2, 10, 64))
        base = mcd(mel_cepstra(x), mel_cepstra(y))
        shifted = mcd(mel_cepstra(x + 7.5), mel_cepstra(y + 7.5))
        assert shifted == pytest.approx(base, rel=1e-9)

    @given(arrays(np.float64, (3, 4, 6), elements=st.floats(-100, 100)))
    @settings(max_examples=60, deadline=None)
    def test_pseudometric(self, triple):
        a, b, c = triple
        ab, bc, ac = mcd_per_frame(a, b), mcd_per_frame(b, c), mcd_per_frame(a, c)
        assert np.all(ab >= 0)
        assert np.array_equal(ab, mcd_per_frame(b, a))
        assert not mcd_per_frame(a, a).any()
        assert np.all(ac <= ab + bc + 1e-9 * (1 + ab + bc))


def held(n=6, frames=15, seed=3):
    return toy_corpus(n, frames, 32, seed=seed, prefix="h")


class TestAnalysisResynthesis:
    def test_identity_codec_is_lossless(self):
        report = analysis_resynthesis(identity_bundle(32), held())
        assert report.corpus_mean == 0.0
        assert all(u.mcd_db == 0.0 for u in report.per_utterance)

    def test_corpus_mean_is_frame_weighted(self, toy_model):
        utts = toy_corpus(3, 10, 32, seed=5) + toy_corpus(2, 31, 32, seed=6, prefix="long")
        report = analysis_resynthesis(toy_model.bundle, utts)
        hand = sum(u.mcd_db * u.frames for u in report.per_utterance) / sum(u.frames for u in report.per_utterance)
        assert report.corpus_mean == pytest.approx(hand, rel=1e-15)
        assert report.total_frames == 3 * 10 + 2 * 31
        assert all(u.mcd_db >= 0 for u in report.per_utterance)

    def test_per_utterance_definition(self, toy_model):
        from melcode.codec import decode, encode
        m = held(1)[0]
        recon = decode(toy_model.bundle, encode(toy_model.bundle, m))
        expected = mcd(mel_cepstra(m), mel_cepstra(recon))
        assert analysis_resynthesis(toy_model.bundle, [m]).corpus_mean == expected

    def test_order_independent(self, toy_model):
        utts = held()
        a = analysis_resynthesis(toy_model.bundle, utts)
        b = analysis_resynthesis(toy_model.bundle, utts[::-1])
        assert a == b

    def test_cross_speaker_is_worse(self, toy_model):
        own = analysis_resynthesis(toy_model.bundle, held())
        other = analysis_resynthesis(toy_model.bundle, toy_corpus(6, 15, 32, SPEAKER_B, seed=3))
        assert other.corpus_mean > own.corpus_mean

    def test_dimension_mismatch(self, toy_model):
        with pytest.raises(DimensionError):
            analysis_resynthesis(toy_model.bundle, [FrameMatrix(np.zeros((3, 31)), "x")])

    def test_fingerprint_names_model(self, toy_model):
        fp = analysis_resynthesis(toy_model.bundle, held(2)).fingerprint
        assert fp.startswith("model=") and "order=25" in fp


class TestRobustness:
    def test_zero_corruption_matches_resynthesis(self, toy_model):
        utts = held()
        clean = analysis_resynthesis(toy_model.bundle, utts)
        probe = robustness_probe(toy_model.bundle, utts, Corruption("masking", 0.0, 4))
        assert probe.per_utterance == clean.per_utterance
        assert probe.degradation == 0.0

    def test_degradation_non_negative_on_average(self, toy_model):
        utts = held(12)
        values = [robustness_probe(toy_model.bundle, utts, Corruption("masking", 0.3, s)).degradation
                  for s in range(5)]
        assert np.mean(values) >= 0

    def test_trained_beats_identity(self, toy_model):
        utts = held(12)
        c = Corruption("masking", 0.3, 0)
        trained = robustness_probe(toy_model.bundle, utts, c).degradation
        ident = robustness_probe(identity_bundle(32), utts, c).degradation
        assert trained < ident

    def test_corruption_seed_matters(self, toy_model):
        utts = held(4)
        a = robustness_probe(toy_model.bundle, utts, Corruption("masking", 0.3, 0))
        b = robustness_probe(toy_model.bundle, utts, Corruption("masking", 0.3, 1))
        assert a.corpus_mean != b.corpus_mean
        assert a == robustness_probe(toy_model.bundle, utts, Corruption("masking", 0.3, 0))


class TestInterpolation:
    def test_shape_and_endpoints(self, toy_model):
        report = interpolation_probe(toy_model.bundle, held(), n_pairs=20)
        assert report.lambdas == LAMBDAS
        assert report.deviations.shape == (20, 5)
        assert not report.deviations[:, 0].any()
        assert not report.deviations[:, -1].any()
        assert report.summary()["pairs"] == 20

    def test_pairs_cross_utterances(self, toy_model):
        report = interpolation_probe(toy_model.bundle, held(), n_pairs=30)
        assert all(a != b for a, _, b, _ in report.pairs)

    def test_equal_codes(self):
        same = FrameMatrix(np.ones((3, 8)), "a"), FrameMatrix(np.ones((3, 8)), "b")
        report = interpolation_probe(identity_bundle(8), same, n_pairs=5)
        assert not report.deviations.any()

    def test_identity_decoder_is_straight(self, rng):
        utts = [FrameMatrix(rng.standard_normal((4, 8)), f"u{k}") for k in range(3)]
        report = interpolation_probe(identity_bundle(8), utts, n_pairs=10)
        assert report.summary()["max"] < 1e-6

    def test_needs_two_utterances(self, toy_model):
        with pytest.raises(ValueError):
            interpolation_probe(toy_model.bundle, held(1))

    def test_report_files(self, toy_model, tmp_path):
        report = interpolation_probe(toy_model.bundle, held(), n_pairs=4)
        txt, out = write_interpolation_report(report, tmp_path / "interp")
        rows = list(csv.reader(open(out)))
        assert rows[0] == ["pair", "lambda", "deviation"]
        assert len(rows) == 1 + 4 * 5
        assert "median" in txt.read_text()


class TestReportFiles:
    def test_csv_layout(self, tmp_path):
        report = McdReport((UtteranceScore("a", 1.0, 10), UtteranceScore("b", 4.0, 30)), "fp")
        txt, out = write_report(report, tmp_path / "r")
        rows = list(csv.reader(open(out)))
        assert rows[0] == ["utterance_id", "frames", "mcd_db"]
        assert rows[-1] == ["corpus_mean", "40", repr(3.25)]
        assert "fp" in txt.read_text()
        assert read_report_csv(out).per_utterance == report.per_utterance
