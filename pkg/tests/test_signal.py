import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qpnet.errors import DomainError
from qpnet.signal import (
    SynthSegment, SynthSpec, Waveform, bin_edges, class_center, mulaw_decode, mulaw_encode,
    read_wav, synth_utterance, write_wav,
)


def _encode_oracle(x):
    f = math.copysign(math.log(1 + 255 * abs(x)) / math.log(256), x)
    return min(255, max(0, math.floor((f + 1) / 2 * 256)))


class TestMuLaw:
    @pytest.mark.parametrize("x, code", [(0.0, 128), (1.0, 255), (0.5, 240), (-1.0, 0)])
    def test_encode_examples(self, x, code):
        assert mulaw_encode(x) == code

    def test_encode_matches_scalar_oracle(self):
        xs = np.linspace(-1, 1, 4001)
        assert np.array_equal(mulaw_encode(xs), [_encode_oracle(float(x)) for x in xs])

    def test_decode_center_bin_is_near_zero(self):
        edges = bin_edges()
        assert abs(mulaw_decode(128)) < edges[129] - edges[128]

    def test_decode_top_class(self):
        # bin centre of class 255 is F = 255.5/128 - 1; amplitude (256**F - 1)/255
        fhat = 255.5 / 128 - 1
        assert mulaw_decode(255) == pytest.approx((256 ** fhat - 1) / 255, abs=1e-12)
        assert mulaw_decode(255) == pytest.approx(0.978488, abs=1e-6)

    def test_round_trip_within_bin(self):
        xs = np.linspace(-1, 1, 200001)
        codes = mulaw_encode(xs)
        edges = bin_edges()
        width = edges[codes + 1] - edges[codes]
        assert np.all(np.abs(mulaw_decode(codes) - xs) <= width + 1e-12)

    @given(st.floats(-1, 1), st.floats(-1, 1))
    def test_monotone(self, a, b):
        lo, hi = min(a, b), max(a, b)
        assert mulaw_encode(lo) <= mulaw_encode(hi)

    @given(st.integers(0, 255))
    def test_decode_lands_in_its_own_bin(self, c):
        assert mulaw_encode(mulaw_decode(c)) == c

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            mulaw_encode(1.5)
        with pytest.raises(DomainError):
            mulaw_encode(np.array([0.0, np.nan]))
        with pytest.raises(DomainError):
            mulaw_decode(256)
        with pytest.raises(DomainError):
            class_center(-1)


class TestWav:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        x = np.round(rng.uniform(-1, 1, 1000) * 32767) / 32768
        write_wav(tmp_path / "a.wav", Waveform(x, 16000))
        w = read_wav(tmp_path / "a.wav")
        assert w.sample_rate == 16000
        assert np.array_equal(w.samples, x)

    def test_waveform_invariants(self):
        with pytest.raises(DomainError):
            Waveform(np.array([0.0, 1.2]), 16000)
        with pytest.raises(DomainError):
            Waveform(np.zeros(4), 0)


class TestSynth:
    def spec(self, **kw):
        base = dict(segments=[SynthSegment(0.3, 120, 180), SynthSegment(0.1, voiced=False),
                              SynthSegment(0.2, 200, 150)], noise_level=0.01, seed=7)
        base.update(kw)
        return SynthSpec(**base)

    def test_deterministic(self):
        a, ta = synth_utterance(self.spec())
        b, tb = synth_utterance(self.spec())
        assert np.array_equal(a.samples, b.samples)
        assert np.array_equal(ta.f0, tb.f0)

    def test_seed_changes_output(self):
        a, _ = synth_utterance(self.spec())
        b, _ = synth_utterance(self.spec(seed=8))
        assert not np.array_equal(a.samples, b.samples)

    def test_constant_f0_track(self):
        w, track = synth_utterance(SynthSpec([SynthSegment(0.5, 220, 220)], noise_level=0.0))
        assert np.all(track.voiced)
        assert np.allclose(track.f0, 220.0)
        assert len(track) == len(w) // track.frame_hop

    def test_peak_normalized(self):
        w, _ = synth_utterance(self.spec())
        assert np.max(np.abs(w.samples)) <= 1.0
        assert len(w) == round(0.6 * 16000)

    def test_unvoiced_frames_have_zero_f0(self):
        _, track = synth_utterance(self.spec())
        assert np.all(track.f0[~track.voiced] == 0)
        assert (~track.voiced).sum() > 10

    def test_f0_above_nyquist_rejected(self):
        with pytest.raises(DomainError):
            synth_utterance(SynthSpec([SynthSegment(0.1, 9000, 9000)], sample_rate=16000))
