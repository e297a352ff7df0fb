import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roadfusion import audio
from roadfusion.core import ErrorKind, PipelineError
from oracles import hand_wav, reference_filterbank, reference_log_mel


def sine(freq, n, rate=16000, amp=0.5):
    return amp * np.sin(2 * np.pi * freq * np.arange(n) / rate)


def test_decode_hand_encoded_wav():
    data = hand_wav([0, 16384, -16384, 32767], 8000)
    assert len(data) == 44 + 8
    clip = audio.decode_wav(data)
    assert clip.sample_rate == 8000 and clip.channels == 1
    np.testing.assert_allclose(clip.samples, [0.0, 0.5, -0.5, 32767 / 32768], atol=1e-12)


def test_decode_stereo_interleaving():
    clip = audio.decode_wav(hand_wav([100, -100, 200, -200], 16000, channels=2))
    assert clip.samples.shape == (2, 2)
    np.testing.assert_allclose(audio.to_mono(clip).samples, [0.0, 0.0])


def test_decode_rejects_non_riff():
    data = bytearray(hand_wav([1, 2], 16000))
    data[:4] = b"RIFX"
    with pytest.raises(PipelineError) as exc:
        audio.decode_wav(bytes(data))
    assert exc.value.kind is ErrorKind.DECODE


def test_decode_empty_data_chunk():
    with pytest.raises(PipelineError) as exc:
        audio.decode_wav(hand_wav([], 16000))
    assert exc.value.kind is ErrorKind.EMPTY


def test_decode_rejects_8_bit():
    import struct
    fmt = struct.pack("<HHIIHH", 1, 1, 8000, 8000, 1, 8)
    body = b"WAVEfmt " + struct.pack("<I", 16) + fmt + b"data" + struct.pack("<I", 2) + b"\x80\x90"
    with pytest.raises(PipelineError) as exc:
        audio.decode_wav(b"RIFF" + struct.pack("<I", len(body)) + body)
    assert exc.value.kind is ErrorKind.DECODE


def test_wav_roundtrip():
    x = np.round(sine(440, 1000) * 32768) / 32768
    np.testing.assert_array_equal(audio.decode_wav(audio.encode_wav(x, 16000)).samples, x)


def test_to_mono_averages_channels():
    clip = audio.AudioClip(np.array([[0.2, 0.4], [-1.0, 1.0]]), 16000)
    np.testing.assert_allclose(audio.to_mono(clip).samples, [0.3, 0.0])


def test_resample_from_32k():
    clip = audio.AudioClip(sine(1000, 8000, rate=32000), 32000)
    out = audio.resample_to_16k(clip)
    assert out.sample_rate == 16000 and len(out) == 4000
    assert np.max(np.abs(out.samples - sine(1000, 4000))) < 0.01


def test_resample_lengths_and_identity():
    assert len(audio.resample_to_16k(audio.AudioClip(np.zeros(48000), 48000))) == 16000
    x = sine(300, 1234)
    np.testing.assert_array_equal(audio.resample_to_16k(audio.AudioClip(x, 16000)).samples, x)
    with pytest.raises(PipelineError) as exc:
        audio.resample_to_16k(audio.AudioClip(np.zeros(10), 4000))
    assert exc.value.kind is ErrorKind.CONFIG


@pytest.mark.parametrize("n, count", [(16000, 1), (8000, 1), (40000, 3)])
def test_framing_counts_and_padding(n, count):
    x = np.linspace(-1, 1, n)
    frames = audio.frame_one_second(audio.AudioClip(x, 16000))
    assert len(frames) == count
    joined = np.concatenate([f.samples for f in frames])
    np.testing.assert_array_equal(joined[:n], x)
    assert not joined[n:].any()
    assert [f.source_offset for f in frames] == [16000 * i for i in range(count)]


def test_silence_hits_the_floor():
    spec = audio.mel_spectrogram(np.zeros(16000))
    assert spec.values.shape == (98, 64)
    np.testing.assert_allclose(spec.values, math.log(1e-6))


def test_1khz_tone_peaks_at_nearest_center():
    cfg = audio.SpectrogramConfig()
    spec = audio.mel_spectrogram(sine(1000, 16000), cfg).values
    nearest = int(np.argmin(np.abs(audio.mel_center_frequencies(cfg) - 1000)))
    assert nearest == 19
    assert np.all(np.argmax(spec, axis=1) == nearest)


def test_filterbank_matches_loop_oracle():
    cfg = audio.SpectrogramConfig()
    np.testing.assert_allclose(audio.mel_filterbank(cfg), reference_filterbank(16000, 512, 64, 125.0, 7500.0),
                               atol=1e-12)


def test_filterbank_tiles_band():
    fb = audio.mel_filterbank(audio.SpectrogramConfig())
    assert fb.min() >= 0 and fb.max() <= 1
    assert np.all(fb.sum(axis=1) > 0)
    # adjacent triangles overlap so that inside the band the weights sum to ~1
    centers = audio.mel_center_frequencies(audio.SpectrogramConfig())
    bins = np.arange(257) * 16000 / 512
    inside = (bins > centers[0]) & (bins < centers[-1])
    np.testing.assert_allclose(fb[:, inside].sum(axis=0), 1.0, atol=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_log_mel_matches_direct_dft(seed):
    x = np.random.default_rng(seed).uniform(-1, 1, 16000)
    got = audio.mel_spectrogram(x).values
    want = reference_log_mel(x)
    np.testing.assert_allclose(got, want, rtol=1e-6)


def test_frame_count_formula():
    for window, hop in [(400, 160), (256, 128), (512, 100)]:
        cfg = audio.SpectrogramConfig(window_length=window, hop_length=hop)
        assert audio.mel_spectrogram(np.ones(16000) * 0.1, cfg).values.shape[0] == 1 + (16000 - window) // hop


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 4.0), st.integers(0, 1000))
def test_gain_shifts_log_mel_by_twice_log(c, seed):
    x = np.random.default_rng(seed).uniform(-0.2, 0.2, 16000)
    a = audio.mel_spectrogram(x).values
    b = audio.mel_spectrogram(c * x).values
    above = (a > math.log(1e-6) + 1) & (b > math.log(1e-6) + 1)
    np.testing.assert_allclose((b - a)[above], 2 * math.log(c), atol=1e-9)


def test_spectrogram_is_deterministic():
    x = np.random.default_rng(5).uniform(-1, 1, 16000)
    assert audio.mel_spectrogram(x).values.tobytes() == audio.mel_spectrogram(x).values.tobytes()


def test_config_validation():
    with pytest.raises(PipelineError):
        audio.SpectrogramConfig(window_length=600, fft_size=512)
    with pytest.raises(PipelineError):
        audio.SpectrogramConfig(freq_max=9000)


def test_srsm_roundtrip_and_layout():
    m = np.arange(6, dtype=np.float32).reshape(2, 3)
    blob = audio.encode_matrix(m)
    assert blob[:4] == b"SRSM" and blob[4:12] == b"\x02\x00\x00\x00\x03\x00\x00\x00"
    assert len(blob) == 12 + 24
    np.testing.assert_array_equal(audio.decode_matrix(blob), m)
    with pytest.raises(PipelineError):
        audio.decode_matrix(blob[:-1])


def test_noise_level_matches_request():
    x = sine(500, 16000, amp=0.1)
    np.testing.assert_array_equal(audio.add_noise(x, 0.0), x)
    y = audio.add_noise(x, 1.0, seed=3)
    ratio = np.sqrt(np.mean((y - x) ** 2)) / np.sqrt(np.mean(x ** 2))
    assert abs(ratio - 1.0) < 0.05
    np.testing.assert_array_equal(y, audio.add_noise(x, 1.0, seed=3))
