import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from segbeam.errors import DataError, ParameterError, ShapeError
from segbeam.stft import (Spectrogram, StftConfig, analysis_window, frame_of_sample,
                          istft_inverse, stft_forward)


@pytest.mark.parametrize("window", ["sqrt-hann", "hann", "rect"])
@pytest.mark.parametrize("frame,hop", [(1024, 512), (256, 64), (64, 32)])
def test_perfect_reconstruction(window, frame, hop):
    cfg = StftConfig(frame_size=frame, hop=hop, window=window)
    x = np.random.default_rng(0).standard_normal((3, 5000))
    y = istft_inverse(stft_forward(x, cfg))
    assert y.shape == x.shape
    assert np.max(np.abs(y - x)) <= 1e-10


@given(st.integers(1024, 4000), st.integers(0, 1000))
@settings(max_examples=20, deadline=None)
def test_reconstruction_any_length(n, seed):
    x = np.random.default_rng(seed).standard_normal(n)
    assert np.max(np.abs(istft_inverse(stft_forward(x))[0] - x)) <= 1e-10


def test_layout_and_frame_count():
    cfg = StftConfig()
    spec = stft_forward(np.zeros((2, 16000)), cfg)
    assert spec.data.shape == (513, int(np.ceil((16000 + 512) / 512)), 2)
    assert spec.n_channels == 2 and spec.length == 16000


def test_tone_lands_in_its_bin():
    cfg = StftConfig(sample_rate=16000)
    k = 64
    t = np.arange(16000)
    spec = stft_forward(np.cos(2 * np.pi * k * 16000 / 1024 * t / 16000), cfg)
    mid = np.abs(spec.data[:, 10, 0])
    assert int(np.argmax(mid)) == k


def test_untrimmed_buffer_contains_padding():
    cfg = StftConfig(frame_size=64, hop=32)
    x = np.random.default_rng(1).standard_normal(200)
    raw = istft_inverse(stft_forward(x, cfg), trim=False)[0]
    assert np.allclose(raw[cfg.pad:cfg.pad + 200], x, atol=1e-12)


def test_frame_of_sample_centre_convention():
    cfg = StftConfig()
    # frame t is centred at padded sample t*hop + N/2, i.e. signal sample t*hop + hop - N/2 + ... 
    for s in (0, 511, 512, 64000):
        t = frame_of_sample(s, cfg)
        centre = t * cfg.hop + cfg.frame_size / 2 - cfg.pad
        assert centre >= s and centre - cfg.hop < s


@pytest.mark.parametrize("kw", [dict(frame_size=1000), dict(hop=300), dict(window="kaiser"),
                                dict(sample_rate=0.0), dict(frame_size=1024, hop=1024, window="hann")])
def test_config_validation(kw):
    with pytest.raises(ParameterError):
        StftConfig(**kw)


def test_input_errors():
    with pytest.raises(DataError):
        stft_forward(np.zeros(100))
    with pytest.raises(DataError):
        stft_forward(np.full(2048, np.nan))
    with pytest.raises(ShapeError):
        stft_forward(np.zeros((1, 2, 2048)))
    with pytest.raises(ShapeError):
        istft_inverse(Spectrogram(np.zeros((10, 4, 1)), StftConfig()))


def test_windows():
    cfg = StftConfig()
    w = analysis_window(cfg)
    assert w[0] == 0 and w[512] == pytest.approx(1.0)
    assert np.allclose(cfg.overlap_gain(), 1.0)
