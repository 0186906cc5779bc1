"""
Multichannel STFT analysis and weighted overlap-add synthesis.

Signals are zero padded by ``frame_size - hop`` at both ends so that every
input sample is covered by the full set of overlapping frames; frame ``t``
spans padded samples ``[t*hop, t*hop + frame_size)``.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError, ParameterError, ShapeError

__all__ = ["StftConfig", "Spectrogram", "stft_forward", "istft_inverse",
           "analysis_window", "synthesis_window", "frame_of_sample"]

WINDOWS = ("sqrt-hann", "hann", "rect")
COLA_TOL = 1e-10


def _hann(n):
    # periodic Hann, COLA at hop n/2
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


def analysis_window(config):
    n = config.frame_size
    if config.window == "sqrt-hann":
        return np.sqrt(_hann(n))
    if config.window == "hann":
        return _hann(n)
    return np.ones(n)


def synthesis_window(config):
    n = config.frame_size
    if config.window == "sqrt-hann":
        return np.sqrt(_hann(n))
    return np.ones(n)


@dataclass(frozen=True)
class StftConfig:
    frame_size: int = 1024
    hop: int = 512
    window: str = "sqrt-hann"
    sample_rate: float = 16000.0

    def __post_init__(self):
        n, hop = self.frame_size, self.hop
        if n < 2 or n & (n - 1):
            raise ParameterError(f"frame_size must be a power of two >= 2, got {n}")
        if hop < 1 or n % hop:
            raise ParameterError(f"hop must divide frame_size, got hop={hop}, frame_size={n}")
        if self.window not in WINDOWS:
            raise ParameterError(f"window must be one of {WINDOWS}, got {self.window!r}")
        if not self.sample_rate > 0:
            raise ParameterError(f"sample_rate must be positive, got {self.sample_rate}")
        olap = self.overlap_gain()
        if np.max(np.abs(olap - olap[0])) > COLA_TOL * max(1.0, olap[0]):
            raise ParameterError(f"{self.window} window pair is not COLA at hop {hop}")

    @property
    def n_bins(self):
        return self.frame_size // 2 + 1

    @property
    def pad(self):
        return self.frame_size - self.hop

    def overlap_gain(self):
        """Sum of shifted analysis*synthesis products over one hop period."""
        prod = analysis_window(self) * synthesis_window(self)
        return prod.reshape(-1, self.hop).sum(axis=0)

    def bin_frequencies(self):
        return np.arange(self.n_bins) * self.sample_rate / self.frame_size


@dataclass
class Spectrogram:
    """``data`` has shape (bins, frames, channels)."""
    data: np.ndarray
    config: StftConfig
    length: Optional[int] = None

    @property
    def n_frames(self):
        return self.data.shape[1]

    @property
    def n_channels(self):
        return self.data.shape[2]


def frame_of_sample(sample, config):
    """Index of the first frame whose centre lies at or after ``sample``."""
    return int(np.ceil((sample + config.pad - config.frame_size / 2) / config.hop))


def stft_forward(audio, config=StftConfig()):
    """
    Arguments:
        audio: (channels, samples) real array, samples >= frame_size
    Return:
        Spectrogram of shape (frame_size // 2 + 1, frames, channels)
    """
    audio = np.asarray(audio, dtype=np.float64)
    if audio.ndim == 1:
        audio = audio[None]
    if audio.ndim != 2:
        raise ShapeError(f"audio must be (channels, samples), got {audio.shape}")
    length = audio.shape[1]
    n, hop, pad = config.frame_size, config.hop, config.pad
    if length < n:
        raise DataError(f"audio has {length} samples, shorter than one frame ({n})")
    if not np.all(np.isfinite(audio)):
        raise DataError("audio contains non-finite samples")
    n_frames = int(np.ceil((length + pad) / hop))
    total = (n_frames - 1) * hop + n
    padded = np.zeros((audio.shape[0], total))
    padded[:, pad:pad + length] = audio
    frames = np.lib.stride_tricks.sliding_window_view(padded, n, axis=1)[:, ::hop]
    spec = np.fft.rfft(frames * analysis_window(config), axis=-1)
    return Spectrogram(np.ascontiguousarray(spec.transpose(2, 1, 0)), config, length)


def istft_inverse(spec, trim=True):
    """
    Weighted overlap-add resynthesis.

    With ``trim`` the analysis padding is removed and the output is cut to
    the original length (when known); without it the raw overlap-add buffer
    is returned.
    """
    config = spec.config
    data = np.asarray(spec.data)
    if data.ndim != 3 or data.shape[0] != config.n_bins:
        raise ShapeError(f"spectrogram must be ({config.n_bins}, frames, channels), got {data.shape}")
    n, hop = config.frame_size, config.hop
    data = data.copy()
    data[0] = data[0].real
    data[-1] = data[-1].real
    frames = np.fft.irfft(data.transpose(2, 1, 0), n=n, axis=-1)
    frames *= synthesis_window(config) / config.overlap_gain()[0]
    n_ch, n_frames = frames.shape[0], frames.shape[1]
    out = np.zeros((n_ch, (n_frames - 1) * hop + n))
    for t in range(n_frames):
        out[:, t * hop:t * hop + n] += frames[:, t]
    if not trim:
        return out
    out = out[:, config.pad:]
    if spec.length is not None:
        out = out[:, :spec.length]
    return out
