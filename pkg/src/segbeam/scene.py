"""
Free-field multichannel scene simulator.

Each source is rendered to every sensor with a 1/r gain and a fractional
delay (64-tap Kaiser-windowed sinc). Moving sources are piecewise static:
position changes are applied with a short linear crossfade, and every
interferer position change is reported as a ground-truth change point.
Source image gains are normalized so that each source reaches the reference
sensor at its nominal ``level_db``.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal as sps

from .errors import ParameterError

__all__ = [
    "ArrayGeometry", "SourceTrack", "SceneSpec", "SceneOutput",
    "steering_freefield", "render_scene", "circular_array", "linear_array",
    "fractional_delay", "speech_like", "demo_scene"
]

SOUND_SPEED = 343.0
SIGNALS = ("speech", "noise", "tone", "file")
FD_TAPS = 64
FD_BETA = 8.0
CROSSFADE_S = 0.010
MIN_DISTANCE = 1e-3


@dataclass
class ArrayGeometry:
    positions: np.ndarray
    sound_speed: float = SOUND_SPEED

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise ParameterError(f"geometry.positions must be a non-empty list of 3-vectors, got shape {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ParameterError("geometry.positions contains non-finite coordinates")
        gaps = np.linalg.norm(pos[:, None] - pos[None], axis=-1) + np.eye(len(pos))
        if np.any(gaps < 1e-9):
            raise ParameterError("geometry.positions contains coincident sensors")
        if not self.sound_speed > 0:
            raise ParameterError(f"geometry.sound_speed must be positive, got {self.sound_speed}")
        self.positions = pos

    @property
    def n_sensors(self):
        return self.positions.shape[0]


def circular_array(n, radius, center=(0.0, 0.0, 0.0), sound_speed=SOUND_SPEED):
    """Uniform circular array in the horizontal plane."""
    phi = 2 * np.pi * np.arange(n) / n
    pos = np.asarray(center, dtype=float) + radius * np.stack(
        [np.cos(phi), np.sin(phi), np.zeros(n)], axis=1)
    return ArrayGeometry(pos, sound_speed)


def linear_array(n, spacing, center=(0.0, 0.0, 0.0), sound_speed=SOUND_SPEED):
    """Uniform linear array along x."""
    x = (np.arange(n) - (n - 1) / 2) * spacing
    pos = np.asarray(center, dtype=float) + np.stack([x, np.zeros(n), np.zeros(n)], axis=1)
    return ArrayGeometry(pos, sound_speed)


@dataclass
class SourceTrack:
    """
    Piecewise-static source. ``segments`` holds (start_sample, position)
    pairs; the first must start at 0.
    """
    segments: List[Tuple[int, Sequence[float]]]
    signal: str = "speech"
    level_db: float = 0.0
    tone_hz: float = 1000.0
    path: Optional[str] = None

    def __post_init__(self):
        if not self.segments:
            raise ParameterError("source.segments must not be empty")
        segs = []
        for start, pos in self.segments:
            pos = np.asarray(pos, dtype=float)
            if pos.shape != (3,) or not np.all(np.isfinite(pos)):
                raise ParameterError(f"source position must be a finite 3-vector, got {pos}")
            segs.append((int(start), pos))
        starts = [s for s, _ in segs]
        if starts[0] != 0:
            raise ParameterError("source.segments must start at sample 0")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ParameterError("source.segments starts must be strictly increasing")
        if self.signal not in SIGNALS:
            raise ParameterError(f"source.signal must be one of {SIGNALS}, got {self.signal!r}")
        if self.signal == "file" and not self.path:
            raise ParameterError("source.path is required for signal='file'")
        self.segments = segs

    @property
    def starts(self):
        return [s for s, _ in self.segments]


@dataclass
class SceneSpec:
    geometry: ArrayGeometry
    target: SourceTrack
    interferers: List[SourceTrack] = field(default_factory=list)
    noise_level_db: float = -30.0
    duration_s: float = 10.0
    sample_rate: float = 16000.0
    seed: int = 0

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ParameterError(f"scene.sample_rate must be positive, got {self.sample_rate}")
        if not self.duration_s > 0:
            raise ParameterError(f"scene.duration_s must be positive, got {self.duration_s}")
        if len(self.target.segments) != 1:
            raise ParameterError("scene.target must be static (one segment)")
        n = self.n_samples
        for k, src in enumerate(self.interferers):
            if src.starts[-1] >= n:
                raise ParameterError(f"interferer {k} has a segment starting beyond duration_s")

    @property
    def n_samples(self):
        return int(round(self.duration_s * self.sample_rate))


@dataclass
class SceneOutput:
    mixture: np.ndarray
    target_image: np.ndarray
    interference_image: np.ndarray
    noise: np.ndarray
    true_changes: List[int]
    true_steering: np.ndarray
    sample_rate: float


def _distances(geometry, source_pos):
    r = np.linalg.norm(geometry.positions - np.asarray(source_pos, dtype=float), axis=1)
    if np.any(r < MIN_DISTANCE):
        raise ParameterError("source coincides with a sensor (distance < 1 mm)")
    return r


def steering_freefield(geometry, source_pos, freq_hz, reference_index=0):
    """
    Spherical-wave relative transfer function
    ``(r_ref / r_m) * exp(-2j*pi*f*(r_m - r_ref)/c)``.

    ``freq_hz`` may be a scalar or an array; the result has shape
    ``freq.shape + (n_sensors,)`` and is exactly 1 at the reference sensor.
    """
    freq = np.asarray(freq_hz, dtype=float)
    if np.any(freq < 0):
        raise ParameterError("frequency must be non-negative")
    if not 0 <= reference_index < geometry.n_sensors:
        raise ParameterError(f"reference_index {reference_index} out of range")
    r = _distances(geometry, source_pos)
    dr = r - r[reference_index]
    sv = (r[reference_index] / r) * np.exp(-2j * np.pi * freq[..., None] * dr / geometry.sound_speed)
    sv[..., reference_index] = 1.0
    return sv


def _fd_kernel(frac):
    k = np.arange(-FD_TAPS // 2 + 1, FD_TAPS // 2 + 1) - frac
    half = FD_TAPS / 2 + 0.5
    h = np.sinc(k) * np.i0(FD_BETA * np.sqrt(1 - (k / half) ** 2)) / np.i0(FD_BETA)
    return h / h.sum()


def fractional_delay(x, delay, out_start, out_stop):
    """
    Samples ``out_start:out_stop`` of ``x`` delayed by ``delay`` (possibly
    fractional) samples; ``x`` is taken as zero outside its support.
    """
    di = int(np.floor(delay))
    h = _fd_kernel(delay - di)
    half = FD_TAPS // 2
    # y[t] = sum_k h[k] x[t - di - k], k = -half+1 .. half
    lo = out_start - di - half
    hi = out_stop - di + half - 1
    seg = np.zeros(hi - lo)
    a, b = max(lo, 0), min(hi, len(x))
    if b > a:
        seg[a - lo:b - lo] = x[a:b]
    return np.convolve(seg, h, mode="valid")


def speech_like(n, fs, rng):
    """
    Unit-RMS speech-like noise: white noise through two slowly gliding
    resonators with a 4 Hz syllabic envelope.
    """
    block = max(1, int(0.01 * fs))
    n_blocks = -(-n // block)
    t_blk = np.arange(n_blocks) * block / fs
    ph = rng.uniform(0, 2 * np.pi, 4)
    f1 = 550 + 250 * np.sin(2 * np.pi * 0.7 * t_blk + ph[0])
    f2 = 1700 + 600 * np.sin(2 * np.pi * 0.45 * t_blk + ph[1])
    exc = rng.standard_normal(n_blocks * block)
    out = np.empty_like(exc)
    zi = np.zeros(4)
    for b in range(n_blocks):
        a = np.array([1.0])
        for fc, bw in ((f1[b], 160.0), (f2[b], 250.0)):
            r = np.exp(-np.pi * bw / fs)
            a = np.convolve(a, [1.0, -2 * r * np.cos(2 * np.pi * fc / fs), r * r])
        sl = slice(b * block, (b + 1) * block)
        out[sl], zi = sps.lfilter([1.0], a, exc[sl], zi=zi)
    out = out[:n]
    out = sps.lfilter([1.0, -0.9], [1.0], out)
    t = np.arange(n) / fs
    rate = 4.0 + 0.5 * np.sin(2 * np.pi * 0.13 * t + ph[2])
    env = 1.0 + 0.7 * np.sin(2 * np.pi * np.cumsum(rate) / fs + ph[3])
    out *= env
    return out / np.sqrt(np.mean(out ** 2))


def _source_signal(src, n, fs, rng):
    if src.signal == "speech":
        s = speech_like(n, fs, rng)
    elif src.signal == "noise":
        s = rng.standard_normal(n)
    elif src.signal == "tone":
        s = np.sqrt(2) * np.sin(2 * np.pi * src.tone_hz * np.arange(n) / fs + rng.uniform(0, 2 * np.pi))
    else:
        from .io import read_wav
        buf = read_wav(src.path)
        if buf.sample_rate != fs:
            raise ParameterError(f"{src.path}: sample rate {buf.sample_rate} differs from scene {fs}")
        s = np.resize(buf.samples[0], n)
        rms = np.sqrt(np.mean(s ** 2))
        if rms == 0:
            raise ParameterError(f"{src.path}: source file is silent")
        s = s / rms
    return s * 10 ** (src.level_db / 20)


def _render_source(src, sig, geometry, fs, n, reference_index):
    image = np.zeros((geometry.n_sensors, n))
    fade = max(1, int(round(CROSSFADE_S * fs)))
    starts = src.starts + [n]
    for k, (start, pos) in enumerate(src.segments):
        stop = min(n, starts[k + 1] + fade) if k + 1 < len(src.segments) else n
        lo, hi = start, stop
        weight = np.ones(hi - lo)
        if k > 0:
            m = min(fade, hi - lo)
            weight[:m] = (np.arange(m) + 0.5) / fade
        if k + 1 < len(src.segments):
            b = starts[k + 1] - lo
            m = hi - lo - b
            weight[b:] = 1.0 - (np.arange(m) + 0.5) / fade
        r = _distances(geometry, pos)
        gains = r[reference_index] / r
        delays = r / geometry.sound_speed * fs
        for m_idx in range(geometry.n_sensors):
            image[m_idx, lo:hi] += gains[m_idx] * weight * fractional_delay(sig, delays[m_idx], lo, hi)
    return image


def render_scene(spec, frame_size=1024, reference_index=0):
    """
    Render a scene deterministically from ``spec.seed``.

    Return:
        SceneOutput with mixture = target + interference + noise and the
        target steering evaluated at the one-sided STFT bin frequencies.
    """
    geometry, fs, n = spec.geometry, spec.sample_rate, spec.n_samples
    if not 0 <= reference_index < geometry.n_sensors:
        raise ParameterError(f"reference_index {reference_index} out of range")
    sources = [spec.target] + list(spec.interferers)
    images = []
    for idx, src in enumerate(sources):
        for _, pos in src.segments:
            _distances(geometry, pos)
        rng = np.random.default_rng([spec.seed, idx])
        sig = _source_signal(src, n, fs, rng)
        images.append(_render_source(src, sig, geometry, fs, n, reference_index))
    target = images[0]
    interference = np.sum(images[1:], axis=0) if len(images) > 1 else np.zeros_like(target)
    rng = np.random.default_rng([spec.seed, len(sources)])
    p_ref = np.mean(target[reference_index] ** 2)
    noise = rng.standard_normal(target.shape) * np.sqrt(p_ref * 10 ** (spec.noise_level_db / 10))
    changes = sorted({s for src in spec.interferers for s in src.starts[1:]})
    freqs = np.arange(frame_size // 2 + 1) * fs / frame_size
    steering = steering_freefield(geometry, spec.target.segments[0][1], freqs, reference_index)
    mixture = target + interference + noise
    # store the noise as the exact remainder so the decomposition is exact in floating point
    noise = mixture - target - interference
    return SceneOutput(mixture=mixture, target_image=target, interference_image=interference,
                       noise=noise, true_changes=changes, true_steering=steering, sample_rate=fs)


def demo_scene(seed=0, duration_s=40.0, jump_s=4.0, n_interferers=3, sample_rate=32000.0,
               n_mics=4, radius=0.3, interferer_level_db=10.0, noise_level_db=-30.0,
               target_signal="noise", interferer_signal="noise"):
    """
    Moving-interferer demo: a static target and interferers that jump to a
    new random position around the array every ``jump_s`` seconds.
    """
    rng = np.random.default_rng([seed, 1000])
    center = np.array([4.0, 3.5, 1.2])
    geometry = circular_array(n_mics, radius, center)
    target = SourceTrack([(0, (6.0, 2.0, 1.5))], signal=target_signal, level_db=0.0)
    target_az = np.arctan2(2.0 - center[1], 6.0 - center[0])
    n_jumps = int(np.ceil(duration_s / jump_s))
    interferers = []
    for k in range(n_interferers):
        segs = []
        for j in range(n_jumps):
            # keep interferers at least 30 degrees away from the target bearing
            az = target_az + rng.uniform(np.pi / 6, 2 * np.pi - np.pi / 6)
            dist = rng.uniform(1.5, 3.0)
            pos = center + np.array([dist * np.cos(az), dist * np.sin(az), rng.uniform(-0.3, 0.5)])
            segs.append((int(round(j * jump_s * sample_rate)), tuple(pos)))
        interferers.append(SourceTrack(segs, signal=interferer_signal, level_db=interferer_level_db))
    return SceneSpec(geometry=geometry, target=target, interferers=interferers,
                     noise_level_db=noise_level_db, duration_s=duration_s,
                     sample_rate=sample_rate, seed=seed)
