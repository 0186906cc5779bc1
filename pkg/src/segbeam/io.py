"""
WAV audio and plain-text sidecar files.

Sidecar layouts:

* change points: one integer index per line, ascending.
* RTF: a header line ``# segbeam-rtf bins=<B> channels=<p> reference=<r>``
  followed by one line per bin: ``<bin> <flag 0|1> re_0 im_0 ... re_p-1 im_p-1``
  with floats in shortest round-trip form, so a write/read cycle is exact.
"""

import os
import struct
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from .errors import DataError, ShapeError

__all__ = ["AudioBuffer", "read_wav", "write_wav", "read_changes", "write_changes",
           "read_rtf_sidecar", "write_rtf_sidecar", "FORMATS"]

FORMATS = ("pcm16", "float32")
PCM16_SCALE = 32768.0


@dataclass
class AudioBuffer:
    """``samples`` is (channels, length), nominally in [-1, 1]."""
    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim == 1:
            s = s[None]
        if s.ndim != 2:
            raise ShapeError(f"audio must be (channels, length), got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise DataError("audio contains non-finite samples")
        if not self.sample_rate > 0:
            raise DataError(f"sample rate must be positive, got {self.sample_rate}")
        self.samples = s

    @property
    def n_channels(self):
        return self.samples.shape[0]

    @property
    def length(self):
        return self.samples.shape[1]


def read_wav(path):
    """Load a PCM 16-bit or float-32 WAV file; 16-bit data is scaled by 1/32768."""
    path = os.fspath(path)
    try:
        with warnings.catch_warnings():
            # scipy warns (rather than fails) on some malformed chunks
            warnings.simplefilter("error", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    except (ValueError, EOFError, struct.error, wavfile.WavFileWarning) as exc:
        raise DataError(f"{path}: unreadable or truncated WAV ({exc})") from None
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / PCM16_SCALE
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise DataError(f"{path}: unsupported encoding {data.dtype}; expected PCM 16-bit or float-32")
    samples = samples.T if samples.ndim == 2 else samples[None]
    if samples.shape[1] == 0:
        raise DataError(f"{path}: file contains no samples")
    return AudioBuffer(samples, float(rate))


def write_wav(buffer, path, format="float32"):
    """
    Write ``buffer`` as a RIFF/WAVE file. ``pcm16`` rounds to the nearest
    code and clamps to [-32768, 32767] without dither.
    """
    path = os.fspath(path)
    if format not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {format!r}")
    if buffer.length == 0:
        raise DataError(f"refusing to write empty audio to {path}")
    rate = buffer.sample_rate
    if rate != int(rate):
        raise DataError(f"WAV needs an integer sample rate, got {rate}")
    if format == "pcm16":
        data = np.clip(np.round(buffer.samples * PCM16_SCALE), -32768, 32767).astype(np.int16)
    else:
        data = buffer.samples.astype(np.float32)
    try:
        wavfile.write(path, int(rate), np.ascontiguousarray(data.T))
    except OSError as exc:
        raise OSError(f"{path}: cannot write WAV ({exc.strerror or exc})") from exc


def write_changes(path, indices):
    with open(path, "w") as fh:
        for i in indices:
            fh.write(f"{int(i)}\n")


def read_changes(path):
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(int(line))
            except ValueError:
                raise DataError(f"{path}:{lineno}: expected an integer, got {line!r}") from None
    return out


def write_rtf_sidecar(path, estimate):
    """Serialize an RtfEstimate in the text layout described above."""
    nu = np.asarray(estimate.nu_per_bin, dtype=np.complex128)
    bins, p = nu.shape
    with open(path, "w") as fh:
        fh.write(f"# segbeam-rtf bins={bins} channels={p} reference={estimate.reference_index}\n")
        for b in range(bins):
            vals = " ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in nu[b])
            fh.write(f"{b} {int(bool(estimate.condition_flags[b]))} {vals}\n")


def read_rtf_sidecar(path):
    from .rtf import RtfEstimate

    try:
        with open(path) as fh:
            lines = [ln.split() for ln in fh if ln.strip()]
    except FileNotFoundError:
        raise DataError(f"{path}: no such RTF sidecar") from None
    if not lines or lines[0][:2] != ["#", "segbeam-rtf"]:
        raise DataError(f"{path}: missing '# segbeam-rtf' header")
    try:
        head = dict(kv.split("=", 1) for kv in lines[0][2:])
        bins, p, ref = int(head["bins"]), int(head["channels"]), int(head["reference"])
    except (KeyError, ValueError):
        raise DataError(f"{path}: malformed header {' '.join(lines[0])!r}") from None
    rows = lines[1:]
    if len(rows) != bins:
        raise DataError(f"{path}: header announces {bins} bins, found {len(rows)}")
    nu = np.zeros((bins, p), dtype=np.complex128)
    flags = np.zeros(bins, dtype=bool)
    for b, row in enumerate(rows):
        try:
            if len(row) != 2 + 2 * p or int(row[0]) != b:
                raise ValueError
            v = np.array([float(t) for t in row[2:]])
        except ValueError:
            raise DataError(f"{path}: bin line {b + 2} malformed") from None
        flags[b] = row[1] == "1"
        nu[b] = v[0::2] + 1j * v[1::2]
    return RtfEstimate(nu, ref, flags)
