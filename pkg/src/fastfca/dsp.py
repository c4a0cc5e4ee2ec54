"""Waveform I/O and STFT analysis/synthesis.

Spectrograms are complex arrays laid out as ``(F, T, M)``: frequency bins,
frames, channels.  Waves are ``(M, L)`` float arrays.
"""
import struct
from dataclasses import dataclass

import numpy as np

from .exceptions import ShapeError, WavFormatError

DEFAULT_SAMPLE_RATE = 8000
DEFAULT_WINDOW = 512
DEFAULT_HOP = 128


@dataclass
class MultichannelWave:
    """Multichannel waveform; ``samples`` has shape (M, L)."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if self.samples.ndim != 2:
            raise ShapeError("samples must be (channels, length)")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def n_channels(self):
        return self.samples.shape[0]

    def __len__(self):
        return self.samples.shape[1]


def hann(window_length):
    """Periodic Hann window."""
    n = np.arange(window_length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / window_length)


def _check_params(window_length, hop_length):
    if window_length < 2 or window_length & (window_length - 1):
        raise ValueError(f"window length must be a power of two, got {window_length}")
    if hop_length <= 0 or window_length % hop_length:
        raise ValueError(f"hop {hop_length} must divide window {window_length}")


def _as_samples(wave):
    if isinstance(wave, MultichannelWave):
        return wave.samples
    return np.atleast_2d(np.asarray(wave, dtype=np.float64))


def n_frames(n_samples, window_length=DEFAULT_WINDOW, hop_length=DEFAULT_HOP, pad=False):
    if pad:
        n_samples += 2 * (window_length - hop_length) + (-n_samples) % hop_length
    return (n_samples - window_length) // hop_length + 1


def stft(wave, window_length=DEFAULT_WINDOW, hop_length=DEFAULT_HOP, pad=False):
    """Onesided Hann-windowed STFT.

    Frame ``t`` covers samples ``[t*hop, t*hop + window)``.  With ``pad=True``
    the signal is first zero-padded by ``window - hop`` samples at both ends
    (plus up to ``hop - 1`` more at the end to complete the last hop) so that
    every input sample lies in the fully-overlapped region.

    Returns
    -------
    ndarray, complex, shape (window // 2 + 1, T, M)
    """
    _check_params(window_length, hop_length)
    x = _as_samples(wave)
    if pad:
        edge = window_length - hop_length
        x = np.pad(x, ((0, 0), (edge, edge + (-x.shape[1]) % hop_length)))
    length = x.shape[1]
    if length < window_length:
        raise ShapeError(f"signal of {length} samples is shorter than one window ({window_length})")
    n_t = (length - window_length) // hop_length + 1
    idx = np.arange(window_length)[None, :] + hop_length * np.arange(n_t)[:, None]
    frames = x[:, idx] * hann(window_length)  # (M, T, W)
    spec = np.fft.rfft(frames, axis=-1)  # (M, T, F)
    return np.ascontiguousarray(spec.transpose(2, 1, 0))


def istft(spec, window_length=DEFAULT_WINDOW, hop_length=DEFAULT_HOP, pad=False, length=None):
    """Weighted overlap-add inverse of :func:`stft`.

    The synthesis window is the analysis window divided by the overlapped sum
    of squared windows, so reconstruction is exact wherever frames fully
    overlap.  ``length`` trims or zero-extends the output (after removing the
    padding when ``pad=True``).

    Returns
    -------
    ndarray, shape (M, L)
    """
    _check_params(window_length, hop_length)
    spec = np.asarray(spec)
    if spec.ndim == 2:
        spec = spec[:, :, None]
    n_f, n_t, _ = spec.shape
    if n_f != window_length // 2 + 1:
        raise ShapeError(f"spectrogram has {n_f} bins, window {window_length} needs {window_length // 2 + 1}")
    win = hann(window_length)
    frames = np.fft.irfft(spec.transpose(2, 1, 0), n=window_length, axis=-1) * win
    total = window_length + hop_length * (n_t - 1)
    out = np.zeros((spec.shape[2], total))
    norm = np.zeros(total)
    for t in range(n_t):
        sl = slice(t * hop_length, t * hop_length + window_length)
        out[:, sl] += frames[:, t]
        norm[sl] += win * win
    out = np.where(norm > 1e-10, out / np.maximum(norm, 1e-10), 0.0)
    if pad:
        edge = window_length - hop_length
        out = out[:, edge:total - edge]
    if length is not None:
        if out.shape[1] >= length:
            out = out[:, :length]
        else:
            out = np.pad(out, ((0, 0), (0, length - out.shape[1])))
    return out


# -- WAV I/O -----------------------------------------------------------------
_PCM, _FLOAT, _EXTENSIBLE = 1, 3, 0xFFFE


def wav_write(path, wave, sample_rate=None, subtype="float32"):
    """Write a RIFF/WAVE file; ``subtype`` is ``'float32'`` or ``'pcm16'``."""
    if isinstance(wave, MultichannelWave):
        sample_rate = wave.sample_rate if sample_rate is None else sample_rate
    x = _as_samples(wave)
    sample_rate = DEFAULT_SAMPLE_RATE if sample_rate is None else int(sample_rate)
    n_ch = x.shape[0]
    if subtype == "float32":
        tag, width = _FLOAT, 4
        data = x.T.astype("<f4").tobytes()
    elif subtype == "pcm16":
        tag, width = _PCM, 2
        data = np.clip(np.round(x.T * 32768.0), -32768, 32767).astype("<i2").tobytes()
    else:
        raise ValueError(f"unsupported subtype {subtype!r}")
    fmt = struct.pack("<HHIIHH", tag, n_ch, sample_rate, sample_rate * n_ch * width,
                      n_ch * width, 8 * width)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(data)) + data
    if len(data) % 2:
        body += b"\x00"
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", len(body)) + body)


def wav_read(path):
    """Read PCM16 or IEEE-float32 RIFF/WAVE into a :class:`MultichannelWave`."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 12 or buf[:4] != b"RIFF" or buf[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: missing RIFF/WAVE header", chunk="RIFF")
    pos, fmt, data = 12, None, None
    while pos + 8 <= len(buf):
        cid = buf[pos:pos + 4]
        (size,) = struct.unpack_from("<I", buf, pos + 4)
        start = pos + 8
        if start + size > len(buf):
            name = cid.decode("ascii", "replace").strip()
            raise WavFormatError(f"{path}: truncated '{name}' chunk", chunk=name)
        if cid == b"fmt ":
            fmt = buf[start:start + size]
        elif cid == b"data":
            data = buf[start:start + size]
        pos = start + size + (size & 1)
    if fmt is None:
        raise WavFormatError(f"{path}: missing 'fmt' chunk", chunk="fmt")
    if data is None:
        raise WavFormatError(f"{path}: missing 'data' chunk", chunk="data")
    if len(fmt) < 16:
        raise WavFormatError(f"{path}: 'fmt' chunk too short", chunk="fmt")
    tag, n_ch, rate, _, block, bits = struct.unpack_from("<HHIIHH", fmt)
    if tag == _EXTENSIBLE and len(fmt) >= 26:
        (tag,) = struct.unpack_from("<H", fmt, 24)
    if tag == _PCM and bits == 16:
        x = np.frombuffer(data[: len(data) // block * block], dtype="<i2") / 32768.0
    elif tag == _FLOAT and bits == 32:
        x = np.frombuffer(data[: len(data) // block * block], dtype="<f4").astype(np.float64)
    else:
        raise WavFormatError(f"{path}: unsupported codec (tag {tag}, {bits} bits)", chunk="fmt")
    return MultichannelWave(x.reshape(-1, n_ch).T.copy(), rate)


# -- spectrogram dump ----------------------------------------------------------
SPEC_MAGIC = b"FFCASPEC"


def spec_dump(path, spec):
    """Write header ``magic, F, T, M`` (uint32) then interleaved float64 (re, im)."""
    spec = np.asarray(spec, dtype=np.complex128)
    if spec.ndim != 3:
        raise ShapeError("spectrogram must be (F, T, M)")
    inter = np.empty(spec.shape + (2,), dtype="<f8")
    inter[..., 0] = spec.real
    inter[..., 1] = spec.imag
    with open(path, "wb") as fh:
        fh.write(SPEC_MAGIC + struct.pack("<III", *spec.shape))
        fh.write(inter.tobytes())


def spec_load(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != SPEC_MAGIC or len(buf) < 20:
        raise WavFormatError(f"{path}: not a spectrogram dump", chunk="header")
    shape = struct.unpack_from("<III", buf, 8)
    n = int(np.prod(shape)) * 2
    if len(buf) < 20 + 8 * n:
        raise WavFormatError(f"{path}: truncated spectrogram payload", chunk="payload")
    inter = np.frombuffer(buf, dtype="<f8", count=n, offset=20).reshape(shape + (2,))
    return inter[..., 0] + 1j * inter[..., 1]
