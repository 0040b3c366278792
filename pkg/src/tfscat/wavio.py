"""WAV input and output.

Decoding and encoding use :mod:`scipy.io.wavfile`.  The chunk layout is
checked first so that malformed files raise :class:`WavFormatError` naming
the offending chunk instead of whatever the decoder happens to raise.
"""

from __future__ import annotations

import io
import struct
import warnings
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .audio import AudioBuffer
from .errors import DataError, WavFormatError

__all__ = ["read_wav", "write_wav", "parse_wav_bytes", "soft_clip", "FORMATS"]

FORMATS = ("float32", "pcm16")

_PCM = 1
_FLOAT = 3
_EXTENSIBLE = 0xFFFE

# Soft clipping is linear up to the knee and saturates towards 1 above it.
SOFT_CLIP_KNEE = 0.9


def _scan_chunks(data: bytes) -> dict:
    if len(data) < 12:
        raise WavFormatError("file too short for a RIFF header", "RIFF")
    riff, _, wave = struct.unpack("<4sI4s", data[:12])
    if riff not in (b"RIFF", b"RIFX", b"RF64"):
        raise WavFormatError("missing RIFF signature", "RIFF")
    if riff != b"RIFF":
        raise WavFormatError(f"unsupported container {riff.decode('latin-1')!r}", "RIFF")
    if wave != b"WAVE":
        raise WavFormatError("RIFF form type is not WAVE", "WAVE")
    chunks = {}
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack("<4sI", data[pos:pos + 8])
        name = cid.decode("latin-1")
        body = pos + 8
        if body + size > len(data):
            if name == "data":
                raise WavFormatError(
                    f"'data' chunk declares {size} bytes but only {len(data) - body} remain",
                    "data")
            raise WavFormatError(f"chunk {name!r} is truncated", name)
        chunks.setdefault(name, (body, size))
        pos = body + size + (size & 1)
    if "fmt " not in chunks:
        raise WavFormatError("missing 'fmt ' chunk", "fmt ")
    if "data" not in chunks:
        raise WavFormatError("missing 'data' chunk", "data")
    return chunks


def _parse_format(data: bytes, chunks: dict):
    body, size = chunks["fmt "]
    if size < 16:
        raise WavFormatError(f"'fmt ' chunk is {size} bytes, expected at least 16", "fmt ")
    tag, channels, rate, _, align, bits = struct.unpack("<HHIIHH", data[body:body + 16])
    if tag == _EXTENSIBLE:
        if size < 40:
            raise WavFormatError("extensible 'fmt ' chunk is too short", "fmt ")
        tag = struct.unpack("<H", data[body + 24:body + 26])[0]
    if channels < 1:
        raise WavFormatError("zero channels", "fmt ")
    if rate < 1:
        raise WavFormatError("zero sample rate", "fmt ")
    if (tag, bits) not in ((_PCM, 16), (_PCM, 24), (_FLOAT, 32)):
        raise WavFormatError(f"unsupported codec: format tag {tag} with {bits} bits "
                             "(expected PCM 16/24-bit or IEEE float 32-bit)", "fmt ")
    if align != channels * bits // 8:
        raise WavFormatError(f"block align {align} inconsistent with {channels} channels "
                             f"of {bits} bits", "fmt ")
    return tag, channels, rate, bits


def parse_wav_bytes(data: bytes) -> AudioBuffer:
    """Decode a WAV file held in memory; see :func:`read_wav`."""
    chunks = _scan_chunks(data)
    tag, channels, rate, bits = _parse_format(data, chunks)
    _, data_size = chunks["data"]
    frame = channels * bits // 8
    if data_size < frame:
        raise WavFormatError("'data' chunk holds no samples", "data")
    if data_size % frame:
        raise WavFormatError(f"'data' chunk size {data_size} is not a whole number of "
                             f"{frame}-byte frames", "data")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            sr, raw = wavfile.read(io.BytesIO(data))
    except Exception as exc:  # the decoder's own errors are untyped
        raise WavFormatError(f"cannot decode samples: {exc}", "data") from exc
    raw = np.asarray(raw)
    if raw.size == 0:
        raise WavFormatError("'data' chunk holds no samples", "data")
    if tag == _FLOAT:
        # signalling NaNs raise the invalid flag when widened; they are rejected below
        with np.errstate(invalid="ignore"):
            samples = raw.astype(np.float64)
        if not np.all(np.isfinite(samples)):
            raise WavFormatError("non-finite float samples", "data")
    elif bits == 16:
        samples = raw.astype(np.float64) / 32768.0
    else:
        # 24-bit samples arrive left-justified in int32
        samples = raw.astype(np.float64) / 2147483648.0
    if samples.ndim == 2:
        if samples.shape[1] > 1:
            warnings.warn(f"downmixing {samples.shape[1]} channels to mono", RuntimeWarning,
                          stacklevel=3)
        n_channels = samples.shape[1]
        samples = samples.mean(axis=1)
    else:
        n_channels = 1
    return AudioBuffer(samples, float(sr), n_channels)


def read_wav(path) -> AudioBuffer:
    """Read a PCM 16/24-bit or float32 WAV file as mono float samples.

    Multichannel files are averaged to mono with a warning.

    Raises
    ------
    WavFormatError
        The file is not a well-formed WAV file of a supported codec.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return parse_wav_bytes(data)


def soft_clip(x: np.ndarray, knee: float = SOFT_CLIP_KNEE) -> np.ndarray:
    """Identity below ``knee``, ``tanh`` saturation towards 1 above it."""
    mag = np.abs(x)
    over = mag > knee
    out = np.array(x, dtype=np.float64, copy=True)
    room = 1.0 - knee
    out[over] = np.sign(x[over]) * (knee + room * np.tanh((mag[over] - knee) / room))
    return out


def write_wav(buffer: AudioBuffer, path, format: str = "float32", seed: int = 0) -> None:
    """Write a mono WAV file.

    ``float32`` keeps samples as they are and only warns when the peak
    exceeds 1.  ``pcm16`` soft-clips peaks above 1 (with a warning) and
    quantises with seeded triangular dither; all-zero input stays zero.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; choose from {FORMATS}")
    x = np.asarray(buffer.samples, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DataError("cannot write non-finite samples")
    rate = int(round(buffer.sample_rate))
    if rate != buffer.sample_rate:
        warnings.warn(f"sample rate {buffer.sample_rate} rounded to {rate}", RuntimeWarning,
                      stacklevel=2)
    peak = float(np.max(np.abs(x))) if x.size else 0.0
    if format == "float32":
        if peak > 1.0:
            warnings.warn(f"peak {peak:.3f} exceeds full scale; float output is not clipped",
                          RuntimeWarning, stacklevel=2)
        wavfile.write(path, rate, x.astype("<f4"))
        return
    if peak > 1.0:
        warnings.warn(f"peak {peak:.3f} exceeds full scale; soft-clipping above "
                      f"{SOFT_CLIP_KNEE}", RuntimeWarning, stacklevel=2)
        x = soft_clip(x)
    if peak == 0.0:
        q = np.zeros(x.size, dtype="<i2")
    else:
        rng = np.random.default_rng(seed)
        dither = rng.uniform(-0.5, 0.5, x.size) + rng.uniform(-0.5, 0.5, x.size)
        q = np.clip(np.round(x * 32768.0 + dither), -32768, 32767).astype("<i2")
    wavfile.write(path, rate, q)
