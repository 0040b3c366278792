"""Seeded synthetic test signals.

Every generator returns a zero-mean :class:`AudioBuffer` normalised to unit
RMS unless stated otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.signal as ss

from .audio import AudioBuffer

__all__ = [
    "white_noise",
    "pink_noise",
    "am_tone",
    "harmonic_comb",
    "speech_like",
    "ChirpEvent",
    "chirp_events",
    "chirp_train",
]


def _finish(x: np.ndarray, sample_rate: float, rms: float | None = 1.0) -> AudioBuffer:
    x = x - x.mean()
    if rms is not None:
        x = x * (rms / np.sqrt(np.mean(x**2)))
    return AudioBuffer(x, sample_rate)


def _n(duration: float, sample_rate: float) -> int:
    return int(round(duration * sample_rate))


def white_noise(duration: float, sample_rate: float = 44100.0, seed: int = 0) -> AudioBuffer:
    rng = np.random.default_rng(seed)
    return _finish(rng.standard_normal(_n(duration, sample_rate)), sample_rate)


def pink_noise(duration: float, sample_rate: float = 44100.0, seed: int = 0,
               f_min: float = 40.0) -> AudioBuffer:
    """1/f power spectrum above ``f_min``; nothing below."""
    rng = np.random.default_rng(seed)
    n = _n(duration, sample_rate)
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    shape = np.zeros_like(freqs)
    band = freqs >= f_min
    shape[band] = 1.0 / np.sqrt(freqs[band])
    return _finish(np.fft.irfft(spectrum * shape, n), sample_rate)


def am_tone(duration: float, sample_rate: float = 44100.0, carrier: float = 440.0,
            rate: float = 4.0, depth: float = 0.8) -> AudioBuffer:
    t = np.arange(_n(duration, sample_rate)) / sample_rate
    x = (1.0 + depth * np.sin(2 * np.pi * rate * t)) * np.sin(2 * np.pi * carrier * t)
    return _finish(x, sample_rate)


def harmonic_comb(duration: float, sample_rate: float = 44100.0, f0: float = 110.0,
                  n_harmonics: int = 20, seed: int = 0) -> AudioBuffer:
    """Sum of harmonics with 1/k amplitudes and random phases."""
    rng = np.random.default_rng(seed)
    t = np.arange(_n(duration, sample_rate)) / sample_rate
    x = np.zeros_like(t)
    for k in range(1, n_harmonics + 1):
        if k * f0 >= sample_rate / 2:
            break
        x += np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 2 * np.pi)) / k
    return _finish(x, sample_rate)


def speech_like(duration: float, sample_rate: float = 44100.0, seed: int = 0) -> AudioBuffer:
    """Voiced syllables: a jittered glottal pulse train through moving formants.

    Syllables last 150-300 ms with short gaps; pitch glides between 100 and
    180 Hz; three resonances move between vowel targets.
    """
    rng = np.random.default_rng(seed)
    n = _n(duration, sample_rate)
    out = np.zeros(n)
    vowels = np.array([[730, 1090, 2440], [270, 2290, 3010], [300, 870, 2240],
                       [530, 1840, 2480], [570, 840, 2410]], dtype=float)
    pos = int(0.02 * sample_rate)
    while pos < n:
        length = int(rng.uniform(0.15, 0.3) * sample_rate)
        seg = np.zeros(length)
        f0 = np.linspace(rng.uniform(100, 180), rng.uniform(100, 180), length)
        phase = np.cumsum(f0 / sample_rate)
        pulses = np.flatnonzero(np.diff(np.floor(phase)) > 0)
        seg[pulses] = 1.0 + 0.1 * rng.standard_normal(pulses.size)
        seg = ss.lfilter([1.0], [1.0, -0.95], seg)
        a, b = vowels[rng.integers(len(vowels))], vowels[rng.integers(len(vowels))]
        half = length // 2
        voiced = np.zeros(length)
        for part, formants in ((slice(0, half), a), (slice(half, length), b)):
            piece = seg[part]
            for fc in formants:
                bw = 80.0 + fc / 20.0
                r = np.exp(-np.pi * bw / sample_rate)
                w = 2 * np.pi * fc / sample_rate
                piece = ss.lfilter([1 - r], [1.0, -2 * r * np.cos(w), r * r], piece)
            voiced[part] = piece
        voiced *= np.hanning(length)
        stop = min(n, pos + length)
        out[pos:stop] += voiced[: stop - pos]
        pos += length + int(rng.uniform(0.03, 0.1) * sample_rate)
    return _finish(out, sample_rate)


@dataclass(frozen=True)
class ChirpEvent:
    """Exponential sweep from ``f_start`` to ``f_end`` Hz."""

    onset: float
    duration: float
    f_start: float
    f_end: float

    @property
    def center(self) -> float:
        return self.onset + self.duration / 2

    @property
    def direction(self) -> int:
        return 1 if self.f_end > self.f_start else -1


def chirp_events(duration: float, period: float = 0.5, length: float = 0.4,
                 f_low: float = 300.0, f_high: float = 1200.0, pattern="u",
                 offset: float = 0.05) -> list:
    """Regularly spaced sweeps.

    ``pattern`` is cycled over the events: ``"u"`` sweeps up from
    ``f_low`` to ``f_high``, ``"d"`` sweeps down.
    """
    if not pattern or any(c not in "ud" for c in pattern):
        raise ValueError("pattern must be a non-empty string of 'u' and 'd'")
    events = []
    t = offset
    k = 0
    while t + length <= duration:
        up = pattern[k % len(pattern)] == "u"
        lo_hi = (f_low, f_high) if up else (f_high, f_low)
        events.append(ChirpEvent(t, length, *lo_hi))
        t += period
        k += 1
    return events


def chirp_train(events, duration: float, sample_rate: float = 44100.0) -> AudioBuffer:
    """Render Hann-windowed exponential sweeps."""
    n = _n(duration, sample_rate)
    x = np.zeros(n)
    for ev in events:
        m = _n(ev.duration, sample_rate)
        start = _n(ev.onset, sample_rate)
        t = np.arange(m) / sample_rate
        sweep = ss.chirp(t, ev.f_start, ev.duration, ev.f_end, method="logarithmic")
        stop = min(n, start + m)
        x[start:stop] += (sweep * np.hanning(m))[: stop - start]
    return _finish(x, sample_rate)
