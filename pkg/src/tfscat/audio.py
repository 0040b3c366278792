from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AudioBuffer:
    """Mono waveform.

    ``channels`` records how many channels the source had before any
    downmix; processing is always mono.
    """

    samples: np.ndarray
    sample_rate: float
    channels: int = 1

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"expected mono samples, got shape {samples.shape}")
        self.samples = samples
        self.sample_rate = float(self.sample_rate)
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def copy(self) -> "AudioBuffer":
        return AudioBuffer(self.samples.copy(), self.sample_rate, self.channels)
