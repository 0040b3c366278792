"""Texture resynthesis by gradient descent on scattering coefficients.

The iterate starts from Gaussian noise coloured to match the first-order
coefficients of the target and follows momentum descent.  The step size
adapts with a bold-driver rule: a step that lowers the loss is kept and
the rate grows; a step that does not is discarded, the velocity is reset
and the rate shrinks.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adjoint import LossReport, forward_with_tape, gradient_from_tape, loss
from .audio import AudioBuffer
from .scattering import Coefficients, Scalogram, ScatteringConfig, coefficients, get_network

log = logging.getLogger(__name__)

__all__ = [
    "SynthesisOptions",
    "TraceEntry",
    "SynthesisState",
    "init_colored_noise",
    "start",
    "step",
    "synthesize",
    "write_trace",
]

# Fixed-point passes that correct band gains for filter overlap.
_GAIN_PASSES = 4


@dataclass(frozen=True)
class SynthesisOptions:
    iterations: int = 50
    momentum: float = 0.9
    initial_rate: float = 0.1
    grow: float = 1.1
    shrink: float = 0.5
    seed: int = 0
    snapshot_every: int = 0
    cache_phases: bool | None = None

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if not self.initial_rate > 0:
            raise ValueError("initial_rate must be positive")
        if not self.grow > 1:
            raise ValueError("grow must be > 1")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must be in (0, 1)")
        if self.snapshot_every < 0:
            raise ValueError("snapshot_every must be >= 0")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "SynthesisOptions":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class TraceEntry:
    """Loss of one candidate step and the rate that produced it."""

    iteration: int
    report: LossReport
    accepted: bool
    mu: float


@dataclass
class SynthesisState:
    y: AudioBuffer
    velocity: AudioBuffer
    mu: float
    initial_loss: LossReport
    loss_trace: list = field(default_factory=list)
    iteration: int = 0
    accepted: bool = True
    # forward pass and gradient at y, reused while y is unchanged
    _coeffs: Coefficients | None = field(default=None, repr=False)
    _tape: object = field(default=None, repr=False)
    _gradient: AudioBuffer | None = field(default=None, repr=False)

    @property
    def loss(self) -> LossReport:
        accepted = [e.report for e in self.loss_trace if e.accepted]
        return accepted[-1] if accepted else self.initial_loss

    def accepted_losses(self) -> list:
        return [self.initial_loss.total] + [e.report.total for e in self.loss_trace if e.accepted]


def _expected_band_power(bank, gains_at_bins: np.ndarray) -> np.ndarray:
    """Mean ``|z_lambda|^2`` of unit white noise shaped by ``gains_at_bins``."""
    L = bank.length
    return np.array([np.sum(f.values**2 * gains_at_bins[f.bins] ** 2) / L
                     for f in bank.filters])


def _interp_gains(freqs: np.ndarray, grid: np.ndarray, band_gain: np.ndarray) -> np.ndarray:
    """Log-log interpolation of band gains, flat outside the grid; 0 at DC."""
    floor = 1e-12 * band_gain.max()
    logg = np.log(np.maximum(band_gain, floor))
    f = np.abs(freqs)
    out = np.zeros_like(f)
    pos = f > 0
    out[pos] = np.exp(np.interp(np.log(f[pos]), np.log(grid), logg))
    out[out <= floor * (1 + 1e-9)] = 0.0
    return out


def init_colored_noise(s1x: Scalogram, cfg: ScatteringConfig, seed: int = 0,
                       n_samples: int | None = None) -> AudioBuffer:
    """Gaussian noise whose mean scalogram matches the time average of ``s1x``.

    For circular Gaussian band outputs ``E|z| = sqrt(pi/4) sqrt(E|z|^2)``,
    which sets the target band power.  Band gains are interpolated
    log-linearly onto Fourier bins and refined a few times so that the
    expected power through overlapping filters hits the target.
    """
    n = s1x.n_frames * cfg.u1_hop if n_samples is None else int(n_samples)
    if n <= 0:
        raise ValueError("n_samples must be positive")
    target_mean = np.asarray(s1x.values, dtype=np.float64).mean(axis=0)
    if not np.all(np.isfinite(target_mean)):
        raise ValueError("non-finite first-order coefficients")
    if not np.any(target_mean > 0):
        return AudioBuffer(np.zeros(n), cfg.sample_rate)
    bank = get_network(cfg, n).lambda_bank
    target_power = (4.0 / math.pi) * np.maximum(target_mean, 0.0) ** 2
    energies = np.array([f.energy for f in bank.filters])
    band_gain = np.sqrt(target_power * bank.length / energies)
    bins = bank.frequencies()
    for _ in range(_GAIN_PASSES):
        got = _expected_band_power(bank, _interp_gains(bins, bank.grid, band_gain))
        ratio = np.divide(target_power, got, out=np.ones_like(got), where=got > 0)
        band_gain = band_gain * np.sqrt(ratio)

    rng = np.random.default_rng(seed)
    white = rng.standard_normal(n)
    shape = _interp_gains(np.fft.rfftfreq(n, 1.0 / cfg.sample_rate), bank.grid, band_gain)
    y = np.fft.irfft(np.fft.rfft(white) * shape, n)
    return AudioBuffer(y, cfg.sample_rate)


def start(target: Coefficients, y0: AudioBuffer, opts: SynthesisOptions) -> SynthesisState:
    """State at iteration 0 for the initial iterate ``y0``."""
    sy, tape = forward_with_tape(y0, target.config, opts.cache_phases)
    report = loss(target, sy)
    if not math.isfinite(report.total):
        raise FloatingPointError("initial loss is not finite")
    return SynthesisState(
        y=y0,
        velocity=AudioBuffer(np.zeros(len(y0)), y0.sample_rate),
        mu=opts.initial_rate,
        initial_loss=report,
        _coeffs=sy,
        _tape=tape,
    )


def step(state: SynthesisState, target: Coefficients,
         opts: SynthesisOptions = SynthesisOptions()) -> SynthesisState:
    """One momentum step with bold-driver acceptance; updates ``state`` in place."""
    if state._gradient is None:
        state._gradient, _ = gradient_from_tape(target, state._coeffs, state._tape)
    mu = state.mu
    u = opts.momentum * state.velocity.samples + mu * state._gradient.samples
    candidate = AudioBuffer(state.y.samples + u, state.y.sample_rate)
    sc, tape = forward_with_tape(candidate, target.config, opts.cache_phases)
    report = loss(target, sc)
    if not math.isfinite(report.total):
        raise FloatingPointError(
            f"non-finite loss at iteration {state.iteration + 1} (rate {mu:.3g})")
    current = state.loss.total
    accepted = report.total < current
    if accepted:
        state.y = candidate
        state.velocity = AudioBuffer(u, candidate.sample_rate)
        state._coeffs, state._tape, state._gradient = sc, tape, None
        state.mu = mu * opts.grow
    else:
        state.velocity = AudioBuffer(np.zeros(len(state.y)), state.y.sample_rate)
        state.mu = mu * opts.shrink
    state.iteration += 1
    state.accepted = accepted
    state.loss_trace.append(TraceEntry(state.iteration, report, accepted, mu))
    log.debug("iteration %d loss %.6g %s rate %.3g", state.iteration, report.total,
              "accepted" if accepted else "rejected", mu)
    return state


def synthesize(source, cfg: ScatteringConfig, opts: SynthesisOptions = SynthesisOptions(),
               snapshot_dir=None, init: AudioBuffer | None = None):
    """Resynthesise a texture from a signal or from target coefficients.

    Parameters
    ----------
    source : AudioBuffer or Coefficients
        Signal to imitate, or its (possibly edited) coefficients.
    cfg : ScatteringConfig
    opts : SynthesisOptions
    snapshot_dir : path, optional
        With ``opts.snapshot_every > 0``, iterates are written there as
        ``y_iter{n:03}.wav``.
    init : AudioBuffer, optional
        Initial iterate; coloured noise by default.

    Returns
    -------
    y : AudioBuffer
    state : SynthesisState
    """
    if isinstance(source, Coefficients):
        target = source
        if target.config != cfg:
            raise ValueError("target coefficients were computed with a different configuration")
    else:
        target = coefficients(source, cfg)
    y0 = init if init is not None else init_colored_noise(
        target.s1, cfg, opts.seed, target.n_samples)
    if len(y0) != target.n_samples:
        raise ValueError("initial iterate length does not match the target")
    state = start(target, y0, opts)
    snap = None
    if snapshot_dir is not None and opts.snapshot_every > 0:
        from .wavio import write_wav

        snap = Path(snapshot_dir)
        snap.mkdir(parents=True, exist_ok=True)
        write_wav(state.y, snap / "y_iter000.wav")
    for _ in range(opts.iterations):
        step(state, target, opts)
        if snap is not None and state.iteration % opts.snapshot_every == 0:
            write_wav(state.y, snap / f"y_iter{state.iteration:03d}.wav")
    return state.y, state


def write_trace(state: SynthesisState, path) -> None:
    """Loss trace as CSV; row 0 is the initial iterate."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "total", "first_order", "second_order", "accepted", "mu"])
        r = state.initial_loss
        w.writerow([0, repr(r.total), repr(r.first_order), repr(r.second_order), 1, ""])
        for e in state.loss_trace:
            r = e.report
            w.writerow([e.iteration, repr(r.total), repr(r.first_order),
                        repr(r.second_order), int(e.accepted), repr(e.mu)])
