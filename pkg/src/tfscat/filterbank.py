"""Morlet filterbanks sampled in the Fourier domain.

Every filter is stored as a real transfer function restricted to the
contiguous band of DFT bins where it is numerically non-zero.  Banks on
the audio axis can be long (2**19 bins and more), so dense transfers are
only materialised on request.

Three axes are supported:

``time``
    real-signal axis; the Littlewood-Paley sum symmetrises each analytic
    wavelet as ``(|h(w)|^2 + |h(-w)|^2) / 2``.
``log_frequency`` and ``octave``
    two-sided axes; negative centre frequencies are mirrored wavelets and
    the Littlewood-Paley sum is the plain sum of squared magnitudes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "BandwidthError",
    "MorletSpec",
    "Filter",
    "FilterBank",
    "quality_for_density",
    "modulation_quality",
    "build_morlet",
    "gaussian_lowpass",
    "build_cqt_bank",
    "build_modulation_banks",
    "build_octave_bank",
    "littlewood_paley",
    "bank_report",
    "next_pow2",
]

# Ratio of a filter's Fourier-domain standard deviation to the local
# spacing between neighbouring centre frequencies.
WIDTH_FACTOR = 0.63

# Same ratio for the octave-spaced modulation banks.  Wider filters there
# capture more of the scalogram's modulation energy at the cost of
# shorter averaging support.
MODULATION_WIDTH_FACTOR = 1.0

# Transfers are truncated where the Gaussian falls below this level.
_SUPPORT_EPS = 1e-16
_SUPPORT_SIGMAS = math.sqrt(2.0 * math.log(1.0 / _SUPPORT_EPS))

AXES = ("time", "log_frequency", "octave")


class BandwidthError(ValueError):
    """A filter does not fit below the Nyquist frequency of its axis."""


def next_pow2(n: int) -> int:
    return 1 << max(0, int(n) - 1).bit_length()


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def quality_for_density(filters_per_octave: float,
                        width_factor: float = WIDTH_FACTOR) -> float:
    """Envelope quality factor giving uniform coverage of a geometric grid.

    The Morlet envelope ``exp(-lam^2 t^2 / 2Q^2)`` has Fourier standard
    deviation ``lam / (2 pi Q)``.  Setting it to ``WIDTH_FACTOR`` times the
    local grid spacing ``lam (2^(1/2P) - 2^(-1/2P))`` gives a
    Littlewood-Paley sum that stays above 0.9 of its peak between the
    lowest and highest centre of a 12-per-octave bank.
    """
    if not width_factor > 0:
        raise ValueError("width_factor must be positive")
    if filters_per_octave <= 0:
        raise ValueError("filters_per_octave must be positive")
    p = float(filters_per_octave)
    spacing = 2.0 ** (0.5 / p) - 2.0 ** (-0.5 / p)
    return 1.0 / (2.0 * math.pi * width_factor * spacing)


@dataclass(frozen=True)
class MorletSpec:
    """Parameters of one Morlet wavelet.

    ``center_frequency`` is in units of the axis (Hz for time axes,
    cycles per octave for log-frequency and octave axes) and may be
    negative on two-sided axes.  ``sample_rate`` is the number of axis
    samples per unit (samples per second, or bins per octave).
    """

    center_frequency: float
    quality_factor: float
    signal_length: int
    sample_rate: float = 1.0

    def __post_init__(self):
        if not self.quality_factor > 0:
            raise ValueError(f"quality_factor must be > 0, got {self.quality_factor}")
        if not _is_pow2(int(self.signal_length)):
            raise ValueError(f"signal_length must be a power of two, got {self.signal_length}")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")


@dataclass(frozen=True, eq=False)
class Filter:
    """Real transfer function on a contiguous (circular) band of DFT bins.

    ``values[j]`` is the transfer at bin ``(start + j) % length``.
    """

    values: np.ndarray
    start: int
    length: int
    sample_rate: float
    center_frequency: float
    bandwidth: float
    corrective_kappa: float = 0.0
    quality_factor: float = math.nan
    energy: float = field(init=False)

    def __post_init__(self):
        values = np.ascontiguousarray(self.values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "energy", float(np.sum(np.abs(values) ** 2)))

    @property
    def bins(self) -> np.ndarray:
        return (self.start + np.arange(self.values.size)) % self.length

    @property
    def transfer(self) -> np.ndarray:
        out = np.zeros(self.length, dtype=np.complex128)
        out[self.bins] = self.values
        return out

    @property
    def peak(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def scaled(self, gain: float) -> "Filter":
        return replace(self, values=self.values * gain)

    def fold(self, spectrum: np.ndarray, n_out: int) -> np.ndarray:
        """Multiply ``spectrum`` by the transfer and alias it onto ``n_out`` bins.

        The inverse DFT of the result (of length ``n_out``), divided by
        ``length // n_out``, is the filtered signal sampled every
        ``length // n_out`` samples.
        """
        n = self.values.size
        stop = self.start + n
        if stop <= self.length:
            prod = spectrum[self.start:stop] * self.values
        else:
            prod = np.concatenate(
                (spectrum[self.start:], spectrum[: stop - self.length])
            ) * self.values
        offset = self.start % n_out
        rows = -(-(offset + n) // n_out)
        buf = np.zeros(rows * n_out, dtype=np.complex128)
        buf[offset:offset + n] = prod
        return buf.reshape(rows, n_out).sum(axis=0)

    def unfold_conj(self, folded: np.ndarray, out: np.ndarray) -> None:
        """Adjoint of :meth:`fold`: ``out[k] += folded[k % n] * conj(h[k])``."""
        n_out = folded.size
        idx = self.bins
        out[idx] += folded[idx % n_out] * np.conj(self.values)


@dataclass(frozen=True, eq=False)
class FilterBank:
    filters: tuple
    lowpass: Filter | None
    axis: str
    grid: np.ndarray
    normalization_gain: float
    length: int
    sample_rate: float
    quality_factor: float = math.nan

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"unknown axis {self.axis!r}")
        grid = np.asarray(self.grid, dtype=np.float64)
        if grid.size > 1 and not np.all(np.diff(grid) > 0):
            raise ValueError("filterbank grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "filters", tuple(self.filters))

    def __len__(self):
        return len(self.filters)

    def matrix(self) -> np.ndarray:
        """Dense transfers, one row per filter."""
        out = np.zeros((len(self.filters), self.length), dtype=np.complex128)
        for i, f in enumerate(self.filters):
            out[i, f.bins] = f.values
        return out

    def frequencies(self) -> np.ndarray:
        return np.fft.fftfreq(self.length, d=1.0 / self.sample_rate)

    def index_of(self, center: float) -> int:
        hits = np.flatnonzero(np.isclose(self.grid, center, rtol=1e-12, atol=1e-12))
        if hits.size == 0:
            raise KeyError(f"no filter centred at {center}")
        return int(hits[0])

    def passband(self) -> tuple[float, float]:
        """Frequency interval between the lowest and highest centres."""
        if self.axis == "time":
            pos = self.grid[self.grid > 0]
            return float(pos.min()), float(pos.max())
        return float(self.grid.min()), float(self.grid.max())


def _signed_bin_range(lo: float, hi: float, df: float, length: int) -> tuple[int, int]:
    k_lo = max(math.ceil(lo / df), -(length // 2))
    k_hi = min(math.floor(hi / df), length // 2 - 1)
    return k_lo, k_hi


def _periodic_gaussian(f: np.ndarray, center: float, sigma: float, rate: float) -> np.ndarray:
    """Gaussian bump summed over all its aliases ``center + m * rate``."""
    reach = math.ceil(_SUPPORT_SIGMAS * sigma / rate) + 1
    out = np.zeros_like(f)
    for m in range(-reach, reach + 1):
        out += np.exp(-((f - center - m * rate) ** 2) / (2.0 * sigma**2))
    return out


def _band(lo: float, hi: float, df: float, length: int, periodic: bool) -> np.ndarray:
    """Signed bin indices covering ``[lo, hi]``; the full period if ``periodic``."""
    if periodic:
        k_lo, k_hi = math.ceil(lo / df), math.floor(hi / df)
        if k_hi - k_lo + 1 >= length:
            return np.arange(-(length // 2), length - length // 2)
        return np.arange(k_lo, k_hi + 1)
    k_lo, k_hi = _signed_bin_range(lo, hi, df, length)
    return np.arange(k_lo, k_hi + 1)


def build_morlet(spec: MorletSpec, periodic: bool = False) -> Filter:
    """Fourier transform of ``lam exp(-lam^2 t^2 / 2Q^2) (exp(2 pi i lam t) - kappa)``.

    Up to the constant ``Q sqrt(2 pi)`` the transfer is a Gaussian bump at
    ``lam`` minus ``kappa`` times the same Gaussian at the origin, with
    ``kappa = exp(-2 pi^2 Q^2)`` cancelling the value at frequency zero.

    With ``periodic`` the transfer is that of the sampled wavelet: the
    Gaussians are summed over their aliases, so a filter and its mirror
    (centre ``-lam``) are exact reflections even when they reach the
    Nyquist frequency.  Without it the band is truncated to
    ``[-rate/2, rate/2)``, which suits analytic filters kept below Nyquist.
    """
    lam = float(spec.center_frequency)
    q = float(spec.quality_factor)
    length = int(spec.signal_length)
    rate = float(spec.sample_rate)
    nyquist = rate / 2.0
    if lam == 0.0:
        raise ValueError("centre frequency 0 is the low-pass case; use gaussian_lowpass")
    if abs(lam) > nyquist:
        raise BandwidthError(
            f"centre frequency {lam} exceeds the Nyquist frequency {nyquist} of its axis"
        )
    sigma = abs(lam) / (2.0 * math.pi * q)
    df = rate / length
    zero = np.zeros(1)
    if periodic:
        kappa = float(_periodic_gaussian(zero, lam, sigma, rate)[0]
                      / _periodic_gaussian(zero, 0.0, sigma, rate)[0])
    else:
        # Same expression as the Gaussian bump at f = 0, so transfer(0) is exactly 0.
        kappa = float(np.exp(-((0.0 - lam) ** 2) / (2.0 * sigma**2)))
    half = _SUPPORT_SIGMAS * sigma
    lo, hi = lam - half, lam + half
    if kappa > _SUPPORT_EPS:
        lo, hi = min(lo, -half), max(hi, half)
    k = _band(lo, hi, df, length, periodic)
    if k.size == 0:
        raise BandwidthError(f"filter at {lam} has no support on a length-{length} axis")
    f = k * df
    if periodic:
        bump = _periodic_gaussian(f, lam, sigma, rate)
        if kappa > 0.0:
            bump = bump - kappa * _periodic_gaussian(f, 0.0, sigma, rate)
    else:
        bump = np.exp(-((f - lam) ** 2) / (2.0 * sigma**2))
        if kappa > 0.0:
            bump = bump - kappa * np.exp(-(f**2) / (2.0 * sigma**2))
    values = q * math.sqrt(2.0 * math.pi) * bump
    return Filter(
        values=values,
        start=int(k[0]) % length,
        length=length,
        sample_rate=rate,
        center_frequency=lam,
        bandwidth=sigma,
        corrective_kappa=kappa,
        quality_factor=q,
    )


def gaussian_lowpass(cutoff: float, length: int, sample_rate: float = 1.0,
                     periodic: bool = False) -> Filter:
    """Unit-DC-gain Gaussian whose squared magnitude is 1/2 at ``cutoff``.

    ``periodic`` sums the Gaussian over its aliases (see :func:`build_morlet`).
    """
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    if not _is_pow2(int(length)):
        raise ValueError(f"length must be a power of two, got {length}")
    sigma = cutoff / math.sqrt(math.log(2.0))
    df = sample_rate / length
    half = _SUPPORT_SIGMAS * sigma
    k = _band(-half, half, df, length, periodic)
    f = k * df
    if periodic:
        values = _periodic_gaussian(f, 0.0, sigma, sample_rate)
        values = values / _periodic_gaussian(np.zeros(1), 0.0, sigma, sample_rate)[0]
    else:
        values = np.exp(-(f**2) / (2.0 * sigma**2))
    return Filter(
        values=values,
        start=int(k[0]) % length,
        length=length,
        sample_rate=sample_rate,
        center_frequency=0.0,
        bandwidth=sigma,
    )


def _band_profile(filters, axis: str, length: int) -> np.ndarray:
    power = np.zeros(length)
    for f in filters:
        power[f.bins] += np.abs(f.values) ** 2
    if axis == "time":
        mirrored = np.roll(power[::-1], 1)
        power = 0.5 * (power + mirrored)
    return power


def _normalize(filters, lowpass: Filter | None, axis: str, length: int):
    """Scale band-pass filters so that the Littlewood-Paley sum peaks at 1.

    Without a low-pass this divides by the square root of the measured
    maximum.  With one, the gain is the largest that keeps
    ``|phi|^2 + g^2 B <= 1`` at every bin.
    """
    band = _band_profile(filters, axis, length)
    peak = band.max()
    if not peak > 0:
        raise ValueError("filterbank has no energy")
    if lowpass is None:
        gain2 = 1.0 / peak
    else:
        phi2 = np.abs(lowpass.transfer) ** 2
        mask = band > 1e-10 * peak
        gain2 = float(np.min((1.0 - phi2[mask]) / band[mask]))
    gain = math.sqrt(gain2)
    return [f.scaled(gain) for f in filters], gain


def littlewood_paley(bank: FilterBank):
    """Littlewood-Paley sum of a bank, per DFT bin.

    Returns ``(lower_bound, upper_bound, profile)``.  ``upper_bound`` is the
    maximum over all bins; ``lower_bound`` the minimum over the passband
    (bins between the lowest and highest centre frequency).  ``profile``
    is in ``numpy.fft.fftfreq`` order.
    """
    if len(bank.filters) == 0 and bank.lowpass is None:
        raise ValueError("empty filterbank")
    profile = _band_profile(bank.filters, bank.axis, bank.length)
    if bank.lowpass is not None:
        profile = profile + np.abs(bank.lowpass.transfer) ** 2
    upper = float(profile.max())
    if len(bank.filters) == 0:
        return float(profile.min()), upper, profile
    freqs = bank.frequencies()
    lo, hi = bank.passband()
    mask = (freqs >= lo) & (freqs <= hi)
    lower = float(profile[mask].min()) if mask.any() else float("nan")
    return lower, upper, profile


def build_cqt_bank(sample_rate: float, Q: int, octaves: int, length: int,
                   T: float | None = None) -> FilterBank:
    """Constant-Q bank with ``Q`` wavelets per octave on the audio axis.

    The highest centre is ``sample_rate 2^(-1/Q) / 2`` rounded down onto the
    ``2^(n/Q)`` grid, and the bank extends ``octaves`` octaves below it.  The
    low-pass ``phi_T`` has its -3 dB point at ``1/T`` (default
    ``T = 8192 / sample_rate``).
    """
    Q, octaves, length = int(Q), int(octaves), int(length)
    if Q < 1 or octaves < 1:
        raise ValueError("Q and octaves must be >= 1")
    if not _is_pow2(length):
        raise ValueError(f"length must be a power of two, got {length}")
    if T is None:
        T = 8192.0 / sample_rate
    n_top = math.floor(Q * math.log2(sample_rate / 2.0) - 1.0 + 1e-9)
    n = np.arange(n_top - Q * octaves + 1, n_top + 1)
    grid = 2.0 ** (n / Q)
    nyquist = sample_rate / 2.0
    if grid[-1] >= nyquist:
        raise BandwidthError("CQT grid exceeds the Nyquist frequency")
    df = sample_rate / length
    if grid[0] <= df:
        raise BandwidthError(
            f"lowest centre {grid[0]:.3f} Hz is below the frequency resolution "
            f"{df:.3f} Hz of a length-{length} axis"
        )
    q_env = quality_for_density(Q)
    if grid[0] / (2 * math.pi * q_env) < df:
        warnings.warn(
            "lowest CQT band is narrower than one DFT bin; consider a longer axis",
            RuntimeWarning,
            stacklevel=2,
        )
    raw = [build_morlet(MorletSpec(lam, q_env, length, sample_rate)) for lam in grid]
    lowpass = gaussian_lowpass(1.0 / T, length, sample_rate)
    filters, gain = _normalize(raw, lowpass, "time", length)
    return FilterBank(filters, lowpass, "time", grid, gain, length, float(sample_rate), q_env)


def modulation_quality(filters_per_octave: float) -> float:
    """Envelope quality factor of the rate, scale and octave wavelets."""
    return quality_for_density(filters_per_octave, MODULATION_WIDTH_FACTOR)


def modulation_grids(T: float, u1_rate: float, bins_per_octave: int,
                     Q_mod: int = 1, alpha_max: float | None = None):
    """Centre frequencies of the rate (Hz) and scale (c/o) wavelets.

    Rates are ``2^(n/Q_mod) > 1/T`` up to ``alpha_max`` (default a quarter
    of ``u1_rate``).  Scales are ``+-2^(n/Q_mod)`` from 1 c/o up to half the
    log-frequency sampling rate, plus 0 for the low-pass.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if alpha_max is None:
        alpha_max = u1_rate / 4.0
    n_lo = math.floor(Q_mod * math.log2(1.0 / T)) + 1
    n_hi = math.floor(Q_mod * math.log2(alpha_max) + 1e-9)
    alphas = 2.0 ** (np.arange(n_lo, n_hi + 1) / Q_mod)
    alphas = alphas[alphas > 1.0 / T]
    if alphas.size == 0:
        raise ValueError(
            f"empty rate grid: no 2^n in (1/T, alpha_max] = ({1.0 / T:.4g}, {alpha_max:.4g}] Hz"
        )
    b_hi = math.floor(Q_mod * math.log2(bins_per_octave / 2.0) + 1e-9)
    scales = 2.0 ** (np.arange(0, b_hi + 1) / Q_mod) if b_hi >= 0 else np.array([])
    betas = np.concatenate((-scales[::-1], [0.0], scales))
    return alphas, betas


def build_modulation_banks(T: float, Q_mod: int = 1, u1_rate: float = None,
                           n_lambda: int = None, *, frames: int,
                           bins_per_octave: int, alpha_max: float | None = None,
                           freq_length: int | None = None):
    """Rate bank along time and scale bank along log-frequency.

    Parameters
    ----------
    T : float
        Averaging scale in seconds; only rates above ``1/T`` are kept.
    Q_mod : int
        Wavelets per octave on both modulation axes.
    u1_rate : float
        Frame rate of the scalogram, in Hz.
    n_lambda : int
        Number of log-frequency bins of the scalogram.
    frames : int
        Length of the (circular) time axis of the scalogram.
    bins_per_octave : int
        Sampling rate of the log-frequency axis.
    alpha_max : float, optional
        Largest rate; defaults to ``u1_rate / 4``.
    freq_length : int, optional
        Padded log-frequency length.  By default the next power of two
        holding ``n_lambda`` bins plus the support of the widest scale
        filter.

    Returns
    -------
    alpha_bank, beta_bank : FilterBank
        ``alpha_bank.lowpass`` is ``phi_T``; ``beta_bank.lowpass`` is the
        Gaussian used for the ``beta = 0`` path.
    """
    if u1_rate is None or n_lambda is None:
        raise TypeError("u1_rate and n_lambda are required")
    alphas, betas = modulation_grids(T, u1_rate, bins_per_octave, Q_mod, alpha_max)
    q_env = modulation_quality(Q_mod)

    raw_alpha = [build_morlet(MorletSpec(a, q_env, frames, u1_rate)) for a in alphas]
    phi_t = gaussian_lowpass(1.0 / T, frames, u1_rate)
    alpha_filters, alpha_gain = _normalize(raw_alpha, phi_t, "time", frames)
    alpha_bank = FilterBank(alpha_filters, phi_t, "time", alphas, alpha_gain,
                            frames, float(u1_rate), q_env)

    scales = betas[betas > 0]
    beta_cut = scales.min() / math.sqrt(2.0) if scales.size else bins_per_octave / 4.0
    if freq_length is None:
        freq_length = next_pow2(n_lambda + beta_support_bins(beta_cut, scales, q_env, bins_per_octave))
    raw_beta = [build_morlet(MorletSpec(b, q_env, freq_length, bins_per_octave),
                             periodic=True)
                for b in betas if b != 0.0]
    phi_b = gaussian_lowpass(beta_cut, freq_length, bins_per_octave, periodic=True)
    beta_filters, beta_gain = _normalize(raw_beta, phi_b, "log_frequency", freq_length)
    beta_bank = FilterBank(beta_filters, phi_b, "log_frequency", betas[betas != 0.0],
                           beta_gain, freq_length, float(bins_per_octave), q_env)
    return alpha_bank, beta_bank


def time_support(bandwidth: float) -> float:
    """Width (+-3 standard deviations) of a Gaussian envelope, in axis units."""
    return 6.0 / (2.0 * math.pi * bandwidth)


def beta_support_bins(lowpass_cutoff: float, scales, q_env: float,
                      bins_per_octave: int) -> int:
    widths = [time_support(lowpass_cutoff / math.sqrt(math.log(2.0)))]
    widths += [time_support(abs(b) / (2 * math.pi * q_env)) for b in scales]
    return int(math.ceil(max(widths) * bins_per_octave))


def build_octave_bank(gammas, n_octaves: int, Q_mod: int = 1) -> FilterBank:
    """Wavelets across the octave index (one sample per octave)."""
    gammas = np.sort(np.asarray(gammas, dtype=np.float64))
    if gammas.size == 0:
        raise ValueError("empty gamma grid")
    if np.any(np.abs(gammas) >= 0.5):
        raise ValueError("spiral wavelets need |gamma| < 1/2 cycle per octave")
    if np.any(gammas == 0):
        raise ValueError("gamma = 0 is not a wavelet")
    q_env = modulation_quality(Q_mod)
    widest = max(time_support(abs(g) / (2 * math.pi * q_env)) for g in gammas)
    length = next_pow2(n_octaves + int(math.ceil(widest)))
    raw = [build_morlet(MorletSpec(g, q_env, length, 1.0), periodic=True) for g in gammas]
    filters, gain = _normalize(raw, None, "octave", length)
    return FilterBank(filters, None, "octave", gammas, gain, length, 1.0, q_env)


def bank_report(bank: FilterBank) -> str:
    """One line per filter: index, centre, bandwidth, energy."""
    lines = [f"# axis={bank.axis} length={bank.length} rate={bank.sample_rate:g} "
             f"gain={bank.normalization_gain:.9g}"]
    for i, f in enumerate(bank.filters):
        lines.append(f"{i:4d} {f.center_frequency:14.6f} {f.bandwidth:12.6f} {f.energy:14.8e}")
    if bank.lowpass is not None:
        f = bank.lowpass
        lines.append(f"  lp {f.center_frequency:14.6f} {f.bandwidth:12.6f} {f.energy:14.8e}")
    return "\n".join(lines)
