"""Time-frequency scattering: scalogram, spectrotemporal modulus and averages.

All convolutions are circular products in the Fourier domain.  The input
is zero-padded to a power of two with at least ``T`` of margin, the
scalogram is sampled on a single uniform frame grid (one hop for every
band), and the log-frequency axis is zero-padded so that scale
convolutions do not wrap between the lowest and highest octave.

Norms of frame-grid tensors are frame-weighted (``hop * sum(v**2)``) so
that they are commensurate with ``sum(x**2)`` of the waveform.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.fft as sfft

from .audio import AudioBuffer
from .filterbank import (
    Filter,
    FilterBank,
    build_cqt_bank,
    build_modulation_banks,
    build_octave_bank,
    gaussian_lowpass,
    modulation_grids,
    next_pow2,
    modulation_quality,
    time_support,
)

log = logging.getLogger(__name__)

__all__ = [
    "ScatteringConfig",
    "Scalogram",
    "ScatteringPath",
    "ScatteringTensor",
    "Coefficients",
    "ScatteringNetwork",
    "ForwardCache",
    "get_network",
    "cqt",
    "average_s1",
    "strf",
    "average_s2",
    "scatter",
    "spiral_scatter",
    "enumerate_paths",
    "path_classes",
    "energy_budget",
]

# Phase factors are zero where the modulus is below this fraction of the max.
ZERO_MODULUS_RTOL = 1e-12

# Above this many bytes the second-layer phases are recomputed in the
# backward pass instead of being kept.
PHASE_CACHE_LIMIT = 256 * 2**20


@dataclass(frozen=True)
class ScatteringConfig:
    """Parameters of the scattering network.

    ``T`` is in seconds (default 8192 samples), ``F`` in octaves (0 means
    transposition-sensitive), ``u1_hop`` in samples (default ``T`` in
    samples / 64, rounded down to a power of two).
    """

    sample_rate: float = 44100.0
    Q: int = 12
    octaves: int = 9
    T: float | None = None
    F: float = 0.0
    u1_hop: int | None = None
    alpha_max: float | None = None
    Q_mod: int = 1
    spiral_enabled: bool = False
    gammas: tuple = (-0.25, 0.25)

    def __post_init__(self):
        set_ = functools.partial(object.__setattr__, self)
        set_("sample_rate", float(self.sample_rate))
        set_("Q", int(self.Q))
        set_("octaves", int(self.octaves))
        set_("Q_mod", int(self.Q_mod))
        set_("F", float(self.F))
        set_("gammas", tuple(float(g) for g in self.gammas))
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if self.Q < 1 or self.octaves < 1 or self.Q_mod < 1:
            raise ValueError("Q, octaves and Q_mod must be >= 1")
        if self.T is None:
            set_("T", 8192.0 / self.sample_rate)
        set_("T", float(self.T))
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.F < 0:
            raise ValueError("F must be >= 0")
        if self.u1_hop is None:
            hop = max(1, int(round(self.T * self.sample_rate)) // 64)
            set_("u1_hop", 1 << (hop.bit_length() - 1))
        set_("u1_hop", int(self.u1_hop))
        if self.u1_hop < 1 or self.u1_hop & (self.u1_hop - 1):
            raise ValueError(f"u1_hop must be a power of two, got {self.u1_hop}")
        if self.alpha_max is not None:
            set_("alpha_max", float(self.alpha_max))
            if not self.u1_rate > 2 * self.alpha_max:
                raise ValueError("the scalogram rate must exceed twice alpha_max")
        if any(abs(g) >= 0.5 for g in self.gammas):
            raise ValueError("|gamma| must be < 1/2 cycle per octave")

    @property
    def u1_rate(self) -> float:
        return self.sample_rate / self.u1_hop

    @property
    def T_samples(self) -> int:
        return int(math.ceil(self.T * self.sample_rate - 1e-9))

    @property
    def alpha_max_hz(self) -> float:
        return self.alpha_max if self.alpha_max is not None else self.u1_rate / 4.0

    @property
    def n_lambda(self) -> int:
        return self.Q * self.octaves

    def padded_length(self, n_samples: int) -> int:
        return next_pow2(int(n_samples) + self.T_samples)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gammas"] = list(self.gammas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScatteringConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        if "gammas" in known:
            known["gammas"] = tuple(known["gammas"])
        return cls(**known)


@dataclass
class Scalogram:
    """First-order coefficients, ``values[frame, lambda]``."""

    values: np.ndarray
    frame_rate: float
    lambda_grid: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.lambda_grid = np.asarray(self.lambda_grid, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != self.lambda_grid.size:
            raise ValueError(
                f"scalogram shape {self.values.shape} does not match "
                f"{self.lambda_grid.size} frequencies"
            )

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, order=True)
class ScatteringPath:
    """Second-order path.  ``lambda_`` is None for path classes shared by all bands."""

    alpha: float
    beta: float
    gamma: float | None = None
    lambda_: float | None = None

    def key(self) -> tuple:
        return (self.alpha, self.beta, self.gamma)

    def to_dict(self) -> dict:
        d = {"alpha": self.alpha, "beta": self.beta}
        if self.gamma is not None:
            d["gamma"] = self.gamma
        if self.lambda_ is not None:
            d["lambda"] = self.lambda_
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScatteringPath":
        return cls(float(d["alpha"]), float(d["beta"]),
                   None if d.get("gamma") is None else float(d["gamma"]),
                   None if d.get("lambda") is None else float(d["lambda"]))


@dataclass
class ScatteringTensor:
    """Second-order coefficients, ``values[path, frame, lambda]``."""

    paths: list
    values: np.ndarray
    frame_rate: float
    lambda_grid: np.ndarray
    order: str = "S2"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.lambda_grid = np.asarray(self.lambda_grid, dtype=np.float64)
        self.paths = list(self.paths)
        if self.order not in ("U2", "S2", "S1-bundle"):
            raise ValueError(f"unknown order {self.order!r}")
        if self.values.ndim != 3 or self.values.shape[0] != len(self.paths):
            raise ValueError(
                f"tensor shape {self.values.shape} does not match {len(self.paths)} paths"
            )
        if self.values.shape[2] != self.lambda_grid.size:
            raise ValueError("tensor lambda axis does not match its grid")

    def index(self, alpha: float, beta: float, gamma: float | None = None) -> int:
        for i, p in enumerate(self.paths):
            if (math.isclose(p.alpha, alpha) and math.isclose(p.beta, beta, abs_tol=1e-12)
                    and (p.gamma == gamma or (p.gamma is not None and gamma is not None
                                              and math.isclose(p.gamma, gamma)))):
                return i
        raise KeyError(f"no path (alpha={alpha}, beta={beta}, gamma={gamma})")

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


@dataclass
class Coefficients:
    """S1 and S2 of one signal, with the configuration that produced them."""

    s1: Scalogram
    s2: ScatteringTensor
    config: ScatteringConfig
    n_samples: int

    @property
    def frame_weight(self) -> float:
        return float(self.config.u1_hop)

    def copy(self) -> "Coefficients":
        return Coefficients(
            Scalogram(self.s1.values.copy(), self.s1.frame_rate, self.s1.lambda_grid),
            ScatteringTensor(list(self.s2.paths), self.s2.values.copy(),
                             self.s2.frame_rate, self.s2.lambda_grid, self.s2.order),
            self.config,
            self.n_samples,
        )


def _phase(z: np.ndarray) -> np.ndarray:
    mod = np.abs(z)
    peak = mod.max() if mod.size else 0.0
    out = np.zeros_like(z)
    ok = mod > ZERO_MODULUS_RTOL * peak
    out[ok] = z[ok] / mod[ok]
    return out


def _beta_filter_width(f: Filter) -> float:
    return time_support(f.bandwidth)


class ScatteringNetwork:
    """Filterbanks and path table for one configuration and padded length."""

    def __init__(self, cfg: ScatteringConfig, length: int):
        self.cfg = cfg
        self.length = int(length)
        self.hop = cfg.u1_hop
        if self.length % self.hop or self.length // self.hop < 4:
            raise ValueError("padded length must be a multiple of the hop with >= 4 frames")
        self.frames = self.length // self.hop
        self.lambda_bank = build_cqt_bank(cfg.sample_rate, cfg.Q, cfg.octaves,
                                          self.length, cfg.T)
        self.n_lambda = len(self.lambda_bank)
        self.alpha_bank, self.beta_bank = build_modulation_banks(
            cfg.T, cfg.Q_mod, cfg.u1_rate, self.n_lambda,
            frames=self.frames, bins_per_octave=cfg.Q, alpha_max=cfg.alpha_max,
        )
        self.freq_length = self.beta_bank.length
        self.phi_t = self.alpha_bank.lowpass
        self.phi_f = (gaussian_lowpass(1.0 / cfg.F, self.freq_length, cfg.Q, periodic=True)
                      if cfg.F > 0 else None)
        self.alpha_hat = self.alpha_bank.matrix()
        self.beta_hat = {0.0: self.beta_bank.lowpass.transfer}
        for b, f in zip(self.beta_bank.grid, self.beta_bank.filters):
            self.beta_hat[float(b)] = f.transfer
        self.paths, self.dropped = path_classes(cfg)
        self.gamma_bank = (build_octave_bank(cfg.gammas, cfg.octaves, cfg.Q_mod)
                           if cfg.spiral_enabled else None)

    @property
    def lambda_grid(self) -> np.ndarray:
        return self.lambda_bank.grid

    def n_frames(self, n_samples: int) -> int:
        return -(-int(n_samples) // self.hop)


@functools.lru_cache(maxsize=8)
def _network(cfg: ScatteringConfig, length: int) -> ScatteringNetwork:
    return ScatteringNetwork(cfg, length)


def get_network(cfg: ScatteringConfig, n_samples: int) -> ScatteringNetwork:
    return _network(cfg, cfg.padded_length(n_samples))


def path_classes(cfg: ScatteringConfig):
    """Sorted ``(alpha, beta)`` path classes and the dropped ones.

    A scale is dropped when its filter's +-3 sigma support is longer than
    the log-frequency axis.
    """
    alphas, betas = modulation_grids(cfg.T, cfg.u1_rate, cfg.Q, cfg.Q_mod, cfg.alpha_max)
    q_env = modulation_quality(cfg.Q_mod)
    scales = betas[betas > 0]
    kept, dropped = [], []
    for b in betas:
        if b == 0.0:
            cut = scales.min() / math.sqrt(2.0) if scales.size else cfg.Q / 4.0
            width = time_support(cut / math.sqrt(math.log(2.0)))
        else:
            width = time_support(abs(b) / (2 * math.pi * q_env))
        (kept if width * cfg.Q <= cfg.n_lambda else dropped).append(float(b))
    paths = [ScatteringPath(float(a), b) for a in alphas for b in kept]
    lost = [ScatteringPath(float(a), b) for a in alphas for b in dropped]
    if lost:
        log.warning("dropping %d paths whose scale filter outgrows the %d-bin "
                    "log-frequency axis: beta in %s", len(lost), cfg.n_lambda, dropped)
    if not paths:
        raise ValueError("no scattering paths for this configuration")
    return sorted(paths), lost


def enumerate_paths(cfg: ScatteringConfig) -> list:
    """All ``(lambda, alpha, beta[, gamma])`` paths, sorted and deduplicated."""
    classes, _ = path_classes(cfg)
    n_top = math.floor(cfg.Q * math.log2(cfg.sample_rate / 2.0) - 1.0 + 1e-9)
    lambdas = 2.0 ** (np.arange(n_top - cfg.n_lambda + 1, n_top + 1) / cfg.Q)
    gammas = sorted(set(cfg.gammas)) if cfg.spiral_enabled else [None]
    out = {ScatteringPath(p.alpha, p.beta, g, float(lam))
           for lam in lambdas for p in classes for g in gammas}
    return sorted(out, key=lambda p: (p.lambda_, p.alpha, p.beta,
                                      -math.inf if p.gamma is None else p.gamma))


# -- low-level circular operators -------------------------------------------

def _first_layer(bank: FilterBank, hop: int, x: np.ndarray) -> np.ndarray:
    """Decimated complex CQT, shape ``(frames, n_lambda)``."""
    L = bank.length
    spectrum = sfft.fft(_pad1(x, L))
    frames = L // hop
    folded = np.empty((frames, len(bank.filters)), dtype=np.complex128)
    for j, f in enumerate(bank.filters):
        folded[:, j] = f.fold(spectrum, frames)
    return sfft.ifft(folded, axis=0) / hop


def _first_layer_adjoint(bank: FilterBank, hop: int, q: np.ndarray, n: int) -> np.ndarray:
    """Real part of the adjoint of :func:`_first_layer`, trimmed to ``n`` samples."""
    L = bank.length
    q_hat = sfft.fft(q, axis=0)
    acc = np.zeros(L, dtype=np.complex128)
    for j, f in enumerate(bank.filters):
        f.unfold_conj(q_hat[:, j], acc)
    return sfft.ifft(acc).real[:n]


def _pad1(x: np.ndarray, n: int) -> np.ndarray:
    if x.size > n:
        raise ValueError(f"signal of length {x.size} exceeds axis length {n}")
    out = np.zeros(n, dtype=x.dtype)
    out[: x.size] = x
    return out


def _pad_axis(v: np.ndarray, n: int, axis: int) -> np.ndarray:
    cur = v.shape[axis]
    if cur == n:
        return v
    if cur > n:
        raise ValueError(f"axis of length {cur} exceeds filter length {n}")
    widths = [(0, 0)] * v.ndim
    widths[axis] = (0, n - cur)
    return np.pad(v, widths)


def _smooth(v: np.ndarray, phi_t: Filter, phi_f: Filter | None) -> np.ndarray:
    """Low-pass ``v[..., frame, lambda]`` along time and optionally log-frequency.

    Both low-pass transfers are real and even, so this operator is
    self-adjoint.  Arrays shorter than a filter are zero-padded to its
    length and the result is trimmed back.
    """
    n_t, n_s = v.shape[-2], v.shape[-1]
    m = phi_t.length
    h = phi_t.transfer.real[: m // 2 + 1]
    out = sfft.irfft(sfft.rfft(v, n=m, axis=-2) * h[:, None], n=m, axis=-2)[..., :n_t, :]
    if phi_f is not None:
        k = phi_f.length
        g = phi_f.transfer.real[: k // 2 + 1]
        out = sfft.irfft(sfft.rfft(out, n=k, axis=-1) * g, n=k, axis=-1)[..., :n_s]
    return np.ascontiguousarray(out)


def _modulation_spectrum(u1: np.ndarray, frames: int, freq_length: int) -> np.ndarray:
    u = _pad_axis(_pad_axis(u1, frames, 0), freq_length, 1)
    return sfft.fft2(u)


def _second_layer_iter(u1_hat: np.ndarray, alpha_hat: np.ndarray, alpha_grid,
                       beta_hat: dict, paths, n_lambda: int):
    """Yield ``(index, Z)`` with ``Z`` the complex second-layer field of each path.

    Paths sharing a rate reuse one inverse transform along time.
    """
    by_alpha: dict = {}
    for i, p in enumerate(paths):
        by_alpha.setdefault(p.alpha, []).append((i, p))
    for alpha, group in by_alpha.items():
        a = alpha_hat[_grid_index(alpha_grid, alpha)]
        w = sfft.ifft(u1_hat * a[:, None], axis=0)
        for i, p in group:
            z = sfft.ifft(w * beta_hat[p.beta][None, :], axis=1)[:, :n_lambda]
            yield i, z


def _grid_index(grid, value) -> int:
    hits = np.flatnonzero(np.isclose(grid, value, rtol=1e-12, atol=0))
    if hits.size == 0:
        raise KeyError(value)
    return int(hits[0])


# -- public stage functions --------------------------------------------------

def cqt(x: AudioBuffer, bank: FilterBank, hop: int, trim: bool = True) -> Scalogram:
    """Scalogram ``|x * psi_lambda|`` sampled every ``hop`` samples.

    With ``trim`` the frames beyond the input (padding margin) are dropped.
    """
    samples = np.asarray(x.samples, dtype=np.float64)
    if not np.all(np.isfinite(samples)):
        raise ValueError("input contains non-finite samples")
    if samples.size > bank.length:
        raise ValueError(f"input of {samples.size} samples overflows the "
                         f"length-{bank.length} filterbank")
    if bank.length % hop:
        raise ValueError("hop must divide the filterbank length")
    z = _first_layer(bank, hop, samples)
    u1 = np.abs(z)
    if trim:
        u1 = u1[: -(-samples.size // hop)]
    return Scalogram(u1, x.sample_rate / hop, bank.grid)


def average_s1(u1: Scalogram, phi_t: Filter, phi_f: Filter | None = None) -> Scalogram:
    """Low-pass the scalogram over time (and over log-frequency if ``phi_f``)."""
    return Scalogram(_smooth(u1.values, phi_t, phi_f), u1.frame_rate, u1.lambda_grid)


def _bank_beta_hat(beta_bank: FilterBank) -> dict:
    hat = {0.0: beta_bank.lowpass.transfer}
    for b, f in zip(beta_bank.grid, beta_bank.filters):
        hat[float(b)] = f.transfer
    return hat


def strf(u1: Scalogram, alpha_bank: FilterBank, beta_bank: FilterBank,
         paths=None) -> ScatteringTensor:
    """Second-order modulus ``|U1 *_t psi_alpha *_log(lambda) psi_beta|``.

    The ``beta = 0`` paths use the scale bank's low-pass.
    """
    if len(alpha_bank) == 0:
        raise ValueError("empty rate grid")
    if paths is None:
        betas = [0.0] + [float(b) for b in beta_bank.grid]
        paths = sorted(ScatteringPath(float(a), b) for a in alpha_bank.grid for b in betas)
    n_t, n_lam = u1.values.shape
    u1_hat = _modulation_spectrum(u1.values, alpha_bank.length, beta_bank.length)
    out = np.empty((len(paths), n_t, n_lam))
    for i, z in _second_layer_iter(u1_hat, alpha_bank.matrix(), alpha_bank.grid,
                                   _bank_beta_hat(beta_bank), paths, n_lam):
        out[i] = np.abs(z[:n_t])
    return ScatteringTensor(paths, out, u1.frame_rate, u1.lambda_grid, "U2")


def average_s2(u2: ScatteringTensor, phi_t: Filter, phi_f: Filter | None = None) -> ScatteringTensor:
    """Low-pass every path of ``u2`` over time (and log-frequency if ``phi_f``)."""
    return ScatteringTensor(u2.paths, _smooth(u2.values, phi_t, phi_f),
                            u2.frame_rate, u2.lambda_grid, "S2")


def _bins_per_octave(grid: np.ndarray) -> int:
    if grid.size < 2:
        raise ValueError("need at least two frequencies")
    ratios = np.log2(grid[1:] / grid[:-1])
    q = 1.0 / ratios.mean()
    if not np.allclose(ratios, ratios[0], rtol=1e-9) or abs(q - round(q)) > 1e-6:
        raise ValueError("frequency grid is not geometric with an integer number of "
                         "bins per octave")
    return int(round(q))


def spiral_scatter(u1: Scalogram, alpha_bank: FilterBank, beta_bank: FilterBank,
                   gamma_bank: FilterBank, paths=None) -> ScatteringTensor:
    """Spiral second-order modulus, adding a convolution across octaves.

    The log-frequency axis is rolled into ``[octave, chroma]``; for each
    chroma the field is filtered along the octave index by each ``psi_gamma``.
    """
    q = _bins_per_octave(u1.lambda_grid)
    n_t, n_lam = u1.values.shape
    if n_lam % q:
        raise ValueError(f"{n_lam} frequencies do not fill whole octaves of {q} bins")
    n_oct = n_lam // q
    if gamma_bank.axis != "octave":
        raise ValueError("gamma bank must live on the octave axis")
    if gamma_bank.length < n_oct:
        raise ValueError("gamma bank is shorter than the number of octaves")
    for g in gamma_bank.grid:
        if abs(g) >= 0.5:
            raise ValueError("|gamma| must be < 1/2 cycle per octave")
    if paths is None:
        betas = [0.0] + [float(b) for b in beta_bank.grid]
        paths = [ScatteringPath(float(a), b) for a in alpha_bank.grid for b in betas]
    classes = sorted({ScatteringPath(p.alpha, p.beta) for p in paths})
    gammas = [float(g) for g in gamma_bank.grid]
    out_paths = sorted(ScatteringPath(p.alpha, p.beta, g) for p in classes for g in gammas)
    position = {p.key(): i for i, p in enumerate(out_paths)}
    gamma_hat = gamma_bank.matrix()
    u1_hat = _modulation_spectrum(u1.values, alpha_bank.length, beta_bank.length)
    out = np.empty((len(out_paths), n_t, n_lam))
    for i, z in _second_layer_iter(u1_hat, alpha_bank.matrix(), alpha_bank.grid,
                                   _bank_beta_hat(beta_bank), classes, n_lam):
        zo = z.reshape(z.shape[0], n_oct, q)
        zo_hat = sfft.fft(_pad_axis(zo, gamma_bank.length, 1), axis=1)
        for k, g in enumerate(gammas):
            y = sfft.ifft(zo_hat * gamma_hat[k][None, :, None], axis=1)[:, :n_oct, :]
            out[position[(classes[i].alpha, classes[i].beta, g)]] = (
                np.abs(y.reshape(z.shape[0], n_lam))[:n_t])
    return ScatteringTensor(out_paths, out, u1.frame_rate, u1.lambda_grid, "U2")


# -- full forward pass ---------------------------------------------------------

@dataclass
class ForwardCache:
    """Intermediates of one forward pass, on the full circular frame grid.

    ``phase_u1`` and ``phase_u2`` hold ``z / |z|`` of the pre-modulus
    convolutions (0 where ``|z|`` vanishes).  ``phase_u2`` is None when the
    backward pass must recompute it from ``u1_hat``.
    """

    network: ScatteringNetwork
    n_samples: int
    u1: np.ndarray
    phase_u1: np.ndarray
    u1_hat: np.ndarray
    phase_u2: np.ndarray | None
    u2: np.ndarray | None = None
    spiral: ScatteringTensor | None = None
    extras: dict = field(default_factory=dict)

    def recompute_phase_u2(self):
        net = self.network
        for i, z in _second_layer_iter(self.u1_hat, net.alpha_hat, net.alpha_bank.grid,
                                       net.beta_hat, net.paths, net.n_lambda):
            yield i, _phase(z)


def _forward(net: ScatteringNetwork, x: np.ndarray, keep_u2: bool = False,
             cache_phases: bool | None = None):
    n = x.size
    n_frames = net.n_frames(n)
    z1 = _first_layer(net.lambda_bank, net.hop, x)
    u1 = np.abs(z1)
    phase_u1 = _phase(z1)
    del z1
    s1 = _smooth(u1, net.phi_t, net.phi_f)[:n_frames]

    u1_hat = _modulation_spectrum(u1, net.frames, net.freq_length)
    n_paths = len(net.paths)
    if cache_phases is None:
        cache_phases = n_paths * u1.size * 16 <= PHASE_CACHE_LIMIT
    phase_u2 = np.empty((n_paths,) + u1.shape, np.complex128) if cache_phases else None
    u2 = np.empty((n_paths,) + u1.shape) if keep_u2 else None
    s2 = np.empty((n_paths, n_frames, net.n_lambda))
    for i, z in _second_layer_iter(u1_hat, net.alpha_hat, net.alpha_bank.grid,
                                   net.beta_hat, net.paths, net.n_lambda):
        mod = np.abs(z)
        s2[i] = _smooth(mod, net.phi_t, net.phi_f)[:n_frames]
        if keep_u2:
            u2[i] = mod
        if cache_phases:
            phase_u2[i] = _phase(z)
    cache = ForwardCache(net, n, u1, phase_u1, u1_hat, phase_u2, u2)
    return s1, s2, cache


def _wrap(net: ScatteringNetwork, s1: np.ndarray, s2: np.ndarray, n: int) -> Coefficients:
    rate = net.cfg.u1_rate
    return Coefficients(
        Scalogram(s1, rate, net.lambda_grid),
        ScatteringTensor(net.paths, s2, rate, net.lambda_grid, "S2"),
        net.cfg,
        n,
    )


def scatter(x: AudioBuffer, cfg: ScatteringConfig, cache_phases: bool | None = None):
    """Full forward pass.

    Returns ``(S1, S2, cache)``.  S1 and S2 cover the frames of the input;
    ``cache`` keeps U1, U2 and the phase factors on the padded grid for the
    adjoint.  With ``cfg.spiral_enabled`` the cache also carries the
    averaged spiral coefficients (forward only).
    """
    samples = np.asarray(x.samples, dtype=np.float64)
    if not np.all(np.isfinite(samples)):
        raise ValueError("input contains non-finite samples")
    if samples.size == 0:
        raise ValueError("empty input")
    if not math.isclose(x.sample_rate, cfg.sample_rate):
        raise ValueError(f"input sample rate {x.sample_rate} does not match the "
                         f"configuration ({cfg.sample_rate})")
    net = get_network(cfg, samples.size)
    s1, s2, cache = _forward(net, samples, keep_u2=True, cache_phases=cache_phases)
    coeffs = _wrap(net, s1, s2, samples.size)
    if cfg.spiral_enabled:
        u1 = Scalogram(cache.u1, cfg.u1_rate, net.lambda_grid)
        spiral = spiral_scatter(u1, net.alpha_bank, net.beta_bank, net.gamma_bank, net.paths)
        spiral.values = _smooth(spiral.values, net.phi_t, net.phi_f)[:, :net.n_frames(samples.size)]
        spiral.order = "S2"
        cache.spiral = spiral
    return coeffs.s1, coeffs.s2, cache


def coefficients(x: AudioBuffer, cfg: ScatteringConfig) -> Coefficients:
    s1, s2, _ = scatter(x, cfg)
    return Coefficients(s1, s2, cfg, len(x))


def energy_budget(x: AudioBuffer, cfg: ScatteringConfig) -> dict:
    """Frame-weighted energies of every stage, on the full padded grid."""
    samples = np.asarray(x.samples, dtype=np.float64)
    net = get_network(cfg, samples.size)
    s1, s2, cache = _forward(net, samples, keep_u2=True, cache_phases=False)
    w = float(net.hop)
    s1_full = _smooth(cache.u1, net.phi_t, net.phi_f)
    s2_full = _smooth(cache.u2, net.phi_t, net.phi_f)
    return {
        "x": float(np.sum(samples**2)),
        "U1": w * float(np.sum(cache.u1**2)),
        "S1": w * float(np.sum(s1_full**2)),
        "U2": w * float(np.sum(cache.u2**2)),
        "S2": w * float(np.sum(s2_full**2)),
        "S1_trimmed": w * float(np.sum(s1**2)),
        "S2_trimmed": w * float(np.sum(s2**2)),
    }
