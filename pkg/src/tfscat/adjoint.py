"""Reconstruction loss and its gradient with respect to the waveform.

Every backward stage is the Hermitian adjoint of the matching forward
stage: Fourier-domain multiplication by the conjugate transfer, with the
modulus linearised through its unit phase factor.  The returned gradient
is the descent direction ``-dE/dy``, so an update adds it.

The loss uses the frame-weighted squared norm (``hop * sum``), which makes
coefficient residuals and waveform gradients commensurate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .audio import AudioBuffer
from .filterbank import Filter, FilterBank
from .scattering import (
    Coefficients,
    ForwardCache,
    ScatteringConfig,
    ScatteringNetwork,
    _first_layer,
    _first_layer_adjoint,
    _forward,
    _grid_index,
    _pad_axis,
    _phase,
    _second_layer_iter,
    _smooth,
    _wrap,
    get_network,
)

__all__ = [
    "GradientTape",
    "LossReport",
    "loss",
    "grad_s2_to_u2",
    "grad_u2_to_u1",
    "grad_u1_to_waveform",
    "forward_with_tape",
    "gradient_from_tape",
    "backscatter",
    "first_layer_linear",
    "first_layer_adjoint",
    "second_layer_linear",
    "second_layer_adjoint",
]


@dataclass
class GradientTape:
    """Phase factors of one forward pass on the padded grid.

    ``phase_u2`` is None when it is recomputed on demand from ``u1_hat``.
    """

    network: ScatteringNetwork
    n_samples: int
    phase_u1: np.ndarray
    u1_hat: np.ndarray
    phase_u2: np.ndarray | None = None

    @classmethod
    def from_cache(cls, cache: ForwardCache) -> "GradientTape":
        return cls(cache.network, cache.n_samples, cache.phase_u1, cache.u1_hat,
                   cache.phase_u2)

    def path_phases(self):
        """Yield ``(index, phase)`` for every second-order path in order."""
        if self.phase_u2 is not None:
            for i in range(self.phase_u2.shape[0]):
                yield i, self.phase_u2[i]
            return
        net = self.network
        for i, z in _second_layer_iter(self.u1_hat, net.alpha_hat, net.alpha_bank.grid,
                                       net.beta_hat, net.paths, net.n_lambda):
            yield i, _phase(z)


@dataclass(frozen=True)
class LossReport:
    total: float
    first_order: float
    second_order: float

    def to_dict(self) -> dict:
        return {"total": self.total, "first_order": self.first_order,
                "second_order": self.second_order}


def _check_compatible(a: Coefficients, b: Coefficients) -> None:
    if a.config != b.config:
        raise ValueError("coefficients were computed with different configurations")
    if a.s1.values.shape != b.s1.values.shape or a.s2.values.shape != b.s2.values.shape:
        raise ValueError(
            f"coefficient shapes differ: S1 {a.s1.values.shape} vs {b.s1.values.shape}, "
            f"S2 {a.s2.values.shape} vs {b.s2.values.shape}"
        )
    if [p.key() for p in a.s2.paths] != [p.key() for p in b.s2.paths]:
        raise ValueError("coefficient path tables differ")


def loss(sx: Coefficients, sy: Coefficients) -> LossReport:
    """Half the frame-weighted squared distance between two coefficient sets."""
    _check_compatible(sx, sy)
    w = 0.5 * sx.frame_weight
    e1 = w * float(np.sum((sx.s1.values - sy.s1.values) ** 2))
    e2 = w * float(np.sum((sx.s2.values - sy.s2.values) ** 2))
    return LossReport(e1 + e2, e1, e2)


# -- linear stages and their adjoints ----------------------------------------

def first_layer_linear(x: np.ndarray, net: ScatteringNetwork) -> np.ndarray:
    """Complex CQT of ``x`` on the padded frame grid, ``(frames, n_lambda)``."""
    return _first_layer(net.lambda_bank, net.hop, np.asarray(x, dtype=np.float64))


def first_layer_adjoint(q: np.ndarray, net: ScatteringNetwork, n: int,
                        real: bool = True) -> np.ndarray:
    """Adjoint of :func:`first_layer_linear`.

    With ``real=False`` the complex result is returned (its real part is
    the adjoint for real inputs).
    """
    if real:
        return _first_layer_adjoint(net.lambda_bank, net.hop, q, n)
    L = net.length
    q_hat = sfft.fft(q, axis=0)
    acc = np.zeros(L, dtype=np.complex128)
    for j, f in enumerate(net.lambda_bank.filters):
        f.unfold_conj(q_hat[:, j], acc)
    return sfft.ifft(acc)[:n]


def second_layer_linear(u1: np.ndarray, net: ScatteringNetwork) -> np.ndarray:
    """Complex rate-scale fields of a real ``u1`` on the padded grid."""
    u1_hat = sfft.fft2(_pad_axis(_pad_axis(u1, net.frames, 0), net.freq_length, 1))
    out = np.empty((len(net.paths), net.frames, net.n_lambda), np.complex128)
    for i, z in _second_layer_iter(u1_hat, net.alpha_hat, net.alpha_bank.grid,
                                   net.beta_hat, net.paths, net.n_lambda):
        out[i] = z
    return out


def _accumulate_paths(items, net: ScatteringNetwork) -> np.ndarray:
    """``sum_i A_i^H q_i`` for ``(index, q_i)`` pairs, before the inverse fft2."""
    acc = np.zeros((net.frames, net.freq_length), np.complex128)
    current, w = None, None
    for i, q in items:
        alpha = net.paths[i].alpha
        if alpha != current:
            if w is not None:
                acc += sfft.fft(w, axis=0) * np.conj(
                    net.alpha_hat[_grid_index(net.alpha_bank.grid, current)])[:, None]
            current, w = alpha, np.zeros_like(acc)
        qi = _pad_axis(q, net.freq_length, 1)
        w += sfft.fft(qi, axis=1) * np.conj(net.beta_hat[net.paths[i].beta])[None, :]
    if w is not None:
        acc += sfft.fft(w, axis=0) * np.conj(
            net.alpha_hat[_grid_index(net.alpha_bank.grid, current)])[:, None]
    return acc


def second_layer_adjoint(q: np.ndarray, net: ScatteringNetwork,
                         real: bool = True) -> np.ndarray:
    """Adjoint of :func:`second_layer_linear`, ``(frames, n_lambda)``."""
    out = sfft.ifft2(_accumulate_paths(enumerate(q), net))[:, : net.n_lambda]
    return out.real if real else out


_FROM_NETWORK = object()


# -- backward chain --------------------------------------------------------------

def grad_s2_to_u2(residual: np.ndarray, phi_t: Filter, phi_f: Filter | None = None,
                  frames: int | None = None) -> np.ndarray:
    """Adjoint of smoothing then trimming to the first ``residual`` frames.

    ``frames`` is the length of the padded grid (default: the length of
    ``phi_t``).
    """
    frames = phi_t.length if frames is None else frames
    return _smooth(_pad_axis(np.asarray(residual, dtype=np.float64), frames, -2),
                   phi_t, phi_f)


def grad_u2_to_u1(grad_u2, tape: GradientTape, residual_s1: np.ndarray,
                  phi_t: Filter | None = None, phi_f=_FROM_NETWORK) -> np.ndarray:
    """Backpropagate through the second-order modulus and add the S1 term.

    ``grad_u2`` is either an array ``(paths, frames, n_lambda)`` or a
    callable returning the gradient of one path from its index, which
    avoids holding every path at once.  The low-pass filters default to
    those of the tape's network.
    """
    if tape is None:
        raise ValueError("a gradient tape from the forward pass is required")
    net = tape.network
    phi_t = net.phi_t if phi_t is None else phi_t
    phi_f = net.phi_f if phi_f is _FROM_NETWORK else phi_f
    get = grad_u2 if callable(grad_u2) else (lambda i: grad_u2[i])
    items = ((i, phase * get(i)) for i, phase in tape.path_phases())
    g = sfft.ifft2(_accumulate_paths(items, net))[:, : net.n_lambda].real
    g += grad_s2_to_u2(residual_s1, phi_t, phi_f, net.frames)
    return g


def grad_u1_to_waveform(grad_u1: np.ndarray, tape: GradientTape,
                        bank: FilterBank | None = None) -> np.ndarray:
    """Backpropagate through the first-order modulus and the decimated CQT."""
    net = tape.network
    bank = net.lambda_bank if bank is None else bank
    return _first_layer_adjoint(bank, net.hop, tape.phase_u1 * grad_u1, tape.n_samples)


def forward_with_tape(y: AudioBuffer, cfg: ScatteringConfig,
                      cache_phases: bool | None = None):
    """Forward pass returning ``(coefficients, tape)``."""
    samples = np.asarray(y.samples, dtype=np.float64)
    if not np.all(np.isfinite(samples)):
        raise FloatingPointError("iterate contains non-finite samples")
    if not math.isclose(y.sample_rate, cfg.sample_rate):
        raise ValueError(f"signal rate {y.sample_rate} does not match the "
                         f"configuration ({cfg.sample_rate})")
    net = get_network(cfg, samples.size)
    s1, s2, cache = _forward(net, samples, keep_u2=False, cache_phases=cache_phases)
    return _wrap(net, s1, s2, samples.size), GradientTape.from_cache(cache)


def gradient_from_tape(target: Coefficients, sy: Coefficients,
                       tape: GradientTape):
    """Descent direction and loss at the iterate that produced ``tape``."""
    report = loss(target, sy)
    w = sy.frame_weight
    net = tape.network
    r1 = w * (target.s1.values - sy.s1.values)
    r2 = w * (target.s2.values - sy.s2.values)

    def path_grad(i):
        return grad_s2_to_u2(r2[i], net.phi_t, net.phi_f, net.frames)

    g1 = grad_u2_to_u1(path_grad, tape, r1)
    g = grad_u1_to_waveform(g1, tape)
    return AudioBuffer(g, sy.config.sample_rate), report


def backscatter(target: Coefficients, y: AudioBuffer, cfg: ScatteringConfig,
                cache_phases: bool | None = None):
    """One forward pass on ``y`` and the full backward chain.

    Returns ``(gradient, loss_report)`` where ``gradient`` is ``-dE/dy``.
    """
    if target.config != cfg:
        raise ValueError("target coefficients were computed with a different configuration")
    if target.n_samples != len(y):
        raise ValueError(f"target covers {target.n_samples} samples, iterate has {len(y)}")
    sy, tape = forward_with_tape(y, cfg, cache_phases)
    return gradient_from_tape(target, sy, tape)
