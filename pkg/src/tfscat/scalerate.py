"""Scale-rate effects: edit scattering coefficients, then resynthesise.

A functional is a list of primitive maps applied in order to the first-
and second-order coefficients.  The chirp-inversion primitive mixes each
path with its scale mirror (``beta -> -beta``) under a time schedule
``sigma(t)``: 1 keeps the original, -1 swaps up- and down-going patterns.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .audio import AudioBuffer
from .scattering import Coefficients, Scalogram, ScatteringConfig, ScatteringTensor, coefficients
from .synthesis import SynthesisOptions, init_colored_noise, synthesize

__all__ = [
    "ChirpInversionSchedule",
    "sigma_sigmoid",
    "constant_schedule",
    "chirp_inversion",
    "ChirpInversion",
    "Translate",
    "Gain",
    "CoefficientFunctional",
    "apply_functional",
    "render_effect",
    "load_effect",
    "functional_from_dict",
]


@dataclass(frozen=True)
class ChirpInversionSchedule:
    """``sigma`` per second-order frame; ``tau`` and ``origin`` in seconds."""

    sigma: np.ndarray
    tau: float = math.inf
    origin: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.sigma, dtype=np.float64)
        if s.ndim != 1:
            raise ValueError("sigma must be one value per frame")
        if not np.all(np.isfinite(s)) or np.any(np.abs(s) > 1):
            raise ValueError("sigma must lie in [-1, 1]")
        object.__setattr__(self, "sigma", s)


def sigma_sigmoid(tau: float, origin: float, frame_times, T: float | None = None
                  ) -> ChirpInversionSchedule:
    """``(1 - exp(t/tau)) / (1 + exp(t/tau))`` with ``t`` measured from ``origin``.

    Warns when ``tau < 4 T``: the schedule then varies on the averaging
    time scale.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    if T is not None and tau < 4 * T:
        warnings.warn(f"tau = {tau:g} s is shorter than 4 T = {4 * T:g} s; the schedule "
                      "changes faster than the coefficients can follow", RuntimeWarning,
                      stacklevel=2)
    t = (np.asarray(frame_times, dtype=np.float64) - origin) / tau
    return ChirpInversionSchedule(-np.tanh(t / 2.0), float(tau), float(origin))


def constant_schedule(value: float, n_frames: int) -> ChirpInversionSchedule:
    return ChirpInversionSchedule(np.full(int(n_frames), float(value)))


def _mirror_index(s2: ScatteringTensor) -> list:
    index = {p.key(): i for i, p in enumerate(s2.paths)}
    out = []
    for p in s2.paths:
        key = (p.alpha, -p.beta if p.beta else 0.0, p.gamma)
        if key not in index:
            raise KeyError(f"path (alpha={p.alpha}, beta={p.beta}) has no scale mirror")
        out.append(index[key])
    return out


def chirp_inversion(s2: ScatteringTensor, schedule: ChirpInversionSchedule) -> ScatteringTensor:
    """Mix every path with its ``-beta`` mirror, frame by frame.

    Frames where ``sigma`` is exactly 1 or -1 are copied, so those cases
    are bit-exact.  ``beta = 0`` paths are their own mirror and pass
    through unchanged.
    """
    sigma = schedule.sigma
    if sigma.size != s2.n_frames:
        raise ValueError(f"schedule has {sigma.size} frames, coefficients have {s2.n_frames}")
    mirror = _mirror_index(s2)
    v = s2.values
    w = v[mirror]
    keep = ((1.0 + sigma) / 2.0)[None, :, None]
    swap = ((1.0 - sigma) / 2.0)[None, :, None]
    out = keep * v + swap * w
    out = np.where((sigma == 1.0)[None, :, None], v, out)
    out = np.where((sigma == -1.0)[None, :, None], w, out)
    for i, p in enumerate(s2.paths):
        if p.beta == 0.0:
            out[i] = v[i]
    return ScatteringTensor(s2.paths, out, s2.frame_rate, s2.lambda_grid, s2.order)


# -- primitives -------------------------------------------------------------------

def _shift(a: np.ndarray, steps: int, axis: int) -> np.ndarray:
    """Shift along ``axis`` by ``steps`` with zero fill."""
    out = np.zeros_like(a)
    n = a.shape[axis]
    if abs(steps) >= n:
        return out
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if steps >= 0:
        src[axis], dst[axis] = slice(0, n - steps), slice(steps, n)
    else:
        src[axis], dst[axis] = slice(-steps, n), slice(0, n + steps)
    out[tuple(dst)] = a[tuple(src)]
    return out


@dataclass(frozen=True)
class ChirpInversion:
    """Scale-mirror mix; ``schedule`` is built per signal from these parameters.

    ``kind`` is ``"constant"`` (uses ``sigma``) or ``"sigmoid"`` (uses
    ``tau`` and ``origin`` in seconds; origin defaults to mid-signal).
    """

    kind: str = "sigmoid"
    sigma: float = 1.0
    tau: float = 1.0
    origin: float | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "sigmoid"):
            raise ValueError(f"unknown schedule type {self.kind!r}")
        if self.kind == "constant" and not -1 <= self.sigma <= 1:
            raise ValueError("sigma must lie in [-1, 1]")
        if self.kind == "sigmoid" and not self.tau > 0:
            raise ValueError("tau must be positive")

    def schedule(self, n_frames: int, frame_rate: float, duration: float,
                 T: float | None = None) -> ChirpInversionSchedule:
        if self.kind == "constant":
            return constant_schedule(self.sigma, n_frames)
        origin = duration / 2.0 if self.origin is None else self.origin
        return sigma_sigmoid(self.tau, origin, np.arange(n_frames) / frame_rate, T)

    def to_dict(self) -> dict:
        d = {"op": "chirp_inversion", "type": self.kind}
        if self.kind == "constant":
            d["sigma"] = self.sigma
        else:
            d["tau"] = self.tau
            d["origin"] = self.origin
        return d


@dataclass(frozen=True)
class Translate:
    """Shift coefficients by ``steps`` grid positions along one path variable.

    ``axis`` is ``"alpha"`` (log2 rate index), ``"beta"`` (log2 |scale|
    index, sign kept, ``beta = 0`` untouched) or ``"lambda"`` (frequency
    bin; ``target`` chooses S1, S2 or both).  Vacated positions are zero.
    """

    axis: str
    steps: int
    target: str = "s2"

    def __post_init__(self):
        if self.axis not in ("alpha", "beta", "lambda"):
            raise ValueError(f"unknown translation axis {self.axis!r}")
        if self.target not in ("s1", "s2", "both"):
            raise ValueError(f"unknown target {self.target!r}")
        if self.axis != "lambda" and self.target == "s1":
            raise ValueError("only lambda translations apply to S1")
        object.__setattr__(self, "steps", int(self.steps))

    def to_dict(self) -> dict:
        return {"op": "translate", "axis": self.axis, "steps": self.steps, "target": self.target}


@dataclass(frozen=True)
class Gain:
    """Scale S1, S2 or both by a non-negative factor."""

    value: float
    target: str = "s2"

    def __post_init__(self):
        if not (math.isfinite(self.value) and self.value >= 0):
            raise ValueError("gain must be finite and >= 0")
        if self.target not in ("s1", "s2", "both"):
            raise ValueError(f"unknown target {self.target!r}")

    def to_dict(self) -> dict:
        return {"op": "gain", "value": self.value, "target": self.target}


def _translate_paths(s2: ScatteringTensor, axis: str, steps: int) -> np.ndarray:
    v = s2.values
    out = np.zeros_like(v)
    if axis == "alpha":
        coord = sorted({p.alpha for p in s2.paths})
        key = lambda p: p.alpha  # noqa: E731
    else:
        coord = sorted({abs(p.beta) for p in s2.paths if p.beta != 0.0})
        key = lambda p: abs(p.beta)  # noqa: E731
    index = {p.key(): i for i, p in enumerate(s2.paths)}
    for i, p in enumerate(s2.paths):
        if axis == "beta" and p.beta == 0.0:
            out[i] = v[i]
            continue
        k = coord.index(key(p)) - steps
        if not 0 <= k < len(coord):
            continue
        if axis == "alpha":
            src = (coord[k], p.beta, p.gamma)
        else:
            src = (p.alpha, math.copysign(coord[k], p.beta), p.gamma)
        j = index.get(src)
        if j is not None:
            out[i] = v[j]
    return out


@dataclass
class CoefficientFunctional:
    """Ordered list of primitives applied to ``(S1, S2)``."""

    primitives: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"primitives": [p.to_dict() for p in self.primitives]}


def apply_functional(s1: Scalogram, s2: ScatteringTensor, f: CoefficientFunctional,
                     duration: float | None = None, T: float | None = None):
    """Apply ``f`` and return ``(S1', S2', log)``.

    ``log`` lists each applied primitive with the norms before and after.
    ``duration`` (seconds) locates the default sigmoid origin.
    """
    v1 = s1.values.copy()
    v2 = s2.values.copy()
    n_frames = v2.shape[1]
    if duration is None:
        duration = n_frames / s2.frame_rate
    log = []
    for prim in f.primitives:
        before = (float(np.linalg.norm(v1)), float(np.linalg.norm(v2)))
        if isinstance(prim, ChirpInversion):
            sched = prim.schedule(n_frames, s2.frame_rate, duration, T)
            cur = ScatteringTensor(s2.paths, v2, s2.frame_rate, s2.lambda_grid, s2.order)
            v2 = chirp_inversion(cur, sched).values
        elif isinstance(prim, Translate):
            if prim.axis == "lambda":
                if prim.target in ("s1", "both"):
                    v1 = _shift(v1, prim.steps, axis=1)
                if prim.target in ("s2", "both"):
                    v2 = _shift(v2, prim.steps, axis=2)
            else:
                cur = ScatteringTensor(s2.paths, v2, s2.frame_rate, s2.lambda_grid, s2.order)
                v2 = _translate_paths(cur, prim.axis, prim.steps)
        elif isinstance(prim, Gain):
            if prim.target in ("s1", "both"):
                v1 = v1 * prim.value
            if prim.target in ("s2", "both"):
                v2 = v2 * prim.value
        else:
            raise TypeError(f"unknown primitive {prim!r}")
        if v1.shape != s1.values.shape or v2.shape != s2.values.shape:
            raise ValueError(f"primitive {prim!r} changed the coefficient shape")
        entry = prim.to_dict()
        entry["norm_before"] = before
        entry["norm_after"] = (float(np.linalg.norm(v1)), float(np.linalg.norm(v2)))
        log.append(entry)
    return (Scalogram(v1, s1.frame_rate, s1.lambda_grid),
            ScatteringTensor(s2.paths, v2, s2.frame_rate, s2.lambda_grid, s2.order),
            log)


def render_effect(x: AudioBuffer, f: CoefficientFunctional, cfg: ScatteringConfig,
                  opts: SynthesisOptions = SynthesisOptions(), snapshot_dir=None):
    """Resynthesise from the edited coefficients of ``x``.

    Returns ``(y, state, log)``; the initial iterate is coloured noise
    matched to the edited S1.
    """
    target = coefficients(x, cfg)
    s1, s2, log = apply_functional(target.s1, target.s2, f, x.duration, cfg.T)
    edited = Coefficients(s1, s2, cfg, target.n_samples)
    y0 = init_colored_noise(edited.s1, cfg, opts.seed, edited.n_samples)
    y, state = synthesize(edited, cfg, opts, snapshot_dir=snapshot_dir, init=y0)
    return y, state, log


def functional_from_dict(d: dict) -> CoefficientFunctional:
    """Build a functional from an effect description.

    Accepted keys: ``primitives`` (list of ``{"op": ...}``) and, as a
    shorthand for a single chirp inversion, ``schedule``.
    """
    if not isinstance(d, dict):
        raise ValueError("effect description must be a JSON object")
    prims = []
    sched = d.get("schedule")
    if sched is not None:
        prims.append(_chirp_from(sched))
    for item in d.get("primitives", []):
        if not isinstance(item, dict) or "op" not in item:
            raise ValueError(f"malformed primitive {item!r}")
        op = item["op"]
        if op == "chirp_inversion":
            prims.append(_chirp_from(item))
        elif op == "translate":
            prims.append(Translate(item["axis"], int(item["steps"]), item.get("target", "s2")))
        elif op == "gain":
            prims.append(Gain(float(item["value"]), item.get("target", "s2")))
        else:
            raise ValueError(f"unknown primitive {op!r}")
    return CoefficientFunctional(prims)


def _chirp_from(d: dict) -> ChirpInversion:
    kind = d.get("type", "sigmoid")
    if kind == "constant":
        return ChirpInversion("constant", sigma=float(d["sigma"]))
    if kind != "sigmoid":
        raise ValueError(f"unknown schedule type {kind!r}")
    origin = d.get("origin")
    return ChirpInversion("sigmoid", tau=float(d["tau"]),
                          origin=None if origin is None else float(origin))


def load_effect(path) -> tuple:
    """Read an effect JSON file; returns ``(functional, raw_dict)``."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return functional_from_dict(raw), raw
