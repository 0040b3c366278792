"""Time-frequency scattering for audio analysis, texture resynthesis and effects."""

from .audio import AudioBuffer
from .filterbank import (
    FilterBank,
    build_cqt_bank,
    build_modulation_banks,
    build_octave_bank,
    littlewood_paley,
)
from .scattering import Coefficients, ScatteringConfig, coefficients, scatter
from .adjoint import backscatter, loss
from .synthesis import SynthesisOptions, synthesize
from .scalerate import CoefficientFunctional, render_effect

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer",
    "FilterBank",
    "build_cqt_bank",
    "build_modulation_banks",
    "build_octave_bank",
    "littlewood_paley",
    "Coefficients",
    "ScatteringConfig",
    "coefficients",
    "scatter",
    "backscatter",
    "loss",
    "SynthesisOptions",
    "synthesize",
    "CoefficientFunctional",
    "render_effect",
]
