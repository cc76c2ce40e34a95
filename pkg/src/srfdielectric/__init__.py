"""Dielectric permittivity and loss tangent of uniaxial crystals from SRF cavity resonances."""

from .extraction import LossTangent, ModeSpec, PermittivityTensor
from .q_budget import DECOUPLED, CouplingSet, unloaded_q
from .resonance import ResonanceFit, ResonatorModel, fit_resonance, synth_s21
from .trace_io import ComplexTrace, parse_touchstone, write_touchstone

__version__ = "0.1.0"

__all__ = [
    "ComplexTrace", "CouplingSet", "DECOUPLED", "LossTangent", "ModeSpec", "PermittivityTensor",
    "ResonanceFit", "ResonatorModel", "fit_resonance", "parse_touchstone", "synth_s21", "unloaded_q",
    "write_touchstone",
]
