"""Permittivity tensor from frequency shifts and loss tangents from filling factors."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

MAX_CONDITION = 1e8
MODE_KINDS = ("TE", "TM", "HOM")


class ExtractionError(ValueError):
    pass


@dataclass(frozen=True)
class PermittivityTensor:
    """Uniaxial relative permittivity ``diag(eps_perp, eps_perp, eps_par)``."""

    eps_perp: float
    eps_par: float

    def __post_init__(self):
        if not (self.eps_perp > 1 and self.eps_par > 1):
            raise ExtractionError(
                f"nonphysical relative permittivity ({self.eps_perp:g}, {self.eps_par:g}); both must exceed 1")

    def as_matrix(self) -> np.ndarray:
        return np.diag([self.eps_perp, self.eps_perp, self.eps_par])

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.eps_perp, self.eps_perp, self.eps_par)


@dataclass(frozen=True)
class ModeSpec:
    """A monitored cavity mode and its simulation-derived calibration constants.

    ``df_deps_*`` are in Hz per unit relative permittivity; ``f_reference`` is
    the mode frequency at the reference permittivity.
    """

    name: str
    kind: str
    f_reference: float
    df_deps_perp: float = 0.0
    df_deps_par: float = 0.0
    p_perp: float = 0.0
    p_par: float = 0.0
    q_ext: tuple[float, ...] = field(default=())

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in MODE_KINDS:
            raise ExtractionError(f"mode {self.name!r}: kind must be one of {MODE_KINDS}")
        object.__setattr__(self, "kind", kind)
        for p in (self.p_perp, self.p_par):
            if not 0.0 <= p <= 1.0:
                raise ExtractionError(f"mode {self.name!r}: filling factors must lie in [0, 1]")
        if kind == "TE" and self.p_par != 0:
            raise ExtractionError(f"TE mode {self.name!r} has in-plane field only; p_par must be 0")
        if kind == "TM" and self.p_perp != 0:
            raise ExtractionError(f"TM mode {self.name!r} has axial field only; p_perp must be 0")
        if self.p_perp + self.p_par > 1.0 + 1e-12:
            raise ExtractionError(f"mode {self.name!r}: p_perp + p_par exceeds 1")

    @property
    def sensitivity(self) -> tuple[float, float]:
        return (self.df_deps_perp, self.df_deps_par)


@dataclass(frozen=True)
class LossTangent:
    tan_perp: float
    tan_par: float

    def __post_init__(self):
        if self.tan_perp < 0 or self.tan_par < 0:
            raise ExtractionError("loss tangents must be non-negative")


@dataclass(frozen=True)
class PermittivityShift:
    d_eps_perp: float
    d_eps_par: float
    residual_norm: float = 0.0
    condition_number: float = 1.0


def delta_eps_from_shifts(shifts: Mapping[str, float], modes: Sequence[ModeSpec]) -> PermittivityShift:
    """Solve ``df_m = dfde_perp_m * d_eps_perp + dfde_par_m * d_eps_par`` for the permittivity change.

    Two modes give an exact solve, more modes a least-squares solve. Every
    mode in ``modes`` must have an entry in ``shifts`` (Hz).
    """
    if len(modes) < 2:
        raise ExtractionError("at least two modes are needed to separate eps_perp and eps_par")
    missing = [m.name for m in modes if m.name not in shifts]
    if missing:
        raise ExtractionError(f"no frequency shift for modes {missing}")
    a = np.array([m.sensitivity for m in modes], dtype=float)
    b = np.array([shifts[m.name] for m in modes], dtype=float)
    # condition on the column-scaled matrix so units (Hz vs MHz) do not matter
    norms = np.linalg.norm(a, axis=0)
    if np.any(norms == 0):
        raise ExtractionError("sensitivity matrix is singular: a permittivity axis has no sensitive mode")
    cond = float(np.linalg.cond(a / norms))
    if not cond <= MAX_CONDITION:
        raise ExtractionError(f"sensitivity matrix is ill-conditioned (condition number {cond:.3g})")
    if a.shape[0] == 2:
        x = np.linalg.solve(a, b)
        resid = 0.0
    else:
        x, *_ = np.linalg.lstsq(a, b, rcond=None)
        resid = float(np.linalg.norm(a @ x - b))
    return PermittivityShift(float(x[0]), float(x[1]), resid, cond)


def frequency_shifts(d_eps_perp: float, d_eps_par: float, modes: Sequence[ModeSpec]) -> dict[str, float]:
    """Forward map from a permittivity change to per-mode frequency shifts (Hz)."""
    return {m.name: m.df_deps_perp * d_eps_perp + m.df_deps_par * d_eps_par for m in modes}


def eps_at_condition(reference: PermittivityTensor, delta) -> PermittivityTensor:
    """Reference permittivity plus a shift ``(d_eps_perp, d_eps_par)``."""
    if isinstance(delta, PermittivityShift):
        d_perp, d_par = delta.d_eps_perp, delta.d_eps_par
    else:
        d_perp, d_par = delta
    return PermittivityTensor(reference.eps_perp + d_perp, reference.eps_par + d_par)


def _check_q(q_d: float):
    if not q_d > 0:
        raise ExtractionError("dielectric Q must be positive")


def _sanity(value: float, name: str, bounds: tuple[float, float] | None):
    if bounds is not None and not bounds[0] <= value <= bounds[1]:
        warnings.warn(f"{name} = {value:.3g} outside the expected range {bounds}", stacklevel=3)


SANITY_BOUNDS = (1e-8, 1e-2)


def loss_tangent_te(q_d: float, p_perp: float, bounds=SANITY_BOUNDS) -> float:
    """In-plane loss tangent from a TE mode: ``1/(p_perp * Q_d)``."""
    _check_q(q_d)
    if not 0.0 < p_perp <= 1.0:
        raise ExtractionError("p_perp must lie in (0, 1]")
    tan = 1.0 / (p_perp * q_d)
    _sanity(tan, "tan_perp", bounds)
    return tan


def loss_tangent_tm(q_d: float, p_par: float, bounds=SANITY_BOUNDS) -> float:
    """Axial loss tangent from a TM mode: ``1/(p_par * Q_d)``."""
    _check_q(q_d)
    if not 0.0 < p_par <= 1.0:
        raise ExtractionError("p_par must lie in (0, 1]")
    tan = 1.0 / (p_par * q_d)
    _sanity(tan, "tan_par", bounds)
    return tan


def mixed_mode_q(tan: LossTangent, p_perp: float, p_par: float) -> float:
    """Dielectric Q of a mode with field along both axes."""
    if not (0.0 <= p_perp <= 1.0 and 0.0 <= p_par <= 1.0):
        raise ExtractionError("filling factors must lie in [0, 1]")
    inv = p_perp * tan.tan_perp + p_par * tan.tan_par
    return math.inf if inv == 0 else 1.0 / inv


def effective_loss_tangent(q_d: float, p_perp: float, p_par: float) -> float:
    """Single loss tangent attributed to a mixed mode, ``1/((p_perp + p_par) * Q_d)``."""
    _check_q(q_d)
    total = p_perp + p_par
    if not total > 0:
        raise ExtractionError("total filling factor must be positive")
    return 1.0 / (total * q_d)


def permittivity_resolution(frequency_resolution_hz: float, sensitivities_hz: Sequence[float]) -> float:
    """Smallest resolvable permittivity change given a frequency readout resolution."""
    s = min(abs(x) for x in sensitivities_hz if x != 0)
    return frequency_resolution_hz / s
