"""Error budget for the loss tangent.

Two contributors: the dielectric Q, bracketed by evaluating the Q budget with
simulated and with measured external Qs, and the filling factor, bracketed by
a misaligned-sample simulation. They combine in quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .q_budget import CouplingSet, dielectric_q, unloaded_q


@dataclass(frozen=True)
class UncertainValue:
    value: float
    abs_unc: float = 0.0

    def __post_init__(self):
        if not self.abs_unc >= 0:
            raise ValueError("absolute uncertainty must be non-negative")

    @property
    def rel_unc(self) -> float:
        if self.value == 0:
            raise ZeroDivisionError("relative uncertainty undefined for a zero value")
        return self.abs_unc / abs(self.value)

    @property
    def low(self) -> float:
        return self.value - self.abs_unc

    @property
    def high(self) -> float:
        return self.value + self.abs_unc

    def __str__(self) -> str:
        return f"{self.value:.6g} +/- {self.abs_unc:.2g}"


@dataclass(frozen=True)
class ExtremeCasePair:
    case_a: float
    case_b: float

    def __post_init__(self):
        if not (self.case_a > 0 and self.case_b > 0):
            raise ValueError("both extreme cases must be positive")

    def interval(self) -> UncertainValue:
        return UncertainValue(0.5 * (self.case_a + self.case_b), 0.5 * abs(self.case_a - self.case_b))


def qd_interval(q_loaded: float, couplings_case_a: CouplingSet, couplings_case_b: CouplingSet,
                assume_walls_lossless: bool = True, q0: float | None = None) -> UncertainValue:
    """Midpoint and half-spread of the dielectric Q over two external-Q cases."""
    qa = dielectric_q(unloaded_q(q_loaded, couplings_case_a), assume_walls_lossless, q0)
    qb = dielectric_q(unloaded_q(q_loaded, couplings_case_b), assume_walls_lossless, q0)
    return ExtremeCasePair(qa, qb).interval()


def filling_uncertainty(p_nominal: float, p_offset_case: float) -> UncertainValue:
    """Nominal filling factor with the misaligned-sample deviation as its uncertainty.

    Works in whatever unit the inputs share (fraction or percent).
    """
    return UncertainValue(p_nominal, abs(p_nominal - p_offset_case))


def combine_rel(rel_p: float, rel_qd: float) -> float:
    """Quadrature sum of the filling-factor and dielectric-Q relative uncertainties."""
    if rel_p < 0 or rel_qd < 0:
        raise ValueError("relative uncertainties must be non-negative")
    return math.hypot(rel_p, rel_qd)


def tan_with_uncertainty(tan_value: float, rel_tan: float) -> UncertainValue:
    if not tan_value > 0:
        raise ValueError("loss tangent must be positive")
    return UncertainValue(tan_value, tan_value * rel_tan)
