"""Loaded-Q loss budget: external coupling, wall and dielectric channels."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

DECOUPLED = math.inf


class CouplingError(ValueError):
    """Coupling values inconsistent with an undercoupled measurement."""


def _as_q(value) -> float:
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "decoupled", "infinity"):
            return DECOUPLED
        value = float(value)
    if value is None:
        return DECOUPLED
    q = float(value)
    if math.isnan(q) or q <= 0:
        raise CouplingError(f"external Q must be positive or decoupled, got {value!r}")
    return q


@dataclass(frozen=True)
class CouplingSet:
    """External quality factors of up to four ports; ``DECOUPLED`` marks an open port."""

    q_ext: tuple[float, ...]
    source: str = "measured"

    def __post_init__(self):
        q = tuple(_as_q(v) for v in self.q_ext)
        if not 1 <= len(q) <= 4:
            raise CouplingError(f"expected 1 to 4 ports, got {len(q)}")
        if self.source not in ("measured", "simulated"):
            raise CouplingError(f"source must be 'measured' or 'simulated', got {self.source!r}")
        object.__setattr__(self, "q_ext", q)

    @property
    def inverse_sum(self) -> float:
        """Sum of ``1/Q_ext`` over coupled ports; decoupled ports add exactly 0."""
        return math.fsum(1.0 / q for q in self.q_ext if not math.isinf(q))


@dataclass(frozen=True)
class QBudget:
    q_loaded: float
    q_unloaded: float
    q_dielectric: float
    q_intrinsic_assumed_infinite: bool = True


def _couplings(couplings) -> CouplingSet:
    return couplings if isinstance(couplings, CouplingSet) else CouplingSet(tuple(couplings))


def unloaded_q(q_loaded: float, couplings: CouplingSet | Iterable[float]) -> float:
    """Remove external coupling loss: ``1/Q_UL = 1/Q_L - sum 1/Q_ext``."""
    if not q_loaded > 0:
        raise CouplingError("loaded Q must be positive")
    couplings = _couplings(couplings)
    if couplings.inverse_sum == 0.0:
        return float(q_loaded)
    inv = 1.0 / q_loaded - couplings.inverse_sum
    if not inv > 0:
        raise CouplingError(
            f"overcoupled or degenerate couplings: 1/Q_L - sum 1/Q_ext = {inv:.6g} <= 0")
    return 1.0 / inv


def dielectric_q(q_unloaded: float, assume_walls_lossless: bool = True, q0: float | None = None) -> float:
    """Dielectric Q from the unloaded Q.

    Below the superconducting transition wall loss is negligible and
    ``Q_d = Q_UL``; otherwise the wall channel ``q0`` must be supplied.
    """
    if not q_unloaded > 0:
        raise ValueError("unloaded Q must be positive")
    if assume_walls_lossless:
        return float(q_unloaded)
    if q0 is None:
        raise ValueError("q0 is required unless the walls are assumed lossless")
    inv = 1.0 / q_unloaded - 1.0 / q0
    if not inv > 0:
        raise ValueError(f"wall Q {q0:g} does not exceed the unloaded Q {q_unloaded:g}")
    return 1.0 / inv


def coupling_coefficient(q_unloaded: float, q_ext: float) -> float:
    """``beta = Q_UL / Q_ext``; below 1 the port is undercoupled."""
    if not q_unloaded > 0:
        raise ValueError("unloaded Q must be positive")
    q_ext = _as_q(q_ext)
    if math.isinf(q_ext):
        return 0.0
    return q_unloaded / q_ext


def loaded_q(q_unloaded: float, couplings: CouplingSet | Iterable[float]) -> float:
    """Forward budget: ``1/Q_L = 1/Q_UL + sum 1/Q_ext``."""
    couplings = _couplings(couplings)
    if couplings.inverse_sum == 0.0:
        return float(q_unloaded)
    return 1.0 / (1.0 / q_unloaded + couplings.inverse_sum)


def loaded_q_from_channels(q0: float, q_d: float, q_ext: Sequence[float]) -> float:
    """Total loaded Q from wall, dielectric and port channels (pass ``DECOUPLED`` for open ports)."""
    terms = [1.0 / _as_q(q) for q in (q0, q_d, *q_ext) if not math.isinf(_as_q(q))]
    return 1.0 / math.fsum(terms)


def q_budget(q_loaded: float, couplings, assume_walls_lossless: bool = True,
             q0: float | None = None) -> QBudget:
    qul = unloaded_q(q_loaded, couplings)
    qd = dielectric_q(qul, assume_walls_lossless, q0)
    return QBudget(q_loaded, qul, qd, assume_walls_lossless)
