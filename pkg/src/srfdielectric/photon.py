"""Power bookkeeping, average photon number and loss-channel trends."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.optimize import least_squares, nnls

# CODATA 2018 reduced Planck constant, J s
HBAR = 1.054571817e-34


def dbm_to_watts(p_dbm):
    p = 1e-3 * 10.0 ** (np.asarray(p_dbm, dtype=float) / 10.0)
    return p if np.ndim(p_dbm) else float(p)


def watts_to_dbm(p_watts):
    p = np.asarray(p_watts, dtype=float)
    if np.any(p <= 0):
        raise ValueError("power in watts must be positive to express in dBm")
    out = 10.0 * np.log10(p / 1e-3)
    return out if np.ndim(p_watts) else float(out)


def transmitted_power(p_in: float, p_reflected: float = 0.0, p_loss: float = 0.0) -> float:
    """``P_t = P_in - P_r - P_loss`` in watts."""
    if min(p_in, p_reflected, p_loss) < 0:
        raise ValueError("linear powers must be non-negative")
    p_t = p_in - p_reflected - p_loss
    if p_t < 0:
        raise ValueError(
            f"inconsistent power accounting: P_in={p_in:.4g} W < P_r + P_loss={p_reflected + p_loss:.4g} W")
    return p_t


def power_split_from_budget(p_in: float, p_reflected: float, q_unloaded: float,
                            q_ext2: float) -> tuple[float, float]:
    """Split the power entering the cavity into (transmitted, dissipated).

    In steady state ``P_t = omega W / Q_ext2`` and ``P_loss = omega W / Q_UL``,
    so ``P_loss = P_t * Q_ext2 / Q_UL``. Used to cross-check a supplied P_loss.
    """
    entering = p_in - p_reflected
    if entering < 0:
        raise ValueError("reflected power exceeds input power")
    p_t = entering / (1.0 + q_ext2 / q_unloaded)
    return p_t, entering - p_t


def avg_photon_number(p_t: float, q_ext2: float, f_res: float) -> float:
    """``<n> = P_t Q_ext2 / (hbar omega^2)`` with ``omega = 2 pi f_res``."""
    if not (p_t > 0 and q_ext2 > 0 and f_res > 0):
        raise ValueError("transmitted power, Q_ext2 and frequency must be positive")
    omega = 2.0 * math.pi * f_res
    return p_t * q_ext2 / (HBAR * omega * omega)


@dataclass(frozen=True)
class PowerPoint:
    p_in_dbm: float
    p_reflected_w: float
    p_loss_w: float
    temperature_k: float | None = None

    @property
    def p_in_w(self) -> float:
        return dbm_to_watts(self.p_in_dbm)

    @property
    def p_transmitted_w(self) -> float:
        return transmitted_power(self.p_in_w, self.p_reflected_w, self.p_loss_w)


@dataclass(frozen=True)
class SweepSeries:
    """Dielectric Q against an increasing abscissa (temperature in K or photon number)."""

    abscissa: np.ndarray
    q_d: np.ndarray
    q_d_unc: np.ndarray | None = None
    abscissa_name: str = "abscissa"

    def __post_init__(self):
        x = np.asarray(self.abscissa, dtype=float)
        q = np.asarray(self.q_d, dtype=float)
        if x.shape != q.shape or x.ndim != 1:
            raise ValueError("abscissa and q_d must be 1-D and equal length")
        if np.any(np.diff(x) <= 0):
            raise ValueError("abscissa must be strictly increasing")
        object.__setattr__(self, "abscissa", x)
        object.__setattr__(self, "q_d", q)
        if self.q_d_unc is not None:
            u = np.asarray(self.q_d_unc, dtype=float)
            if u.shape != q.shape or np.any(u < 0):
                raise ValueError("q_d_unc must be non-negative and match q_d")
            object.__setattr__(self, "q_d_unc", u)

    def __len__(self):
        return self.abscissa.size

    @classmethod
    def from_csv(cls, text: str) -> "SweepSeries":
        """Read ``abscissa,q_d,q_d_unc`` columns; the first column may carry any name."""
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty sweep CSV")
        header = [h.strip() for h in rows[0]]
        if len(header) < 2 or "q_d" not in header:
            raise ValueError("sweep CSV needs an abscissa column and a 'q_d' column")
        ix = 0 if header[0] != "q_d" else 1
        iq = header.index("q_d")
        iu = header.index("q_d_unc") if "q_d_unc" in header else None
        xs, qs, us = [], [], []
        for lineno, row in enumerate(rows[1:], start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                xs.append(float(row[ix]))
                qs.append(float(row[iq]))
                if iu is not None:
                    us.append(float(row[iu]))
            except (ValueError, IndexError):
                raise ValueError(f"line {lineno}: unparsable sweep row {row!r}") from None
        return cls(np.array(xs), np.array(qs), np.array(us) if iu is not None else None, header[ix])


@dataclass(frozen=True)
class TemperatureTrend:
    slope: float  # Q_d per kelvin
    intercept: float
    total_variation: float
    mean_q_d: float
    weak_dependence: bool


def temperature_trend(series: SweepSeries, threshold: float = 0.10) -> TemperatureTrend:
    """Weighted linear regression of Q_d on temperature.

    The dependence is called weak when the fitted change across the measured
    range stays below ``threshold`` times the mean Q_d.
    """
    if len(series) < 3:
        raise ValueError("temperature trend needs at least 3 points")
    x, q = series.abscissa, series.q_d
    if np.ptp(x) == 0:
        raise ValueError("degenerate abscissa")
    w = None
    if series.q_d_unc is not None and np.all(series.q_d_unc > 0):
        w = 1.0 / series.q_d_unc
    slope, intercept = np.polyfit(x, q, 1, w=w)
    variation = abs(slope) * np.ptp(x)
    mean = float(np.mean(q))
    return TemperatureTrend(float(slope), float(intercept), float(variation), mean,
                            bool(variation < threshold * abs(mean)))


@dataclass(frozen=True)
class SaturationFit:
    """Phenomenological ``1/Q_d = l_tls / sqrt(1 + n/n_c) + l_0``; not a microscopic TLS model."""

    l_tls: float
    n_c: float
    l_0: float
    residual_rms: float
    converged: bool

    def inverse_q(self, n):
        return self.l_tls / np.sqrt(1.0 + np.asarray(n, dtype=float) / self.n_c) + self.l_0


@dataclass(frozen=True)
class PowerTrend:
    monotonicity: float
    saturation: SaturationFit | None


def saturation_curve(n, l_tls: float, n_c: float, l_0: float):
    return SaturationFit(l_tls, n_c, l_0, 0.0, True).inverse_q(n)


def fit_saturation(n, q_d, q_d_unc=None) -> SaturationFit:
    """Fit the saturation curve to ``1/Q_d`` against photon number.

    ``n_c`` is scanned on a log grid with the two linear amplitudes solved by
    non-negative least squares, then all three are polished jointly.
    """
    n = np.asarray(n, dtype=float)
    y = 1.0 / np.asarray(q_d, dtype=float)
    if q_d_unc is not None and np.all(np.asarray(q_d_unc) > 0):
        sigma = np.asarray(q_d_unc, dtype=float) * y * y
    else:
        sigma = np.full_like(y, np.mean(np.abs(y)))
    lo = math.log10(max(n.min(), 1e-300)) - 2.0
    hi = math.log10(n.max()) + 2.0

    def linear(log_nc):
        a = np.column_stack([1.0 / np.sqrt(1.0 + n / 10.0 ** log_nc), np.ones_like(n)]) / sigma[:, None]
        coef, rnorm = nnls(a, y / sigma)
        return coef, rnorm

    grid = np.linspace(lo, hi, 401)
    norms = [linear(g)[1] for g in grid]
    best = grid[int(np.argmin(norms))]
    (l_tls, l_0), _ = linear(best)
    scale = max(float(np.max(y)), 1e-300)

    if l_tls == 0.0:
        return SaturationFit(0.0, float(10.0 ** best), float(l_0), float(np.sqrt(np.mean((y - l_0) ** 2))), True)

    def resid(p):
        return (p[0] * scale / np.sqrt(1.0 + n / 10.0 ** p[1]) + p[2] * scale - y) / sigma

    sol = least_squares(resid, [l_tls / scale, best, l_0 / scale],
                        bounds=([0.0, lo - 2.0, 0.0], [np.inf, hi + 2.0, np.inf]),
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
    fit = SaturationFit(float(sol.x[0] * scale), float(10.0 ** sol.x[1]), float(sol.x[2] * scale), 0.0,
                        bool(sol.success))
    rms = float(np.sqrt(np.mean((fit.inverse_q(n) - y) ** 2)))
    return SaturationFit(fit.l_tls, fit.n_c, fit.l_0, rms, fit.converged)


def power_trend(series: SweepSeries, fit: bool = True) -> PowerTrend:
    """Rank correlation of Q_d with photon number, plus an optional saturation fit."""
    if len(series) < 4:
        raise ValueError("power trend needs at least 4 points")
    q = series.q_d
    if np.ptp(q) == 0:
        rho = 0.0
    else:
        rho = float(stats.spearmanr(series.abscissa, q).statistic)
    sat = None
    if fit:
        try:
            sat = fit_saturation(series.abscissa, q, series.q_d_unc)
        except (ValueError, np.linalg.LinAlgError):
            sat = None
    return PowerTrend(rho, sat)
