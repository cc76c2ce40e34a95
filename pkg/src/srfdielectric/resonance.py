"""Transmission resonance fitting.

The geometric estimate follows the classic circle procedure: fit the IQ circle,
rotate it so the resonance point sits on the positive real axis, take the two
extrema of ``Im(S21)`` as the half-power frequencies and set ``Q_L = f_res/BW``.
A complex least-squares fit of the one-pole model is layered on top.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import least_squares

from .trace_io import ComplexTrace

MAX_REFINE_ITERATIONS = 200
REFINE_XTOL = 1e-10


class ResonanceFitError(ValueError):
    """A fitting stage could not produce a meaningful estimate."""


@dataclass(frozen=True)
class ResonatorModel:
    """One-pole transmission resonance plus complex background.

    ``S21(f) = amplitude * exp(i*detuning_angle) / (1 + 2i*q_loaded*(f - f_res)/f_res) + background``
    """

    f_res: float
    q_loaded: float
    amplitude: float = 1.0
    detuning_angle: float = 0.0
    background: complex = 0j

    def __call__(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        x = (f - self.f_res) / self.f_res
        peak = self.amplitude * np.exp(1j * self.detuning_angle)
        return peak / (1.0 + 2j * self.q_loaded * x) + self.background

    @property
    def bandwidth(self) -> float:
        return self.f_res / self.q_loaded


@dataclass(frozen=True)
class GeometricEstimate:
    f_res: float
    f_minus: float
    f_plus: float
    bandwidth: float
    q_loaded: float
    detuning_angle: float
    center: complex
    radius: float
    circle_rms: float


@dataclass(frozen=True)
class ResonanceFit:
    f_res: float
    bandwidth: float
    q_loaded: float
    detuning_angle: float
    s21_peak: complex
    residual_rms: float
    f_minus: float
    f_plus: float
    amplitude: float
    background: complex
    degraded: bool = False
    geometric: GeometricEstimate | None = None
    diagnostics: dict = field(default_factory=dict)

    def model(self) -> ResonatorModel:
        return ResonatorModel(self.f_res, self.q_loaded, self.amplitude, self.detuning_angle, self.background)


def _wrap(angle: float) -> float:
    """Map onto (-pi, pi]."""
    a = math.remainder(angle, 2.0 * math.pi)
    return math.pi if a == -math.pi else a


def synth_s21(model: ResonatorModel, grid, sigma: float = 0.0, seed: int | None = 0,
              label: str = "S21") -> ComplexTrace:
    """Evaluate ``model`` on ``grid`` and add complex Gaussian noise.

    ``sigma`` is the standard deviation of each of the real and imaginary parts.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    grid = np.asarray(grid, dtype=float)
    values = model(grid)
    if sigma > 0:
        rng = np.random.default_rng(seed)
        values = values + sigma * (rng.standard_normal(grid.size) + 1j * rng.standard_normal(grid.size))
    return ComplexTrace(grid, values, label, {"synthetic": True, "sigma": sigma, "seed": seed})


def frequency_grid(f_res: float, q_loaded: float, span_bandwidths: float = 10.0, points: int = 2001) -> np.ndarray:
    """Uniform grid of ``points`` samples spanning ``span_bandwidths`` bandwidths around ``f_res``."""
    half = 0.5 * span_bandwidths * f_res / q_loaded
    return np.linspace(f_res - half, f_res + half, points)


def fit_iq_circle(trace: ComplexTrace) -> tuple[complex, float, float]:
    """Algebraic (Kasa) least-squares circle through the IQ samples.

    Returns ``(center, radius, rms)`` where ``rms`` is the RMS perpendicular
    distance of the samples from the circle.
    """
    z = trace.values
    if z.size < 5:
        raise ResonanceFitError("circle fit needs at least 5 points")
    z0 = z.mean()
    scale = np.abs(z - z0).max()
    if scale == 0:
        raise ResonanceFitError("degenerate samples: all points coincide")
    w = (z - z0) / scale
    x, y = w.real, w.imag
    sv = np.linalg.svd(np.column_stack([x, y]), compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise ResonanceFitError("degenerate samples: IQ points are collinear")
    # x^2 + y^2 + D x + E y + F = 0
    a = np.column_stack([x, y, np.ones_like(x)])
    b = -(x * x + y * y)
    (d, e, f), *_ = np.linalg.lstsq(a, b, rcond=None)
    cw = complex(-d / 2.0, -e / 2.0)
    r2 = abs(cw) ** 2 - f
    if not r2 > 0:
        raise ResonanceFitError("degenerate circle fit")
    center = z0 + scale * cw
    radius = scale * math.sqrt(r2)
    rms = float(np.sqrt(np.mean((np.abs(z - center) - radius) ** 2)))
    return complex(center), float(radius), rms


def estimate_detuning_angle(trace: ComplexTrace, circle: tuple[complex, float, float] | None = None) -> float:
    """Angle of the resonance point as seen from the circle centre.

    Fits the phase about the centre, ``theta(f) = delta - 2 s atan(2 Q (f - f_r)/f_r)``
    with ``s = +/-1`` the sweep orientation. Rotating by ``-delta`` places the
    off-resonant limit and the resonance point on a line parallel to the real
    axis with the resonance point farthest to the right.
    """
    if circle is None:
        circle = fit_iq_circle(trace)
    center, radius, _ = circle
    f = trace.frequency
    theta = np.unwrap(np.angle(trace.values - center))
    sweep = theta[-1] - theta[0]
    if abs(sweep) < 0.5 * math.pi:
        raise ResonanceFitError(
            "ambiguous circle orientation: the trace does not sweep through the resonance")
    s = -1.0 if sweep > 0 else 1.0

    # starting point from the mid-phase crossing and the local slope
    mid = 0.5 * (theta[0] + theta[-1])
    k = int(np.argmin(np.abs(theta - mid)))
    f0 = float(f[k])
    lo, hi = max(k - 2, 0), min(k + 3, f.size)
    slope = np.polyfit(f[lo:hi] - f0, theta[lo:hi], 1)[0] if hi - lo >= 2 else 0.0
    q0 = abs(slope) * f0 / 4.0
    if not q0 > 0:
        q0 = 4.0 * f0 / (f[-1] - f[0])
    bw0 = f0 / q0

    def resid(p):
        fr = f0 + p[2] * bw0
        q = q0 * math.exp(p[1])
        model = p[0] - 2.0 * s * np.arctan(2.0 * q * (f - fr) / fr)
        return np.angle(np.exp(1j * (theta - model)))

    sol = least_squares(resid, [theta[k], 0.0, 0.0], method="lm", xtol=1e-14, ftol=1e-14, gtol=1e-14)
    f_fit = f0 + sol.x[2] * bw0
    if not (f[0] < f_fit < f[-1]):
        raise ResonanceFitError("ambiguous circle orientation: fitted resonance lies outside the sweep")
    return _wrap(float(sol.x[0]))


def phase_correct(trace: ComplexTrace, detuning_angle: float) -> ComplexTrace:
    """Multiply every sample by ``exp(-i*detuning_angle)``."""
    if detuning_angle == 0.0:
        return trace.with_values(trace.values)
    return trace.with_values(trace.values * np.exp(-1j * detuning_angle))


def _peak_location(f: np.ndarray, y: np.ndarray, i: int, half_width_hz: float) -> float:
    """Sub-sample location of a local maximum of ``y`` near index ``i``."""
    n = f.size
    if i == 0 or i == n - 1:
        raise ResonanceFitError("half-power extremum at the sweep boundary: span too narrow")
    h = float(np.median(np.diff(f)))
    half = int(round(half_width_hz / h)) if half_width_hz > 0 else 1
    if half < 2:
        # classic 3-point parabola through the discrete extremum
        y0, y1, y2 = y[i - 1], y[i], y[i + 1]
        denom = y0 - 2.0 * y1 + y2
        if denom >= 0:
            return float(f[i])
        x0 = 0.5 * (y0 - y2) / denom
        return float(f[i] + x0 * (f[i + 1] - f[i - 1]) / 2.0)

    fc = float(f[i])
    for _ in range(8):
        j = int(np.argmin(np.abs(f - fc)))
        lo, hi = j - half, j + half + 1
        if lo < 0 or hi > n:
            raise ResonanceFitError("half-power extremum too close to the sweep boundary: span too narrow")
        x = (f[lo:hi] - f[j]) / h
        c = P.polyfit(x, y[lo:hi], 3)
        d1 = P.polyder(c)
        roots = P.polyroots(d1)
        roots = roots[np.abs(roots.imag) < 1e-12].real
        roots = roots[P.polyval(roots, P.polyder(d1)) < 0]
        roots = roots[np.abs(roots) <= half]
        if roots.size == 0:
            break
        new = float(f[j] + roots[np.argmin(np.abs(roots))] * h)
        if abs(new - fc) < 1e-6 * h:
            fc = new
            break
        fc = new
    return fc


def find_half_power_points(trace: ComplexTrace, window: float = 0.15,
                           offset: float | None = None) -> tuple[float, float]:
    """Frequencies of the two extrema of ``|Im S21|`` on a phase-corrected trace.

    ``offset`` is the imaginary part of the corrected circle's axis (0 when the
    background is negligible). Each extremum is refined by a local polynomial
    fit over ``+/- window`` provisional bandwidths; ``window=0`` uses the
    3-point parabola through the discrete extremum.
    """
    f = trace.frequency
    im = trace.values.imag
    if offset is None:
        offset = 0.0
    y = np.abs(im - offset)
    # split at the real-part maximum, which is the resonance on the corrected circle
    k = int(np.argmax(trace.values.real))
    if k == 0 or k == f.size - 1:
        raise ResonanceFitError("resonance at the sweep boundary: span too narrow")
    i_lo = int(np.argmax(y[:k]))
    i_hi = k + int(np.argmax(y[k:]))
    provisional = f[i_hi] - f[i_lo]
    if not provisional > 0:
        raise ResonanceFitError("could not bracket the resonance")
    f_minus = _peak_location(f, y, i_lo, window * provisional)
    f_plus = _peak_location(f, y, i_hi, window * provisional)
    if not f_minus < f_plus:
        raise ResonanceFitError("half-power points out of order")
    return f_minus, f_plus


def geometric_estimate(trace: ComplexTrace, window: float = 0.15) -> GeometricEstimate:
    center, radius, rms = fit_iq_circle(trace)
    delta = estimate_detuning_angle(trace, (center, radius, rms))
    corrected = phase_correct(trace, delta)
    axis = (center * np.exp(-1j * delta)).imag
    f_minus, f_plus = find_half_power_points(corrected, window, offset=axis)
    f_res = 0.5 * (f_minus + f_plus)
    bw = f_plus - f_minus
    return GeometricEstimate(f_res, f_minus, f_plus, bw, f_res / bw, delta, center, radius, rms)


def _refine(trace: ComplexTrace, geo: GeometricEstimate, fit_background: bool):
    f = trace.frequency
    z = trace.values
    a0 = 2.0 * geo.radius
    bw0 = geo.bandwidth
    f0 = geo.f_res
    q0 = geo.q_loaded
    b0 = geo.center - geo.radius * np.exp(1j * geo.detuning_angle)

    def unpack(p):
        fr = f0 + p[0] * bw0
        q = q0 * math.exp(p[1])
        amp = a0 * p[2]
        bg = a0 * complex(p[4], p[5]) if fit_background else 0j
        return fr, q, amp, p[3], bg

    def resid(p):
        fr, q, amp, d, bg = unpack(p)
        r = (ResonatorModel(fr, q, amp, d, bg)(f) - z) / a0
        return np.concatenate([r.real, r.imag])

    def jac(p):
        fr, q, amp, d, _ = unpack(p)
        y = 2.0 * (f - fr) / fr
        den = 1.0 + 1j * q * y
        lor = amp * np.exp(1j * d) / den
        cols = [
            lor * (2j * q * f / (fr * fr)) / den * bw0,
            -lor * (1j * y) / den * q,
            lor / amp * a0 if amp != 0 else np.exp(1j * d) / den * a0,
            1j * lor,
        ]
        if fit_background:
            cols += [np.full_like(lor, a0), np.full_like(lor, 1j * a0)]
        m = np.column_stack(cols) / a0
        return np.vstack([m.real, m.imag])

    p0 = [0.0, 0.0, 1.0, geo.detuning_angle]
    if fit_background:
        p0 += [b0.real / a0, b0.imag / a0]
    sol = least_squares(resid, p0, jac=jac, method="lm", xtol=REFINE_XTOL, ftol=1e-15, gtol=1e-15,
                        max_nfev=MAX_REFINE_ITERATIONS)
    return sol, unpack(sol.x)


def fit_resonance(trace: ComplexTrace, *, refine: bool = True, fit_background: bool = True,
                  window: float = 0.15) -> ResonanceFit:
    """Geometric estimate followed by a least-squares refinement of the one-pole model.

    When the refinement fails to converge the geometric estimate is returned
    with ``degraded=True``.
    """
    if len(trace) < 5:
        raise ResonanceFitError("resonance fit needs at least 5 points")
    geo = geometric_estimate(trace, window)
    span = trace.frequency[-1] - trace.frequency[0]
    # 10% slack: the geometric bandwidth itself carries noise
    if span < 4.5 * geo.bandwidth:
        warnings.warn(f"sweep spans only {span / geo.bandwidth:.2f} bandwidths (5 recommended)",
                      stacklevel=2)

    diagnostics = {"span_bandwidths": span / geo.bandwidth}
    degraded = False
    if refine:
        sol, (fr, q, amp, d, bg) = _refine(trace, geo, fit_background)
        diagnostics["refine_status"] = int(sol.status)
        diagnostics["refine_nfev"] = int(sol.nfev)
        ok = sol.status > 0 and q > 0 and amp > 0 and trace.frequency[0] < fr < trace.frequency[-1]
        if not ok:
            degraded = True
            diagnostics["degraded_reason"] = sol.message if sol.status <= 0 else "refined parameters unphysical"
    if not refine or degraded:
        fr, q, amp, d = geo.f_res, geo.q_loaded, 2.0 * geo.radius, geo.detuning_angle
        bg = geo.center - geo.radius * np.exp(1j * d)
        f_minus, f_plus = geo.f_minus, geo.f_plus
        bw = geo.bandwidth
    else:
        f_minus = fr - 0.5 * fr / q
        f_plus = fr + 0.5 * fr / q
        bw = f_plus - f_minus
    q_loaded = fr / bw
    d = _wrap(d)
    model = ResonatorModel(fr, q_loaded, amp, d, bg)
    rms = float(np.sqrt(np.mean(np.abs(model(trace.frequency) - trace.values) ** 2)))
    return ResonanceFit(
        f_res=float(fr),
        bandwidth=float(bw),
        q_loaded=float(q_loaded),
        detuning_angle=float(d),
        s21_peak=complex(amp * np.exp(1j * d) + bg),
        residual_rms=rms,
        f_minus=float(f_minus),
        f_plus=float(f_plus),
        amplitude=float(amp),
        background=complex(bg),
        degraded=degraded,
        geometric=geo,
        diagnostics=diagnostics,
    )
