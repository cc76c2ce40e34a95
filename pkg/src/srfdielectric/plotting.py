"""Static figures rendered next to the report (Agg backend, PNG)."""

from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# Software metadata stripped so repeated runs give identical files
_SAVE_KW = {"dpi": 120, "metadata": {"Software": None}}

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def new_figure(width: float = 5.0, height: float | None = None, **kw):
    golden = (math.sqrt(5) - 1.0) / 2.0
    return plt.subplots(figsize=(width, height or width * golden), **kw)


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def plot_resonance(trace, fit, path) -> Path:
    """Magnitude/phase and IQ plane before and after the detuning correction."""
    with plt.rc_context(STYLE):
        return _plot_resonance(trace, fit, Path(path))


def _plot_resonance(trace, fit, path: Path) -> Path:
    f = trace.frequency
    z = trace.values
    geo = fit.geometric
    zc = z * np.exp(-1j * geo.detuning_angle)
    model = fit.model()(f)
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.4))
    ax = axes[0]
    ax.plot((f - fit.f_res) / 1e3, 20 * np.log10(np.abs(z)), ".", ms=2, label="data")
    ax.plot((f - fit.f_res) / 1e3, 20 * np.log10(np.abs(model)), "-", lw=1, label="model")
    ax.set_xlabel("f - f_res (kHz)")
    ax.set_ylabel("|S21| (dB)")
    ax.legend()
    ax = axes[1]
    ax.plot((f - fit.f_res) / 1e3, np.unwrap(np.angle(z)), ".", ms=2, label="raw")
    ax.plot((f - fit.f_res) / 1e3, np.unwrap(np.angle(zc)), ".", ms=2, label="corrected")
    ax.set_xlabel("f - f_res (kHz)")
    ax.set_ylabel("phase (rad)")
    ax.legend()
    ax = axes[2]
    ax.plot(z.real, z.imag, ".", ms=2, label="raw")
    ax.plot(zc.real, zc.imag, ".", ms=2, label="corrected")
    for fx in (geo.f_minus, geo.f_plus):
        k = int(np.argmin(np.abs(f - fx)))
        ax.plot(zc[k].real, zc[k].imag, "k^", ms=5)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("I")
    ax.set_ylabel("Q")
    ax.set_title(f"Q_L = {fit.q_loaded:.4g}, delta_L = {fit.detuning_angle:.3f} rad")
    ax.legend()
    return _save(fig, Path(path))


def _series(records, x_key, y_key, err_key=None):
    """Group records by (mode, input power); keep groups with at least two points."""
    out = defaultdict(list)
    for r in records:
        if r.get(x_key) is None or r.get(y_key) is None:
            continue
        out[(r["mode"], r.get("p_in_dbm"))].append((r[x_key], r[y_key], (r.get(err_key) or 0.0) if err_key else 0.0))
    series = {}
    for (mode, p_in), rows in sorted(out.items(), key=lambda kv: (kv[0][0], kv[0][1] or 0.0)):
        if len(rows) < 2:
            continue
        label = mode if p_in is None else f"{mode} {p_in:g} dBm"
        series[label] = tuple(np.array(v) for v in zip(*sorted(rows)))
    return series


def _temperature_groups(conditions, key):
    """Conditions with ``key`` set, grouped by input power.

    Groups spanning two or more temperatures are returned; if there are none,
    every condition with the key is returned as a single group.
    """
    groups = defaultdict(list)
    for c in conditions:
        if c.get(key) is not None:
            groups[c["p_in_dbm"]].append(c)
    swept = {p: sorted(rows, key=lambda c: c["temperature_k"]) for p, rows in groups.items() if len(rows) > 1}
    if swept:
        return dict(sorted(swept.items(), key=lambda kv: kv[0] if kv[0] is not None else -math.inf))
    flat = sorted((c for rows in groups.values() for c in rows), key=lambda c: c["temperature_k"])
    return {None: flat} if flat else {}


def render_report_figures(report: dict, out_dir) -> list[Path]:
    """One PNG per figure panel; file names match the plot CSVs."""
    with plt.rc_context(STYLE):
        return _render(report, Path(out_dir))


def _render(report: dict, out_dir: Path) -> list[Path]:
    written = []
    recs = [{**r, "temperature_k": r["temperature_mk"] * 1e-3} for r in report["records"]]

    fig, ax = new_figure()
    for label, (t, q, _) in _series(recs, "temperature_k", "q_loaded").items():
        ax.plot(t * 1e3, q, "o-", ms=3, label=label)
    ax.set_xlabel("temperature (mK)")
    ax.set_ylabel("loaded Q")
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    written.append(_save(fig, out_dir / "loaded_q_vs_temperature.png"))

    fig, ax = new_figure()
    for p_in, rows in _temperature_groups(report["conditions"], "eps_perp").items():
        t = np.array([c["temperature_k"] for c in rows]) * 1e3
        suffix = "" if p_in is None else f" ({p_in:g} dBm)"
        ax.plot(t, [c["eps_perp"] for c in rows], "o-", ms=3, label="eps_perp" + suffix)
        ax.plot(t, [c["eps_par"] for c in rows], "s-", ms=3, label="eps_par" + suffix)
    ax.set_xlabel("temperature (mK)")
    ax.set_ylabel("relative permittivity")
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    written.append(_save(fig, out_dir / "permittivity_vs_temperature.png"))

    fig, ax = new_figure()
    for key, marker in (("tan_perp", "o"), ("tan_par", "s"), ("tan_hom", "^")):
        for p_in, rows in _temperature_groups(report["conditions"], key).items():
            t = np.array([c["temperature_k"] for c in rows]) * 1e3
            v = np.array([c[key] for c in rows])
            u = np.array([c[f"{key}_unc"] or 0.0 for c in rows])
            suffix = "" if p_in is None else f" ({p_in:g} dBm)"
            line, = ax.plot(t, v, marker + "-", ms=3, label=key + suffix)
            ax.fill_between(t, v - u, v + u, alpha=0.25, color=line.get_color())
    ax.set_xlabel("temperature (mK)")
    ax.set_ylabel("loss tangent")
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    written.append(_save(fig, out_dir / "loss_tangent_vs_temperature.png"))

    fig, ax = new_figure()
    for label, (t, q, e) in _series(recs, "temperature_k", "q_d", "q_d_unc").items():
        ax.errorbar(t * 1e3, 1.0 / q, yerr=e / q**2, fmt="o-", ms=3, label=label)
    ax.set_xlabel("temperature (mK)")
    ax.set_ylabel("1/Q_d")
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    written.append(_save(fig, out_dir / "loss_vs_temperature.png"))

    fig, ax = new_figure()
    for s in report["loss_channels"]["power_series"]:
        if s["points"] < 2:
            continue
        n = np.array(s["avg_photons"])
        q = np.array(s["q_d"])
        e = np.array(s["q_d_unc"])
        bars = ax.errorbar(n, 1.0 / q, yerr=e / q**2, fmt="o", ms=3,
                           label=f"{s['mode']} {s['temperature_mk']:g} mK")
        sat = s.get("saturation_fit")
        if sat:
            nn = np.logspace(np.log10(n.min()), np.log10(n.max()), 200)
            ax.plot(nn, sat["l_tls"] / np.sqrt(1 + nn / sat["n_c"]) + sat["l_0"], "-", lw=1,
                    color=bars[0].get_color())
    ax.set_xscale("log")
    ax.set_xlabel("average photon number")
    ax.set_ylabel("1/Q_d")
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    written.append(_save(fig, out_dir / "loss_vs_photons.png"))
    return written
