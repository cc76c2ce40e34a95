"""Report serialization: JSON document, fixed-width text tables and plot-ready CSV."""

from __future__ import annotations

import json
import math
from pathlib import Path

SIG_DIGITS = 9

PLOT_COLUMNS = {
    "loaded_q_vs_temperature.csv": ("file", "mode", "temperature_K", "p_in_dbm", "f_res_hz", "q_loaded"),
    "quality_factors.csv": ("mode", "temperature_K", "p_in_dbm", "q_loaded",
                                  "q_ext1_measured", "q_ext2_measured", "q_ext3_measured", "q_ext4_measured",
                                  "q_ext1_simulated", "q_ext2_simulated", "q_ext3_simulated", "q_ext4_simulated"),
    "permittivity_vs_temperature.csv": ("temperature_K", "p_in_dbm", "eps_perp", "eps_par"),
    "loss_tangent_vs_temperature.csv": ("temperature_K", "p_in_dbm", "tan_perp", "tan_perp_unc", "tan_par",
                               "tan_par_unc", "tan_hom", "tan_hom_unc"),
    "qd_vs_temperature.csv": ("mode", "temperature_K", "p_in_dbm", "q_d", "q_d_unc"),
    "qd_vs_photons.csv": ("mode", "temperature_K", "avg_photons", "q_d", "q_d_unc"),
}


def fmt(value) -> str:
    """Fixed formatting: 9 significant digits, empty for missing values."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        v = float(value)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.{SIG_DIGITS}g}"
    return str(value)


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def write_json(doc, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(doc))
    return path


def _csv(columns, rows) -> str:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(fmt(row.get(c)) for c in columns))
    return "\n".join(lines) + "\n"


def plot_tables(report: dict) -> dict[str, str]:
    """CSV text per figure panel, keyed by file name."""
    recs = report["records"]
    modes = {m["name"]: m for m in report["modes"]}
    t3c, t3d, t4a = [], [], []
    for r in recs:
        tk = r["temperature_mk"] * 1e-3
        t3c.append({"file": r["file"], "mode": r["mode"], "temperature_K": tk, "p_in_dbm": r.get("p_in_dbm"),
                    "f_res_hz": r["f_res_hz"], "q_loaded": r["q_loaded"]})
        row = {"mode": r["mode"], "temperature_K": tk, "p_in_dbm": r.get("p_in_dbm"), "q_loaded": r["q_loaded"]}
        m = modes[r["mode"]]
        for src in ("measured", "simulated"):
            for i in range(4):
                q = m[f"q_ext_{src}"][i] if i < len(m[f"q_ext_{src}"]) else None
                row[f"q_ext{i + 1}_{src}"] = math.inf if q is None else q
        t3d.append(row)
        t4a.append({"mode": r["mode"], "temperature_K": tk, "p_in_dbm": r.get("p_in_dbm"),
                    "q_d": r["q_d"], "q_d_unc": r["q_d_unc"]})
    conds = report["conditions"]
    t3e = [{"temperature_K": c["temperature_k"], "p_in_dbm": c["p_in_dbm"], "eps_perp": c["eps_perp"],
            "eps_par": c["eps_par"]} for c in conds]
    t3f = [{"temperature_K": c["temperature_k"], "p_in_dbm": c["p_in_dbm"], **{
        k: c[k] for k in ("tan_perp", "tan_perp_unc", "tan_par", "tan_par_unc", "tan_hom", "tan_hom_unc")}}
        for c in conds]
    t4b = []
    for s in report["loss_channels"]["power_series"]:
        for n, q, u in zip(s["avg_photons"], s["q_d"], s["q_d_unc"]):
            t4b.append({"mode": s["mode"], "temperature_K": s["temperature_mk"] * 1e-3, "avg_photons": n,
                        "q_d": q, "q_d_unc": u})
    data = {"loaded_q_vs_temperature.csv": t3c, "quality_factors.csv": t3d, "permittivity_vs_temperature.csv": t3e,
            "loss_tangent_vs_temperature.csv": t3f, "qd_vs_temperature.csv": t4a, "qd_vs_photons.csv": t4b}
    return {name: _csv(PLOT_COLUMNS[name], rows) for name, rows in data.items()}


def _table(title: str, columns, rows) -> list[str]:
    cells = [[fmt(r.get(c)) for c in columns] for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(columns)]
    out = [title, "  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    out += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    return out + [""]


def text_report(report: dict) -> str:
    lines = ["dielectric characterization report", ""]
    ref = report["reference_permittivity"]
    lines += [f"reference permittivity: eps_perp = {fmt(ref['eps_perp'])}, eps_par = {fmt(ref['eps_par'])}", ""]
    lines += _table("resonance fits and Q budget",
                    ("file", "mode", "temperature_mk", "p_in_dbm", "f_res_hz", "q_loaded", "q_d", "q_d_unc"),
                    report["records"])
    tan_rows = []
    for r in report["records"]:
        key = {"TE": "tan_perp", "TM": "tan_par", "HOM": "tan_effective"}[r["kind"]]
        tan_rows.append({"file": r["file"], "mode": r["mode"], "quantity": key, "value": r[key],
                         "abs_unc": r["tan_unc"], "rel_unc": r["tan_rel_unc"], "avg_photons": r.get("avg_photons")})
    lines += _table("loss tangents", ("file", "mode", "quantity", "value", "abs_unc", "rel_unc", "avg_photons"),
                    tan_rows)
    lines += _table("per condition",
                    ("temperature_mk", "p_in_dbm", "eps_perp", "eps_par", "tan_perp", "tan_perp_unc", "tan_par",
                     "tan_par_unc"), report["conditions"])
    ts = report["loss_channels"]["temperature_series"]
    if ts:
        lines += _table("temperature dependence of Q_d",
                        ("mode", "p_in_dbm", "points", "slope_per_k", "total_variation", "mean_q_d",
                         "weak_dependence"), ts)
    ps = report["loss_channels"]["power_series"]
    if ps:
        rows = [{**s, **({f"sat_{k}": v for k, v in s["saturation_fit"].items() if k != "model"}
                         if s["saturation_fit"] else {})} for s in ps]
        lines += _table("power dependence of Q_d (saturation fit is phenomenological)",
                        ("mode", "temperature_mk", "points", "monotonicity", "sat_l_tls", "sat_n_c", "sat_l_0"), rows)
    if report["failures"]:
        lines += _table("failures", ("file", "mode", "error"), report["failures"])
    return "\n".join(lines)


def write_report(report: dict, out_dir: Path, figures: bool = True) -> list[Path]:
    """Write ``report.json``, ``report.txt``, ``plots/*.csv`` and optionally ``figures/*.png``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [write_json(report, out_dir / "report.json")]
    txt = out_dir / "report.txt"
    txt.write_text(text_report(report))
    written.append(txt)
    plots = out_dir / "plots"
    plots.mkdir(exist_ok=True)
    for name, text in plot_tables(report).items():
        (plots / name).write_text(text)
        written.append(plots / name)
    if figures:
        from .plotting import render_report_figures

        written += render_report_figures(report, out_dir / "figures")
    return written
