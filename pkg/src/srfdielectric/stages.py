"""Analysis stages over JSON-ready records.

Each stage takes the run config plus the previous stage's output and returns
plain dicts, so ``pipeline`` is literally the composition of the stages and
every intermediate can be written to disk and resumed from.
"""

from __future__ import annotations

import math
import warnings
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import extraction as ex
from . import photon as ph
from . import uncertainty as unc
from .config import RunConfig
from .q_budget import CouplingError, coupling_coefficient, dielectric_q, unloaded_q
from .resonance import ResonanceFitError, fit_resonance
from .trace_io import TraceFormatError, read_trace_file

SCHEMA_VERSION = 1


def _rel(path: Path, base: Path | None) -> str:
    if base is not None:
        try:
            return Path(path).relative_to(base).as_posix()
        except ValueError:
            pass
    return Path(path).as_posix()


def fit_record(path, parameter: str = "S21", fit_background: bool = True, window: float = 0.15) -> dict:
    trace = read_trace_file(path, parameter)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fit = fit_resonance(trace, fit_background=fit_background, window=window)
    geo = fit.geometric
    return {
        "parameter": trace.parameter_label,
        "points": len(trace),
        "f_res_hz": fit.f_res,
        "q_loaded": fit.q_loaded,
        "bandwidth_hz": fit.bandwidth,
        "f_minus_hz": fit.f_minus,
        "f_plus_hz": fit.f_plus,
        "detuning_angle_rad": fit.detuning_angle,
        "amplitude": fit.amplitude,
        "background": [fit.background.real, fit.background.imag],
        "s21_peak": [fit.s21_peak.real, fit.s21_peak.imag],
        "residual_rms": fit.residual_rms,
        "degraded": fit.degraded,
        "geometric": {
            "f_res_hz": geo.f_res,
            "q_loaded": geo.q_loaded,
            "bandwidth_hz": geo.bandwidth,
            "f_minus_hz": geo.f_minus,
            "f_plus_hz": geo.f_plus,
            "detuning_angle_rad": geo.detuning_angle,
            "circle_center": [geo.center.real, geo.center.imag],
            "circle_radius": geo.radius,
            "circle_rms": geo.circle_rms,
        },
        "warnings": [str(w.message) for w in caught],
    }


FIT_ERRORS = (OSError, UnicodeDecodeError, TraceFormatError, ResonanceFitError, ValueError)


def fit_files(paths, parameter: str = "S21", base: Path | None = None, fit_background: bool = True,
              window: float = 0.15) -> tuple[list[dict], list[dict]]:
    """Fit each file independently; failures are collected, not raised."""
    records, failures = [], []
    for path in paths:
        name = _rel(Path(path), base)
        try:
            rec = fit_record(path, parameter, fit_background, window)
        except FIT_ERRORS as exc:
            failures.append({"file": name, "error": f"{type(exc).__name__}: {exc}"})
            continue
        records.append({"file": name, **rec})
    return records, failures


def _base(config: RunConfig) -> Path | None:
    return config.source.parent if config.source is not None else None


def _ordered_inputs(config: RunConfig):
    base = _base(config)
    return sorted(config.inputs, key=lambda i: (_rel(i.path, base), i.mode, i.temperature_mk))


def run_fit(config: RunConfig) -> dict:
    base = _base(config)
    records, failures = [], []
    opts = config.analysis
    for inp in _ordered_inputs(config):
        name = _rel(inp.path, base)
        try:
            rec = fit_record(inp.path, inp.parameter, opts.fit_background, opts.half_power_window)
        except FIT_ERRORS as exc:
            failures.append({"file": name, "mode": inp.mode, "error": f"{type(exc).__name__}: {exc}"})
            continue
        records.append({
            "file": name,
            "mode": inp.mode,
            "temperature_mk": inp.temperature_mk,
            "p_in_dbm": inp.p_in_dbm,
            "p_reflected_dbm": inp.p_reflected_dbm,
            "p_loss_w": inp.p_loss_w,
            **rec,
        })
    return {"schema_version": SCHEMA_VERSION, "stage": "fit", "records": records, "failures": failures}


def run_budget(config: RunConfig, fit_doc: dict) -> dict:
    """Q budget per fitted record, evaluated for measured and simulated couplings."""
    records, failures = [], list(fit_doc.get("failures", []))
    for r in fit_doc["records"]:
        mc = config.mode(r["mode"])
        ql = r["q_loaded"]
        try:
            qul_m = unloaded_q(ql, mc.couplings_measured)
            qul_s = unloaded_q(ql, mc.couplings_simulated)
            qd_m = dielectric_q(qul_m, mc.assume_walls_lossless, mc.q0)
            qd_s = dielectric_q(qul_s, mc.assume_walls_lossless, mc.q0)
        except (CouplingError, ValueError) as exc:
            failures.append({"file": r["file"], "mode": r["mode"], "error": f"budget: {exc}"})
            continue
        interval = unc.ExtremeCasePair(qd_s, qd_m).interval()
        beta = [coupling_coefficient(qul_m, q) for q in mc.couplings_measured.q_ext]
        records.append({
            **r,
            "q_unloaded_measured": qul_m,
            "q_unloaded_simulated": qul_s,
            "q_d_measured": qd_m,
            "q_d_simulated": qd_s,
            "q_d": interval.value,
            "q_d_unc": interval.abs_unc,
            "beta_measured": beta,
            "undercoupled": all(b < 1 for b in beta),
            "walls_lossless": mc.assume_walls_lossless,
        })
    return {"schema_version": SCHEMA_VERSION, "stage": "budget", "records": records, "failures": failures}


def _condition_key(r: dict):
    return (r["temperature_mk"], r["p_in_dbm"] if r.get("p_in_dbm") is not None else -math.inf)


def run_extract(config: RunConfig, budget_doc: dict) -> dict:
    """Loss tangents per record and the permittivity tensor per measurement condition."""
    bounds = (config.analysis.sanity_tan_min, config.analysis.sanity_tan_max)
    records, failures = [], list(budget_doc.get("failures", []))
    for r in budget_doc["records"]:
        mc = config.mode(r["mode"])
        fill = mc.filling(r["temperature_mk"])
        out = {**r, "kind": mc.spec.kind, "p_perp": fill.p_perp, "p_par": fill.p_par}
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                if mc.spec.kind == "TE":
                    out["tan_perp"] = ex.loss_tangent_te(r["q_d"], fill.p_perp, bounds)
                elif mc.spec.kind == "TM":
                    out["tan_par"] = ex.loss_tangent_tm(r["q_d"], fill.p_par, bounds)
                else:
                    out["tan_effective"] = ex.effective_loss_tangent(r["q_d"], fill.p_perp, fill.p_par)
            except ex.ExtractionError as exc:
                failures.append({"file": r["file"], "mode": r["mode"], "error": f"extract: {exc}"})
                continue
        out["warnings"] = list(r.get("warnings", [])) + [str(w.message) for w in caught]
        records.append(out)

    groups = defaultdict(list)
    for r in records:
        groups[_condition_key(r)].append(r)
    conditions = []
    for key in sorted(groups):
        rows = groups[key]
        t_mk, p_in = key
        cond = {
            "temperature_mk": t_mk,
            "temperature_k": t_mk * 1e-3,
            "p_in_dbm": None if math.isinf(p_in) else p_in,
            "modes": [r["mode"] for r in rows],
            "eps_perp": None, "eps_par": None, "d_eps_perp": None, "d_eps_par": None,
            "eps_residual_hz": None, "eps_condition_number": None, "eps_note": None,
            "tan_perp": None, "tan_par": None, "tan_hom": None, "q_d_hom_predicted": None,
            "hom_between": None,
        }
        by_mode = {}
        for r in rows:
            if r["mode"] in by_mode:
                cond["eps_note"] = f"mode {r['mode']} measured twice at this condition; first record used"
                continue
            by_mode[r["mode"]] = r
        specs = [config.mode(m).spec for m in by_mode]
        shifts = {m: by_mode[m]["f_res_hz"] - config.mode(m).spec.f_reference for m in by_mode}
        try:
            d = ex.delta_eps_from_shifts(shifts, specs)
            eps = ex.eps_at_condition(config.reference, d)
            cond.update(eps_perp=eps.eps_perp, eps_par=eps.eps_par, d_eps_perp=d.d_eps_perp,
                        d_eps_par=d.d_eps_par, eps_residual_hz=d.residual_norm,
                        eps_condition_number=d.condition_number)
        except ex.ExtractionError as exc:
            cond["eps_note"] = str(exc)
        for r in by_mode.values():
            if "tan_perp" in r:
                cond["tan_perp"] = r["tan_perp"]
            if "tan_par" in r:
                cond["tan_par"] = r["tan_par"]
            if "tan_effective" in r:
                cond["tan_hom"] = r["tan_effective"]
        if cond["tan_hom"] is not None and cond["tan_perp"] is not None and cond["tan_par"] is not None:
            hom = next(r for r in by_mode.values() if "tan_effective" in r)
            tan = ex.LossTangent(cond["tan_perp"], cond["tan_par"])
            cond["q_d_hom_predicted"] = ex.mixed_mode_q(tan, hom["p_perp"], hom["p_par"])
            lo, hi = sorted((tan.tan_perp, tan.tan_par))
            cond["hom_between"] = bool(lo < cond["tan_hom"] < hi)
        conditions.append(cond)
    return {"schema_version": SCHEMA_VERSION, "stage": "extract", "records": records,
            "conditions": conditions, "failures": failures}


def run_uncertainty(config: RunConfig, extract_doc: dict) -> dict:
    """Attach quadrature-combined uncertainties to every loss tangent."""
    records = []
    for r in extract_doc["records"]:
        mc = config.mode(r["mode"])
        fill = mc.filling(r["temperature_mk"])
        if r["kind"] == "TE":
            p = unc.filling_uncertainty(fill.p_perp, fill.p_perp_offset)
            tan_key = "tan_perp"
        elif r["kind"] == "TM":
            p = unc.filling_uncertainty(fill.p_par, fill.p_par_offset)
            tan_key = "tan_par"
        else:
            p = unc.filling_uncertainty(fill.p_perp + fill.p_par, fill.p_perp_offset + fill.p_par_offset)
            tan_key = "tan_effective"
        rel_qd = r["q_d_unc"] / r["q_d"]
        rel_tan = unc.combine_rel(p.rel_unc, rel_qd)
        tan = unc.tan_with_uncertainty(r[tan_key], rel_tan)
        records.append({
            **r,
            "q_d_rel_unc": rel_qd,
            "p_unc": p.abs_unc,
            "p_rel_unc": p.rel_unc,
            "tan_rel_unc": rel_tan,
            "tan_unc": tan.abs_unc,
        })
    index = {(r["file"], r["mode"]): r for r in records}
    conditions = []
    for c in extract_doc["conditions"]:
        c = dict(c)
        c.update(tan_perp_unc=None, tan_par_unc=None, tan_hom_unc=None)
        rows = [r for r in records if _condition_key(r) == (c["temperature_mk"], c["p_in_dbm"]
                                                             if c["p_in_dbm"] is not None else -math.inf)]
        seen = set()
        for r in rows:
            if r["mode"] in seen:
                continue
            seen.add(r["mode"])
            key = {"TE": "tan_perp_unc", "TM": "tan_par_unc", "HOM": "tan_hom_unc"}[r["kind"]]
            c[key] = index[(r["file"], r["mode"])]["tan_unc"]
        conditions.append(c)
    return {"schema_version": SCHEMA_VERSION, "stage": "uncertainty", "records": records,
            "conditions": conditions, "failures": list(extract_doc.get("failures", []))}


def run_photons(config: RunConfig, budget_doc: dict) -> dict:
    """Photon-number calibration for power-annotated records and the loss-channel trends."""
    port = config.analysis.transmitted_port - 1
    records = []
    for r in budget_doc["records"]:
        out = {"file": r["file"], "mode": r["mode"], "temperature_mk": r["temperature_mk"],
               "p_in_dbm": r.get("p_in_dbm"), "q_d": r["q_d"], "q_d_unc": r["q_d_unc"]}
        if r.get("p_in_dbm") is not None:
            mc = config.mode(r["mode"])
            q_ext2 = mc.couplings_measured.q_ext[port]
            p_in = ph.dbm_to_watts(r["p_in_dbm"])
            p_r = ph.dbm_to_watts(r["p_reflected_dbm"]) if r.get("p_reflected_dbm") is not None else 0.0
            p_t_budget, p_loss_budget = ph.power_split_from_budget(p_in, p_r, r["q_unloaded_measured"], q_ext2)
            if r.get("p_loss_w") is not None:
                p_loss, source = r["p_loss_w"], "input"
            else:
                p_loss, source = p_loss_budget, "budget"
            try:
                p_t = ph.transmitted_power(p_in, p_r, p_loss)
                n = ph.avg_photon_number(p_t, q_ext2, r["f_res_hz"]) if p_t > 0 else 0.0
            except ValueError as exc:
                out["error"] = str(exc)
                p_t, n = None, None
            out.update(p_in_w=p_in, p_reflected_w=p_r, p_loss_w=p_loss, p_loss_source=source,
                       p_loss_budget_w=p_loss_budget, p_transmitted_w=p_t, q_ext_transmitted=q_ext2,
                       avg_photons=n)
        records.append(out)

    power_series, temperature_series = [], []
    by_mode_t = defaultdict(list)
    by_mode_p = defaultdict(list)
    for r in records:
        if r.get("avg_photons"):
            by_mode_t[(r["mode"], r["temperature_mk"])].append(r)
        by_mode_p[(r["mode"], r.get("p_in_dbm") if r.get("p_in_dbm") is not None else -math.inf)].append(r)

    for (mode, t_mk), rows in sorted(by_mode_t.items()):
        rows = sorted(rows, key=lambda r: r["avg_photons"])
        entry = {"mode": mode, "temperature_mk": t_mk, "points": len(rows),
                 "avg_photons": [r["avg_photons"] for r in rows], "q_d": [r["q_d"] for r in rows],
                 "q_d_unc": [r["q_d_unc"] for r in rows], "monotonicity": None, "saturation_fit": None}
        xs = entry["avg_photons"]
        if len(rows) >= 4 and all(b > a for a, b in zip(xs, xs[1:])):
            series = ph.SweepSeries(xs, entry["q_d"], entry["q_d_unc"], "avg_photons")
            trend = ph.power_trend(series, fit=config.analysis.saturation_fit)
            entry["monotonicity"] = trend.monotonicity
            if trend.saturation is not None:
                s = trend.saturation
                entry["saturation_fit"] = {"model": "1/Q_d = l_tls/sqrt(1 + n/n_c) + l_0 (phenomenological)",
                                           "l_tls": s.l_tls, "n_c": s.n_c, "l_0": s.l_0,
                                           "residual_rms": s.residual_rms, "converged": s.converged}
        power_series.append(entry)

    for (mode, p_in), rows in sorted(by_mode_p.items()):
        rows = sorted(rows, key=lambda r: r["temperature_mk"])
        ts = [r["temperature_mk"] for r in rows]
        if len(rows) < 3 or not all(b > a for a, b in zip(ts, ts[1:])):
            continue
        series = ph.SweepSeries(np.array(ts) * 1e-3, [r["q_d"] for r in rows], [r["q_d_unc"] for r in rows],
                                "temperature_K")
        trend = ph.temperature_trend(series, config.analysis.weak_temperature_threshold)
        temperature_series.append({
            "mode": mode, "p_in_dbm": None if math.isinf(p_in) else p_in, "points": len(rows),
            "temperature_k": series.abscissa.tolist(), "q_d": series.q_d.tolist(),
            "q_d_unc": series.q_d_unc.tolist(), "slope_per_k": trend.slope, "intercept": trend.intercept,
            "total_variation": trend.total_variation, "mean_q_d": trend.mean_q_d,
            "weak_dependence": trend.weak_dependence,
        })
    return {"schema_version": SCHEMA_VERSION, "stage": "photons", "records": records,
            "power_series": power_series, "temperature_series": temperature_series,
            "failures": list(budget_doc.get("failures", []))}


def assemble_report(config: RunConfig, unc_doc: dict, photon_doc: dict) -> dict:
    photons = {(r["file"], r["mode"]): r for r in photon_doc["records"]}
    keys = ("p_in_w", "p_reflected_w", "p_loss_w", "p_loss_source", "p_loss_budget_w", "p_transmitted_w",
            "q_ext_transmitted", "avg_photons")
    records = []
    for r in unc_doc["records"]:
        pr = photons.get((r["file"], r["mode"]), {})
        records.append({**r, **{k: pr[k] for k in keys if k in pr}})
    return {
        "schema_version": SCHEMA_VERSION,
        "stage": "pipeline",
        "reference_permittivity": {"eps_perp": config.reference.eps_perp, "eps_par": config.reference.eps_par},
        "modes": [
            {"name": m.name, "kind": m.spec.kind, "f_reference_hz": m.spec.f_reference,
             "df_deps_perp_hz": m.spec.df_deps_perp, "df_deps_par_hz": m.spec.df_deps_par,
             "p_perp": m.spec.p_perp, "p_par": m.spec.p_par,
             "q_ext_measured": [None if math.isinf(q) else q for q in m.couplings_measured.q_ext],
             "q_ext_simulated": [None if math.isinf(q) else q for q in m.couplings_simulated.q_ext]}
            for m in config.modes.values()
        ],
        "records": records,
        "conditions": unc_doc["conditions"],
        "loss_channels": {"power_series": photon_doc["power_series"],
                          "temperature_series": photon_doc["temperature_series"]},
        "failures": unc_doc["failures"],
    }


def run_pipeline(config: RunConfig) -> dict:
    fit_doc = run_fit(config)
    budget_doc = run_budget(config, fit_doc)
    extract_doc = run_extract(config, budget_doc)
    unc_doc = run_uncertainty(config, extract_doc)
    photon_doc = run_photons(config, budget_doc)
    return assemble_report(config, unc_doc, photon_doc)
