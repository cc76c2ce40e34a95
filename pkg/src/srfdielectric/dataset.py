"""Synthetic measurement campaign built from a reference sheet.

The generator works backwards from the tabulated loss tangents and
permittivities: for every (mode, temperature, power) it chooses the loaded Q
whose two-case dielectric-Q interval is centred on the target, places the
resonance where the permittivity shift puts it, and writes a two-port
Touchstone file plus a run config that points at it. Running the pipeline on
the result should hand the tabulated numbers back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import extraction as ex
from . import photon as ph
from .resonance import frequency_grid
from .synthref import HOM_FILLING, ReferenceSheet, load_reference_sheet
from .trace_io import TouchstoneDocument, write_touchstone

TEMPERATURES_MK = (50.0, 100.0, 200.0, 400.0, 700.0, 1000.0)
POWERS_DBM = (-92.0, -82.0, -72.0, -62.0, -52.0)
REFERENCE_T_MK = 50.0
REFERENCE_P_DBM = -52.0

SIMULATED_Q_EXT = 1.0e6  # per coupled port, both ports equal
HOM_SENSITIVITY_HZ = (-30.0e6, -20.0e6)  # illustrative; not tabulated
HOM_FILLING_OFFSET = 0.01
TLS_SHARE = 0.3  # fraction of the loss that is saturable at the reference drive
TLS_N_C = 1.0e8
LOSS_SLOPE_PER_K = 0.05  # fractional loss increase from 50 mK to 1 K
DETUNING = {"TE": 0.3, "TM": -0.2, "HOM": 0.1}


@dataclass(frozen=True)
class ModeDesign:
    name: str
    kind: str
    f_reference: float
    df_deps_perp: float
    df_deps_par: float
    p_perp: float
    p_par: float
    p_perp_offset: float
    p_par_offset: float
    q_d: float  # target dielectric Q at the reference condition
    rel_qd: float
    q_ext_measured: float
    q_ext_simulated: float = SIMULATED_Q_EXT

    @property
    def spec(self) -> ex.ModeSpec:
        return ex.ModeSpec(self.name, self.kind, self.f_reference, self.df_deps_perp, self.df_deps_par,
                           self.p_perp, self.p_par, (self.q_ext_measured, self.q_ext_measured))


@dataclass(frozen=True)
class SyntheticPoint:
    mode: str
    temperature_mk: float
    p_in_dbm: float
    f_res: float
    q_loaded: float
    q_d: float
    avg_photons: float
    path: str


@dataclass
class SyntheticDataset:
    root: Path
    config_path: Path
    modes: dict
    points: list = field(default_factory=list)


def design_couplings(q_d: float, rel: float, q_ext_simulated: float = SIMULATED_Q_EXT) -> float:
    """Measured per-port Q_ext that puts the two-case Q_d interval at ``q_d * (1 +/- rel)``.

    The simulated couplings give the low case, the measured ones the high case.
    """
    if not 0 < rel < 1:
        raise ValueError("relative spread must lie in (0, 1)")
    inv_ql = 1.0 / (q_d * (1.0 - rel)) + 2.0 / q_ext_simulated
    inv_meas = inv_ql - 1.0 / (q_d * (1.0 + rel))
    if inv_meas <= 0:
        raise ValueError("no physical measured coupling for this spread")
    return 2.0 / inv_meas


def loaded_q_for_midpoint(q_d: float, q_ext_a: float, q_ext_b: float) -> float:
    """Loaded Q whose Q_d interval over two symmetric two-port coupling cases is centred on ``q_d``."""
    a, b = 2.0 / q_ext_a, 2.0 / q_ext_b
    # 0.5 * (1/(u - a) + 1/(u - b)) = q_d, solved for u = 1/Q_L
    qa = q_d
    qb = -(q_d * (a + b) + 1.0)
    qc = q_d * a * b + 0.5 * (a + b)
    u = (-qb + math.sqrt(qb * qb - 4.0 * qa * qc)) / (2.0 * qa)
    if not u > max(a, b):
        raise ValueError("target Q_d not reachable with these couplings")
    return 1.0 / u


def reference_designs(sheet: ReferenceSheet, include_hom: bool = True) -> dict[str, ModeDesign]:
    te, tm = sheet.modes()
    p_perp, p_par = sheet.p_perp, sheet.p_par
    off_perp = p_perp - sheet["p_perp_abs_unc_pct"] / 100.0
    off_par = p_par - sheet["p_par_abs_unc_pct"] / 100.0
    out = {}
    for spec, q, rel, offs in ((te, sheet.q_d_te, sheet["qd_te_rel_unc"], (off_perp, 0.0)),
                               (tm, sheet.q_d_tm, sheet["qd_tm_rel_unc"], (0.0, off_par))):
        out[spec.name] = ModeDesign(spec.name, spec.kind, spec.f_reference, spec.df_deps_perp, spec.df_deps_par,
                                    spec.p_perp, spec.p_par, *offs, q, rel, design_couplings(q, rel))
    if include_hom:
        hp, ha = HOM_FILLING
        tan = ex.LossTangent(sheet["tan_perp"], sheet["tan_par"])
        q = ex.mixed_mode_q(tan, hp, ha)
        d = reference_delta_eps(sheet, REFERENCE_T_MK)
        sp, sa = HOM_SENSITIVITY_HZ
        f_ref = sheet["f_hom_hz"] - sp * d[0] - sa * d[1]
        rel = sheet["qd_tm_rel_unc"]
        out["HOM"] = ModeDesign("HOM", "HOM", f_ref, sp, sa, hp, ha, hp - HOM_FILLING_OFFSET,
                                ha - HOM_FILLING_OFFSET, q, rel, design_couplings(q, rel))
    return out


def reference_delta_eps(sheet: ReferenceSheet, temperature_mk: float) -> tuple[float, float]:
    """Permittivity change from room temperature; tabulated at 50 mK, drifting gently above."""
    d_perp = sheet["eps_perp"] - sheet["eps_room_perp"]
    d_par = sheet["eps_par"] - sheet["eps_room_par"]
    s = ((temperature_mk - REFERENCE_T_MK) / 1000.0) ** 2
    return d_perp - 0.3 * s, d_par - 0.1 * s


def _loss_scale(temperature_mk: float) -> float:
    return 1.0 + LOSS_SLOPE_PER_K * (temperature_mk - REFERENCE_T_MK) / (1000.0 - REFERENCE_T_MK)


def _photons(design: ModeDesign, q_loaded: float, f_res: float, p_in_dbm: float) -> float:
    q_ul = 1.0 / (1.0 / q_loaded - 2.0 / design.q_ext_measured)
    p_t, _ = ph.power_split_from_budget(ph.dbm_to_watts(p_in_dbm), 0.0, q_ul, design.q_ext_measured)
    return ph.avg_photon_number(p_t, design.q_ext_measured, f_res)


def _operating_point(design: ModeDesign, temperature_mk: float, p_in_dbm: float, f_res: float):
    """Q_d, Q_L and <n> consistent with the saturable loss law at this drive."""
    q_ref_l = loaded_q_for_midpoint(design.q_d, design.q_ext_simulated, design.q_ext_measured)
    n_ref = _photons(design, q_ref_l, f_res, REFERENCE_P_DBM)
    l_tls = TLS_SHARE / design.q_d * math.sqrt(1.0 + n_ref / TLS_N_C)
    l_0 = (1.0 - TLS_SHARE) / design.q_d
    scale = _loss_scale(temperature_mk)
    if temperature_mk == REFERENCE_T_MK and p_in_dbm == REFERENCE_P_DBM:
        q_d = design.q_d
        q_l = loaded_q_for_midpoint(q_d, design.q_ext_simulated, design.q_ext_measured)
        return q_d, q_l, _photons(design, q_l, f_res, p_in_dbm)
    q_d = design.q_d
    for _ in range(100):
        q_l = loaded_q_for_midpoint(q_d, design.q_ext_simulated, design.q_ext_measured)
        n = _photons(design, q_l, f_res, p_in_dbm)
        new = 1.0 / (scale * float(ph.saturation_curve(n, l_tls, TLS_N_C, l_0)))
        if abs(new - q_d) <= 1e-15 * q_d:
            q_d = new
            break
        q_d = new
    q_l = loaded_q_for_midpoint(q_d, design.q_ext_simulated, design.q_ext_measured)
    return q_d, q_l, _photons(design, q_l, f_res, p_in_dbm)


def network(design: ModeDesign, f_res: float, q_loaded: float, grid: np.ndarray) -> np.ndarray:
    """Two-port S-matrix of a symmetric transmission resonator, shape (n, 2, 2)."""
    q_ul = 1.0 / (1.0 / q_loaded - 2.0 / design.q_ext_measured)
    beta = q_ul / design.q_ext_measured
    lor = 1.0 / (1.0 + 2j * q_loaded * (grid - f_res) / f_res)
    s21 = np.exp(1j * DETUNING[design.kind]) * (2.0 * beta / (1.0 + 2.0 * beta)) * lor
    s11 = 1.0 - (2.0 * beta / (1.0 + 2.0 * beta)) * lor
    out = np.empty((grid.size, 2, 2), dtype=complex)
    out[:, 0, 0] = s11
    out[:, 1, 0] = s21
    out[:, 0, 1] = s21
    out[:, 1, 1] = s11
    return out


def _conditions(design: ModeDesign):
    if design.kind == "HOM":
        return [(REFERENCE_T_MK, REFERENCE_P_DBM)]
    conds = {(t, REFERENCE_P_DBM) for t in TEMPERATURES_MK}
    conds |= {(REFERENCE_T_MK, p) for p in POWERS_DBM}
    return sorted(conds)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    v = float(v)
    if math.isinf(v):
        return "inf"
    return repr(v)


def config_text(sheet: ReferenceSheet, designs: dict, points: list, output_dir: str = "report") -> str:
    lines = ["# synthetic campaign generated from the reference sheet", "schema_version = 1",
             f'output_dir = "{output_dir}"', "", "[reference_permittivity]",
             f"eps_perp = {_toml_value(sheet['eps_room_perp'])}",
             f"eps_par = {_toml_value(sheet['eps_room_par'])}", ""]
    for d in designs.values():
        lines += [
            "[[modes]]",
            f'name = "{d.name}"',
            f'kind = "{d.kind}"',
            f"f_reference_hz = {_toml_value(d.f_reference)}",
            f"df_deps_perp_hz = {_toml_value(d.df_deps_perp)}",
            f"df_deps_par_hz = {_toml_value(d.df_deps_par)}",
            f"p_perp = {_toml_value(d.p_perp)}",
            f"p_par = {_toml_value(d.p_par)}",
            f"p_perp_offset = {_toml_value(d.p_perp_offset)}",
            f"p_par_offset = {_toml_value(d.p_par_offset)}",
            f"q_ext_measured = {_toml_value([d.q_ext_measured, d.q_ext_measured, math.inf, math.inf])}",
            f"q_ext_simulated = {_toml_value([d.q_ext_simulated, d.q_ext_simulated, math.inf, math.inf])}",
            "",
        ]
    for p in points:
        lines += ["[[inputs]]", f'path = "{p.path}"', f'mode = "{p.mode}"',
                  f"temperature_mk = {_toml_value(p.temperature_mk)}", f"p_in_dbm = {_toml_value(p.p_in_dbm)}", ""]
    return "\n".join(lines)


def generate(root, sheet: ReferenceSheet | None = None, *, include_hom: bool = True, points: int = 801,
             span_bandwidths: float = 10.0, sigma: float = 0.0, seed: int = 0) -> SyntheticDataset:
    """Write traces/*.s2p and config.toml under ``root``.

    ``sigma`` adds complex Gaussian noise (per component) to every S-parameter.
    """
    sheet = sheet or load_reference_sheet()
    root = Path(root)
    (root / "traces").mkdir(parents=True, exist_ok=True)
    designs = reference_designs(sheet, include_hom)
    rng = np.random.default_rng(seed)
    written = []
    for d in designs.values():
        for t_mk, p_dbm in _conditions(d):
            de = reference_delta_eps(sheet, t_mk)
            f_res = d.f_reference + d.df_deps_perp * de[0] + d.df_deps_par * de[1]
            q_d, q_l, n = _operating_point(d, t_mk, p_dbm, f_res)
            grid = frequency_grid(f_res, q_l, span_bandwidths, points)
            s = network(d, f_res, q_l, grid)
            if sigma > 0:
                s = s + sigma * (rng.standard_normal(s.shape) + 1j * rng.standard_normal(s.shape))
            rel = f"traces/{d.name.lower()}_{t_mk:04.0f}mK_{-p_dbm:03.0f}dBm.s2p"
            comments = (f" synthetic {d.name} trace at {t_mk:g} mK, {p_dbm:g} dBm input",
                        f" f_res = {f_res!r} Hz, Q_L = {q_l!r}, Q_d = {q_d!r}")
            doc = TouchstoneDocument(grid, s, "GHz", "RI", 50.0, comments)
            (root / rel).write_text(write_touchstone(doc))
            written.append(SyntheticPoint(d.name, t_mk, p_dbm, f_res, q_l, q_d, n, rel))
    written.sort(key=lambda p: (p.path, p.mode, p.temperature_mk))
    config_path = root / "config.toml"
    config_path.write_text(config_text(sheet, designs, written))
    return SyntheticDataset(root, config_path, designs, written)
