"""Bundled reference sheet of published lithium-niobate results and its self-check."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

from . import extraction as ex
from . import uncertainty as unc

DEFAULT_SHEET = "lithium_niobate_50mK.json"

REQUIRED_KEYS = (
    "f_te01_hz", "f_tm01_hz", "f_hom_hz", "df_deps_perp_hz", "df_deps_par_hz", "eps_perp", "eps_par",
    "eps_room_perp", "eps_room_par", "p_perp_pct", "p_par_pct", "tan_perp", "tan_par",
    "tan_perp_conclusion_unc", "tan_par_conclusion_unc", "qd_te_rel_unc", "qd_te_abs_unc",
    "qd_tm_rel_unc", "qd_tm_abs_unc", "p_perp_rel_unc", "p_perp_abs_unc_pct", "p_par_rel_unc",
    "p_par_abs_unc_pct", "tan_perp_rel_unc", "tan_perp_abs_unc", "tan_par_rel_unc", "tan_par_abs_unc",
    "frequency_resolution_hz", "eps_resolution",
)

# Filling factors of the mixed higher-order mode are not published; these
# illustrative values only exercise the betweenness property.
HOM_FILLING = (0.5, 0.3)


class ReferenceSheetError(ValueError):
    pass


@dataclass(frozen=True)
class ReferenceSheet:
    values: Mapping[str, float]
    sources: Mapping[str, str]
    material: str = ""
    path: str = ""

    def __post_init__(self):
        object.__setattr__(self, "values", MappingProxyType(dict(self.values)))
        object.__setattr__(self, "sources", MappingProxyType(dict(self.sources)))

    def __getitem__(self, key: str) -> float:
        return self.values[key]

    def source(self, key: str) -> str:
        return self.sources.get(key, "")

    def replace(self, **changes: float) -> "ReferenceSheet":
        """Copy with some values changed (used for mutation checks)."""
        unknown = set(changes) - set(self.values)
        if unknown:
            raise KeyError(f"unknown reference keys {sorted(unknown)}")
        return ReferenceSheet({**self.values, **changes}, self.sources, self.material, self.path)

    # derived quantities
    @property
    def p_perp(self) -> float:
        return self["p_perp_pct"] / 100.0

    @property
    def p_par(self) -> float:
        return self["p_par_pct"] / 100.0

    @property
    def q_d_te(self) -> float:
        """Dielectric Q of the TE01 mode implied by the tabulated tangent and filling."""
        return 1.0 / (self.p_perp * self["tan_perp"])

    @property
    def q_d_tm(self) -> float:
        return 1.0 / (self.p_par * self["tan_par"])

    @property
    def reference_permittivity(self) -> ex.PermittivityTensor:
        return ex.PermittivityTensor(self["eps_room_perp"], self["eps_room_par"])

    def modes(self) -> list[ex.ModeSpec]:
        """TE01/TM01 specs with reference frequencies at the room-temperature permittivity."""
        d_perp = self["eps_perp"] - self["eps_room_perp"]
        d_par = self["eps_par"] - self["eps_room_par"]
        te = ex.ModeSpec("TE01", "TE", self["f_te01_hz"] - self["df_deps_perp_hz"] * d_perp,
                         self["df_deps_perp_hz"], 0.0, self.p_perp, 0.0)
        tm = ex.ModeSpec("TM01", "TM", self["f_tm01_hz"] - self["df_deps_par_hz"] * d_par,
                         0.0, self["df_deps_par_hz"], 0.0, self.p_par)
        return [te, tm]


def load_reference_sheet(path: str | Path | None = None) -> ReferenceSheet:
    if path is None:
        text = resources.files("srfdielectric").joinpath("data").joinpath(DEFAULT_SHEET).read_text()
        where = f"<bundled>/{DEFAULT_SHEET}"
    else:
        text = Path(path).read_text()
        where = str(path)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ReferenceSheetError(f"{where}: not valid JSON ({exc})") from None
    raw = doc.get("values")
    if not isinstance(raw, dict):
        raise ReferenceSheetError(f"{where}: missing 'values' table")
    values, sources = {}, {}
    for key, entry in raw.items():
        try:
            values[key] = float(entry["value"])
        except (TypeError, KeyError, ValueError):
            raise ReferenceSheetError(f"{where}: entry {key!r} needs a numeric 'value'") from None
        sources[key] = str(entry.get("source", ""))
    missing = [k for k in REQUIRED_KEYS if k not in values]
    if missing:
        raise ReferenceSheetError(f"{where}: missing keys {missing}")
    return ReferenceSheet(values, sources, doc.get("material", ""), where)


@dataclass(frozen=True)
class Check:
    name: str
    expected: float
    actual: float
    tolerance: float
    kind: str = "abs"  # abs, rel or max
    source: str = ""

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.actual):
            return False
        if self.kind == "rel":
            return abs(self.actual - self.expected) <= self.tolerance * abs(self.expected)
        if self.kind == "max":
            return self.actual <= self.expected + self.tolerance
        return abs(self.actual - self.expected) <= self.tolerance


@dataclass
class SelfCheckReport:
    checks: list[Check] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.errors and all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def format(self, verbose: bool = False) -> str:
        lines = list(self.errors)
        rows = self.checks if verbose else self.failures
        if rows:
            lines.append(f"{'check':<34} {'expected':>14} {'actual':>14} {'tol':>10}  result")
            for c in rows:
                tol = f"{c.tolerance:.3g}{'r' if c.kind == 'rel' else ''}"
                lines.append(f"{c.name:<34} {c.expected:>14.6g} {c.actual:>14.6g} {tol:>10}  "
                             f"{'PASS' if c.passed else 'FAIL'}")
        n_ok = sum(c.passed for c in self.checks)
        lines.append(f"{n_ok}/{len(self.checks)} reference checks passed")
        return "\n".join(lines)


def _guard(report: SelfCheckReport, name: str, fn):
    try:
        fn()
    except (ValueError, ZeroDivisionError, ArithmeticError) as exc:
        report.errors.append(f"{name}: {exc}")


def self_check(sheet: ReferenceSheet | None = None) -> SelfCheckReport:
    """Run the extraction and uncertainty arithmetic over the sheet and compare with its own rows."""
    sheet = sheet or load_reference_sheet()
    report = SelfCheckReport()
    add = report.checks.append

    def table_reproduction():
        # relative uncertainty of the loss tangents (quadrature sum) and absolute values
        for axis, qd in (("perp", "te"), ("par", "tm")):
            rel = unc.combine_rel(sheet[f"p_{axis}_rel_unc"], sheet[f"qd_{qd}_rel_unc"])
            add(Check(f"tan_{axis}_rel_unc", sheet[f"tan_{axis}_rel_unc"], rel, 0.005,
                      source=sheet.source(f"tan_{axis}_rel_unc")))
            tan = unc.tan_with_uncertainty(sheet[f"tan_{axis}"], rel)
            add(Check(f"tan_{axis}_abs_unc", sheet[f"tan_{axis}_abs_unc"], tan.abs_unc, 0.01e-5,
                      source=sheet.source(f"tan_{axis}_abs_unc")))
            p = unc.filling_uncertainty(sheet[f"p_{axis}_pct"],
                                        sheet[f"p_{axis}_pct"] - sheet[f"p_{axis}_abs_unc_pct"])
            add(Check(f"p_{axis}_rel_unc", sheet[f"p_{axis}_rel_unc"], p.rel_unc, 0.005,
                      source=sheet.source(f"p_{axis}_rel_unc")))

    def loss_tangent_closure():
        # dielectric Q implied by the uncertainty table's ratio columns
        qd_te = sheet["qd_te_abs_unc"] / sheet["qd_te_rel_unc"]
        qd_tm = sheet["qd_tm_abs_unc"] / sheet["qd_tm_rel_unc"]
        add(Check("qd_te_consistency", qd_te, sheet.q_d_te, 0.15, "rel", sheet.source("qd_te_abs_unc")))
        add(Check("qd_tm_consistency", qd_tm, sheet.q_d_tm, 0.15, "rel", sheet.source("qd_tm_abs_unc")))
        add(Check("tan_perp_closure", sheet["tan_perp"], ex.loss_tangent_te(qd_te, sheet.p_perp, None),
                  0.15, "rel", sheet.source("tan_perp")))
        add(Check("tan_par_closure", sheet["tan_par"], ex.loss_tangent_tm(qd_tm, sheet.p_par, None),
                  0.15, "rel", sheet.source("tan_par")))
        add(Check("tan_perp_inversion", sheet["tan_perp"], ex.loss_tangent_te(sheet.q_d_te, sheet.p_perp, None),
                  1e-9, "rel", sheet.source("tan_perp")))
        add(Check("tan_par_inversion", sheet["tan_par"], ex.loss_tangent_tm(sheet.q_d_tm, sheet.p_par, None),
                  1e-9, "rel", sheet.source("tan_par")))

    def conclusions():
        for axis, qd in (("perp", "te"), ("par", "tm")):
            rel_p = unc.filling_uncertainty(sheet[f"p_{axis}_pct"],
                                            sheet[f"p_{axis}_pct"] - sheet[f"p_{axis}_abs_unc_pct"]).rel_unc
            rel = unc.combine_rel(rel_p, sheet[f"qd_{qd}_rel_unc"])
            tan = unc.tan_with_uncertainty(sheet[f"tan_{axis}"], rel)
            add(Check(f"tan_{axis}_conclusion_unc", sheet[f"tan_{axis}_conclusion_unc"], tan.abs_unc, 0.01e-5,
                      source=sheet.source(f"tan_{axis}_conclusion_unc")))

    def permittivity():
        modes = sheet.modes()
        d = (sheet["eps_perp"] - sheet["eps_room_perp"], sheet["eps_par"] - sheet["eps_room_par"])
        shifts = ex.frequency_shifts(*d, modes)
        eps = ex.eps_at_condition(sheet.reference_permittivity, ex.delta_eps_from_shifts(shifts, modes))
        add(Check("eps_perp_inversion", sheet["eps_perp"], eps.eps_perp, 1e-9, "rel", sheet.source("eps_perp")))
        add(Check("eps_par_inversion", sheet["eps_par"], eps.eps_par, 1e-9, "rel", sheet.source("eps_par")))
        res = ex.permittivity_resolution(sheet["frequency_resolution_hz"],
                                         [sheet["df_deps_perp_hz"], sheet["df_deps_par_hz"]])
        add(Check("eps_resolution", sheet["eps_resolution"], res, 0.0, "max", sheet.source("eps_resolution")))

    def hom_betweenness():
        tan = ex.LossTangent(sheet["tan_perp"], sheet["tan_par"])
        q = ex.mixed_mode_q(tan, *HOM_FILLING)
        eff = ex.effective_loss_tangent(q, *HOM_FILLING)
        lo, hi = sorted((sheet["tan_perp"], sheet["tan_par"]))
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        add(Check("hom_tangent_between", mid, eff, half, source=sheet.source("f_hom_hz")))

    for name, fn in (("table reproduction", table_reproduction), ("loss tangent closure", loss_tangent_closure),
                     ("conclusions", conclusions), ("permittivity", permittivity),
                     ("higher-order mode", hom_betweenness)):
        _guard(report, name, fn)
    return report
