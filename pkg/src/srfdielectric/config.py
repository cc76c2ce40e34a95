"""Run configuration (TOML). Every physical key carries its unit in the name.

Schema::

    schema_version = 1
    output_dir = "report"               # relative to this file

    [reference_permittivity]
    eps_perp = 42.5
    eps_par = 26.0

    [analysis]                          # all optional
    fit_background = true
    half_power_window = 0.15            # local-fit half width, fraction of BW
    weak_temperature_threshold = 0.10
    saturation_fit = true
    transmitted_port = 2                # 1-based port index whose Q_ext sets <n>
    sanity_tan_min = 1e-8
    sanity_tan_max = 1e-2

    [[modes]]
    name = "TE01"
    kind = "TE"                         # TE | TM | HOM
    f_reference_hz = 7.3827135e9        # frequency at the reference permittivity
    df_deps_perp_hz = -40.603e6
    df_deps_par_hz = 0.0
    p_perp = 0.923                      # filling factors as fractions
    p_par = 0.0
    p_perp_offset = 0.9211              # misaligned-sample extreme case
    p_par_offset = 0.0
    q_ext_measured = [3.0e5, 3.0e5, inf, inf]   # inf = decoupled port
    q_ext_simulated = [1.0e6, 1.0e6, inf, inf]
    assume_walls_lossless = true        # optional, default true
    q0 = 1e10                           # optional, used when walls are not lossless

    [[modes.filling_by_temperature]]    # optional per-temperature overrides
    temperature_mk = 300.0
    p_perp = 0.921
    p_perp_offset = 0.919

    [[inputs]]
    path = "traces/te01_50mK.s2p"
    mode = "TE01"
    temperature_mk = 50.0
    parameter = "S21"                   # optional
    p_in_dbm = -52.0                    # optional power annotations
    p_reflected_dbm = -60.0
    p_loss_w = 1e-9
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import extraction as ex
from .q_budget import CouplingError, CouplingSet


class ConfigError(ValueError):
    """All validation problems found in a config, reported together."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class FillingPoint:
    p_perp: float
    p_par: float
    p_perp_offset: float
    p_par_offset: float


@dataclass(frozen=True)
class ModeConfig:
    spec: ex.ModeSpec
    couplings_measured: CouplingSet
    couplings_simulated: CouplingSet
    p_perp_offset: float
    p_par_offset: float
    assume_walls_lossless: bool = True
    q0: float | None = None
    filling_by_temperature: dict = field(default_factory=dict)  # temperature_mk -> FillingPoint

    @property
    def name(self) -> str:
        return self.spec.name

    def filling(self, temperature_mk: float) -> FillingPoint:
        pt = self.filling_by_temperature.get(float(temperature_mk))
        if pt is not None:
            return pt
        s = self.spec
        return FillingPoint(s.p_perp, s.p_par, self.p_perp_offset, self.p_par_offset)


@dataclass(frozen=True)
class InputSpec:
    path: Path
    mode: str
    temperature_mk: float
    parameter: str = "S21"
    p_in_dbm: float | None = None
    p_reflected_dbm: float | None = None
    p_loss_w: float | None = None

    @property
    def temperature_k(self) -> float:
        return self.temperature_mk * 1e-3


@dataclass(frozen=True)
class AnalysisOptions:
    fit_background: bool = True
    half_power_window: float = 0.15
    weak_temperature_threshold: float = 0.10
    saturation_fit: bool = True
    transmitted_port: int = 2
    sanity_tan_min: float = 1e-8
    sanity_tan_max: float = 1e-2


@dataclass(frozen=True)
class RunConfig:
    reference: ex.PermittivityTensor
    modes: dict  # name -> ModeConfig, in declaration order
    inputs: list
    output_dir: Path
    analysis: AnalysisOptions = AnalysisOptions()
    source: Path | None = None

    def mode(self, name: str) -> ModeConfig:
        return self.modes[name]


def _num(table: dict, key: str, where: str, errors: list, required: bool = True, default=None):
    if key not in table:
        if required:
            errors.append(f"{where}: missing key {key!r}")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        errors.append(f"{where}: {key!r} must be a number")
        return default
    return float(v)


def _couplings(value, where: str, source: str, errors: list) -> CouplingSet | None:
    if not isinstance(value, list):
        errors.append(f"{where}: q_ext_{source} must be a list (use inf for decoupled ports)")
        return None
    try:
        return CouplingSet(tuple(value), source)
    except (CouplingError, TypeError, ValueError) as exc:
        errors.append(f"{where}: q_ext_{source}: {exc}")
        return None


def _parse_mode(m: dict, i: int, errors: list) -> ModeConfig | None:
    where = f"modes[{i}]" + (f" ({m.get('name')})" if isinstance(m.get("name"), str) else "")
    n0 = len(errors)
    name = m.get("name")
    if not isinstance(name, str) or not name:
        errors.append(f"{where}: missing 'name'")
    kind = m.get("kind")
    if not isinstance(kind, str):
        errors.append(f"{where}: missing 'kind'")
    f_ref = _num(m, "f_reference_hz", where, errors)
    dperp = _num(m, "df_deps_perp_hz", where, errors, False, 0.0)
    dpar = _num(m, "df_deps_par_hz", where, errors, False, 0.0)
    p_perp = _num(m, "p_perp", where, errors, False, 0.0)
    p_par = _num(m, "p_par", where, errors, False, 0.0)
    off_perp = _num(m, "p_perp_offset", where, errors, False, p_perp)
    off_par = _num(m, "p_par_offset", where, errors, False, p_par)
    for key, v in (("p_perp_offset", off_perp), ("p_par_offset", off_par)):
        if v is not None and not 0.0 <= v <= 1.0:
            errors.append(f"{where}: {key} must lie in [0, 1] (fractions, not percent)")
    meas = _couplings(m.get("q_ext_measured"), where, "measured", errors)
    sim = _couplings(m.get("q_ext_simulated"), where, "simulated", errors)
    walls = m.get("assume_walls_lossless", True)
    if not isinstance(walls, bool):
        errors.append(f"{where}: assume_walls_lossless must be true or false")
    q0 = _num(m, "q0", where, errors, False, None)
    if walls is False and q0 is None:
        errors.append(f"{where}: q0 is required when assume_walls_lossless = false")
    overrides = {}
    for j, row in enumerate(m.get("filling_by_temperature", [])):
        w = f"{where}.filling_by_temperature[{j}]"
        t = _num(row, "temperature_mk", w, errors)
        pp = _num(row, "p_perp", w, errors, False, p_perp)
        pa = _num(row, "p_par", w, errors, False, p_par)
        if t is not None:
            overrides[t] = FillingPoint(pp, pa, _num(row, "p_perp_offset", w, errors, False, pp),
                                        _num(row, "p_par_offset", w, errors, False, pa))
    if len(errors) > n0:
        return None
    try:
        spec = ex.ModeSpec(name, kind, f_ref, dperp, dpar, p_perp, p_par, meas.q_ext)
    except ex.ExtractionError as exc:
        errors.append(f"{where}: {exc}")
        return None
    return ModeConfig(spec, meas, sim, off_perp, off_par, walls, q0, overrides)


def parse_config(doc: dict, base_dir: Path | None = None, source: Path | None = None) -> RunConfig:
    """Validate a config mapping; raises :class:`ConfigError` listing every problem."""
    base_dir = Path(base_dir or ".")
    errors: list[str] = []
    version = doc.get("schema_version", 1)
    if version != 1:
        errors.append(f"unsupported schema_version {version!r}")

    ref_t = doc.get("reference_permittivity")
    reference = None
    if not isinstance(ref_t, dict):
        errors.append("missing [reference_permittivity] table")
    else:
        ep = _num(ref_t, "eps_perp", "reference_permittivity", errors)
        ea = _num(ref_t, "eps_par", "reference_permittivity", errors)
        if ep is not None and ea is not None:
            try:
                reference = ex.PermittivityTensor(ep, ea)
            except ex.ExtractionError as exc:
                errors.append(f"reference_permittivity: {exc}")

    a = doc.get("analysis", {})
    known = AnalysisOptions.__dataclass_fields__
    for key in a:
        if key not in known:
            errors.append(f"analysis: unknown key {key!r}")
    analysis = AnalysisOptions(**{k: v for k, v in a.items() if k in known})

    modes: dict[str, ModeConfig] = {}
    raw_modes = doc.get("modes", [])
    if not raw_modes:
        errors.append("no [[modes]] defined")
    for i, m in enumerate(raw_modes):
        mc = _parse_mode(m, i, errors)
        if mc is None:
            continue
        if mc.name in modes:
            errors.append(f"mode {mc.name!r} defined more than once")
            continue
        modes[mc.name] = mc
    declared = [m.get("name") for m in raw_modes]

    inputs: list[InputSpec] = []
    raw_inputs = doc.get("inputs", [])
    if not raw_inputs:
        errors.append("no [[inputs]] listed")
    for i, row in enumerate(raw_inputs):
        where = f"inputs[{i}]"
        path = row.get("path")
        if not isinstance(path, str):
            errors.append(f"{where}: missing 'path'")
            continue
        where = f"inputs[{i}] ({path})"
        mode = row.get("mode")
        if mode not in declared:
            errors.append(f"{where}: file {path!r} references undefined mode {mode!r}")
        t = _num(row, "temperature_mk", where, errors)
        p_in = _num(row, "p_in_dbm", where, errors, False)
        p_r = _num(row, "p_reflected_dbm", where, errors, False)
        p_loss = _num(row, "p_loss_w", where, errors, False)
        if (p_r is not None or p_loss is not None) and p_in is None:
            errors.append(f"{where}: power annotations need p_in_dbm")
        if p_loss is not None and p_loss < 0:
            errors.append(f"{where}: p_loss_w must be non-negative")
        param = str(row.get("parameter", "S21")).upper()
        if param not in ("S11", "S21", "S12", "S22"):
            errors.append(f"{where}: unknown parameter {param!r}")
        for key in row:
            if key not in ("path", "mode", "temperature_mk", "parameter", "p_in_dbm", "p_reflected_dbm", "p_loss_w"):
                errors.append(f"{where}: unknown key {key!r}")
        if t is not None:
            inputs.append(InputSpec(base_dir / path, str(mode), t, param, p_in, p_r, p_loss))
    if analysis.transmitted_port < 1 or analysis.transmitted_port > 4:
        errors.append("analysis: transmitted_port must be 1..4")
    for mc in modes.values():
        if analysis.transmitted_port > len(mc.couplings_measured.q_ext):
            errors.append(f"mode {mc.name!r}: no port {analysis.transmitted_port} in q_ext_measured")
        elif math.isinf(mc.couplings_measured.q_ext[analysis.transmitted_port - 1]) and any(
                inp.mode == mc.name and inp.p_in_dbm is not None for inp in inputs):
            errors.append(f"mode {mc.name!r}: transmitted port {analysis.transmitted_port} is decoupled")

    if errors:
        raise ConfigError(errors)
    out = Path(doc.get("output_dir", "report"))
    return RunConfig(reference, modes, inputs, base_dir / out, analysis, source)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: {exc}"]) from None
    except OSError as exc:
        raise ConfigError([f"{path}: {exc}"]) from None
    return parse_config(doc, path.parent, path)
