"""Touchstone v1 (two-port) and CSV ingestion into validated complex traces."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

FREQ_UNITS = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9}
_UNIT_NAMES = {"HZ": "Hz", "KHZ": "kHz", "MHZ": "MHz", "GHZ": "GHz"}
FORMATS = ("RI", "MA", "DB")

# Touchstone v1 two-port rows are ordered N11 N21 N12 N22.
S_INDEX = {"S11": (0, 0), "S21": (1, 0), "S12": (0, 1), "S22": (1, 1)}
_ROW_ORDER = ((0, 0), (1, 0), (0, 1), (1, 1))


class TraceFormatError(ValueError):
    """Malformed trace input. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, column: str | None = None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class ComplexTrace:
    """Frequency-ordered complex S-parameter samples."""

    frequency: np.ndarray
    values: np.ndarray
    parameter_label: str = "S21"
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        f = np.array(self.frequency, dtype=float)
        z = np.array(self.values, dtype=complex)
        if f.ndim != 1 or f.shape != z.shape:
            raise ValueError("frequency and values must be 1-D arrays of equal length")
        if f.size < 3:
            raise ValueError(f"a trace needs at least 3 points, got {f.size}")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(z))):
            raise ValueError("trace contains non-finite samples")
        if np.any(np.diff(f) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        f.flags.writeable = False
        z.flags.writeable = False
        object.__setattr__(self, "frequency", f)
        object.__setattr__(self, "values", z)

    def __len__(self) -> int:
        return self.frequency.size

    def with_values(self, values: np.ndarray, frequency: np.ndarray | None = None) -> "ComplexTrace":
        return ComplexTrace(
            self.frequency if frequency is None else frequency,
            values,
            self.parameter_label,
            dict(self.metadata),
        )


@dataclass(frozen=True)
class TouchstoneDocument:
    """Parsed two-port Touchstone file, frequencies in Hz, data in rectangular form."""

    frequency: np.ndarray
    network_data: np.ndarray  # shape (n, 2, 2)
    frequency_unit: str = "GHz"
    data_format: str = "MA"
    reference_resistance: float = 50.0
    comments: tuple[str, ...] = ()

    def __post_init__(self):
        f = np.array(self.frequency, dtype=float)
        s = np.array(self.network_data, dtype=complex)
        if f.ndim != 1 or s.shape != (f.size, 2, 2):
            raise ValueError("network_data must have shape (n, 2, 2) matching frequency")
        if np.any(np.diff(f) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        unit = self.frequency_unit.upper()
        if unit not in FREQ_UNITS:
            raise ValueError(f"unknown frequency unit {self.frequency_unit!r}")
        if self.data_format.upper() not in FORMATS:
            raise ValueError(f"unknown data format {self.data_format!r}")
        object.__setattr__(self, "frequency", f)
        object.__setattr__(self, "network_data", s)
        object.__setattr__(self, "frequency_unit", _UNIT_NAMES[unit])
        object.__setattr__(self, "data_format", self.data_format.upper())
        object.__setattr__(self, "comments", tuple(self.comments))


def _to_complex(a: float, b: float, fmt: str) -> complex:
    if fmt == "RI":
        return complex(a, b)
    mag = a if fmt == "MA" else 10.0 ** (a / 20.0)
    phase = math.radians(b)
    return complex(mag * math.cos(phase), mag * math.sin(phase))


def _parse_option_line(line: str, lineno: int) -> tuple[str, str, float]:
    tokens = line[1:].split()
    unit, fmt, resistance = "GHZ", "MA", 50.0
    i = 0
    while i < len(tokens):
        tok = tokens[i].upper()
        if tok in FREQ_UNITS:
            unit = tok
        elif tok in FORMATS:
            fmt = tok
        elif tok == "S":
            pass
        elif tok in ("Y", "Z", "H", "G"):
            raise TraceFormatError(f"parameter type {tok} not supported, only S", lineno)
        elif tok == "R":
            if i + 1 >= len(tokens):
                raise TraceFormatError("option line 'R' without a resistance value", lineno)
            try:
                resistance = float(tokens[i + 1])
            except ValueError:
                raise TraceFormatError(f"bad reference resistance {tokens[i + 1]!r}", lineno) from None
            if not resistance > 0:
                raise TraceFormatError("reference resistance must be positive", lineno)
            i += 1
        else:
            raise TraceFormatError(f"unrecognized option-line token {tokens[i]!r}", lineno)
        i += 1
    return unit, fmt, resistance


def parse_touchstone(text: str | io.TextIOBase) -> TouchstoneDocument:
    """Parse Touchstone v1 two-port text.

    Missing option line means ``# GHz S MA R 50``. Raises :class:`TraceFormatError`
    carrying the offending line number.
    """
    if not isinstance(text, str):
        text = text.read()
    unit, fmt, resistance = "GHZ", "MA", 50.0
    seen_option = False
    seen_data = False
    comments: list[str] = []
    freqs: list[float] = []
    rows: list[np.ndarray] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body, sep, comment = raw.partition("!")
        if sep:
            comments.append(comment.rstrip())
        body = body.strip()
        if not body:
            continue
        if body.startswith("#"):
            if seen_option:
                raise TraceFormatError("duplicate option line", lineno)
            if seen_data:
                raise TraceFormatError("option line after network data", lineno)
            unit, fmt, resistance = _parse_option_line(body, lineno)
            seen_option = True
            continue
        if body.startswith("["):
            raise TraceFormatError(f"Touchstone v2 keyword {body.split()[0]!r} not supported", lineno)
        tokens = body.split()
        if len(tokens) != 9:
            raise TraceFormatError(f"expected 9 numeric fields, got {len(tokens)}", lineno)
        try:
            nums = [float(t) for t in tokens]
        except ValueError as exc:
            raise TraceFormatError(f"non-numeric field ({exc})", lineno) from None
        if not all(math.isfinite(v) for v in nums):
            raise TraceFormatError("non-finite numeric field", lineno)
        f_hz = nums[0] * FREQ_UNITS[unit]
        if freqs and f_hz <= freqs[-1]:
            kind = "duplicate" if f_hz == freqs[-1] else "non-monotone"
            raise TraceFormatError(f"{kind} frequency {nums[0]!r}", lineno)
        s = np.empty((2, 2), dtype=complex)
        for k, (i, j) in enumerate(_ROW_ORDER):
            s[i, j] = _to_complex(nums[1 + 2 * k], nums[2 + 2 * k], fmt)
        freqs.append(f_hz)
        rows.append(s)
        seen_data = True
    if not rows:
        raise TraceFormatError("no network data found")
    return TouchstoneDocument(
        np.array(freqs),
        np.array(rows),
        frequency_unit=unit,
        data_format=fmt,
        reference_resistance=resistance,
        comments=tuple(comments),
    )


def write_touchstone(doc: TouchstoneDocument) -> str:
    """Serialize ``doc`` as RI-format Touchstone v1 in its declared frequency unit."""
    scale = FREQ_UNITS[doc.frequency_unit.upper()]
    lines = [f"!{c}" for c in doc.comments]
    lines.append(f"# {doc.frequency_unit} S RI R {doc.reference_resistance:.17g}")
    for f, s in zip(doc.frequency, doc.network_data):
        fields = [f"{f / scale:.17g}"]
        for i, j in _ROW_ORDER:
            fields.append(f"{s[i, j].real:.17g}")
            fields.append(f"{s[i, j].imag:.17g}")
        lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


def extract_trace(doc: TouchstoneDocument, label: str = "S21") -> ComplexTrace:
    key = label.upper()
    if key not in S_INDEX:
        raise ValueError(f"unknown S-parameter {label!r}; two-port files carry {sorted(S_INDEX)}")
    i, j = S_INDEX[key]
    meta = {
        "frequency_unit": doc.frequency_unit,
        "format": doc.data_format,
        "reference_resistance": doc.reference_resistance,
    }
    return ComplexTrace(doc.frequency, doc.network_data[:, i, j], key, meta)


def document_from_trace(trace: ComplexTrace, frequency_unit: str = "GHz", comments=()) -> TouchstoneDocument:
    """Embed a single trace in an otherwise-zero two-port document."""
    data = np.zeros((len(trace), 2, 2), dtype=complex)
    i, j = S_INDEX[trace.parameter_label.upper()]
    data[:, i, j] = trace.values
    return TouchstoneDocument(trace.frequency, data, frequency_unit, "RI", 50.0, tuple(comments))


RI_COLUMNS = {"frequency": "frequency_hz", "real": "real", "imag": "imag"}
DB_COLUMNS = {"frequency": "frequency_hz", "magnitude_db": "magnitude_db", "phase_deg": "phase_deg"}


def parse_csv_trace(text: str, columns: Mapping[str, str] | None = None, label: str = "S21") -> ComplexTrace:
    """Read a headed CSV trace, frequency in Hz.

    ``columns`` maps the roles ``frequency`` plus either ``real``/``imag`` or
    ``magnitude_db``/``phase_deg`` to header names.
    """
    columns = dict(columns or RI_COLUMNS)
    if "frequency" not in columns:
        raise ValueError("column map needs a 'frequency' entry")
    if {"real", "imag"} <= columns.keys():
        mode = "RI"
        roles = ("frequency", "real", "imag")
    elif {"magnitude_db", "phase_deg"} <= columns.keys():
        mode = "DB"
        roles = ("frequency", "magnitude_db", "phase_deg")
    else:
        raise ValueError("column map needs real/imag or magnitude_db/phase_deg")

    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise TraceFormatError("empty CSV, header row missing", 1) from None
    idx = {}
    for role in roles:
        name = columns[role]
        if name not in header:
            raise TraceFormatError(f"missing column {name!r}", 1, name)
        idx[role] = header.index(name)

    freqs, vals = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        nums = []
        for role in roles:
            name = columns[role]
            try:
                nums.append(float(row[idx[role]]))
            except (ValueError, IndexError):
                cell = row[idx[role]] if idx[role] < len(row) else ""
                raise TraceFormatError(f"unparsable cell {cell!r}", lineno, name) from None
        f, a, b = nums
        if freqs and f <= freqs[-1]:
            kind = "duplicate" if f == freqs[-1] else "non-monotone"
            raise TraceFormatError(f"{kind} frequency {f!r}", lineno)
        freqs.append(f)
        vals.append(_to_complex(a, b, mode))
    return ComplexTrace(np.array(freqs), np.array(vals), label.upper(), {"format": mode})


def write_csv_trace(trace: ComplexTrace) -> str:
    lines = ["frequency_hz,real,imag"]
    for f, z in zip(trace.frequency, trace.values):
        lines.append(f"{f:.17g},{z.real:.17g},{z.imag:.17g}")
    return "\n".join(lines) + "\n"


def read_trace_file(path, label: str = "S21") -> ComplexTrace:
    """Load a trace from ``.sNp``/``.ts`` Touchstone or ``.csv`` by extension."""
    from pathlib import Path

    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".csv":
        trace = parse_csv_trace(text, label=label)
    else:
        trace = extract_trace(parse_touchstone(text), label)
    return ComplexTrace(trace.frequency, trace.values, trace.parameter_label,
                        {**trace.metadata, "source": str(path)})
