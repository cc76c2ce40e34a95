from __future__ import annotations

import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srfdielectric.resonance import ResonatorModel, frequency_grid, synth_s21
from srfdielectric.trace_io import (
    DB_COLUMNS,
    ComplexTrace,
    TouchstoneDocument,
    TraceFormatError,
    document_from_trace,
    extract_trace,
    parse_csv_trace,
    parse_touchstone,
    read_trace_file,
    write_csv_trace,
    write_touchstone,
)


def random_document(rng: np.random.Generator, unit: str | None = None) -> TouchstoneDocument:
    n = int(rng.integers(1, 40))
    f0 = 10.0 ** rng.uniform(6, 10)
    freq = f0 + np.cumsum(rng.uniform(1e-6, 1e-3, n) * f0)
    mag = 10.0 ** rng.uniform(-6, 0.5, (n, 2, 2))
    data = mag * np.exp(1j * rng.uniform(-math.pi, math.pi, (n, 2, 2)))
    unit = unit or str(rng.choice(["Hz", "kHz", "MHz", "GHz"]))
    return TouchstoneDocument(freq, data, unit, "RI", float(rng.choice([50.0, 75.0])), ("generated",))


def assert_close_rel(a, b, rtol):
    a, b = np.asarray(a), np.asarray(b)
    assert np.all(np.abs(a - b) <= rtol * np.abs(b))


def test_single_row_rectangular():
    doc = parse_touchstone("# GHz S RI R 50\n7.2 0 0 0.5 0 0 0 0 0\n")
    assert doc.frequency.tolist() == [7.2e9]
    assert doc.network_data[0, 1, 0] == 0.5 + 0j
    assert doc.data_format == "RI"


def test_polar_to_rectangular():
    doc = parse_touchstone("# MHz S MA R 50\n7200 0 0 1 90 0 0 0 0\n")
    s21 = doc.network_data[0, 1, 0]
    assert abs(s21 - 1j) < 1e-15
    assert doc.frequency[0] == 7.2e9


def test_option_line_defaults():
    doc = parse_touchstone("! no option line\n7.2 1 0 0.5 90 0 0 1 0\n")
    assert (doc.frequency_unit, doc.data_format, doc.reference_resistance) == ("GHz", "MA", 50.0)
    assert doc.frequency[0] == 7.2e9
    assert abs(doc.network_data[0, 1, 0] - 0.5j) < 1e-15


def test_db_format():
    doc = parse_touchstone("# Hz S DB R 50\n1 -6.020599913279624 0 0 0 0 0 0 0\n")
    assert abs(doc.network_data[0, 0, 0] - 0.5) < 1e-12


def test_comments_preserved():
    doc = parse_touchstone("! first\n# GHz S RI R 50 ! trailing\n7.2 0 0 0.5 0 0 0 0 0\n")
    assert doc.comments == (" first", " trailing")


@pytest.mark.parametrize(
    "text, line",
    [
        ("# GHz S RI R 50\n7.2 0 0 0.5 0 0 0 0\n", 2),
        ("# GHz S RI R 50\n7.2 0 0 0.5 0 0 0 0 0\n7.1 0 0 0.5 0 0 0 0 0\n", 3),
        ("# GHz S RI R 50\n7.2 0 0 0.5 0 0 0 0 0\n7.2 0 0 0.5 0 0 0 0 0\n", 3),
        ("# GHz Q RI R 50\n7.2 0 0 0.5 0 0 0 0 0\n", 1),
        ("# GHz S RI R\n7.2 0 0 0.5 0 0 0 0 0\n", 1),
        ("# GHz Z RI R 50\n7.2 0 0 0.5 0 0 0 0 0\n", 1),
        ("[Version] 2.0\n# GHz S RI R 50\n", 1),
        ("# GHz S RI R 50\n7.2 0 0 x 0 0 0 0 0\n", 2),
        ("# GHz S RI R 50\n7.2 0 0 0.5 0 0 0 0 0\n# GHz S RI R 50\n", 3),
    ],
)
def test_errors_carry_line_numbers(text, line):
    with pytest.raises(TraceFormatError) as info:
        parse_touchstone(text)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_empty_document_rejected():
    with pytest.raises(TraceFormatError):
        parse_touchstone("! nothing here\n")


def test_write_golden_bytes():
    doc = TouchstoneDocument(np.array([7.2e9]), np.array([[[0.1 + 0.2j, 0.3 - 0.4j], [0.5 + 0j, -1e-3 + 0j]]]),
                             "GHz", "MA", 50.0)
    expected = "# GHz S RI R 50\n7.2000000000000002 0.10000000000000001 0.20000000000000001 0.5 0 " \
               "0.29999999999999999 -0.40000000000000002 -0.001 0\n"
    assert write_touchstone(doc) == expected
    assert write_touchstone(doc) == write_touchstone(doc)


def test_round_trip_synthetic_trace():
    model = ResonatorModel(7.2e9, 1e5, 0.7, 0.3, 0.01 - 0.02j)
    trace = synth_s21(model, frequency_grid(7.2e9, 1e5, 10, 1001), 1e-3, seed=3)
    back = extract_trace(parse_touchstone(write_touchstone(document_from_trace(trace))), "S21")
    assert_close_rel(back.values, trace.values, 1e-12)
    assert_close_rel(back.frequency, trace.frequency, 1e-15)


def test_round_trip_random_documents():
    rng = np.random.default_rng(20240501)
    for _ in range(1000):
        doc = random_document(rng)
        back = parse_touchstone(write_touchstone(doc))
        assert back.frequency_unit == doc.frequency_unit
        assert back.reference_resistance == doc.reference_resistance
        assert_close_rel(back.network_data, doc.network_data, 1e-12)
        assert_close_rel(back.frequency, doc.frequency, 1e-12)


def _r(x) -> str:
    return repr(float(x))


def _encode(doc: TouchstoneDocument, fmt: str, unit: str) -> str:
    scale = {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9}[unit]
    lines = [f"# {unit} S {fmt} R 50"]
    order = ((0, 0), (1, 0), (0, 1), (1, 1))
    for f, s in zip(doc.frequency, doc.network_data):
        fields = [_r(f / scale)]
        for i, j in order:
            z = s[i, j]
            if fmt == "RI":
                fields += [_r(z.real), _r(z.imag)]
            elif fmt == "MA":
                fields += [_r(abs(z)), _r(math.degrees(cmath.phase(z)))]
            else:
                fields += [_r(20 * math.log10(abs(z))), _r(math.degrees(cmath.phase(z)))]
        lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_format_equivariance(seed):
    doc = random_document(np.random.default_rng(seed), "Hz")
    parsed = {fmt: parse_touchstone(_encode(doc, fmt, "Hz")).network_data for fmt in ("RI", "MA", "DB")}
    for fmt in ("MA", "DB"):
        assert np.all(np.abs(parsed[fmt] - parsed["RI"]) <= 1e-10 * np.abs(parsed["RI"]))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_unit_equivariance(seed):
    rng = np.random.default_rng(seed)
    doc = random_document(rng, "Hz")
    ref = parse_touchstone(_encode(doc, "RI", "Hz"))
    for unit in ("kHz", "MHz", "GHz"):
        other = parse_touchstone(_encode(doc, "RI", unit))
        assert_close_rel(other.frequency, ref.frequency, 1e-15)
        assert np.array_equal(other.network_data, ref.network_data)


def test_db_input_re_emitted_as_ri():
    doc = random_document(np.random.default_rng(7), "MHz")
    from_db = parse_touchstone(_encode(doc, "DB", "MHz"))
    ri = parse_touchstone(write_touchstone(from_db))
    assert ri.data_format == "RI"
    assert_close_rel(ri.network_data, from_db.network_data, 1e-12)


def test_extract_trace_selects_entry():
    data = np.zeros((3, 2, 2), dtype=complex)
    data[:, 0, 0], data[:, 1, 0], data[:, 0, 1], data[:, 1, 1] = 1, 2, 3, 4
    doc = TouchstoneDocument(np.array([1.0, 2.0, 3.0]), data)
    assert extract_trace(doc, "S21").values.tolist() == [2, 2, 2]
    assert extract_trace(doc, "s11").values.tolist() == [1, 1, 1]
    assert extract_trace(doc, "S12").values.tolist() == [3, 3, 3]
    assert extract_trace(doc, "S22").parameter_label == "S22"
    with pytest.raises(ValueError, match="S31"):
        extract_trace(doc, "S31")


def test_complex_trace_invariants():
    with pytest.raises(ValueError, match="at least 3"):
        ComplexTrace(np.array([1.0, 2.0]), np.array([0j, 0j]))
    with pytest.raises(ValueError, match="increasing"):
        ComplexTrace(np.array([1.0, 3.0, 2.0]), np.zeros(3, complex))
    with pytest.raises(ValueError, match="non-finite"):
        ComplexTrace(np.array([1.0, 2.0, 3.0]), np.array([0j, np.nan, 0j]))
    t = ComplexTrace(np.array([1.0, 2.0, 3.0]), np.zeros(3, complex))
    with pytest.raises(ValueError):
        t.values[0] = 1


def test_csv_real_imag_with_column_map():
    text = "f,re,im\n7.2e9,0.5,0\n7.3e9,0.25,0.1\n7.4e9,0,1\n"
    trace = parse_csv_trace(text, {"frequency": "f", "real": "re", "imag": "im"})
    assert trace.values[0] == 0.5
    assert trace.frequency[0] == 7.2e9


def test_csv_db_columns():
    text = "frequency_hz,magnitude_db,phase_deg\n1,-6.0206,0\n2,0,90\n3,-20,180\n"
    trace = parse_csv_trace(text, DB_COLUMNS)
    assert abs(trace.values[0] - 10 ** (-6.0206 / 20)) < 1e-15
    assert abs(trace.values[0] - 0.5) < 1e-4
    assert abs(trace.values[1] - 1j) < 1e-15


def test_csv_shuffled_rows_rejected():
    text = "frequency_hz,real,imag\n3,0,0\n1,0,0\n2,0,0\n"
    with pytest.raises(TraceFormatError, match="non-monotone") as info:
        parse_csv_trace(text)
    assert info.value.line == 3


def test_csv_missing_column_and_bad_cell():
    with pytest.raises(TraceFormatError, match="missing column 'imag'"):
        parse_csv_trace("frequency_hz,real\n1,0\n")
    with pytest.raises(TraceFormatError) as info:
        parse_csv_trace("frequency_hz,real,imag\n1,0,0\n2,abc,0\n3,0,0\n")
    assert (info.value.line, info.value.column) == (3, "real")


def test_csv_round_trip_and_file_dispatch(tmp_path):
    trace = synth_s21(ResonatorModel(7.6e9, 1e5, 0.4), frequency_grid(7.6e9, 1e5, 6, 51))
    (tmp_path / "t.csv").write_text(write_csv_trace(trace))
    (tmp_path / "t.s2p").write_text(write_touchstone(document_from_trace(trace)))
    for name in ("t.csv", "t.s2p"):
        back = read_trace_file(tmp_path / name)
        assert_close_rel(back.values, trace.values, 1e-15)
        assert back.metadata["source"].endswith(name)
