from __future__ import annotations

import json

import pytest

from srfdielectric.synthref import (
    REQUIRED_KEYS,
    ReferenceSheetError,
    load_reference_sheet,
    self_check,
)


@pytest.fixture(scope="module")
def sheet():
    return load_reference_sheet()


def test_bundled_sheet_values(sheet):
    assert sheet["f_te01_hz"] == 7.2e9
    assert sheet["f_tm01_hz"] == 7.6e9
    assert sheet["f_hom_hz"] == 9.5e9
    assert (sheet["df_deps_perp_hz"], sheet["df_deps_par_hz"]) == (-40.603e6, -64.637e6)
    assert (sheet["eps_perp"], sheet["eps_par"]) == (47.0, 28.0)
    assert (sheet["eps_room_perp"], sheet["eps_room_par"]) == (42.5, 26.0)
    assert (sheet.p_perp, sheet.p_par) == pytest.approx((0.923, 0.463))
    assert (sheet["tan_perp"], sheet["tan_par"]) == (1.73e-5, 1.28e-5)
    assert (sheet["cavity_diameter_mm"], sheet["cavity_height_mm"], sheet["sample_edge_mm"]) == (11.2, 34.5, 6.0)


def test_every_value_has_provenance(sheet):
    assert set(REQUIRED_KEYS) <= set(sheet.values)
    assert all(sheet.source(k) for k in sheet.values)


def test_sheet_is_immutable(sheet):
    with pytest.raises(TypeError):
        sheet.values["tan_perp"] = 1.0
    with pytest.raises(KeyError):
        sheet.replace(not_a_key=1.0)


def test_internal_consistency_within_15_percent(sheet):
    assert sheet.q_d_te == pytest.approx(sheet["qd_te_abs_unc"] / sheet["qd_te_rel_unc"], rel=0.15)
    assert sheet.q_d_tm == pytest.approx(sheet["qd_tm_abs_unc"] / sheet["qd_tm_rel_unc"], rel=0.15)


def test_self_check_passes(sheet):
    report = self_check(sheet)
    assert report.passed, report.format(verbose=True)
    assert len(report.checks) >= 15
    assert "reference checks passed" in report.format()


def test_perturbed_tangent_fails(sheet):
    report = self_check(sheet.replace(tan_perp=sheet["tan_perp"] * 1.5))
    assert not report.passed
    names = {c.name for c in report.failures}
    assert "tan_perp_closure" in names
    assert "tan_perp_abs_unc" in names


def test_swapped_fillings_fail_closure(sheet):
    report = self_check(sheet.replace(p_perp_pct=sheet["p_par_pct"], p_par_pct=sheet["p_perp_pct"]))
    assert not report.passed
    assert {"tan_perp_closure", "tan_par_closure"} <= {c.name for c in report.failures}
    assert "FAIL" in report.format()


def test_alternate_sheet_file(tmp_path, sheet):
    doc = {"format_version": 1, "material": "test",
           "values": {k: {"value": v, "source": sheet.source(k)} for k, v in sheet.values.items()}}
    path = tmp_path / "alt.json"
    path.write_text(json.dumps(doc))
    assert self_check(load_reference_sheet(path)).passed


@pytest.mark.parametrize("doc", ["not json", json.dumps({"values": {"tan_perp": {"value": 1.0}}}),
                                 json.dumps({"values": {"tan_perp": {"source": "x"}}}), json.dumps({})])
def test_bad_sheets_rejected(tmp_path, doc):
    path = tmp_path / "bad.json"
    path.write_text(doc)
    with pytest.raises(ReferenceSheetError):
        load_reference_sheet(path)
