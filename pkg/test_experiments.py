import json
import math
from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest

import experiments
import report_store
import surfaces
from calculus import IntegralResult
from experiments import ExperimentConfig, ExperimentReport, RunContext

SMALL = (16, 32, 64)


def _run(kind, **kwargs):
    options = kwargs.pop("options", {})
    cfg = ExperimentConfig(kind=kind, id=kwargs.pop("id", kind), ladder=kwargs.pop("ladder", SMALL),
                           options=options, **kwargs)
    return experiments.run_experiment(cfg, RunContext(seed=3))


def test_algebra_suite_passes():
    report = _run("algebra-suite", options={"cases": 25, "n_max": 4})
    assert report.status == "pass", report.failed_checks
    assert report.identity == "weighted-symmetric-algebra"
    assert report.data["failures"]["coefficient_bridge"] == 0
    assert report.data["printed_recursion_departures"] >= 0
    assert report.data["float_worst_relative"] <= experiments.DEFAULT_FLOAT_TOL
    by_name = {c.name: c for c in report.checks}
    assert by_name["shift_identity"].identity == "weighted-sigma-shift"
    assert by_name["trace_identity"].identity == "weighted-newton-trace-of-product"
    assert by_name["float_matches_exact"].to_dict()["identity"] == "weighted-sigma-float-stability"
    assert {c.name for c in report.checks} == set(experiments.ALGEBRA_IDENTITIES)


def test_algebra_suite_is_seeded():
    first = _run("algebra-suite", options={"cases": 10, "n_max": 3})
    second = _run("algebra-suite", options={"cases": 10, "n_max": 3})
    assert first.to_dict() == second.to_dict()


def test_divergence_audit_on_cylinder():
    report = _run("divergence-audit", ladder=(32, 64, 128),
                  options={"surfaces": ["cylinder-patch"], "weights": ["constant"]})
    assert report.status == "pass", report.failed_checks
    assert set(report.ladders) == {"cylinder-patch.constant.height-gradient",
                                   "cylinder-patch.constant.position",
                                   "cylinder-patch.constant.swirl"}
    finest = [c for c in report.checks if c.name.endswith(".residual_finest")]
    assert len(finest) == 3
    assert not any(c.hard for c in finest)
    assert all(c.identity == "weighted-divergence-theorem" for c in report.checks)


def test_flux_on_cylinder():
    report = _run("flux", surface="cylinder-patch")
    assert report.status == "pass", report.failed_checks
    names = [c.name for c in report.checks]
    assert "residual_paper.relative" in names
    assert {c.name: c.identity for c in report.checks}["residual_corrected.relative"] == "weighted-flux-formula-corrected"
    assert report.data["integrals"]["lhs"]["finest"] == pytest.approx(-math.pi / 2)


def test_flux_on_cap_compares_printed_residual_with_correction():
    report = _run("flux", surface="sphere-cap")
    assert report.status == "pass", report.failed_checks
    names = [c.name for c in report.checks]
    assert "residual_paper_equals_correction" in names
    assert "residual_paper.relative" not in names
    assert report.data["relative_residual_paper"] > 0.1


def test_volume_on_cylinder_and_reported_cap_gap():
    assert _run("volume", surface="cylinder-patch").status == "pass"
    cap = _run("volume", surface="sphere-cap", options={"strict": False})
    assert cap.status == "pass"
    assert cap.checks == []
    assert cap.data["relative_error"] == pytest.approx(1.0, abs=1e-8)
    strict = _run("volume", surface="sphere-cap")
    assert strict.status == "fail"
    assert strict.failed_checks == ["recovered_equals_volume"]


def test_precondition_errors_are_captured():
    report = _run("volume", surface="cylinder-patch", weight="gaussian")
    assert report.status == "error"
    assert report.error.startswith("PreconditionError")
    assert _run("el-residual", surface="sphere-cap", weight="constant").status == "error"
    assert _run("flux", surface="no-such-surface").error.startswith("CatalogError")


def test_el_residual_scans():
    sphere = _run("el-residual", weight="gaussian", options={"n": 3, "radii": [0.5, 1.0, 1.5, 2.0]})
    assert sphere.status == "pass", sphere.failed_checks
    assert len(sphere.data["roots"]) == 1
    torus = _run("el-residual", weight="gaussian", options={"n": 2, "r_values": [0.2, 0.5, 0.8]})
    assert torus.status == "pass"
    assert torus.data["residuals"] == pytest.approx([5.0, 5.0, 5.0])


def test_torus_and_shrinker():
    torus = _run("torus", options={"n_values": [2, 3], "audit_n_max": 3})
    assert torus.status == "pass", torus.failed_checks
    assert [row["n"] for row in torus.data["roots"]] == [2, 3]
    assert [a["n"] for a in torus.data["sphere_audit"]] == [2, 3]
    pin = _run("shrinker-pin")
    assert pin.status == "pass"
    assert len(pin.data["pins"]) == 2


def test_lemma_audit_runner():
    report = _run("lemma-audit", weight="gaussian", options={"surfaces": ["graph-patch"], "probe": 3})
    assert report.status == "pass", report.failed_checks
    assert "graph-patch.k1.closed_forms_coincide" in [c.name for c in report.checks]
    identities = {c.name: c.identity for c in report.checks}
    assert identities["graph-patch.k1.trace_nabla_A"] == "newton-trace-of-shape-derivative"
    assert identities["graph-patch.k2.numeric_vs_lemma"] == "weighted-newton-divergence"


def test_normalized_field_keeps_vanishing_fields():
    scaled = experiments.normalized_tangent_field(surfaces.flat_disk(), experiments._height_gradient)
    probe = SimpleNamespace(x=np.ones((2, 3)))
    assert np.all(scaled(probe) == experiments._height_gradient(probe.x))


def test_check_records_failures():
    report = ExperimentReport(id="r", kind="flux", identity="weighted-flux-formula")
    assert report.check("small", 1e-9, 1e-6)
    assert not report.check("nan", float("nan"), 1e-6)
    assert not report.check("missing", None, 1e-6)
    assert report.status == "fail"
    assert report.failed_checks == ["nan", "missing"]


def test_advisory_checks_leave_status_alone():
    report = ExperimentReport(id="r", kind="divergence-audit", identity="weighted-divergence-theorem")
    assert not report.check("finest", 1e-5, 1e-6, hard=False)
    assert report.status == "pass"
    assert report.failed_checks == []
    assert report.exceeded_advisories == ["finest"]
    assert report.to_dict()["checks"][0]["hard"] is False


def test_write_report_files(tmp_path):
    report = ExperimentReport(id="flux/cap", kind="flux", identity="weighted-flux-formula")
    report.add_ladder("lhs", IntegralResult("lhs", (8, 16, 32), (1.0, 1.25, 1.3125)))
    report.data["bad"] = float("nan")
    paths = report_store.write_report(report, str(tmp_path))
    assert [p.rsplit("/", 1)[-1] for p in paths] == ["flux_cap.json", "flux_cap__lhs.csv"]

    data = report_store.load_report("flux/cap", str(tmp_path))
    assert data["data"]["bad"] is None
    assert data["data"]["integrals"]["lhs"]["levels"] == [8, 16, 32]

    frame = pd.read_csv(paths[1])
    assert list(frame.columns) == report_store.LADDER_COLUMNS
    assert frame["value"].tolist() == [1.0, 1.25, 1.3125]
    assert math.isnan(frame["order"][0])


def test_summary_and_listing(tmp_path, capsys):
    good = ExperimentReport(id="a", kind="torus", identity="torus-sigma1-roots")
    bad = ExperimentReport(id="b", kind="flux", identity="weighted-flux-formula")
    bad.check("residual", 1.0, 1e-6)
    for r in (good, bad):
        report_store.write_report(r, str(tmp_path))
    paths = report_store.write_summary([good, bad], str(tmp_path))

    frame = pd.read_csv(paths["csv"])
    assert list(frame.columns) == report_store.SUMMARY_COLUMNS
    assert frame["status"].tolist() == ["pass", "fail"]
    with open(paths["json"], encoding="utf-8") as f:
        summary = json.load(f)
    assert summary["passed"] is False

    assert report_store.list_reports(str(tmp_path)) == ["a.json", "b.json"]
    assert "Available reports (2)" in capsys.readouterr().out
    assert report_store.list_reports(str(tmp_path / "missing")) == []
