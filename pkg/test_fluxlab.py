import math

import numpy as np
import pytest

import fluxlab
import surfaces
import sympoly
from calculus import IntegralResult, QuadratureSpec
from fluxlab import FluxCase

SMALL = QuadratureSpec(resolutions=(16, 32, 64))


def _case(chart, weight=None, field=None, k=1):
    return FluxCase(chart=chart,
                    weight=weight or surfaces.constant_weight(),
                    conformal=field or surfaces.position_field(),
                    k=k, spec=SMALL, case_id="test")


def test_cylinder_flux_closes_with_printed_constants():
    chart = surfaces.cylinder_patch(radius=1.0, height=1.0, angle=math.pi / 2)
    report = fluxlab.flux_report(_case(chart))
    assert report.lhs.finest == pytest.approx(-math.pi / 2, rel=1e-12)
    assert report.phi_term.finest == pytest.approx(-math.pi / 2, rel=1e-12)
    assert abs(report.correction.extrapolated) < 1e-12
    assert report.relative("residual_paper") < 1e-8
    assert report.relative("residual_corrected") < 1e-8
    assert report.residual_paper.order_ok()


def test_cap_flux_needs_the_correction_term():
    radius = 1.0
    chart = surfaces.sphere_cap(radius=radius, theta_max=1.0)
    report = fluxlab.flux_report(_case(chart))
    area = 2 * math.pi * radius ** 2 * (1 - math.cos(1.0))
    assert report.correction.extrapolated == pytest.approx(2 * area / radius, rel=1e-6)
    assert abs(report.lhs.finest) < 1e-10
    assert report.relative("residual_corrected") < 1e-8
    gap = report.residual_paper.extrapolated - report.correction.extrapolated
    assert abs(gap) / report.correction.extrapolated < 1e-8


def test_gaussian_weight_splits_the_weight_terms():
    chart = surfaces.sphere_cap(radius=1.0, theta_max=0.8)
    report = fluxlab.flux_report(_case(chart, weight=surfaces.gaussian_weight()))
    # mu_1 = <x, N> = 1, so both weight terms are nonzero and differ by the factor n
    printed = report.weight_term_printed.extrapolated
    trace = report.weight_term_trace.extrapolated
    assert printed == pytest.approx(2.0 * trace, rel=1e-12)
    assert report.relative("residual_corrected") < 1e-5


def test_residual_scale_includes_trace_weight_term():
    levels = (16, 32, 64)

    def flat(name, value):
        return IntegralResult(name, levels, (value, value, value))

    small = {name: flat(name, 1.0) for name in ("lhs", "div_term", "phi_term", "weight_term_printed",
                                                "correction", "residual_paper", "residual_corrected")}
    report = fluxlab.ResidualReport(case_id="scale", k=1, weight_term_trace=flat("weight_term_trace", 50.0),
                                    **small)
    assert report.scale == pytest.approx(50.0)
    assert report.relative("residual_corrected") == pytest.approx(0.02)


def test_flux_case_validation():
    chart = surfaces.cylinder_patch()
    with pytest.raises(fluxlab.PreconditionError):
        _case(chart, k=2)
    with pytest.raises(fluxlab.PreconditionError):
        _case(chart, k=0)
    rotation = surfaces.ConformalField(name="rotation",
                                       Y=lambda x: np.stack([-x[..., 1], x[..., 0], 0 * x[..., 2]], axis=-1),
                                       phi=lambda x: np.ones(np.shape(x)[:-1]))
    with pytest.raises(fluxlab.PreconditionError):
        _case(chart, field=rotation)


def test_volume_recovery_on_cylinder():
    chart = surfaces.cylinder_patch(radius=2.0, height=0.5)
    result = fluxlab.volume_recovery(_case(chart))
    assert result.H_k == pytest.approx(-0.25)
    assert result.volume.finest == pytest.approx(2.0 * 0.5 * math.pi / 2, rel=1e-12)
    assert result.relative_error < 1e-8


def test_volume_recovery_reports_cap_gap():
    chart = surfaces.sphere_cap(radius=2.0, theta_max=0.8)
    result = fluxlab.volume_recovery(_case(chart))
    # Y is normal on a centered sphere, so the flux and the recovered volume vanish
    assert abs(result.recovered.finest) < 1e-10
    assert result.relative_error == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("chart_builder,weight", [
    (surfaces.cylinder_patch, surfaces.gaussian_weight()),
    (surfaces.saddle_graph, surfaces.constant_weight()),
    (surfaces.flat_disk, surfaces.constant_weight()),
])
def test_volume_preconditions(chart_builder, weight):
    with pytest.raises(fluxlab.PreconditionError):
        fluxlab.volume_recovery(_case(chart_builder(), weight=weight))


def test_volume_needs_unit_phi():
    with pytest.raises(fluxlab.PreconditionError):
        fluxlab.volume_recovery(_case(surfaces.cylinder_patch(), field=surfaces.homothetic_field(2.0)))


def test_sphere_el_scan_finds_closed_form_root():
    n = 3
    radii = [0.2 * i for i in range(1, 11)]
    scan = fluxlab.el_sphere_scan(n, radii)
    assert len(scan.roots) == 1
    assert scan.roots[0] == pytest.approx(scan.closed_form_root, abs=1e-8)
    assert fluxlab.sphere_el_value(n, scan.closed_form_root) == pytest.approx(0.0, abs=1e-9)
    assert scan.numeric_deviation < 1e-8


def test_sphere_el_value_formula():
    # -n(n-1)/rho^2 + rho^2 + n
    assert fluxlab.sphere_el_value(2, 1.0) == pytest.approx(1.0)
    assert fluxlab.sphere_el_value(3, 2.0) == pytest.approx(-1.5 + 4.0 + 3.0)


def test_torus_el_residual_for_n2_is_constant():
    scan = fluxlab.el_torus_scan(2, [0.1 * i for i in range(1, 10)])
    assert scan.residuals == pytest.approx([5.0] * 9)
    assert scan.sigma2 == pytest.approx([-1.0] * 9)
    assert scan.roots == []


def test_torus_el_residual_root_for_n3():
    scan = fluxlab.el_torus_scan(3, [0.05 * i for i in range(1, 20)])
    # 9 - 2 s^2 / r^2 vanishes at r^2 = 2 / 11
    assert len(scan.roots) == 1
    assert scan.roots[0] == pytest.approx(math.sqrt(2.0 / 11.0), abs=1e-8)


def test_el_residual_on_torus_chart():
    result = fluxlab.el_residual_gaussian(surfaces.hr_torus_chart(0.6), spec=SMALL)
    assert result.c == 1
    assert np.allclose(result.values, 5.0, atol=1e-9)
    assert result.sup == pytest.approx(5.0, abs=1e-9)


def test_el_residual_of_spectrum():
    result = fluxlab.el_residual_gaussian(surfaces.hr_torus_spectrum(2, 0.3))
    assert result.sup == pytest.approx(5.0)
    assert result.l2 is None


def test_el_residual_requires_gaussian_weight():
    with pytest.raises(fluxlab.PreconditionError):
        fluxlab.el_residual_gaussian(surfaces.sphere_cap(), weight=surfaces.constant_weight())


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_torus_sigma1_and_root(n):
    for r in (0.1, 0.37, 0.5, 0.81):
        assert fluxlab.torus_sigma1(n, r) == pytest.approx(sum(surfaces.hr_torus_spectrum(n, r)), rel=1e-12)
    root = fluxlab.torus_root_solve(n)
    assert abs(fluxlab.torus_sigma1(n, root) - fluxlab.default_torus_target(n)) <= fluxlab.ROOT_TOL


def test_torus_domain_errors():
    with pytest.raises(sympoly.DomainError):
        fluxlab.torus_sigma1(2, 1.0)
    with pytest.raises(sympoly.DomainError):
        fluxlab.torus_root_solve(1)


def test_bisect_without_sign_change():
    with pytest.raises(fluxlab.RootNotFoundError):
        fluxlab.bisect(lambda x: x * x + 1.0, -1.0, 1.0)
    assert fluxlab.bisect(lambda x: x - 0.25, 0.0, 1.0) == pytest.approx(0.25, abs=1e-12)


def test_sphere_audit_tables():
    audit = fluxlab.sphere_el_audit(2)
    assert audit.quadratic_exact
    assert audit.quadratic_roots == (5.0, -1.0)
    assert audit.printed_roots[0] == pytest.approx(2 + math.sqrt(7))
    assert audit.differences[0] == pytest.approx(3 - math.sqrt(7))
    assert not fluxlab.sphere_el_audit(3).quadratic_exact
    data = audit.to_dict()
    assert set(data["torus_roots"]) == {"quadratic+", "quadratic-", "printed+", "printed-"}
    assert all(v is not None for v in data["torus_roots"].values())


def test_lemma_audit_on_graph():
    audit = fluxlab.lemma_audit(surfaces.saddle_graph(), surfaces.gaussian_weight(), ks=(1, 2), count=3)
    assert audit.passed
    first = audit.rows[0]
    assert first["k"] == 1
    assert first["printed_vs_unrolled_closed"] < 1e-10
    assert first["consistent_closed_vs_lemma"] < 1e-6


def test_lemma_audit_rejects_order():
    with pytest.raises(fluxlab.PreconditionError):
        fluxlab.lemma_audit(surfaces.saddle_graph(), surfaces.gaussian_weight(), ks=(3,), count=2)


@pytest.mark.parametrize("n", [2, 3])
def test_shrinker_pin(n):
    pin = fluxlab.shrinker_pin(n)
    assert pin.passed
    assert pin.opposite_convention == pytest.approx(2.0 / math.sqrt(n))
