import logging
import math

import numpy as np
import pytest

import calculus
import surfaces
from calculus import IntegralResult, QuadratureSpec

SMALL = QuadratureSpec(resolutions=(16, 32, 64))


def test_midpoint_grid():
    points, cell = calculus.midpoint_grid((0.0, 0.0), (1.0, 2.0), 4)
    assert points.shape == (16, 2)
    assert cell == pytest.approx(0.125)
    assert points[0] == pytest.approx([0.125, 0.25])


@pytest.mark.parametrize("ladder", [(16, 32), (32, 16, 64), (0, 4, 8)])
def test_bad_ladders_rejected(ladder):
    with pytest.raises(calculus.QuadratureError):
        QuadratureSpec(resolutions=ladder)


def test_integral_result_orders_and_richardson():
    result = IntegralResult("q", (1, 2, 4), (1.0, 1.25, 1.3125))
    assert result.differences == pytest.approx([0.25, 0.0625])
    assert result.orders[2] == pytest.approx(2.0)
    assert result.order == pytest.approx(2.0)
    assert result.extrapolated == pytest.approx(4.0 / 3.0)
    assert result.monotone and not result.converged
    assert result.order_ok()
    rows = result.ladder_rows()
    assert [r["level"] for r in rows] == [1, 2, 4]
    assert rows[0]["order"] is None


def test_integral_result_at_roundoff_floor():
    result = IntegralResult("flat", (8, 16, 32), (math.pi, math.pi, math.pi))
    assert result.converged
    assert result.order is None
    assert result.order_ok()


def test_non_monotone_ladder_logs_a_warning(caplog):
    result = IntegralResult("wobble", (8, 16, 32, 64), (1.0, 1.1, 1.05, 1.2))
    with caplog.at_level(logging.WARNING, logger="calculus"):
        assert result.order is None
    assert not result.monotone
    assert "wobble: non-monotone ladder [8, 16, 32, 64]" in caplog.text
    assert not result.order_ok()


def test_integral_result_arithmetic():
    a = IntegralResult("a", (1, 2, 4), (1.0, 2.0, 3.0))
    b = IntegralResult("b", (1, 2, 4), (0.5, 0.5, 0.5))
    assert (a - b).values == (0.5, 1.5, 2.5)
    assert (2.0 * a).values == (2.0, 4.0, 6.0)
    assert (-a).values == (-1.0, -2.0, -3.0)
    assert calculus.total([a, b], "sum").name == "sum"
    with pytest.raises(calculus.QuadratureError):
        a + IntegralResult("c", (1, 2), (0.0, 0.0))


def test_cap_area_converges_at_second_order():
    chart = surfaces.sphere_cap(radius=1.0, theta_max=1.0)
    area = calculus.surface_integral(chart, lambda g: np.ones(len(g.u)), surfaces.constant_weight(), SMALL)
    exact = 2 * math.pi * (1 - math.cos(1.0))
    assert area.extrapolated == pytest.approx(exact, rel=1e-6)
    assert area.order == pytest.approx(2.0, abs=0.05)


def test_disk_area_is_exact_for_linear_integrand():
    chart = surfaces.flat_disk(radius=1.0)
    area = calculus.surface_integral(chart, lambda g: np.ones(len(g.u)), surfaces.constant_weight(), SMALL)
    assert area.finest == pytest.approx(math.pi, rel=1e-13)
    assert area.converged


def test_threaded_reduction_is_bit_identical():
    chart = surfaces.sphere_cap()
    weight = surfaces.gaussian_weight()
    spec = QuadratureSpec(resolutions=(32, 64, 128), workers=1)
    threaded = QuadratureSpec(resolutions=(32, 64, 128), workers=4)
    one = calculus.surface_integral(chart, lambda g: g.x[:, 2], weight, spec)
    many = calculus.surface_integral(chart, lambda g: g.x[:, 2], weight, threaded)
    assert one.values == many.values


def test_cylinder_boundary_flux_of_position_field():
    chart = surfaces.cylinder_patch(radius=1.0, height=1.0)
    flux = calculus.boundary_integral(chart, lambda g: g.tangential(g.x), surfaces.constant_weight(), SMALL)
    # only the top face z = 1 carries flux: length of the arc
    assert flux.finest == pytest.approx(math.pi / 2, rel=1e-12)


def test_christoffel_symbols_of_polar_coordinates():
    chart = surfaces.flat_disk()
    gamma = calculus.christoffel(chart, [0.5, 1.0])
    assert gamma[0, 0, 1, 1] == pytest.approx(-0.5, abs=1e-6)
    assert gamma[0, 1, 0, 1] == pytest.approx(2.0, abs=1e-6)
    assert gamma[0, 1, 1, 0] == pytest.approx(2.0, abs=1e-6)
    assert gamma[0, 0, 0, 0] == pytest.approx(0.0, abs=1e-6)


def test_divergence_of_position_on_disk():
    chart = surfaces.flat_disk()
    u = [[0.5, 0.3], [0.8, 2.0]]
    div = calculus.covariant_divergence(chart, lambda g: g.x, u)
    assert div == pytest.approx([2.0, 2.0], abs=1e-6)
    weighted = calculus.weighted_divergence(chart, lambda g: g.x, surfaces.gaussian_weight(), u)
    # div_f X = div X - <grad f, X> = 2 - r^2
    assert weighted == pytest.approx([1.75, 1.36], abs=1e-6)


def test_tangential_gradient_of_height_on_cylinder():
    chart = surfaces.cylinder_patch()
    grad = calculus.tangential_gradient(chart, lambda g: g.x[:, 2], [[0.4, 0.5]])
    assert grad[0] == pytest.approx([0.0, 0.0, 1.0], abs=1e-8)


def test_weighted_divergence_shares_one_stencil(monkeypatch):
    chart = surfaces.flat_disk()
    calls = []
    frame_at = surfaces.frame_at

    def counting(chart_, u, allow_edge=False):
        calls.append(len(np.atleast_2d(u)))
        return frame_at(chart_, u, allow_edge=allow_edge)

    monkeypatch.setattr(surfaces, "frame_at", counting)
    u = [[0.5, 0.3], [0.8, 2.0]]
    calculus.weighted_divergence(chart, lambda g: g.x, surfaces.gaussian_weight(), u)
    # centre plus u +/- h along each of the two axes
    assert len(calls) == 5

    center = frame_at(chart, np.asarray(u))
    calls.clear()
    stencil = calculus.stencil_at(chart, u, center=center)
    shared = calculus.weighted_divergence(chart, lambda g: g.x, surfaces.gaussian_weight(), u, stencil)
    assert len(calls) == 4
    assert shared == pytest.approx([1.75, 1.36], abs=1e-6)


def test_stencil_outside_domain():
    chart = surfaces.flat_disk()
    with pytest.raises(calculus.QuadratureError):
        calculus.stencil_at(chart, [1.0, 0.5])


def test_divergence_theorem_on_cylinder():
    chart = surfaces.cylinder_patch()
    result = calculus.divergence_theorem_residual(chart, lambda g: g.x, surfaces.constant_weight(), SMALL)
    # div of z e_z is 1, so both sides are the area
    assert result["interior"].extrapolated == pytest.approx(math.pi / 2, rel=1e-8)
    assert abs(result["residual"].extrapolated) < 1e-6


def test_divergence_theorem_on_graph_with_gaussian_weight():
    chart = surfaces.saddle_graph()
    spec = QuadratureSpec(resolutions=(32, 64, 128))
    result = calculus.divergence_theorem_residual(chart, lambda g: np.sin(g.x), surfaces.gaussian_weight(), spec)
    assert abs(result["residual"].extrapolated) < 1e-5
    assert abs(result["residual"].finest) < 1e-3


@pytest.mark.parametrize("name", ["graph-patch", "cylinder-patch", "sphere-cap"])
@pytest.mark.parametrize("k", [0, 1, 2])
def test_newton_divergence_numeric_matches_recursion(name, k):
    chart = surfaces.build_surface(name)
    weight = surfaces.gaussian_weight()
    u = calculus.probe_grid(chart, 3)
    numeric = calculus.div_f_newton_numeric(chart, weight, k, u)
    lemma = calculus.div_f_newton_lemma(chart, weight, k, u)
    assert np.max(np.abs(numeric - lemma)) < 1e-4


def test_closed_forms_at_k1():
    chart = surfaces.saddle_graph()
    weight = surfaces.gaussian_weight()
    u = calculus.probe_grid(chart, 3)
    printed, unrolled, consistent = calculus.div_f_newton_closed_forms(chart, weight, 1, u)
    assert np.allclose(printed, unrolled, atol=1e-12)
    assert np.allclose(consistent, calculus.div_f_newton_lemma(chart, weight, 1, u), atol=1e-8)
    assert np.allclose(printed, calculus.div_f_newton_lemma(chart, weight, 1, u, printed=True), atol=1e-8)


def test_trace_nabla_identity():
    chart = surfaces.saddle_graph()
    weight = surfaces.gaussian_weight()
    u = calculus.probe_grid(chart, 3)
    for k in (1, 2):
        for direction in (0, 1):
            residual = calculus.trace_nabla_A_residual(chart, weight, k, u, direction)
            assert np.max(np.abs(residual)) < 1e-5
    along_x = calculus.trace_nabla_A_residual(chart, weight, 1, u, [1.0, 0.0, 0.0])
    assert np.max(np.abs(along_x)) < 1e-5


def test_constant_weight_gives_zero_support():
    chart = surfaces.cylinder_patch()
    geom = surfaces.frame_at(chart, surfaces.sample_points(chart))
    assert np.all(calculus.support_weight(geom, surfaces.constant_weight(3.0)) == 0.0)
    sigmas = calculus.weighted_sigmas(geom, surfaces.constant_weight(), 2)
    assert np.allclose(sigmas[:, 1], -1.0)
    assert np.allclose(sigmas[:, 2], 0.0)
