"""
End-to-end experiments for curvflux.

Flux-formula audit with both the printed and the trace-consistent bookkeeping,
volume recovery from the boundary flux, Euler-Lagrange residuals for the
Gaussian weight, and the H(r)-torus root analysis.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

import calculus
import surfaces
import sympoly
from calculus import IntegralResult, QuadratureSpec
from newton import CurvatureVector
from surfaces import Chart, ConformalField, GeometryFrame, WeightField

logger = logging.getLogger(__name__)

CONSTANT_H_TOL = 1e-8
ROOT_TOL = 1e-10
SCAN_INTERVALS = 64
SCAN_LOWER = 1e-4
SCAN_UPPER = 1.0 - 1e-4
LEMMA_TOL = 1e-4
SHRINKER_ANALYTIC_TOL = 1e-10
SHRINKER_NUMERIC_TOL = 1e-6


class PreconditionError(Exception):
    """Experiment inputs violate the assumptions of the identity under audit."""
    pass


class RootNotFoundError(Exception):
    """No sign change found while bracketing a root."""
    pass


def _constants(n: int) -> CurvatureVector:
    return CurvatureVector(n=n, H=[], binomials=[math.comb(n, j) for j in range(n + 1)])


@dataclass(frozen=True)
class FluxCase:
    chart: Chart
    weight: WeightField
    conformal: ConformalField
    k: int
    spec: QuadratureSpec = field(default_factory=QuadratureSpec)
    case_id: str = "flux"

    def __post_init__(self):
        n = self.chart.n
        if not 1 <= self.k <= n - 1:
            raise PreconditionError(f"{self.case_id}: k={self.k} outside 1..{n - 1}")
        points = surfaces.frame_at(self.chart, surfaces.sample_points(self.chart)).x
        try:
            surfaces.check_conformal(self.conformal, points)
        except surfaces.CatalogError as e:
            raise PreconditionError(f"{self.case_id}: {e}") from e


@dataclass(frozen=True)
class ResidualReport:
    case_id: str
    k: int
    lhs: IntegralResult
    div_term: IntegralResult
    phi_term: IntegralResult
    weight_term_printed: IntegralResult
    weight_term_trace: IntegralResult
    correction: IntegralResult
    residual_paper: IntegralResult
    residual_corrected: IntegralResult

    def quantities(self) -> Dict[str, IntegralResult]:
        return {
            "lhs": self.lhs,
            "div_term": self.div_term,
            "phi_term": self.phi_term,
            "weight_term_printed": self.weight_term_printed,
            "weight_term_trace": self.weight_term_trace,
            "correction": self.correction,
            "residual_paper": self.residual_paper,
            "residual_corrected": self.residual_corrected,
        }

    @property
    def scale(self) -> float:
        terms = (self.lhs, self.div_term, self.phi_term, self.weight_term_printed, self.weight_term_trace,
                 self.correction)
        return max(max(abs(t.extrapolated) for t in terms), 1e-300)

    def relative(self, name: str) -> float:
        return abs(self.quantities()[name].extrapolated) / self.scale


def _tangent_field(field_: ConformalField) -> Callable[[GeometryFrame], np.ndarray]:
    return lambda g: g.tangential(field_.Y(g.x))


def flux_report(case: FluxCase) -> ResidualReport:
    """Both sides of the weighted flux formula for T_k^inf applied to Y^T."""
    chart, weight, Y, k = case.chart, case.weight, case.conformal, case.k
    n = chart.n
    constants = _constants(n)
    tangent = _tangent_field(Y)

    def div_term(g: GeometryFrame) -> np.ndarray:
        stencil = calculus.stencil_at(chart, g.u, center=g)
        lemma = calculus.div_f_newton_lemma(chart, weight, k, g.u, stencil=stencil)
        return np.einsum("pm,pm->p", lemma, tangent(g))

    def phi_term(g: GeometryFrame) -> np.ndarray:
        sigma = calculus.weighted_sigmas(g, weight, k)
        return constants.c(k) * Y.phi(g.x) * sigma[:, k] / constants.binomials[k]

    def weighted_h(g: GeometryFrame) -> np.ndarray:
        sigma = calculus.weighted_sigmas(g, weight, k)
        mu1 = calculus.support_weight(g, weight)
        return Y.phi(g.x) * mu1 * sigma[:, k - 1] / constants.binomials[k - 1]

    def correction(g: GeometryFrame) -> np.ndarray:
        T = calculus.newton_coordinates(g, weight, k)
        trace = np.einsum("pab,pba->p", g.shape_coord, T)
        return np.einsum("pm,pm->p", g.normal, Y.Y(g.x)) * trace

    interior = calculus.surface_integrals(chart, {
        "div_term": div_term,
        "phi_term": phi_term,
        "weighted_h": weighted_h,
        "correction": correction,
    }, weight, case.spec)

    def flux_field(g: GeometryFrame) -> np.ndarray:
        return calculus.apply_coordinates(g, calculus.newton_coordinates(g, weight, k), tangent(g))

    lhs = calculus.boundary_integral(chart, flux_field, weight, case.spec, name="lhs")
    printed = (interior["weighted_h"] * constants.c_prev_printed(k)).renamed("weight_term_printed")
    trace = (interior["weighted_h"] * constants.c_prev_trace(k)).renamed("weight_term_trace")
    paper = (lhs - calculus.total([interior["div_term"], interior["phi_term"], printed], "rhs"))
    corrected = (lhs - calculus.total([interior["div_term"], interior["phi_term"], trace,
                                       interior["correction"]], "rhs"))
    report = ResidualReport(
        case_id=case.case_id,
        k=k,
        lhs=lhs,
        div_term=interior["div_term"],
        phi_term=interior["phi_term"],
        weight_term_printed=printed,
        weight_term_trace=trace,
        correction=interior["correction"],
        residual_paper=paper.renamed("residual_paper"),
        residual_corrected=corrected.renamed("residual_corrected"),
    )
    logger.debug("%s: residual_paper=%.3e residual_corrected=%.3e", case.case_id,
                 report.residual_paper.extrapolated, report.residual_corrected.extrapolated)
    return report


@dataclass(frozen=True)
class VolumeReport:
    case_id: str
    k: int
    H_k: float
    recovered: IntegralResult
    volume: IntegralResult

    @property
    def relative_error(self) -> float:
        return abs(self.recovered.extrapolated - self.volume.extrapolated) / abs(self.volume.extrapolated)


def volume_recovery(case: FluxCase) -> VolumeReport:
    """(1 / (c_k H_k)) times the boundary flux, against the weighted volume of the chart."""
    chart, weight, Y, k = case.chart, case.weight, case.conformal, case.k
    if weight.tag != "constant":
        raise PreconditionError(f"{case.case_id}: volume recovery needs a constant weight")
    geom = surfaces.frame_at(chart, surfaces.sample_points(chart, 4))
    if np.any(np.abs(Y.phi(geom.x) - 1.0) > CONSTANT_H_TOL):
        raise PreconditionError(f"{case.case_id}: field must be homothetic with phi = 1")
    sigma = sympoly.elementary_symmetric_array(geom.curvatures, k)[:, k]
    H = sigma / math.comb(chart.n, k)
    H_k = float(np.mean(H))
    if np.max(H) - np.min(H) > CONSTANT_H_TOL * max(1.0, abs(H_k)):
        raise PreconditionError(f"{case.case_id}: H_{k} is not constant over the chart")
    if abs(H_k) <= CONSTANT_H_TOL:
        raise PreconditionError(f"{case.case_id}: H_{k} vanishes; it must be a nonzero constant")

    tangent = _tangent_field(Y)

    def flux_field(g: GeometryFrame) -> np.ndarray:
        return calculus.apply_coordinates(g, calculus.newton_coordinates(g, weight, k), tangent(g))

    flux = calculus.boundary_integral(chart, flux_field, weight, case.spec, name="flux")
    c_k = _constants(chart.n).c(k)
    recovered = (flux * (1.0 / (c_k * H_k))).renamed("recovered")
    volume = calculus.surface_integral(chart, lambda g: np.ones(len(g.u)), weight, case.spec, name="volume")
    return VolumeReport(case_id=case.case_id, k=k, H_k=H_k, recovered=recovered, volume=volume)


# Euler-Lagrange residual for the Gaussian weight

def el_pointwise(curvatures: np.ndarray, support: np.ndarray, f: np.ndarray, c: int) -> np.ndarray:
    """-2 sigma_2^inf + 2 mu sigma_1^inf - 2 f + mu^2 + n (1 + c), sigma's at mu0 = mu."""
    curvatures = np.atleast_2d(np.asarray(curvatures, dtype=float))
    support = np.asarray(support, dtype=float)
    n = curvatures.shape[-1]
    sigma = sympoly.sigma_inf_array(support, curvatures, 2)
    return -2.0 * sigma[..., 2] + 2.0 * support * sigma[..., 1] - 2.0 * np.asarray(f) + support ** 2 + n * (1 + c)


@dataclass(frozen=True)
class ELResult:
    n: int
    c: int
    values: np.ndarray
    sup: float
    l2: Optional[float]


def el_residual_gaussian(target, weight: Optional[WeightField] = None, c: Optional[int] = None,
                         spec: Optional[QuadratureSpec] = None) -> ELResult:
    """EL residual on a chart (grid of the finest level) or on an analytic spectrum in S^{n+1}."""
    weight = surfaces.gaussian_weight() if weight is None else weight
    if weight.tag != "gaussian":
        raise PreconditionError(f"the Euler-Lagrange residual needs the Gaussian weight, got '{weight.tag}'")
    if isinstance(target, Chart):
        chart = target
        c = chart.ambient.c if c is None else c
        spec = QuadratureSpec() if spec is None else spec

        def residual(g: GeometryFrame) -> np.ndarray:
            support = np.einsum("pm,pm->p", g.x, g.normal)
            return el_pointwise(g.curvatures, support, weight.f(g.x), c)

        points, _ = calculus.midpoint_grid(chart.lower, chart.upper, spec.resolutions[-1])
        values = residual(surfaces.frame_at(chart, points))
        squared = calculus.surface_integral(chart, lambda g: residual(g) ** 2,
                                            surfaces.constant_weight(0.0), spec, name="l2")
        return ELResult(n=chart.n, c=c, values=values, sup=float(np.max(np.abs(values))),
                        l2=math.sqrt(max(squared.extrapolated, 0.0)))
    curvatures = np.asarray(target, dtype=float)
    c = 1 if c is None else c
    # hypersurfaces of the unit sphere: |x| = 1 and N is orthogonal to x
    values = el_pointwise(curvatures[None, :], np.zeros(1), np.full(1, 0.5), c)
    return ELResult(n=len(curvatures), c=c, values=values, sup=float(abs(values[0])), l2=None)


def sphere_el_value(n: int, radius: float) -> float:
    """EL residual of the centered sphere of the given radius in R^{n+1}."""
    curvatures = np.asarray(surfaces.round_sphere_spectrum(n, radius))
    return float(el_pointwise(curvatures[None, :], np.array([radius]), np.array([0.5 * radius ** 2]), 0)[0])


def bisect(g: Callable[[float], float], lo: float, hi: float, tol: float = ROOT_TOL) -> float:
    """Bisection to the last representable midpoint; raises if |g| stays above tol."""
    g_lo, g_hi = g(lo), g(hi)
    if g_lo == 0.0:
        return lo
    if g_hi == 0.0:
        return hi
    if (g_lo > 0) == (g_hi > 0):
        raise RootNotFoundError(f"no sign change on [{lo}, {hi}]")
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        g_mid = g(mid)
        if g_mid == 0.0:
            return mid
        if (g_mid > 0) == (g_lo > 0):
            lo, g_lo = mid, g_mid
        else:
            hi, g_hi = mid, g_mid
    root, value = (lo, g_lo) if abs(g_lo) <= abs(g_hi) else (hi, g_hi)
    if abs(value) > tol:
        raise RootNotFoundError(f"bisection stalled at r={root!r} with |g|={abs(value):.3e}")
    return root


def scan_roots(g: Callable[[float], float], grid: Sequence[float], tol: float = ROOT_TOL) -> List[float]:
    """Roots of g inside every sign-changing cell of the grid."""
    roots = []
    values = [g(x) for x in grid]
    for (a, ga), (b, gb) in zip(zip(grid, values), zip(grid[1:], values[1:])):
        if ga == 0.0:
            roots.append(a)
        elif (ga > 0) != (gb > 0) and gb != 0.0:
            roots.append(bisect(g, a, b, tol))
    if values and values[-1] == 0.0:
        roots.append(grid[-1])
    return roots


@dataclass(frozen=True)
class SphereScan:
    n: int
    radii: List[float]
    residuals: List[float]
    roots: List[float]
    closed_form_root: float
    numeric_deviation: Optional[float] = None


def el_sphere_scan(n: int, radii: Sequence[float], numeric: bool = True) -> SphereScan:
    """EL residual over sphere radii, sign-change roots and the closed-form root.

    With numeric=True the residual is also evaluated through the frame pipeline on
    round_sphere charts; the largest deviation from the analytic value is kept.
    """
    radii = sorted(float(r) for r in radii)
    if not radii or radii[0] <= 0:
        raise PreconditionError("sphere radii must be positive")
    residuals = [sphere_el_value(n, r) for r in radii]
    roots = scan_roots(lambda r: sphere_el_value(n, r), radii)
    closed = math.sqrt((-n + math.sqrt(n * n + 4 * n * (n - 1))) / 2.0)
    deviation = None
    if numeric:
        weight = surfaces.gaussian_weight()
        worst = 0.0
        for r, expected in zip(radii, residuals):
            chart = surfaces.round_sphere(n, r)
            g = surfaces.frame_at(chart, surfaces.sample_points(chart, 3))
            support = np.einsum("pm,pm->p", g.x, g.normal)
            values = el_pointwise(g.curvatures, support, weight.f(g.x), 0)
            worst = max(worst, float(np.max(np.abs(values - expected))))
        deviation = worst
    return SphereScan(n=n, radii=radii, residuals=residuals, roots=roots,
                      closed_form_root=closed, numeric_deviation=deviation)


@dataclass(frozen=True)
class TorusScan:
    n: int
    r_values: List[float]
    sigma1: List[float]
    sigma2: List[float]
    residuals: List[float]
    roots: List[float]


def el_torus_scan(n: int, r_values: Sequence[float]) -> TorusScan:
    """EL residual -2 sigma_2 + 2n - 1 of the H(r)-torus in S^{n+1} over r."""
    r_values = sorted(float(r) for r in r_values)

    def residual(r: float) -> float:
        return float(el_residual_gaussian(surfaces.hr_torus_spectrum(n, r), c=1).values[0])

    spectra = [surfaces.hr_torus_spectrum(n, r) for r in r_values]
    return TorusScan(
        n=n,
        r_values=r_values,
        sigma1=[float(sympoly.sigma_k(s, 1)) for s in spectra],
        sigma2=[float(sympoly.sigma_k(s, 2)) for s in spectra],
        residuals=[residual(r) for r in r_values],
        roots=scan_roots(residual, r_values),
    )


# H(r)-torus root analysis

def torus_sigma1(n: int, r: float) -> float:
    """(n (1 - r^2) - 1) / (r sqrt(1 - r^2))."""
    if not 0.0 < r < 1.0:
        raise sympoly.DomainError(f"r={r} outside (0, 1)")
    return (n * (1.0 - r * r) - 1.0) / (r * math.sqrt(1.0 - r * r))


def default_torus_target(n: int) -> float:
    return 1.0 + math.sqrt(2 * n + 3)


def torus_root_solve(n: int, target: Optional[float] = None) -> float:
    """Root of torus_sigma1(n, r) - t; the first sign-changing cell of a uniform scan wins."""
    if n < 2:
        raise sympoly.DomainError(f"torus root needs n >= 2, got {n}")
    t = default_torus_target(n) if target is None else float(target)

    def g(r: float) -> float:
        return torus_sigma1(n, r) - t

    grid = np.linspace(SCAN_LOWER, SCAN_UPPER, SCAN_INTERVALS + 1)
    values = [g(float(r)) for r in grid]
    for i in range(SCAN_INTERVALS):
        if values[i] == 0.0:
            return float(grid[i])
        if (values[i] > 0) != (values[i + 1] > 0):
            return bisect(g, float(grid[i]), float(grid[i + 1]))
    if values[-1] == 0.0:
        return float(grid[-1])
    raise RootNotFoundError(f"n={n}, t={t}: no sign change of sigma_1 - t on ({SCAN_LOWER}, {SCAN_UPPER})")


@dataclass(frozen=True)
class SphereELAudit:
    n: int
    mu0: float
    discriminant: int
    quadratic_exact: bool
    quadratic_roots: Tuple[float, float]
    printed_roots: Tuple[float, float]
    differences: Tuple[float, float]
    torus_roots: Dict[str, Optional[float]]

    def to_dict(self) -> Dict[str, object]:
        return {
            "n": self.n,
            "mu0": self.mu0,
            "discriminant": self.discriminant,
            "quadratic_exact": self.quadratic_exact,
            "quadratic_roots": list(self.quadratic_roots),
            "printed_roots": list(self.printed_roots),
            "differences": list(self.differences),
            "torus_roots": dict(self.torus_roots),
        }


def sphere_el_audit(n: int) -> SphereELAudit:
    """Roots of x^2 - 4x - (2n+1) next to the printed 2 +/- sqrt(2n+3); asserts nothing."""
    if n < 2:
        raise sympoly.DomainError(f"sphere audit needs n >= 2, got {n}")
    radicand = 2 * n + 5
    discriminant = 4 * radicand
    root = math.isqrt(radicand)
    exact = root * root == radicand
    spread = float(root) if exact else math.sqrt(radicand)
    quadratic = (2.0 + spread, 2.0 - spread)
    printed = (2.0 + math.sqrt(2 * n + 3), 2.0 - math.sqrt(2 * n + 3))
    torus_roots: Dict[str, Optional[float]] = {}
    for label, t in (("quadratic+", quadratic[0]), ("quadratic-", quadratic[1]),
                     ("printed+", printed[0]), ("printed-", printed[1])):
        try:
            torus_roots[label] = torus_root_solve(n, t - 1.0)
        except RootNotFoundError:
            torus_roots[label] = None
    return SphereELAudit(
        n=n,
        mu0=0.0,
        discriminant=discriminant,
        quadratic_exact=exact,
        quadratic_roots=quadratic,
        printed_roots=printed,
        differences=(quadratic[0] - printed[0], quadratic[1] - printed[1]),
        torus_roots=torus_roots,
    )


# Lemma audit and the shrinker pin

def _sup(values: np.ndarray) -> float:
    values = np.asarray(values)
    if values.ndim > 1:
        values = np.linalg.norm(values, axis=-1)
    return float(np.max(np.abs(values))) if values.size else 0.0


@dataclass(frozen=True)
class LemmaAudit:
    surface: str
    weight: str
    rows: List[Dict[str, float]]

    @property
    def passed(self) -> bool:
        return all(row["numeric_vs_lemma"] <= LEMMA_TOL for row in self.rows)


def lemma_audit(chart: Chart, weight: WeightField, ks: Sequence[int] = (1, 2), count: int = 5) -> LemmaAudit:
    """Numeric div_f T_k^inf against the recursion (both signs) and the three closed forms."""
    points = calculus.probe_grid(chart, count)
    rows = []
    for k in ks:
        if not 1 <= k <= chart.n:
            raise PreconditionError(f"{chart.name}: k={k} outside 1..{chart.n}")
        stencil = calculus.stencil_at(chart, points)
        numeric = calculus.div_f_newton_numeric(chart, weight, k, points, stencil)
        lemma = calculus.div_f_newton_lemma(chart, weight, k, points, stencil=stencil)
        printed = calculus.div_f_newton_lemma(chart, weight, k, points, printed=True, stencil=stencil)
        closed_printed, closed_unrolled, closed_consistent = calculus.div_f_newton_closed_forms(
            chart, weight, k, points, stencil)
        trace = calculus.trace_nabla_A_residual(chart, weight, k, points, 0, stencil)
        rows.append({
            "k": k,
            "numeric_vs_lemma": _sup(numeric - lemma),
            "numeric_vs_printed_lemma": _sup(numeric - printed),
            "printed_closed_vs_printed_lemma": _sup(closed_printed - printed),
            "unrolled_closed_vs_printed_lemma": _sup(closed_unrolled - printed),
            "consistent_closed_vs_lemma": _sup(closed_consistent - lemma),
            "printed_vs_unrolled_closed": _sup(closed_printed - closed_unrolled),
            "trace_nabla_A": _sup(trace),
            "scale": _sup(numeric),
        })
    return LemmaAudit(surface=chart.name, weight=weight.tag, rows=rows)


@dataclass(frozen=True)
class ShrinkerPin:
    n: int
    analytic: float
    numeric: float
    opposite_convention: float

    @property
    def passed(self) -> bool:
        return self.analytic <= SHRINKER_ANALYTIC_TOL and self.numeric <= SHRINKER_NUMERIC_TOL


def shrinker_pin(n: int) -> ShrinkerPin:
    """|H_{1,f}| on the sphere of radius sqrt(n) with the Gaussian weight and outward normal."""
    radius = math.sqrt(n)
    spectrum = sympoly.Spectrum(radius, tuple(surfaces.round_sphere_spectrum(n, radius)))
    analytic = abs(float(sympoly.sigma_inf_closed(spectrum, 1)) / n)
    # with A = +dN the curvatures change sign while mu0 keeps its value
    flipped = sympoly.Spectrum(radius, tuple(-x for x in spectrum.mu))
    opposite = abs(float(sympoly.sigma_inf_closed(flipped, 1)) / n)

    chart = surfaces.round_sphere(n, radius)
    weight = surfaces.gaussian_weight()
    geom = surfaces.frame_at(chart, surfaces.sample_points(chart, 4))
    sigma = calculus.weighted_sigmas(geom, weight, 1)
    numeric = float(np.max(np.abs(sigma[:, 1] / n)))
    return ShrinkerPin(n=n, analytic=analytic, numeric=numeric, opposite_convention=opposite)
