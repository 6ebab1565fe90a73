"""
Tangential calculus and quadrature for curvflux.

Midpoint tensor-grid integration over charts and their boundary faces,
refinement ladders with Richardson extrapolation and observed convergence
orders, Christoffel symbols from central differences of the metric, weighted
divergences, and the div_f T_k^inf audit family.

Integrands are handles taking a surfaces.GeometryFrame (a stack of points)
and returning one value (or one ambient vector) per point.
"""
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

import surfaces
import sympoly
from newton import newton_power_sum
from surfaces import Chart, GeometryFrame, WeightField

logger = logging.getLogger(__name__)

WORKERS = int(os.environ.get("CURVFLUX_WORKERS", "1"))
DEFAULT_LADDER = (32, 64, 128, 256)
CHUNK_SIZE = 8192
ROUNDOFF_FLOOR = 1e-9
ORDER_FLOOR = 1.9
RICHARDSON_POWER = 2

ScalarHandle = Callable[[GeometryFrame], np.ndarray]
VectorHandle = Callable[[GeometryFrame], np.ndarray]


class QuadratureError(Exception):
    """Singular quadrature cell, stencil outside the chart, or a malformed ladder."""
    pass


@dataclass(frozen=True)
class QuadratureSpec:
    resolutions: Tuple[int, ...] = DEFAULT_LADDER
    boundary_resolutions: Optional[Tuple[int, ...]] = None
    workers: int = WORKERS
    rule: str = "midpoint"

    def __post_init__(self):
        object.__setattr__(self, "resolutions", tuple(int(r) for r in self.resolutions))
        if self.boundary_resolutions is not None:
            object.__setattr__(self, "boundary_resolutions", tuple(int(r) for r in self.boundary_resolutions))
        if self.rule != "midpoint":
            raise QuadratureError(f"unsupported quadrature rule: {self.rule}")
        for ladder in (self.resolutions, self.boundary_levels):
            if len(ladder) < 3:
                raise QuadratureError("a refinement ladder needs at least 3 levels")
            if any(b <= a for a, b in zip(ladder, ladder[1:])) or ladder[0] < 1:
                raise QuadratureError(f"ladder must be strictly increasing and positive: {list(ladder)}")
        if len(self.boundary_levels) != len(self.resolutions):
            raise QuadratureError("boundary ladder must have as many levels as the surface ladder")

    @property
    def boundary_levels(self) -> Tuple[int, ...]:
        return self.boundary_resolutions or self.resolutions


def richardson(coarse: float, fine: float, ratio: float, power: int = RICHARDSON_POWER) -> float:
    factor = ratio ** power
    return (factor * fine - coarse) / (factor - 1.0)


@dataclass(frozen=True)
class IntegralResult:
    """One quantity evaluated on every level of a refinement ladder."""
    name: str
    levels: Tuple[int, ...]
    values: Tuple[float, ...]
    scale: float = 0.0

    def __post_init__(self):
        if len(self.levels) != len(self.values):
            raise QuadratureError(f"{self.name}: {len(self.values)} values for {len(self.levels)} levels")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.scale:
            object.__setattr__(self, "scale", max((abs(v) for v in self.values), default=0.0))

    @property
    def h(self) -> Tuple[float, ...]:
        return tuple(1.0 / n for n in self.levels)

    @property
    def finest(self) -> float:
        return self.values[-1]

    @property
    def extrapolated(self) -> float:
        return richardson(self.values[-2], self.values[-1], self.levels[-1] / self.levels[-2])

    @property
    def floor(self) -> float:
        return ROUNDOFF_FLOOR * max(self.scale, 1.0)

    @property
    def differences(self) -> List[float]:
        return [abs(b - a) for a, b in zip(self.values, self.values[1:])]

    @property
    def orders(self) -> List[Optional[float]]:
        """Per-level observed order from the two preceding level differences."""
        diffs = self.differences
        orders: List[Optional[float]] = [None] * len(self.values)
        for i in range(1, len(diffs)):
            if diffs[i - 1] > self.floor and diffs[i] > self.floor:
                ratio = self.levels[i + 1] / self.levels[i]
                orders[i + 1] = math.log(diffs[i - 1] / diffs[i]) / math.log(ratio)
        return orders

    @property
    def monotone(self) -> bool:
        usable = [d for d in self.differences if d > self.floor]
        return all(b < a for a, b in zip(usable, usable[1:]))

    @property
    def converged(self) -> bool:
        """The ladder reached the round-off floor; no order is measurable."""
        return self.differences[-1] <= self.floor

    @property
    def order(self) -> Optional[float]:
        if self.converged:
            return None
        if not self.monotone:
            logger.warning("%s: non-monotone ladder %s, differences %s; no order reported",
                           self.name, list(self.levels), ["%.3e" % d for d in self.differences])
            return None
        return self.orders[-1]

    @property
    def error_estimates(self) -> List[float]:
        target = self.extrapolated
        return [abs(v - target) for v in self.values]

    def order_ok(self, floor: float = ORDER_FLOOR) -> bool:
        if self.converged:
            return True
        return self.order is not None and self.order >= floor

    def ladder_rows(self) -> List[Dict[str, object]]:
        orders = self.orders
        errors = self.error_estimates
        return [{"level": n, "h": h, "value": v, "error_estimate": e, "order": o}
                for n, h, v, e, o in zip(self.levels, self.h, self.values, errors, orders)]

    def renamed(self, name: str) -> "IntegralResult":
        return IntegralResult(name, self.levels, self.values, self.scale)

    def _combine(self, other, op, name) -> "IntegralResult":
        if isinstance(other, IntegralResult):
            if len(other.levels) != len(self.levels):
                raise QuadratureError(f"ladder mismatch: {self.levels} vs {other.levels}")
            values = tuple(op(a, b) for a, b in zip(self.values, other.values))
            scale = max(self.scale, other.scale)
        else:
            values = tuple(op(a, float(other)) for a in self.values)
            scale = self.scale
        return IntegralResult(name, self.levels, values, scale)

    def __add__(self, other) -> "IntegralResult":
        return self._combine(other, lambda a, b: a + b, self.name)

    def __sub__(self, other) -> "IntegralResult":
        return self._combine(other, lambda a, b: a - b, self.name)

    def __mul__(self, factor: float) -> "IntegralResult":
        return IntegralResult(self.name, self.levels, tuple(v * factor for v in self.values),
                              self.scale * abs(factor))

    __rmul__ = __mul__

    def __neg__(self) -> "IntegralResult":
        return self * -1.0

    @classmethod
    def zeros(cls, name: str, levels: Sequence[int]) -> "IntegralResult":
        return cls(name, tuple(levels), tuple(0.0 for _ in levels))


def total(parts: Sequence[IntegralResult], name: str) -> IntegralResult:
    result = parts[0]
    for part in parts[1:]:
        result = result + part
    return result.renamed(name)


# Grids and deterministic reduction

def midpoint_grid(lower: Sequence[float], upper: Sequence[float], count: int) -> Tuple[np.ndarray, float]:
    """Cell centers of a count**d tensor grid and the common cell volume."""
    widths = [(hi - lo) / count for lo, hi in zip(lower, upper)]
    axes = [lo + (np.arange(count) + 0.5) * w for lo, w in zip(lower, widths)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1), float(np.prod(widths))


def _chunks(points: np.ndarray) -> List[np.ndarray]:
    return [points[i:i + CHUNK_SIZE] for i in range(0, len(points), CHUNK_SIZE)]


def _evaluate(chunks: List[np.ndarray], job: Callable[[np.ndarray], Dict[str, np.ndarray]],
              workers: int) -> List[Dict[str, np.ndarray]]:
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(job, chunks))
    return [job(c) for c in chunks]


def _reduce(parts: List[Dict[str, np.ndarray]], names: Sequence[str]) -> Dict[str, float]:
    # fsum is exactly rounded, so the sum does not depend on how cells were chunked
    return {name: math.fsum(np.concatenate([p[name] for p in parts]).tolist()) for name in names}


def _frame(chart: Chart, u: np.ndarray, allow_edge: bool = False) -> GeometryFrame:
    try:
        return surfaces.frame_at(chart, u, allow_edge=allow_edge)
    except surfaces.SingularChartError as e:
        raise QuadratureError(str(e)) from e


def surface_integrals(chart: Chart, integrands: Dict[str, ScalarHandle], weight: WeightField,
                      spec: QuadratureSpec) -> Dict[str, IntegralResult]:
    """Integrate several scalar handles against dv_f on one shared ladder of grids."""
    names = list(integrands)
    ladders: Dict[str, List[float]] = {name: [] for name in names}
    for count in spec.resolutions:
        points, cell = midpoint_grid(chart.lower, chart.upper, count)

        def job(u: np.ndarray) -> Dict[str, np.ndarray]:
            geom = _frame(chart, u)
            measure = np.exp(-weight.f(geom.x)) * geom.sqrt_det * cell
            return {name: np.asarray(fn(geom), dtype=float) * measure for name, fn in integrands.items()}

        sums = _reduce(_evaluate(_chunks(points), job, spec.workers), names)
        for name in names:
            ladders[name].append(sums[name])
        logger.debug("%s: level %d done (%d cells)", chart.name, count, len(points))
    return {name: IntegralResult(name, spec.resolutions, tuple(ladders[name])) for name in names}


def surface_integral(chart: Chart, integrand: ScalarHandle, weight: WeightField,
                     spec: QuadratureSpec, name: str = "integral") -> IntegralResult:
    """sum over cells of integrand * e^-f * sqrt(det g) * cell volume, per level."""
    return surface_integrals(chart, {name: integrand}, weight, spec)[name]


def face_grid(chart: Chart, face: surfaces.BoundaryFace, count: int) -> Tuple[np.ndarray, float, List[int]]:
    others = [a for a in range(chart.n) if a != face.axis]
    inner, cell = midpoint_grid([chart.lower[a] for a in others], [chart.upper[a] for a in others], count)
    points = np.empty((len(inner), chart.n))
    points[:, others] = inner
    points[:, face.axis] = chart.upper[face.axis] if face.side > 0 else chart.lower[face.axis]
    return points, cell, others


def boundary_integrals(chart: Chart, fields: Dict[str, VectorHandle], weight: WeightField,
                       spec: QuadratureSpec) -> Dict[str, IntegralResult]:
    """Integrate <field, nu> e^-f ds over every registered boundary face."""
    names = list(fields)
    ladders: Dict[str, List[float]] = {name: [] for name in names}
    for count in spec.boundary_levels:
        parts: List[Dict[str, np.ndarray]] = []
        for face in chart.boundary:
            points, cell, others = face_grid(chart, face, count)

            def job(u: np.ndarray, face=face, cell=cell, others=others) -> Dict[str, np.ndarray]:
                geom = _frame(chart, u, allow_edge=True)
                try:
                    nu = surfaces.conormal_from_frame(geom, face)
                except surfaces.SingularChartError as e:
                    raise QuadratureError(f"{chart.name}: {e}") from e
                restricted = geom.metric[:, others][:, :, others]
                ds = np.sqrt(np.linalg.det(restricted)) * cell
                measure = np.exp(-weight.f(geom.x)) * ds
                return {name: np.einsum("pm,pm->p", fn(geom), nu) * measure for name, fn in fields.items()}

            parts.extend(_evaluate(_chunks(points), job, spec.workers))
        if parts:
            sums = _reduce(parts, names)
        else:
            sums = {name: 0.0 for name in names}
        for name in names:
            ladders[name].append(sums[name])
    return {name: IntegralResult(name, spec.boundary_levels, tuple(ladders[name])) for name in names}


def boundary_integral(chart: Chart, field: VectorHandle, weight: WeightField,
                      spec: QuadratureSpec, name: str = "boundary") -> IntegralResult:
    return boundary_integrals(chart, {name: field}, weight, spec)[name]


# Differential operators on charts

@dataclass(frozen=True)
class Stencil:
    """Centre frame plus the frames at u +/- h e_a, shared by every derivative at u."""
    center: GeometryFrame
    plus: Tuple[GeometryFrame, ...]
    minus: Tuple[GeometryFrame, ...]
    steps: np.ndarray

    def derivative(self, fn: Callable[[GeometryFrame], np.ndarray]) -> np.ndarray:
        """Central differences d fn / du^a; axis 1 of the result indexes a."""
        return np.stack([(fn(p) - fn(m)) / (2.0 * h) for p, m, h in zip(self.plus, self.minus, self.steps)],
                        axis=1)


def stencil_at(chart: Chart, u, center: Optional[GeometryFrame] = None) -> Stencil:
    """Evaluate the 2n neighbour frames once; pass center to reuse a frame already built at u."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    h = np.asarray(chart.fd_steps, dtype=float)
    lower = np.asarray(chart.lower)
    upper = np.asarray(chart.upper)
    if np.any(u - h < lower - 1e-12) or np.any(u + h > upper + 1e-12):
        raise QuadratureError(f"{chart.name}: finite-difference stencil leaves the chart domain")
    if center is None:
        center = _frame(chart, u, allow_edge=True)
    plus, minus = [], []
    for a in range(chart.n):
        step = np.zeros(chart.n)
        step[a] = h[a]
        plus.append(_frame(chart, u + step, allow_edge=True))
        minus.append(_frame(chart, u - step, allow_edge=True))
    return Stencil(center, tuple(plus), tuple(minus), h)


def _stencil(chart: Chart, u, stencil: Optional[Stencil]) -> Stencil:
    return stencil if stencil is not None else stencil_at(chart, u)


def christoffel(chart: Chart, u, stencil: Optional[Stencil] = None) -> np.ndarray:
    """Gamma[p, a, b, c] = 1/2 g^ad (d_b g_dc + d_c g_db - d_d g_bc), metric derivatives by central differences."""
    st = _stencil(chart, u, stencil)
    dg = st.derivative(lambda g: g.metric)
    lowered = 0.5 * (np.einsum("pbdc->pdbc", dg) + np.einsum("pcdb->pdbc", dg) - dg)
    return np.einsum("pad,pdbc->pabc", st.center.metric_inv, lowered)


def tangential_gradient(chart: Chart, scalar: ScalarHandle, u, stencil: Optional[Stencil] = None) -> np.ndarray:
    """Ambient representation of grad_M s = g^ab (d_b s) x_a."""
    st = _stencil(chart, u, stencil)
    geom = st.center
    return geom.to_ambient(np.einsum("pab,pb->pa", geom.metric_inv, st.derivative(scalar)))


def covariant_divergence(chart: Chart, field: VectorHandle, u, stencil: Optional[Stencil] = None) -> np.ndarray:
    """div X = d_a X^a + Gamma^a_ab X^b for the tangential part of an ambient field."""
    st = _stencil(chart, u, stencil)
    components = st.center.to_components(field(st.center))
    dX = st.derivative(lambda g: g.to_components(field(g)))
    gamma = christoffel(chart, u, st)
    return np.einsum("paa->p", dX) + np.einsum("paab,pb->p", gamma, components)


def weighted_divergence(chart: Chart, field: VectorHandle, weight: WeightField, u,
                        stencil: Optional[Stencil] = None) -> np.ndarray:
    """div_f X = e^f div(e^-f X)."""
    st = _stencil(chart, u, stencil)

    def damped(g: GeometryFrame) -> np.ndarray:
        return np.exp(-weight.f(g.x))[:, None] * field(g)

    return np.exp(weight.f(st.center.x)) * covariant_divergence(chart, damped, u, st)


def _covariant_operator_derivative(chart: Chart, operator: Callable[[GeometryFrame], np.ndarray], u,
                                   stencil: Optional[Stencil] = None) -> np.ndarray:
    """(nabla_c T)^a_d stacked as [p, c, a, d] for a (1,1) tensor in coordinates."""
    st = _stencil(chart, u, stencil)
    T = operator(st.center)
    dT = st.derivative(operator)
    gamma = christoffel(chart, u, st)
    return dT + np.einsum("pace,ped->pcad", gamma, T) - np.einsum("pecd,pae->pcad", gamma, T)


def operator_divergence(chart: Chart, operator: Callable[[GeometryFrame], np.ndarray], u,
                        stencil: Optional[Stencil] = None) -> np.ndarray:
    """Coordinate components of div T = g^cd (nabla_c T)^a_d."""
    st = _stencil(chart, u, stencil)
    return np.einsum("pcd,pcad->pa", st.center.metric_inv, _covariant_operator_derivative(chart, operator, u, st))


# Weighted Newton fields along a chart

def support_weight(geom: GeometryFrame, weight: WeightField) -> np.ndarray:
    """mu_1 = <grad f, N>, the weight eigenvalue used by every sigma^inf on the chart."""
    return np.einsum("pm,pm->p", weight.grad_f(geom.x), geom.normal)


def weighted_sigmas(geom: GeometryFrame, weight: WeightField, k_max: int) -> np.ndarray:
    return sympoly.sigma_inf_array(support_weight(geom, weight), geom.curvatures, k_max)


def newton_coordinates(geom: GeometryFrame, weight: WeightField, k: int) -> np.ndarray:
    """T_k^inf(mu_1, A) as a coordinate (1,1) tensor, A^a_b = g^ac II_cb."""
    if k < 0:
        return np.zeros_like(geom.shape_coord)
    return newton_power_sum(weighted_sigmas(geom, weight, k), geom.shape_coord, k)


def apply_coordinates(geom: GeometryFrame, operator: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Apply a coordinate (1,1) tensor to ambient tangent vectors."""
    return geom.to_ambient(np.einsum("pab,pb->pa", operator, geom.to_components(vectors)))


def zero_curvature_term(geom: GeometryFrame, previous: np.ndarray) -> np.ndarray:
    """sum_i (Rbar(N, T_{k-1}(e_i)) e_i)^T, which vanishes in a space form."""
    return np.zeros_like(geom.x)


def _check_order(chart: Chart, k: int):
    if not 0 <= k <= chart.n:
        raise sympoly.DomainError(f"k={k} outside 0..{chart.n}")


def div_f_newton_numeric(chart: Chart, weight: WeightField, k: int, u,
                         stencil: Optional[Stencil] = None) -> np.ndarray:
    """e^f div(e^-f T_k^inf) by covariant differences of the coordinate tensor field."""
    _check_order(chart, k)

    def damped(g: GeometryFrame) -> np.ndarray:
        return np.exp(-weight.f(g.x))[:, None, None] * newton_coordinates(g, weight, k)

    st = _stencil(chart, u, stencil)
    geom = st.center
    components = np.exp(weight.f(geom.x))[:, None] * operator_divergence(chart, damped, u, st)
    return geom.to_ambient(components)


def _gradients(chart: Chart, weight: WeightField, st: Stencil) -> Tuple[GeometryFrame, np.ndarray, np.ndarray]:
    geom = st.center
    grad_f = geom.tangential(weight.grad_f(geom.x))
    grad_mu = tangential_gradient(chart, lambda g: support_weight(g, weight), geom.u, st)
    return geom, grad_f, grad_mu


def div_f_newton_lemma(chart: Chart, weight: WeightField, k: int, u, printed: bool = False,
                       curvature_term: Callable = zero_curvature_term,
                       stencil: Optional[Stencil] = None) -> np.ndarray:
    """Recursion D_0 = -grad f, D_k = -sigma_k grad f + sigma_{k-1} grad mu_1 - A D_{k-1}.

    With printed=True the gradient of f enters with a plus sign in both places.
    """
    _check_order(chart, k)
    geom, grad_f, grad_mu = _gradients(chart, weight, _stencil(chart, u, stencil))
    sign = 1.0 if printed else -1.0
    sigma = weighted_sigmas(geom, weight, k)
    current = sign * grad_f
    for j in range(1, k + 1):
        previous_T = newton_coordinates(geom, weight, j - 1)
        current = (sign * sigma[:, j, None] * grad_f + sigma[:, j - 1, None] * grad_mu
                   - apply_coordinates(geom, geom.shape_coord, current)
                   + curvature_term(geom, previous_T))
    return current


def div_f_newton_closed_forms(chart: Chart, weight: WeightField, k: int, u,
                              stencil: Optional[Stencil] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(a) T_k grad f + sigma_{k-1} grad mu_1, (b) T_k grad f + T_{k-1} grad mu_1,
    (c) -T_k grad f + T_{k-1} grad mu_1."""
    if not 1 <= k <= chart.n:
        raise sympoly.DomainError(f"closed forms need 1 <= k <= {chart.n}, got {k}")
    geom, grad_f, grad_mu = _gradients(chart, weight, _stencil(chart, u, stencil))
    sigma = weighted_sigmas(geom, weight, k)
    T_k = apply_coordinates(geom, newton_coordinates(geom, weight, k), grad_f)
    T_prev = apply_coordinates(geom, newton_coordinates(geom, weight, k - 1), grad_mu)
    printed = T_k + sigma[:, k - 1, None] * grad_mu
    unrolled = T_k + T_prev
    consistent = -T_k + T_prev
    return printed, unrolled, consistent


def trace_nabla_A_residual(chart: Chart, weight: WeightField, k: int, u, direction,
                           stencil: Optional[Stencil] = None) -> np.ndarray:
    """tr(T_{k-1}^inf nabla_v A) - <grad sigma_k^inf - sigma_{k-1}^inf grad mu_1, v>.

    direction is a principal-frame index or an ambient tangent vector per point.
    """
    if not 1 <= k <= chart.n:
        raise sympoly.DomainError(f"k={k} outside 1..{chart.n}")
    st = _stencil(chart, u, stencil)
    geom, _, grad_mu = _gradients(chart, weight, st)
    if isinstance(direction, (int, np.integer)):
        v = geom.frame[:, int(direction), :]
    else:
        v = geom.tangential(np.broadcast_to(np.asarray(direction, dtype=float), geom.x.shape))
    v_coords = geom.to_components(v)
    nabla_A = np.einsum("pc,pcad->pad", v_coords,
                        _covariant_operator_derivative(chart, lambda g: g.shape_coord, u, st))
    T_prev = newton_coordinates(geom, weight, k - 1)
    lhs = np.einsum("pab,pba->p", T_prev, nabla_A)
    grad_sigma = tangential_gradient(chart, lambda g: weighted_sigmas(g, weight, k)[:, k], u, st)
    sigma = weighted_sigmas(geom, weight, k)
    rhs = np.einsum("pm,pm->p", grad_sigma - sigma[:, k - 1, None] * grad_mu, v)
    return lhs - rhs


def divergence_theorem_residual(chart: Chart, field: VectorHandle, weight: WeightField,
                                spec: QuadratureSpec) -> Dict[str, IntegralResult]:
    """Interior int div_f X dv_f, boundary int <X, nu> ds_f, and their difference."""
    def tangent(g: GeometryFrame) -> np.ndarray:
        return g.tangential(field(g))

    def divergence(g: GeometryFrame) -> np.ndarray:
        return weighted_divergence(chart, tangent, weight, g.u, stencil_at(chart, g.u, center=g))

    interior = surface_integral(chart, divergence, weight, spec, name="interior")
    boundary = boundary_integral(chart, tangent, weight, spec, name="boundary")
    residual = (interior - boundary).renamed("residual")
    return {"interior": interior, "boundary": boundary, "residual": residual}


def probe_grid(chart: Chart, count: int = 5) -> np.ndarray:
    return surfaces.sample_points(chart, count)
