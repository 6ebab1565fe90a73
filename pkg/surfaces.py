"""
Surface catalog for curvflux.

Parametric hypersurface patches with boundary in space forms, their frames
(metric, second form, shape operator, principal curvatures), weight fields and
conformal fields. Every catalog surface is a separable immersion (sums of
products of one-axis factors) so exact first and second parameter derivatives
are available; charts built without a jet fall back to central differences.

Sign convention: A X = -(D_X N)^T, so II_ab = <x_ab, N> and A = g^-1 II.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

METRIC_DET_FLOOR = 1e-12
FD_STEP_SCALE = 1e-5
FD_STEP_FLOOR = 1e-7
# second differences use an eps**(1/4)-sized step
SECOND_STEP_SCALE = 1e-4
RICHARDSON_NOISE_TOL = 1e-5
FIELD_CHECK_TOL = 1e-6
ORTHONORMAL_TOL = 1e-10


class SingularChartError(Exception):
    """Degenerate metric or Jacobian rank loss at a parameter point."""
    pass


class CatalogError(Exception):
    """Unknown catalog entry or invalid catalog parameters."""
    pass


@dataclass(frozen=True)
class AmbientSpace:
    kind: str  # "euclidean" | "sphere"
    dim: int   # dimension of the embedding space R^dim

    def __post_init__(self):
        if self.kind not in ("euclidean", "sphere"):
            raise CatalogError(f"unknown ambient kind: {self.kind}")

    @property
    def c(self) -> int:
        return 0 if self.kind == "euclidean" else 1

    @classmethod
    def euclidean(cls, m: int) -> "AmbientSpace":
        return cls("euclidean", m)

    @classmethod
    def unit_sphere(cls, m: int) -> "AmbientSpace":
        """S^m(1) embedded in R^(m+1)."""
        return cls("sphere", m + 1)


# Separable immersions

_FACTORS = {
    "one": (lambda u: np.ones_like(u), lambda u: np.zeros_like(u), lambda u: np.zeros_like(u)),
    "sin": (np.sin, np.cos, lambda u: -np.sin(u)),
    "cos": (np.cos, lambda u: -np.sin(u), lambda u: -np.cos(u)),
}


def _factor_jet(code, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(code, tuple):
        _, p = code
        value = u ** p
        d1 = p * u ** (p - 1) if p >= 1 else np.zeros_like(u)
        d2 = p * (p - 1) * u ** (p - 2) if p >= 2 else np.zeros_like(u)
        return value, d1, d2
    value, d1, d2 = _FACTORS[code]
    return value(u), d1(u), d2(u)


@dataclass(frozen=True)
class SeparableImmersion:
    """x_c(u) = sum over terms of coeff * prod_a factor_a(u_a).

    terms[c] is a tuple of (coeff, factors) with one factor code per axis:
    "one", "sin", "cos" or ("pow", p).
    """
    n: int
    terms: Tuple[Tuple[Tuple[float, tuple], ...], ...]

    @property
    def m(self) -> int:
        return len(self.terms)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return self.jet(u, order=0)[0]

    def jet(self, u: np.ndarray, order: int = 2):
        u = np.asarray(u, dtype=float)
        shape = u.shape[:-1]
        x = np.zeros(shape + (self.m,))
        d1 = np.zeros(shape + (self.n, self.m))
        d2 = np.zeros(shape + (self.n, self.n, self.m))
        for c, component in enumerate(self.terms):
            for coeff, factors in component:
                jets = [_factor_jet(code, u[..., a]) for a, code in enumerate(factors)]
                values = [j[0] for j in jets]
                x[..., c] += coeff * math.prod(values)
                if order < 1:
                    continue
                for a in range(self.n):
                    d1[..., a, c] += coeff * math.prod(
                        jets[t][1] if t == a else values[t] for t in range(self.n))
                    if order < 2:
                        continue
                    for b in range(self.n):
                        if a == b:
                            prod = math.prod(jets[t][2] if t == a else values[t] for t in range(self.n))
                        else:
                            prod = math.prod(jets[t][1] if t in (a, b) else values[t] for t in range(self.n))
                        d2[..., a, b, c] += coeff * prod
        return x, d1, d2

    def analytic_jet(self, u: np.ndarray):
        _, d1, d2 = self.jet(u)
        return d1, d2


@dataclass(frozen=True)
class BoundaryFace:
    """A face of the parameter box that maps onto the boundary; side is +1 (upper) or -1 (lower)."""
    axis: int
    side: int


@dataclass(frozen=True)
class Chart:
    name: str
    ambient: AmbientSpace
    n: int
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    immersion: Callable[[np.ndarray], np.ndarray]
    analytic_jet: Optional[Callable] = None
    boundary: Tuple[BoundaryFace, ...] = ()
    normal_sign: float = 1.0
    params: Dict[str, float] = field(default_factory=dict)
    fd_flagged: bool = False

    @property
    def box_size(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    @property
    def fd_steps(self) -> np.ndarray:
        return np.maximum(FD_STEP_SCALE * self.box_size, FD_STEP_FLOOR)

    @property
    def second_steps(self) -> np.ndarray:
        return np.maximum(SECOND_STEP_SCALE * self.box_size, FD_STEP_FLOOR)

    def without_jet(self) -> "Chart":
        return replace(self, analytic_jet=None)


@dataclass(frozen=True)
class GeometryFrame:
    """Frame data at a stack of parameter points (leading axis P)."""
    u: np.ndarray          # (P, n)
    x: np.ndarray          # (P, m)
    tangents: np.ndarray   # (P, n, m) coordinate tangents x_a
    metric: np.ndarray     # (P, n, n)
    metric_inv: np.ndarray
    second_form: np.ndarray  # (P, n, n) II_ab
    shape_coord: np.ndarray  # (P, n, n) A^a_b = g^ac II_cb
    normal: np.ndarray     # (P, m)
    frame: np.ndarray      # (P, n, m) orthonormal principal frame e_i
    curvatures: np.ndarray  # (P, n) principal curvatures, ascending
    shape_frame: np.ndarray  # (P, n, n) A in the orthonormal Cholesky frame

    @property
    def sqrt_det(self) -> np.ndarray:
        return np.sqrt(np.linalg.det(self.metric))

    def to_ambient(self, components: np.ndarray) -> np.ndarray:
        """Coordinate components V^a -> ambient vector V^a x_a."""
        return np.einsum("pa,pam->pm", components, self.tangents)

    def to_components(self, vectors: np.ndarray) -> np.ndarray:
        """Ambient vector -> coordinate components of its tangential part."""
        lowered = np.einsum("pm,pam->pa", vectors, self.tangents)
        return np.einsum("pab,pb->pa", self.metric_inv, lowered)

    def tangential(self, vectors: np.ndarray) -> np.ndarray:
        return self.to_ambient(self.to_components(vectors))


def _as_points(u) -> Tuple[np.ndarray, bool]:
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    return (u[None, :] if single else u), single


def _second_differences(chart: Chart, u: np.ndarray, steps: np.ndarray) -> np.ndarray:
    n = chart.n
    center = chart.immersion(u)
    d2 = np.zeros(u.shape[:-1] + (n, n, chart.ambient.dim))
    for a in range(n):
        ea = np.zeros(n)
        ea[a] = steps[a]
        d2[..., a, a, :] = (chart.immersion(u + ea) - 2 * center + chart.immersion(u - ea)) / steps[a] ** 2
        for b in range(a + 1, n):
            eb = np.zeros(n)
            eb[b] = steps[b]
            mixed = (chart.immersion(u + ea + eb) - chart.immersion(u + ea - eb)
                     - chart.immersion(u - ea + eb) + chart.immersion(u - ea - eb)) / (4 * steps[a] * steps[b])
            d2[..., a, b, :] = mixed
            d2[..., b, a, :] = mixed
    return d2


def _finite_difference_jet(chart: Chart, u: np.ndarray):
    n = chart.n
    h = chart.fd_steps
    d1 = np.zeros(u.shape[:-1] + (n, chart.ambient.dim))
    for a in range(n):
        ea = np.zeros(n)
        ea[a] = h[a]
        d1[..., a, :] = (chart.immersion(u + ea) - chart.immersion(u - ea)) / (2 * h[a])
    return d1, _second_differences(chart, u, chart.second_steps)


def unit_normal(tangents: np.ndarray, x: np.ndarray, ambient: AmbientSpace,
                sign: float = 1.0) -> np.ndarray:
    """Generalized cross product of the tangents (and the position, on the sphere)."""
    rows = tangents
    if ambient.kind == "sphere":
        rows = np.concatenate([tangents, x[..., None, :]], axis=-2)
    m = rows.shape[-1]
    if rows.shape[-2] != m - 1:
        raise SingularChartError("chart is not a hypersurface of its ambient space")
    normal = np.zeros(rows.shape[:-2] + (m,))
    for i in range(m):
        minor = np.delete(rows, i, axis=-1)
        normal[..., i] = (-1) ** i * np.linalg.det(minor)
    length = np.linalg.norm(normal, axis=-1, keepdims=True)
    if np.any(length <= 0):
        raise SingularChartError("tangent frame has lost rank")
    return sign * normal / length


def frame_at(chart: Chart, u, allow_edge: bool = False) -> GeometryFrame:
    """Fundamental forms, shape operator and principal frame at parameter point(s) u."""
    u, _ = _as_points(u)
    lower = np.asarray(chart.lower)
    upper = np.asarray(chart.upper)
    margin = 0.0 if (chart.analytic_jet is not None or allow_edge) else chart.second_steps
    if np.any(u < lower + margin - 1e-12) or np.any(u > upper - margin + 1e-12):
        raise SingularChartError(f"{chart.name}: parameter point outside the chart domain")
    x = chart.immersion(u)
    if chart.analytic_jet is not None:
        d1, d2 = chart.analytic_jet(u)
    else:
        d1, d2 = _finite_difference_jet(chart, u)
    metric = np.einsum("pam,pbm->pab", d1, d1)
    det = np.linalg.det(metric)
    bad = det <= METRIC_DET_FLOOR
    if np.any(bad):
        where = u[np.argmax(bad)]
        raise SingularChartError(f"{chart.name}: degenerate metric (det g = {det[bad].min():.3e}) at u={where}")
    metric_inv = np.linalg.inv(metric)
    normal = unit_normal(d1, x, chart.ambient, chart.normal_sign)
    second = np.einsum("pabm,pm->pab", d2, normal)
    second = 0.5 * (second + np.swapaxes(second, -1, -2))
    shape_coord = metric_inv @ second

    # orthonormal frame from the Cholesky factor: g = L L^T, S = L^-1 II L^-T
    chol = np.linalg.cholesky(metric)
    chol_inv = np.linalg.inv(chol)
    shape_frame = chol_inv @ second @ np.swapaxes(chol_inv, -1, -2)
    shape_frame = 0.5 * (shape_frame + np.swapaxes(shape_frame, -1, -2))
    curvatures, rotation = np.linalg.eigh(shape_frame)
    coords = np.swapaxes(chol_inv, -1, -2) @ rotation  # columns: principal directions
    frame = np.einsum("pai,pam->pim", coords, d1)
    return GeometryFrame(u=u, x=x, tangents=d1, metric=metric, metric_inv=metric_inv,
                         second_form=second, shape_coord=shape_coord, normal=normal,
                         frame=frame, curvatures=curvatures, shape_frame=shape_frame)


def frame_is_orthonormal(geom: GeometryFrame, tol: float = ORTHONORMAL_TOL) -> bool:
    gram = np.einsum("pim,pjm->pij", geom.frame, geom.frame)
    ok_frame = np.all(np.abs(gram - np.eye(gram.shape[-1])) <= tol)
    ok_normal = np.all(np.abs(np.einsum("pim,pm->pi", geom.frame, geom.normal)) <= tol)
    return bool(ok_frame and ok_normal)


def reconstruction_error(geom: GeometryFrame) -> float:
    """|| sum_i mu_i e_i e_i^T - tangential shape operator || over the stack."""
    from_pairs = np.einsum("pi,pim,pik->pmk", geom.curvatures, geom.frame, geom.frame)
    direct = np.einsum("pam,pab,pbc,pck->pmk", geom.tangents, geom.metric_inv,
                       geom.second_form @ geom.metric_inv, geom.tangents)
    return float(np.max(np.abs(from_pairs - direct)))


def conormal_from_frame(geom: GeometryFrame, face: BoundaryFace) -> np.ndarray:
    """Normalized +/- gradient of u^axis, i.e. the outward conormal on that face."""
    direction = face.side * np.einsum("pb,pbm->pm", geom.metric_inv[:, face.axis, :], geom.tangents)
    length = np.linalg.norm(direction, axis=-1, keepdims=True)
    if np.any(length < 1e-12):
        raise SingularChartError(f"ill-conditioned boundary frame on face {face}")
    return direction / length


def boundary_conormal(chart: Chart, face: BoundaryFace, u) -> np.ndarray:
    """Outward unit conormal at boundary point(s) u of a registered face."""
    if face not in chart.boundary:
        raise CatalogError(f"{chart.name}: face {face} is not a registered boundary")
    u, _ = _as_points(u)
    bound = chart.upper[face.axis] if face.side > 0 else chart.lower[face.axis]
    if np.any(np.abs(u[:, face.axis] - bound) > 1e-9 * max(1.0, abs(bound))):
        raise CatalogError(f"{chart.name}: point does not lie on face {face}")
    return conormal_from_frame(frame_at(chart, u, allow_edge=True), face)


def sample_points(chart: Chart, count: int = 3) -> np.ndarray:
    """Interior tensor grid of count**n points, away from the box faces."""
    axes = [np.linspace(lo, hi, count + 2)[1:-1] for lo, hi in zip(chart.lower, chart.upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def check_chart(chart: Chart) -> Chart:
    """Jacobian rank check at sample points, plus the second-difference Richardson flag."""
    points = sample_points(chart)
    frame_at(chart, points)
    if chart.analytic_jet is not None:
        return chart
    fine = _second_differences(chart, points, chart.second_steps)
    coarse = _second_differences(chart, points, 2.0 * chart.second_steps)
    # h^2 error terms: the extrapolated difference isolates round-off noise
    noise = float(np.max(np.abs((4.0 * fine - coarse) / 3.0 - fine)))
    if noise > RICHARDSON_NOISE_TOL:
        logger.warning("%s: second-difference noise %.2e exceeds %.0e", chart.name, noise, RICHARDSON_NOISE_TOL)
        return replace(chart, fd_flagged=True)
    return chart


# Weight fields

@dataclass(frozen=True)
class WeightField:
    tag: str  # "constant" | "gaussian" | "custom"
    f: Callable[[np.ndarray], np.ndarray]
    grad_f: Callable[[np.ndarray], np.ndarray]
    params: Dict[str, object] = field(default_factory=dict)


def constant_weight(value: float = 0.0) -> WeightField:
    return WeightField(
        tag="constant",
        f=lambda x: np.full(np.shape(x)[:-1], float(value)),
        grad_f=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        params={"value": value},
    )


def gaussian_weight() -> WeightField:
    """f(x) = |x|^2 / 2."""
    return WeightField(
        tag="gaussian",
        f=lambda x: 0.5 * np.sum(np.asarray(x, dtype=float) ** 2, axis=-1),
        grad_f=lambda x: np.asarray(x, dtype=float).copy(),
    )


def linear_weight(coefficients: Sequence[float]) -> WeightField:
    """Custom weight f(x) = <a, x>."""
    a = np.asarray(coefficients, dtype=float)
    return WeightField(
        tag="custom",
        f=lambda x: np.asarray(x, dtype=float) @ a,
        grad_f=lambda x: np.broadcast_to(a, np.shape(x)).copy(),
        params={"coefficients": list(map(float, a))},
    )


def check_weight(weight: WeightField, points: np.ndarray, h: float = 1e-5,
                 tol: float = FIELD_CHECK_TOL) -> float:
    """Max deviation of grad_f from central differences of f at the given ambient points."""
    points = np.asarray(points, dtype=float)
    m = points.shape[-1]
    numeric = np.zeros_like(points)
    for i in range(m):
        e = np.zeros(m)
        e[i] = h
        numeric[..., i] = (weight.f(points + e) - weight.f(points - e)) / (2 * h)
    error = float(np.max(np.abs(numeric - weight.grad_f(points))))
    if error > tol:
        raise CatalogError(f"weight '{weight.tag}': gradient check failed ({error:.2e})")
    return error


# Conformal fields

@dataclass(frozen=True)
class ConformalField:
    """Ambient field Y with D_V Y = phi V."""
    name: str
    Y: Callable[[np.ndarray], np.ndarray]
    phi: Callable[[np.ndarray], np.ndarray]
    closed: bool = True
    params: Dict[str, object] = field(default_factory=dict)


def homothetic_field(scale: float = 1.0, translation: Optional[Sequence[float]] = None,
                     name: str = "homothetic") -> ConformalField:
    """Y(x) = scale * x + v, closed conformal with constant phi = scale."""
    v = None if translation is None else np.asarray(translation, dtype=float)

    def Y(x):
        x = np.asarray(x, dtype=float)
        out = scale * x
        return out + v if v is not None else out

    return ConformalField(
        name=name,
        Y=Y,
        phi=lambda x: np.full(np.shape(x)[:-1], float(scale)),
        params={"scale": scale, "translation": None if v is None else list(map(float, v))},
    )


def position_field() -> ConformalField:
    return homothetic_field(1.0, name="position")


def constant_field(vector: Sequence[float]) -> ConformalField:
    return homothetic_field(0.0, vector, name="constant")


def check_conformal(field_: ConformalField, points: np.ndarray, h: float = 1e-5,
                    tol: float = FIELD_CHECK_TOL, seed: int = 0) -> float:
    """Spot-check D_V Y = phi V along random unit directions V."""
    points = np.asarray(points, dtype=float)
    rng = np.random.default_rng(seed)
    V = rng.normal(size=points.shape)
    V /= np.linalg.norm(V, axis=-1, keepdims=True)
    derivative = (field_.Y(points + h * V) - field_.Y(points - h * V)) / (2 * h)
    error = float(np.max(np.abs(derivative - field_.phi(points)[..., None] * V)))
    if error > tol:
        raise CatalogError(f"field '{field_.name}': conformal check failed ({error:.2e})")
    return error


# Analytic spectra on S^{n+1}

def hr_torus_spectrum(n: int, r: float) -> List[float]:
    """Principal curvatures of S^{n-1}(r) x S^1(sqrt(1-r^2)) in S^{n+1}."""
    if not 0.0 < r < 1.0:
        raise CatalogError(f"H(r)-torus radius r={r} must lie in (0, 1)")
    s = math.sqrt(1.0 - r * r)
    return [s / r] * (n - 1) + [-r / s]


def clifford_spectrum(n1: int, n2: int, r1: float, r2: float) -> List[float]:
    """S^{n1}(r1) x S^{n2}(r2) in the unit sphere: n1 copies of r2/r1, n2 of -r1/r2."""
    if abs(r1 * r1 + r2 * r2 - 1.0) > 1e-12 or r1 <= 0 or r2 <= 0:
        raise CatalogError(f"Clifford radii must satisfy r1^2 + r2^2 = 1, got ({r1}, {r2})")
    return [r2 / r1] * n1 + [-r1 / r2] * n2


def round_sphere_spectrum(n: int, radius: float) -> List[float]:
    """Centered sphere of the given radius in R^{n+1} with outward normal."""
    return [-1.0 / radius] * n


# Catalog charts

def _term(coeff, *factors):
    return (float(coeff), tuple(factors))


def sphere_cap(radius: float = 1.0, theta_max: float = 1.0) -> Chart:
    """Cap {theta <= theta_max} of the sphere of given radius in R^3, outward normal."""
    rho = float(radius)
    immersion = SeparableImmersion(2, (
        (_term(rho, "sin", "cos"),),
        (_term(rho, "sin", "sin"),),
        (_term(rho, "cos", "one"),),
    ))
    full = theta_max >= math.pi
    return check_chart(Chart(
        name="sphere-cap",
        ambient=AmbientSpace.euclidean(3),
        n=2,
        lower=(0.0, 0.0),
        upper=(float(theta_max), 2 * math.pi),
        immersion=immersion,
        analytic_jet=immersion.analytic_jet,
        boundary=() if full else (BoundaryFace(0, +1),),
        params={"radius": rho, "theta_max": float(theta_max)},
    ))


def _hyperspherical_factors(n: int, c: int) -> Tuple:
    """Factor codes of x_c = sin(t1)...sin(t_c) cos(t_{c+1}); the last two axes close with cos/sin(phi)."""
    if c < n - 1:
        return tuple(["sin"] * c + ["cos"] + ["one"] * (n - 1 - c))
    return tuple(["sin"] * (n - 1) + ["cos" if c == n - 1 else "sin"])


def round_sphere(n: int = 2, radius: float = 1.0) -> Chart:
    """Full round n-sphere in R^{n+1} in hyperspherical coordinates, outward normal."""
    n = int(n)
    rho = float(radius)
    immersion = SeparableImmersion(n, tuple((_term(rho, *_hyperspherical_factors(n, c)),)
                                            for c in range(n + 1)))
    chart = Chart(
        name="sphere",
        ambient=AmbientSpace.euclidean(n + 1),
        n=n,
        lower=tuple([0.0] * n),
        upper=tuple([math.pi] * (n - 1) + [2 * math.pi]),
        immersion=immersion,
        analytic_jet=immersion.analytic_jet,
        params={"n": n, "radius": rho},
    )
    probe = frame_at(chart, 0.5 * (np.asarray(chart.lower) + np.asarray(chart.upper)))
    sign = 1.0 if np.dot(probe.normal[0], probe.x[0]) > 0 else -1.0
    return check_chart(replace(chart, normal_sign=sign))


def flat_disk(radius: float = 1.0) -> Chart:
    """Disk of given radius in the plane x_3 = 0, polar parameters, normal +e_3."""
    immersion = SeparableImmersion(2, (
        (_term(1.0, ("pow", 1), "cos"),),
        (_term(1.0, ("pow", 1), "sin"),),
        (),
    ))
    return check_chart(Chart(
        name="flat-disk",
        ambient=AmbientSpace.euclidean(3),
        n=2,
        lower=(0.0, 0.0),
        upper=(float(radius), 2 * math.pi),
        immersion=immersion,
        analytic_jet=immersion.analytic_jet,
        boundary=(BoundaryFace(0, +1),),
        params={"radius": float(radius)},
    ))


def cylinder_patch(radius: float = 1.0, height: float = 1.0, angle: float = math.pi / 2) -> Chart:
    """Patch {0 <= theta <= angle, 0 <= z <= height} of the cylinder, outward normal."""
    rho = float(radius)
    immersion = SeparableImmersion(2, (
        (_term(rho, "cos", "one"),),
        (_term(rho, "sin", "one"),),
        (_term(1.0, "one", ("pow", 1)),),
    ))
    full = angle >= 2 * math.pi
    faces = [BoundaryFace(1, -1), BoundaryFace(1, +1)]
    if not full:
        faces = [BoundaryFace(0, -1), BoundaryFace(0, +1)] + faces
    # x_theta x x_z points outward for this parameter order
    return check_chart(Chart(
        name="cylinder-patch",
        ambient=AmbientSpace.euclidean(3),
        n=2,
        lower=(0.0, 0.0),
        upper=(float(angle), float(height)),
        immersion=immersion,
        analytic_jet=immersion.analytic_jet,
        boundary=tuple(faces),
        params={"radius": rho, "height": float(height), "angle": float(angle)},
    ))


def polynomial_graph(coefficients: Dict[Tuple[int, int], float], half_width: float = 0.5,
                     name: str = "graph-patch") -> Chart:
    """Graph x_3 = sum c_ij u1^i u2^j over [-w, w]^2, upward normal."""
    height = tuple(_term(c, ("pow", int(i)), ("pow", int(j))) for (i, j), c in sorted(coefficients.items()))
    immersion = SeparableImmersion(2, (
        (_term(1.0, ("pow", 1), "one"),),
        (_term(1.0, "one", ("pow", 1)),),
        height,
    ))
    w = float(half_width)
    return check_chart(Chart(
        name=name,
        ambient=AmbientSpace.euclidean(3),
        n=2,
        lower=(-w, -w),
        upper=(w, w),
        immersion=immersion,
        analytic_jet=immersion.analytic_jet,
        boundary=(BoundaryFace(0, -1), BoundaryFace(0, +1), BoundaryFace(1, -1), BoundaryFace(1, +1)),
        params={"half_width": w, "coefficients": {f"{i},{j}": c for (i, j), c in sorted(coefficients.items())}},
    ))


def saddle_graph(half_width: float = 0.5) -> Chart:
    """Graph of h(u) = u1^2 - u2^2."""
    return polynomial_graph({(2, 0): 1.0, (0, 2): -1.0}, half_width)


def hr_torus_chart(r: float = 1.0 / math.sqrt(2.0)) -> Chart:
    """H(r)-torus S^1(r) x S^1(sqrt(1-r^2)) in S^3, oriented so that mu = (s/r, -r/s)."""
    if not 0.0 < r < 1.0:
        raise CatalogError(f"H(r)-torus radius r={r} must lie in (0, 1)")
    s = math.sqrt(1.0 - r * r)
    immersion = SeparableImmersion(2, (
        (_term(r, "cos", "one"),),
        (_term(r, "sin", "one"),),
        (_term(s, "one", "cos"),),
        (_term(s, "one", "sin"),),
    ))
    chart = Chart(
        name="hr-torus",
        ambient=AmbientSpace.unit_sphere(3),
        n=2,
        lower=(0.0, 0.0),
        upper=(2 * math.pi, 2 * math.pi),
        immersion=immersion,
        analytic_jet=immersion.analytic_jet,
        params={"r": float(r)},
    )
    probe = frame_at(chart, np.array([[0.3, 0.7]]))
    # this normal gives the spectrum (s/r, -r/s)
    target = np.array([-s * math.cos(0.3), -s * math.sin(0.3), r * math.cos(0.7), r * math.sin(0.7)])
    sign = 1.0 if np.dot(probe.normal[0], target) > 0 else -1.0
    return check_chart(replace(chart, normal_sign=sign))


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    description: str
    ambient: str
    defaults: Dict[str, object]
    build_chart: Optional[Callable[..., Chart]] = None
    spectrum: Optional[Callable[..., List[float]]] = None


def _default_catalog() -> Dict[str, CatalogEntry]:
    entries = [
        CatalogEntry("sphere-cap", "spherical cap theta <= theta_max, outward normal", "R^3",
                     {"radius": 1.0, "theta_max": 1.0}, build_chart=sphere_cap),
        CatalogEntry("sphere", "full round n-sphere, outward normal", "R^{n+1}",
                     {"n": 2, "radius": 1.0}, build_chart=round_sphere,
                     spectrum=round_sphere_spectrum),
        CatalogEntry("flat-disk", "planar disk, polar parameters", "R^3",
                     {"radius": 1.0}, build_chart=flat_disk),
        CatalogEntry("cylinder-patch", "cylinder patch theta in [0, angle], z in [0, height]", "R^3",
                     {"radius": 1.0, "height": 1.0, "angle": math.pi / 2}, build_chart=cylinder_patch),
        CatalogEntry("graph-patch", "saddle graph h = u1^2 - u2^2 over [-w, w]^2", "R^3",
                     {"half_width": 0.5}, build_chart=saddle_graph),
        CatalogEntry("hr-torus", "S^{n-1}(r) x S^1(sqrt(1-r^2)); numeric chart for n = 2", "S^{n+1}",
                     {"n": 2, "r": 1.0 / math.sqrt(2.0)}, build_chart=hr_torus_chart,
                     spectrum=hr_torus_spectrum),
        CatalogEntry("clifford-torus", "S^{n1}(r1) x S^{n2}(r2), r1^2 + r2^2 = 1", "S^{n+1}",
                     {"n1": 1, "n2": 1, "r1": 1.0 / math.sqrt(2.0), "r2": 1.0 / math.sqrt(2.0)},
                     spectrum=clifford_spectrum),
    ]
    return {e.name: e for e in entries}


SURFACES: Dict[str, CatalogEntry] = _default_catalog()

WEIGHTS: Dict[str, Callable[..., WeightField]] = {
    "constant": constant_weight,
    "gaussian": gaussian_weight,
    "custom": linear_weight,
}

FIELDS: Dict[str, Callable[..., ConformalField]] = {
    "position": position_field,
    "constant": constant_field,
    "homothetic": homothetic_field,
}


def register_graph(name: str, coefficients: Dict[str, float], half_width: float = 0.5,
                   catalog: Optional[Dict[str, CatalogEntry]] = None) -> CatalogEntry:
    """Add a config-defined polynomial graph; coefficient keys are "i,j" exponent pairs."""
    catalog = SURFACES if catalog is None else catalog
    if name in catalog:
        raise CatalogError(f"surface '{name}' already exists")
    try:
        parsed = {tuple(int(p) for p in key.split(",")): float(value) for key, value in coefficients.items()}
    except (AttributeError, ValueError) as e:
        raise CatalogError(f"graph '{name}': bad coefficient keys ({e})")
    if any(len(key) != 2 or min(key) < 0 for key in parsed):
        raise CatalogError(f"graph '{name}': exponents must be non-negative pairs")

    def build(half_width: float = half_width) -> Chart:
        return polynomial_graph(parsed, half_width, name=name)

    entry = CatalogEntry(name, "config-defined polynomial graph", "R^3",
                         {"half_width": half_width}, build_chart=build)
    catalog[name] = entry
    logger.debug("registered graph surface %s", name)
    return entry


def build_surface(name: str, params: Optional[Dict[str, object]] = None,
                  catalog: Optional[Dict[str, CatalogEntry]] = None) -> Chart:
    catalog = SURFACES if catalog is None else catalog
    entry = catalog.get(name)
    if entry is None:
        raise CatalogError(f"unknown surface id: {name}")
    if entry.build_chart is None:
        raise CatalogError(f"surface '{name}' exposes an analytic spectrum only")
    kwargs = {**entry.defaults, **(params or {})}
    unknown = set(kwargs) - set(entry.defaults)
    if unknown:
        raise CatalogError(f"surface '{name}': unknown parameters {sorted(unknown)}")
    if name == "hr-torus":
        if int(kwargs.pop("n")) != 2:
            raise CatalogError("the numeric hr-torus chart exists for n = 2 only")
    return entry.build_chart(**kwargs)


def catalog_listing(catalog: Optional[Dict[str, CatalogEntry]] = None) -> Dict[str, List[Dict[str, object]]]:
    catalog = SURFACES if catalog is None else catalog
    surfaces = [{
        "name": e.name,
        "description": e.description,
        "ambient": e.ambient,
        "parameters": e.defaults,
        "chart": e.build_chart is not None,
        "analytic_spectrum": e.spectrum is not None,
    } for e in catalog.values()]
    weights = [{"name": name, "parameters": params} for name, params in
               (("constant", {"value": 0.0}), ("gaussian", {}), ("custom", {"coefficients": [0.0, 0.0, 1.0]}))]
    fields = [{"name": name, "parameters": params} for name, params in
              (("position", {}), ("constant", {"vector": [0.0, 0.0, 1.0]}),
               ("homothetic", {"scale": 1.0, "translation": None}))]
    return {"surfaces": surfaces, "weights": weights, "fields": fields}
