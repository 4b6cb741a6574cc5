"""
Sommerfeld-integral quadrature for the canonical layered-media kernel.

The real lam axis is split at the kernel breakpoints. Everything inside the
largest breakpoint K is the propagating part and is integrated with
Gauss-Legendre in an angle variable that removes the square-root endpoint
behaviour. The two tails |lam| > K form the evanescent part. They are
parametrized by t = w(lam, K) and are integrated either on the real t
half-line or on one of two deformed contours:

    contour 1: t on [0, c] (segment IV), then a ray leaving t = c, straight
               along the real axis for vertical separations and parallel to
               the imaginary axis for horizontal ones (segment III)
    contour 2: from t = 0 to the hyperbola through the steepest-descent point
               of e^{-t h + i lam X} (segment IV), then along it (segment III)

Every piece of every path is a `Segment`, a map from a real parameter to
spectral points plus dlam/dparam. The batch evaluator, the quadrature studies
and the adaptive reference all integrate the same segments.
"""
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from .errors import DomainError, GeometryError, NumericalError
from .greens import KernelSpec, Separation, SpectralPoints, make_free_space
from .quadrature import (MAX_LAGUERRE_NODES, MAX_LEGENDRE_NODES, composite_legendre,
                         gauss_laguerre)
from .special_functions import tail_radical, w_sqrt

logger = logging.getLogger(__name__)

Point2 = Tuple[float, float]

DEFAULT_TOL = 1e-10
DEFAULT_N_EVAN = 40
DEFAULT_N_SEGMENT = 24
MIN_N_PROP = 20
BATCH_CHUNK = 2048
# accuracy is measured against max(|I|, MASS_FLOOR * sum of |piece|)
MASS_FLOOR = 1e-3
GRADING_RATIO = 4.0

# log of an extra integrand factor: called with the spectral points, returns
# an array of shape channels + points.shape
LogFactor = Callable[[SpectralPoints], np.ndarray]
# (error, value, mass, tol) -> bool per pair
Criterion = Callable[[np.ndarray, np.ndarray, np.ndarray, float], np.ndarray]


class Direction(Enum):
    """Dominant direction of the (modified) separation vector."""
    NORTH = "north"
    SOUTH = "south"
    EAST = "east"
    WEST = "west"

    @property
    def vertical(self) -> bool:
        return self in (Direction.NORTH, Direction.SOUTH)


class Variant(Enum):
    """Treatment of the evanescent tails."""
    ORIGINAL = "original"  # real t half-line, Laguerre with rate h
    CONTOUR1 = "contour1"
    CONTOUR2 = "contour2"


class Parts(Enum):
    ALL = "all"
    PROPAGATING = "propagating"
    EVANESCENT = "evanescent"


@dataclass(frozen=True)
class ContourPlan:
    """
    Quadrature plan for a group of pairs.

    shift_c is the length of segment IV; None selects `default_shift` per pair.
    graded splits segment IV of contour 1 into geometric panels toward t = 0.
    """
    direction: Direction = Direction.NORTH
    variant: Variant = Variant.CONTOUR1
    shift_c: Optional[float] = None
    n_prop: int = MIN_N_PROP
    n_evan: int = DEFAULT_N_EVAN
    n_segment: int = DEFAULT_N_SEGMENT
    graded: bool = True

    def __post_init__(self):
        if self.shift_c is not None and not self.shift_c > 0:
            raise DomainError("contour shift c must be positive", "shift_c", self.shift_c)
        for name in ("n_prop", "n_evan", "n_segment"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be at least 1", name, getattr(self, name))

    def can_double(self) -> bool:
        return (2 * self.n_evan <= MAX_LAGUERRE_NODES
                and 2 * max(self.n_prop, self.n_segment) <= MAX_LEGENDRE_NODES)

    def doubled(self) -> 'ContourPlan':
        return replace(self, n_prop=2 * self.n_prop, n_evan=2 * self.n_evan,
                       n_segment=2 * self.n_segment)


@dataclass(frozen=True)
class EvalRequest:
    """One kernel evaluation g(target, source) to relative tolerance tol."""
    spec: KernelSpec
    target: Point2
    source: Point2
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if not self.tol > 0:
            raise DomainError("tolerance must be positive", "tol", self.tol)

    def separation(self) -> Separation:
        sep = self.spec.separation(self.target, self.source)
        return Separation(np.atleast_1d(np.asarray(sep.dx, dtype=float)),
                          np.atleast_1d(np.asarray(sep.a, dtype=float)),
                          np.atleast_1d(np.asarray(sep.b, dtype=float)))


@dataclass(frozen=True)
class PairGeometry:
    """Per-pair quantities stored as (m, 1) columns so they broadcast over nodes."""
    dx: np.ndarray
    a: np.ndarray
    b: np.ndarray
    shift: np.ndarray

    @classmethod
    def build(cls, spec: KernelSpec, sep: Separation,
              shift_c: Optional[float] = None) -> 'PairGeometry':
        dx, a, b = (np.asarray(v, dtype=float).reshape(-1, 1)
                    for v in np.broadcast_arrays(sep.dx, sep.a, sep.b))
        rho = np.hypot(dx, a + b)
        shift = default_shift(spec, rho) if shift_c is None else np.full_like(rho, shift_c)
        return cls(dx, a, b, shift)

    @property
    def h(self) -> np.ndarray:
        return self.a + self.b

    @property
    def rho(self) -> np.ndarray:
        return np.hypot(self.dx, self.h)


@dataclass(frozen=True, eq=False)
class Segment:
    """
    One piece of an integration path.

    `path(p)` maps parameter values p on [lower, upper] to spectral points and
    dlam/dp. Half-lines (upper = inf) carry the decay `rate` of the integrand
    in p; they are integrated with Gauss-Laguerre and their nodes carry the
    compensating factor e^{rate (p - lower)}. `nodes` names the ContourPlan
    field that sets the rule size.
    """
    name: str
    path: Callable[[np.ndarray], Tuple[SpectralPoints, np.ndarray]]
    lower: Union[float, np.ndarray]
    upper: Union[float, np.ndarray]
    nodes: str
    rate: Optional[np.ndarray] = None
    evanescent: bool = False
    grading: Optional[float] = None  # distance of the nearest singularity from p = lower

    @property
    def half_line(self) -> bool:
        return self.rate is not None


def default_shift(spec: KernelSpec, rho) -> np.ndarray:
    """Segment IV length c = max(k, k0, 2/rho), K where rho is zero."""
    rho = np.asarray(rho, dtype=float)
    k_max = max(spec.k_target, spec.k_source)
    with np.errstate(divide="ignore"):
        return np.where(rho > 0, np.maximum(k_max, 2.0 / rho), k_max)


def choose_direction(dx: float, h: float) -> Direction:
    """
    North/south when the vertical separation dominates, otherwise east/west by sign of dx.

    Raises:
        GeometryError: For a zero displacement
    """
    if dx == 0 and h == 0:
        raise GeometryError("no contour direction for a zero displacement")
    if h >= abs(dx):
        return Direction.NORTH
    if -h >= abs(dx):
        return Direction.SOUTH
    return Direction.EAST if dx > 0 else Direction.WEST


def default_plan(spec: KernelSpec, sep: Separation, direction: Direction,
                 variant: Variant = Variant.CONTOUR1,
                 shift_c: Optional[float] = None) -> ContourPlan:
    """Starting rule sizes for a group; n_prop grows with the number of oscillations K rho."""
    K = spec.breakpoints[-1]
    rho = float(np.max(sep.rho)) if len(sep) else 0.0
    n_prop = min(max(MIN_N_PROP, math.ceil(1.2 * K * rho) + 15), MAX_LEGENDRE_NODES)
    return ContourPlan(direction, variant, shift_c, n_prop=n_prop)


# ---------------------------------------------------------------------------
# Path segments
# ---------------------------------------------------------------------------

def _central_path(first: float):
    def path(theta):
        lam = first * np.cos(theta)

        def radical(k):
            if k == first:
                return -1j * first * np.sin(theta)
            return np.asarray(w_sqrt(lam, k), dtype=complex)

        return SpectralPoints(lam, radical), first * np.sin(theta)
    return path


def _band_path(lower: float, upper: float, side: int):
    half = 0.5 * (upper - lower)
    mid = 0.5 * (upper + lower)

    def path(theta):
        magnitude = mid - half * np.cos(theta)

        def radical(k):
            # exact forms at the two ends: |lam| - lower = 2 half sin^2(theta/2)
            if k == lower:
                return np.sqrt(2 * half) * np.sin(theta / 2) * np.sqrt(magnitude + lower) + 0j
            if k == upper:
                return -1j * np.sqrt(2 * half) * np.cos(theta / 2) * np.sqrt(upper + magnitude)
            return np.asarray(w_sqrt(magnitude, k), dtype=complex)

        return SpectralPoints(side * magnitude, radical), half * np.sin(theta)
    return path


def real_axis_segments(spec: KernelSpec) -> List[Segment]:
    """The propagating part: [-b1, b1] plus both mirror images of every band between breakpoints."""
    breaks = spec.breakpoints
    segments = [Segment("central", _central_path(breaks[0]), 0.0, np.pi, "n_prop")]
    for lower, upper in zip(breaks[:-1], breaks[1:]):
        for side, tag in ((1, "+"), (-1, "-")):
            segments.append(Segment(f"band[{lower:g},{upper:g}]{tag}",
                                    _band_path(lower, upper, side), 0.0, np.pi, "n_prop"))
    return segments


def _tail_points(t, mu, K: float, tail_sign: int) -> SpectralPoints:
    return SpectralPoints(tail_sign * mu, lambda k: tail_radical(t, K, k))


def _real_tail(K: float, tail_sign: int):
    def path(t):
        mu = np.sqrt(t * t + K * K)
        return _tail_points(t, mu, K, tail_sign), t / mu
    return path


def _vertical_ray(K: float, tail_sign: int, c, s):
    def path(tau):
        t = c + 1j * s * tau
        mu = np.sqrt(t * t + K * K)
        return _tail_points(t, mu, K, tail_sign), 1j * s * t / mu
    return path


def _hyperbola_point(K: float, tail_sign: int, u, theta, s):
    root = np.sqrt(1.0 + u * u + 0j)
    t = K * (1j * s * np.cos(theta) * root + u * np.sin(theta))
    mu = K * (1j * s * u * np.cos(theta) + root * np.sin(theta))
    return _tail_points(t, mu, K, tail_sign), t / root


def _hyperbola_entry(K: float, tail_sign: int, c, theta, s):
    # straight line in u from the image of t = 0 (u = -i s cos theta) to u = c
    start = -1j * s * np.cos(theta)
    slope = c - start

    def path(xi):
        pts, dlam_du = _hyperbola_point(K, tail_sign, start + slope * xi, theta, s)
        return pts, dlam_du * slope
    return path


def _hyperbola(K: float, tail_sign: int, theta, s):
    def path(u):
        return _hyperbola_point(K, tail_sign, u, theta, s)
    return path


def tail_singularity_distance(spec: KernelSpec) -> float:
    """Distance from t = 0 to the nearest singularity of the tail integrand in t."""
    K = spec.breakpoints[-1]
    candidates = [K]
    candidates += [math.sqrt((K - k) * (K + k)) for k in spec.breakpoints if k < K]
    candidates += [abs(p) for p in spec.sigma.tail_poles if p != 0]
    return min(candidates)


def _ray_sign(tail_sign: int, dx: np.ndarray) -> np.ndarray:
    return np.where(tail_sign * dx < 0, -1.0, 1.0)


def tail_segments(spec: KernelSpec, geometry: PairGeometry, plan: ContourPlan,
                  tail_sign: int) -> List[Segment]:
    """
    Segments of one evanescent tail (tail_sign=+1 for lam > K, -1 for lam < -K).

    Raises:
        NumericalError: If the chosen variant needs h > 0 (or dx != 0) and a pair violates it
    """
    K = spec.breakpoints[-1]
    tag = "+" if tail_sign > 0 else "-"
    h = geometry.h
    needs_height = plan.variant is not Variant.CONTOUR1 or plan.direction.vertical
    if needs_height and np.any(h <= 0):
        raise NumericalError(f"{plan.variant.value} tail needs a positive vertical separation",
                             detail={"h": float(np.min(h))})
    if plan.variant is Variant.ORIGINAL:
        return [Segment(f"tail{tag}", _real_tail(K, tail_sign), 0.0, np.inf, "n_evan",
                        rate=h, evanescent=True)]

    c = geometry.shift
    if plan.variant is Variant.CONTOUR1:
        near = Segment(f"segment_iv{tag}", _real_tail(K, tail_sign), 0.0, c, "n_segment",
                       evanescent=True,
                       grading=tail_singularity_distance(spec) if plan.graded else None)
        if plan.direction.vertical:
            far = Segment(f"segment_iii{tag}", _real_tail(K, tail_sign), c, np.inf, "n_evan",
                          rate=h, evanescent=True)
        else:
            if np.any(geometry.dx == 0):
                raise NumericalError("horizontal tail ray needs a nonzero x-separation")
            s = _ray_sign(tail_sign, geometry.dx)
            far = Segment(f"segment_iii{tag}", _vertical_ray(K, tail_sign, c, s), 0.0, np.inf,
                          "n_evan", rate=np.abs(geometry.dx), evanescent=True)
        return [near, far]

    theta = np.arctan2(h, np.abs(geometry.dx))
    s = _ray_sign(tail_sign, geometry.dx)
    return [
        Segment(f"segment_iv{tag}", _hyperbola_entry(K, tail_sign, c, theta, s), 0.0, 1.0,
                "n_segment", evanescent=True),
        Segment(f"segment_iii{tag}", _hyperbola(K, tail_sign, theta, s), c, np.inf, "n_evan",
                rate=K * geometry.rho, evanescent=True),
    ]


def _check_real_poles(spec: KernelSpec):
    if spec.sigma.real_poles:
        raise NumericalError(
            f"{spec.name} has real poles at lambda={spec.sigma.real_poles} on the "
            "propagating band; only the evanescent tails can be evaluated",
            detail={"poles": spec.sigma.real_poles})


def path_segments(spec: KernelSpec, geometry: PairGeometry, plan: ContourPlan,
                  parts: Parts = Parts.ALL) -> List[Segment]:
    segments: List[Segment] = []
    if parts is not Parts.EVANESCENT:
        _check_real_poles(spec)
        segments += real_axis_segments(spec)
    if parts is not Parts.PROPAGATING:
        for tail_sign in (1, -1):
            segments += tail_segments(spec, geometry, plan, tail_sign)
    return segments


# ---------------------------------------------------------------------------
# Quadrature on segments
# ---------------------------------------------------------------------------

def _graded_breaks(length: float, singularity: Optional[float]) -> np.ndarray:
    if singularity is None or not singularity > 0 or length <= singularity:
        return np.array([0.0, 1.0])
    levels = math.ceil(math.log(length / singularity) / math.log(GRADING_RATIO))
    return np.concatenate([[0.0], GRADING_RATIO ** -np.arange(levels, -1, -1.0)])


def segment_nodes(segment: Segment, n: int):
    """
    Parameter nodes, weights and log-domain node shifts of an n-point rule on a segment.

    Returns:
        (param, weights, log_shift), broadcastable to (m, n)
    """
    if segment.half_line:
        rule = gauss_laguerre(n)
        param = segment.lower + rule.nodes / segment.rate
        # weights enter in log form: the tiny ones meet the large e^{node} compensation
        return param, 1.0 / segment.rate, rule.nodes + rule.log_weights
    length = np.asarray(segment.upper - segment.lower, dtype=float)
    rule = composite_legendre(_graded_breaks(float(np.max(length)), segment.grading), n)
    length = length.reshape(-1, 1) if length.ndim else length
    return segment.lower + length * rule.nodes, length * rule.weights, 0.0


def _log_kernel(spec: KernelSpec, geometry: PairGeometry, pts: SpectralPoints) -> np.ndarray:
    return (-pts.w(spec.k_target) * geometry.a - pts.w(spec.k_source) * geometry.b
            + 1j * pts.lam * geometry.dx)


def _with_factor(log_value: np.ndarray, pts: SpectralPoints,
                 factor: Optional[LogFactor]) -> np.ndarray:
    if factor is None:
        return log_value
    extra = factor(pts)
    if np.ndim(pts.lam) < np.ndim(log_value):
        # real-axis nodes are shared by all pairs: keep the pair axis before the node axis
        extra = np.expand_dims(extra, -2)
    return log_value + extra


def _accumulate(spec: KernelSpec, geometry: PairGeometry, pts: SpectralPoints,
                weights, log_shift, factor: Optional[LogFactor]) -> np.ndarray:
    log_value = _with_factor(_log_kernel(spec, geometry, pts) + log_shift, pts, factor)
    amplitude = weights * spec.sigma.evaluate(pts) / (4.0 * np.pi * pts.w(spec.k_target))
    return np.sum(amplitude * np.exp(log_value), axis=-1)


def integrate_segment(spec: KernelSpec, geometry: PairGeometry, segment: Segment, n: int,
                      factor: Optional[LogFactor] = None) -> np.ndarray:
    """n-point quadrature of one segment; shape channels + (m,)."""
    param, weights, log_shift = segment_nodes(segment, n)
    pts, dlam = segment.path(param)
    return _accumulate(spec, geometry, pts, weights * dlam, log_shift, factor)


def segment_integrand(spec: KernelSpec, geometry: PairGeometry, segment: Segment,
                      factor: Optional[LogFactor] = None) -> Callable[[np.ndarray], np.ndarray]:
    """The integrand of a segment in its own parameter, without quadrature weights."""
    def integrand(param):
        param = np.asarray(param, dtype=float).reshape(1, -1)
        pts, dlam = segment.path(param)
        return _accumulate_pointwise(spec, geometry, pts, dlam, factor)
    return integrand


def _accumulate_pointwise(spec, geometry, pts, dlam, factor):
    log_value = _with_factor(_log_kernel(spec, geometry, pts), pts, factor)
    amplitude = dlam * spec.sigma.evaluate(pts) / (4.0 * np.pi * pts.w(spec.k_target))
    return amplitude * np.exp(log_value)


def _node_count(plan: ContourPlan, segment: Segment) -> int:
    return getattr(plan, segment.nodes)


def integrate(spec: KernelSpec, sep: Separation, plan: ContourPlan,
              factor: Optional[LogFactor] = None, parts: Parts = Parts.ALL) -> np.ndarray:
    """Fixed-size quadrature of the canonical integral for every pair of sep."""
    value, _ = _integrate_with_mass(spec, sep, plan, factor, parts)
    return value


def _integrate_with_mass(spec, sep, plan, factor, parts):
    geometry = PairGeometry.build(spec, sep, plan.shift_c)
    pieces = [integrate_segment(spec, geometry, segment, _node_count(plan, segment), factor)
              for segment in path_segments(spec, geometry, plan, parts)]
    return np.sum(pieces, axis=0), np.sum(np.abs(pieces), axis=0)


def relative_criterion(error: np.ndarray, value: np.ndarray, mass: np.ndarray,
                       tol: float) -> np.ndarray:
    """Per pair: every channel within tol of max(|value|, MASS_FLOOR * mass)."""
    scale = np.maximum(np.abs(value), MASS_FLOOR * mass)
    accepted = error <= tol * scale
    return accepted.reshape(-1, accepted.shape[-1]).all(axis=0)


def _subset(sep: Separation, index: np.ndarray) -> Separation:
    dx, a, b = np.broadcast_arrays(sep.dx, sep.a, sep.b)
    return Separation(dx[index], a[index], b[index])


def evaluate(spec: KernelSpec, sep: Separation, plan: ContourPlan, tol: float = DEFAULT_TOL,
             factor: Optional[LogFactor] = None, parts: Parts = Parts.ALL,
             criterion: Criterion = relative_criterion) -> np.ndarray:
    """
    Canonical integral for every pair of sep, refined until self-consistent.

    Rule sizes are doubled until two successive results agree to tol; pairs
    that have converged drop out of later rounds.

    Raises:
        NumericalError: If the node budget runs out first (estimate = best values)
    """
    result, _ = _integrate_with_mass(spec, sep, plan, factor, parts)
    result = np.array(result, dtype=complex)
    pending = np.arange(len(sep))
    while pending.size:
        if not plan.can_double():
            raise NumericalError(
                f"{spec.name}: quadrature did not reach tol={tol:g} within the node budget",
                estimate=result, detail={"pending_pairs": pending.tolist(), "plan": plan})
        plan = plan.doubled()
        refined, mass = _integrate_with_mass(spec, _subset(sep, pending), plan, factor, parts)
        error = np.abs(refined - result[..., pending])
        accepted = criterion(error, refined, mass, tol)
        result[..., pending] = refined
        logger.debug("%s: %d of %d pairs accepted with n_prop=%d n_evan=%d n_segment=%d",
                     spec.name, int(np.count_nonzero(accepted)), pending.size,
                     plan.n_prop, plan.n_evan, plan.n_segment)
        pending = pending[~accepted]
    return result


# ---------------------------------------------------------------------------
# Public evaluation entry points
# ---------------------------------------------------------------------------

def admissible_separation(spec: KernelSpec, sep: Separation, targets=None,
                          sources=None) -> Separation:
    """
    Check that every pair may be evaluated and mirror free-space pairs with h < 0.

    Raises:
        GeometryError: For coincident modified points, or h < 0 with a non-symmetric kernel
    """
    dx, a, b = np.broadcast_arrays(*(np.atleast_1d(np.asarray(v, dtype=float))
                                     for v in (sep.dx, sep.a, sep.b)))
    h = a + b

    def pair(index):
        pick = lambda points: (None if points is None
                               else tuple(np.asarray(points, dtype=float).reshape(-1, 2)[index]))
        return pick(targets), pick(sources)

    coincident = (h == 0) & (dx == 0)
    if np.any(coincident):
        target, source = pair(int(np.argmax(coincident)))
        raise GeometryError(f"{spec.name} is singular when the modified points coincide",
                            target, source)
    below = h < 0
    if np.any(below):
        if not spec.reflectable:
            target, source = pair(int(np.argmax(below)))
            raise GeometryError(
                f"{spec.name} needs a non-negative vertical separation, got h={h[below][0]:g}",
                target, source)
        a = np.where(below, -a, a)
        b = np.where(below, -b, b)
    return Separation(dx, a, b)


def eval_batch(spec: KernelSpec, targets, sources, tol: float = DEFAULT_TOL,
               variant: Variant = Variant.CONTOUR1,
               shift_c: Optional[float] = None) -> np.ndarray:
    """
    g(targets[i], sources[i]) for (m, 2) arrays of points.

    Pairs are grouped by dominant direction and integrated in vectorized chunks.

    Raises:
        GeometryError: For points outside their layer or inadmissible pairs
        NumericalError: If some pair does not converge
    """
    targets = np.asarray(targets, dtype=float).reshape(-1, 2)
    sources = np.asarray(sources, dtype=float).reshape(-1, 2)
    if len(targets) != len(sources):
        raise DomainError("targets and sources must pair up", "shape",
                          (len(targets), len(sources)))
    spec.check_strips(targets, sources)
    sep = admissible_separation(spec, spec.separation(targets, sources), targets, sources)
    values = np.empty(len(targets), dtype=complex)
    vertical = sep.h >= np.abs(sep.dx)
    for mask, direction in ((vertical, Direction.NORTH), (~vertical, Direction.EAST)):
        index = np.nonzero(mask)[0]
        for start in range(0, index.size, BATCH_CHUNK):
            chunk = index[start:start + BATCH_CHUNK]
            group = _subset(sep, chunk)
            plan = default_plan(spec, group, direction, variant, shift_c)
            values[chunk] = evaluate(spec, group, plan, tol)
    return values


def _checked_separation(request: EvalRequest) -> Separation:
    request.spec.check_strips([request.target], [request.source])
    return request.separation()


def _check_direction(direction: Direction, sep: Separation):
    dx, h = float(sep.dx[0]), float(sep.h[0])
    valid = {Direction.NORTH: h > 0, Direction.SOUTH: h < 0,
             Direction.EAST: dx > 0, Direction.WEST: dx < 0}[direction]
    if not valid:
        raise GeometryError(f"{direction.value} contour does not match separation "
                            f"dx={dx:g}, h={h:g}")


def _planned(request: EvalRequest, plan: Optional[ContourPlan], variant: Variant,
             shift_c: Optional[float] = None) -> Tuple[Separation, ContourPlan]:
    raw = _checked_separation(request)
    if plan is None:
        direction = choose_direction(float(raw.dx[0]), float(raw.h[0]))
        plan = default_plan(request.spec, raw, direction, variant, shift_c)
    else:
        _check_direction(plan.direction, raw)
    sep = admissible_separation(request.spec, raw, [request.target], [request.source])
    if plan.direction is Direction.SOUTH:
        plan = replace(plan, direction=Direction.NORTH)
    return sep, plan


def eval_kernel(request: EvalRequest, plan: Optional[ContourPlan] = None) -> complex:
    """
    g(target, source) to the requested relative tolerance.

    Raises:
        GeometryError: For points outside their layer, coincident points, or a
            plan whose direction does not match the separation
        NumericalError: If the quadrature does not converge
    """
    if plan is None:
        return complex(eval_batch(request.spec, [request.target], [request.source],
                                  request.tol)[0])
    sep, plan = _planned(request, plan, plan.variant)
    return complex(evaluate(request.spec, sep, plan, request.tol)[0])


def eval_split(request: EvalRequest, plan: Optional[ContourPlan] = None) -> complex:
    """
    g as propagating part plus evanescent part on the real t half-line.

    Raises:
        NumericalError: If h <= 0 (the real tail does not decay) or the rules do not converge
    """
    base = plan or ContourPlan(Direction.NORTH)
    sep, plan = _planned(request, replace(base, variant=Variant.ORIGINAL), Variant.ORIGINAL)
    return complex(evaluate(request.spec, sep, plan, request.tol)[0])


def eval_evanescent_contour1(request: EvalRequest, shift_c: Optional[float] = None) -> complex:
    """Evanescent part of g on contour 1; equals the real-tail evanescent part when h > 0."""
    sep, plan = _planned(request, None, Variant.CONTOUR1, shift_c)
    return complex(evaluate(request.spec, sep, plan, request.tol, parts=Parts.EVANESCENT)[0])


def eval_evanescent_contour2(request: EvalRequest, shift_c: Optional[float] = None) -> complex:
    """Evanescent part of g on contour 2 (needs h > 0)."""
    sep, plan = _planned(request, None, Variant.CONTOUR2, shift_c)
    return complex(evaluate(request.spec, sep, plan, request.tol, parts=Parts.EVANESCENT)[0])


def propagating_part(request: EvalRequest, plan: ContourPlan) -> complex:
    """Fixed-size quadrature of the propagating part only."""
    sep, plan = _planned(request, plan, plan.variant)
    return complex(integrate(request.spec, sep, plan, parts=Parts.PROPAGATING)[0])


def evanescent_part(request: EvalRequest, plan: ContourPlan) -> complex:
    """Fixed-size quadrature of both evanescent tails with the plan's variant."""
    sep, plan = _planned(request, plan, plan.variant)
    return complex(integrate(request.spec, sep, plan, parts=Parts.EVANESCENT)[0])


def zeta_log_factor(order: int, beta: float) -> LogFactor:
    """log of zeta^order with zeta = -i (lam - w(lam, beta)) / beta."""
    def factor(pts: SpectralPoints) -> np.ndarray:
        return order * np.log(-1j * (pts.lam - pts.w(beta)) / beta)
    return factor


def plane_wave_hl(order: int, direction: Union[Direction, str], x: float, y: float,
                  beta: float, tol: float = DEFAULT_TOL) -> complex:
    """
    H_l(beta r) e^{i l theta} at (x, y) from its plane-wave expansion along the
    given contour family (north: y > 0, south: y < 0, east: x > 0, west: x < 0).

    Raises:
        GeometryError: If the sign of the coordinate does not match the direction
    """
    direction = Direction(direction)
    _check_direction(direction, Separation(np.array([x]), np.array([y]), np.array([0.0])))
    if direction is Direction.SOUTH:
        # mirror y -> -y turns e^{i l theta} into e^{-i l theta}
        return (-1) ** order * plane_wave_hl(-order, Direction.NORTH, x, -y, beta, tol)
    spec = make_free_space(beta)
    sep = Separation(np.array([float(x)]), np.array([float(y)]), np.array([0.0]))
    plan = default_plan(spec, sep, direction)
    value = evaluate(spec, sep, plan, tol, factor=zeta_log_factor(order, beta))[0]
    return complex(4.0 / 1j * value)


def plane_wave_h0(direction: Union[Direction, str], x: float, y: float, beta: float,
                  tol: float = DEFAULT_TOL) -> complex:
    """H_0(beta r) from its plane-wave expansion along the given contour family."""
    return plane_wave_hl(0, direction, x, y, beta, tol)
