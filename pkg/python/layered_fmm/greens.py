"""
Catalog of layered-media kernels stored in one canonical spectral form.

Every kernel is

    g(x, x0) = integral of exp(-w(lam,k) a - w(lam,k0) b + i lam X) sigma(lam) / (4 pi w(lam,k)) dlam

with X = x - x0, a = o*y + d (target orientation o = +-1), b = -sign*y0. The
quadrature code in `sommerfeld` only ever sees (k, k0, a, b, X, sigma).
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy import optimize

from .errors import DomainError, GeometryError, NumericalError
from .special_functions import hankel1, w_sqrt

logger = logging.getLogger(__name__)

Point2 = Tuple[float, float]

# |denominator| below this fraction of its term magnitudes counts as a resonance
RESONANCE_THRESHOLD = 1e-12
GUIDED_MODE_SCAN_POINTS = 4000


class KernelFamily(Enum):
    FREE_SPACE = "free_space"
    DIRICHLET = "dirichlet_scattered"
    IMPEDANCE = "impedance_scattered"
    THREE_LAYER = "three_layer"


class ThreeLayerComponent(Enum):
    """Which scattered-field piece of the three-layer medium a kernel represents."""
    S1 = "s1"    # reflected field in the top layer
    S2T = "s2t"  # middle layer, wave from the top interface
    S2B = "s2b"  # middle layer, wave from the bottom interface
    S3 = "s3"    # transmitted field in the bottom layer

    @classmethod
    def from_tag(cls, tag: str) -> 'ThreeLayerComponent':
        try:
            return cls(tag)
        except ValueError:
            raise DomainError(f"Unknown three-layer component: {tag}", "component", tag)


class SpectralPoints:
    """
    Points of the spectral variable lam together with their radicals w(lam, k).

    The radical provider is chosen by whoever generates the points, so tails
    and deformed contours can supply radicals computed from the tail variable
    instead of from lam.
    """

    def __init__(self, lam: np.ndarray, radical: Callable[[float], np.ndarray]):
        self.lam = lam
        self._radical = radical
        self._cache: Dict[float, np.ndarray] = {}

    @classmethod
    def on_axis(cls, lam) -> 'SpectralPoints':
        values = np.asarray(lam)
        return cls(values, lambda k: np.asarray(w_sqrt(values, k), dtype=complex))

    @property
    def shape(self) -> Tuple[int, ...]:
        return np.shape(self.lam)

    def w(self, k: float) -> np.ndarray:
        """w(lam, k) for every point; cached per wavenumber."""
        if k not in self._cache:
            self._cache[k] = self._radical(k)
        return self._cache[k]


@dataclass(frozen=True, eq=False)
class SigmaFunction:
    """
    Image term sigma(lam) of a kernel.

    `evaluate` works on SpectralPoints so it sees the same radicals as the rest of
    the integrand; calling the object directly evaluates at plain lam values.
    """
    evaluate: Callable[[SpectralPoints], np.ndarray]
    sigma_inf: complex
    branch_points: Tuple[float, ...] = ()
    real_poles: Tuple[float, ...] = ()
    tail_poles: Tuple[complex, ...] = ()  # poles in the tail variable t = w(lam, K)

    def __call__(self, lam):
        values = self.evaluate(SpectralPoints.on_axis(lam))
        return values.item() if np.ndim(values) == 0 else values


def _constant_sigma(value: complex, branch_points: Tuple[float, ...]) -> SigmaFunction:
    return SigmaFunction(lambda pts: np.full(pts.shape, value, dtype=complex),
                         complex(value), branch_points)


@dataclass(frozen=True)
class ThreeLayerParams:
    """Wavenumbers of the top, middle and bottom layers; interfaces at y=0 and y=-d."""
    k1: float
    k2: float
    k3: float
    d: float

    def __post_init__(self):
        for name in ("k1", "k2", "k3", "d"):
            if not getattr(self, name) > 0:
                raise DomainError(f"three-layer parameter {name} must be positive",
                                  name, getattr(self, name))


@dataclass(frozen=True)
class Separation:
    """
    Canonical separation of targets from sources: dx = x - x0, a = o*y + d,
    b = -sign*y0. Fields may be floats or equally shaped arrays.
    """
    dx: np.ndarray
    a: np.ndarray
    b: np.ndarray

    @property
    def h(self) -> np.ndarray:
        """Effective vertical separation (image and offset corrected)."""
        return self.a + self.b

    @property
    def rho(self) -> np.ndarray:
        """Modified distance."""
        return np.hypot(self.dx, self.h)

    def reflected(self) -> 'Separation':
        """The y -> -y, y0 -> -y0 mirror image (only valid for symmetric kernels)."""
        return Separation(self.dx, -self.a, -self.b)

    def __len__(self) -> int:
        return int(np.size(self.dx))


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """
    One layered-media Green's function in canonical form.

    sign is the sign on w(lam,k0)*y0 in the source factor; orientation is the
    sign of y in the target factor exponent -w(lam,k)*(orientation*y + offset_d).
    """
    k_target: float
    k_source: float
    offset_d: float
    sign: int
    sigma: SigmaFunction
    family: KernelFamily
    orientation: int = 1
    component: Optional[ThreeLayerComponent] = None
    parameters: Dict[str, float] = field(default_factory=dict)
    target_strip: Tuple[float, float] = (-np.inf, np.inf)
    source_strip: Tuple[float, float] = (-np.inf, np.inf)

    def __post_init__(self):
        if self.sign not in (1, -1) or self.orientation not in (1, -1):
            raise DomainError("sign and orientation must be +1 or -1", "sign", self.sign)
        if self.offset_d < 0:
            raise DomainError("offset d must be non-negative", "offset_d", self.offset_d)

    @property
    def name(self) -> str:
        tag = self.family.value
        if self.component is not None:
            tag = f"{tag}:{self.component.value}"
        args = ", ".join(f"{key}={value:g}" for key, value in sorted(self.parameters.items()))
        return f"{tag}({args})"

    @property
    def breakpoints(self) -> Tuple[float, ...]:
        """Sorted distinct wavenumbers at which the real-axis integrand is not smooth."""
        points = {self.k_target, self.k_source, *self.sigma.branch_points}
        return tuple(sorted(points))

    @property
    def reflectable(self) -> bool:
        """True when g is symmetric under y -> -y, y0 -> -y0 (free space only)."""
        return self.family is KernelFamily.FREE_SPACE

    @property
    def cache_key(self) -> Tuple:
        return (self.family.value,
                self.component.value if self.component else None,
                self.k_target, self.k_source, self.offset_d, self.sign, self.orientation,
                tuple(sorted(self.parameters.items())))

    def separation(self, target, source) -> Separation:
        """Canonical separation for one pair of points or for arrays of shape (m, 2)."""
        target = np.asarray(target, dtype=float)
        source = np.asarray(source, dtype=float)
        return Separation(target[..., 0] - source[..., 0],
                          self.orientation * target[..., 1] + self.offset_d,
                          -self.sign * source[..., 1])

    def check_strips(self, targets=None, sources=None):
        """Raise GeometryError if any point lies outside its layer."""
        for points, strip, role in ((targets, self.target_strip, "target"),
                                    (sources, self.source_strip, "source")):
            if points is None:
                continue
            y = np.asarray(points, dtype=float).reshape(-1, 2)[:, 1]
            outside = (y < strip[0]) | (y > strip[1])
            if np.any(outside):
                bad = tuple(np.asarray(points, dtype=float).reshape(-1, 2)[np.argmax(outside)])
                raise GeometryError(
                    f"{role} point {bad} lies outside its layer {strip} for {self.name}",
                    target=bad if role == "target" else None,
                    source=bad if role == "source" else None)


def make_free_space(k: float) -> KernelSpec:
    """Free-space kernel (i/4) H_0(k|x - x0|) in spectral form (sigma = 1)."""
    _check_wavenumber(k)
    return KernelSpec(k, k, 0.0, 1, _constant_sigma(1.0, ()), KernelFamily.FREE_SPACE,
                      parameters={"k": k})


def make_dirichlet_scattered(k: float) -> KernelSpec:
    """Half-space image field for a zero Dirichlet interface at y=0 (image charge -1)."""
    _check_wavenumber(k)
    return KernelSpec(k, k, 0.0, -1, _constant_sigma(-1.0, ()), KernelFamily.DIRICHLET,
                      parameters={"k": k},
                      target_strip=(0.0, np.inf), source_strip=(0.0, np.inf))


def make_impedance_scattered(k: float, alpha: float) -> KernelSpec:
    """
    Half-space scattered field for du/dy - i alpha u = 0 at y=0, with
    sigma = (w + i k alpha) / (w - i k alpha) and sigma -> 1 at infinity.
    """
    _check_wavenumber(k)
    if alpha == 0:
        sigma = _constant_sigma(1.0, (k,))
    else:
        def evaluate(pts: SpectralPoints) -> np.ndarray:
            w = pts.w(k)
            return (w + 1j * k * alpha) / (w - 1j * k * alpha)

        poles: Tuple[float, ...] = ()
        if alpha < 0 and abs(alpha) <= 1:
            # w = i k alpha has real solutions inside the propagating band
            pole = k * np.sqrt(1.0 - alpha * alpha)
            poles = (-pole, pole)
            logger.warning("impedance alpha=%g puts real poles at lambda=+-%g", alpha, pole)
        sigma = SigmaFunction(evaluate, 1.0 + 0j, (k,), poles, (1j * k * alpha,))
    return KernelSpec(k, k, 0.0, -1, sigma, KernelFamily.IMPEDANCE,
                      parameters={"k": k, "alpha": alpha},
                      target_strip=(0.0, np.inf), source_strip=(0.0, np.inf))


def _three_layer_closed(w1, w2, w3, d: float, lam=None):
    """Closed-form (sigma1, sigma2t, sigma2b, sigma3) from the three radicals."""
    s = -np.expm1(-2.0 * d * w2) / 2.0  # e^{-d w2} sinh(d w2)
    c = 1.0 - s                         # e^{-d w2} cosh(d w2)
    denominator = s * (w2 * w2 + w1 * w3) + w2 * (w1 + w3) * c
    scale = (np.abs(s) * (np.abs(w2) ** 2 + np.abs(w1 * w3))
             + np.abs(w2) * (np.abs(w1) + np.abs(w3)) * np.abs(c))
    at_k2 = w2 == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        # also catches a denominator that underflowed to zero
        resonant = (np.abs(denominator) <= RESONANCE_THRESHOLD * scale) & ~at_k2
        if np.any(resonant):
            where = np.asarray(lam)[resonant] if lam is not None else None
            raise NumericalError("three-layer image terms are singular (guided-mode resonance)",
                                 detail={"lambda": where})
        sigma1 = (s * (w1 * w3 - w2 * w2) + w2 * (w1 - w3) * c) / denominator
        sigma2t = w2 * (w2 + w3) / denominator
        sigma2b = w2 * (w2 - w3) / denominator
        sigma3 = 2.0 * w2 * w3 * np.exp(d * (w3 - w2)) / denominator
        if np.any(at_k2):
            # removable singularity at lam = k2
            limit = d * w1 * w3 + w1 + w3
            sigma1 = np.where(at_k2, (d * w1 * w3 + w1 - w3) / limit, sigma1)
            sigma2t = np.where(at_k2, w3 / limit, sigma2t)
            sigma2b = np.where(at_k2, -w3 / limit, sigma2b)
            sigma3 = np.where(at_k2, 2.0 * w3 * np.exp(d * w3) / limit, sigma3)
    return sigma1, sigma2t, sigma2b, sigma3


def sigma_three_layer_closed(lam, params: ThreeLayerParams):
    """
    Closed-form image terms of the three-layer medium at lam.

    Returns:
        Tuple (sigma1, sigma2t, sigma2b, sigma3), each shaped like lam

    Raises:
        NumericalError: Near a guided-mode resonance or on denominator underflow
    """
    pts = SpectralPoints.on_axis(np.asarray(lam))
    return _three_layer_closed(pts.w(params.k1), pts.w(params.k2), pts.w(params.k3),
                               params.d, np.asarray(lam))


def three_layer_system(lam, params: ThreeLayerParams) -> Tuple[np.ndarray, np.ndarray]:
    """The 4x4 interface-matching matrix (stacked over lam) and its right-hand side."""
    lam = np.atleast_1d(np.asarray(lam))
    w1, w2, w3 = (w_sqrt(lam, k) for k in (params.k1, params.k2, params.k3))
    w1, w2, w3 = (np.asarray(w, dtype=complex) for w in (w1, w2, w3))
    e2 = np.exp(-params.d * w2)
    zero = np.zeros_like(w2)
    one = np.ones_like(w2)
    matrix = np.stack([
        np.stack([-one, w1 / w2, e2 * w1 / w2, zero], axis=-1),
        np.stack([zero, e2, one, -w2 / w3], axis=-1),
        np.stack([one, one, -e2, zero], axis=-1),
        np.stack([zero, e2, -one, -one], axis=-1),
    ], axis=-2)
    rhs = np.broadcast_to(np.array([1, 0, 1, 0], dtype=complex), matrix.shape[:-1]).copy()
    return matrix, rhs


def sigma_three_layer_solve(lam, params: ThreeLayerParams):
    """
    Image terms from a direct solve of the interface conditions.

    The system's last two unknowns are e^{-d w2} sigma2b and e^{-d w3} sigma3;
    they are rescaled so the result matches `sigma_three_layer_closed`.

    Raises:
        NumericalError: If the system is singular at some lam (carries lam)
    """
    lam_array = np.atleast_1d(np.asarray(lam))
    matrix, rhs = three_layer_system(lam_array, params)
    condition = np.linalg.cond(matrix)
    if np.any(~np.isfinite(condition) | (condition > 1.0 / RESONANCE_THRESHOLD)):
        bad = lam_array[np.argmax(~np.isfinite(condition) | (condition > 1.0 / RESONANCE_THRESHOLD))]
        raise NumericalError("three-layer interface system is singular", detail={"lambda": bad})
    solution = np.linalg.solve(matrix, rhs[..., None])[..., 0]
    w2 = np.asarray(w_sqrt(lam_array, params.k2), dtype=complex)
    w3 = np.asarray(w_sqrt(lam_array, params.k3), dtype=complex)
    sigma = (solution[..., 0], solution[..., 1],
             solution[..., 2] * np.exp(params.d * w2),
             solution[..., 3] * np.exp(params.d * w3))
    if np.ndim(lam) == 0:
        return tuple(value[0] for value in sigma)
    return sigma


def guided_mode_poles(params: ThreeLayerParams) -> Tuple[float, ...]:
    """
    Real lam > 0 where the three-layer image terms blow up.

    They exist only for a slow middle layer (k2 > max(k1, k3)) and lie in
    (max(k1, k3), k2); found as sign changes of the reduced dispersion function
    refined with Brent's method.
    """
    lower = max(params.k1, params.k3)
    if params.k2 <= lower:
        return ()

    def dispersion(lam: float) -> float:
        beta = np.sqrt((params.k2 - lam) * (params.k2 + lam))
        w1 = np.sqrt((lam - params.k1) * (lam + params.k1))
        w3 = np.sqrt((lam - params.k3) * (lam + params.k3))
        # (w1 w3 - beta^2) sin(d beta)/beta + (w1 + w3) cos(d beta), finite at beta = 0
        return ((w1 * w3 - beta * beta) * params.d * np.sinc(params.d * beta / np.pi)
                + (w1 + w3) * np.cos(params.d * beta))

    grid = np.linspace(lower, params.k2, GUIDED_MODE_SCAN_POINTS + 2)[1:-1]
    values = np.array([dispersion(lam) for lam in grid])
    poles = []
    for i in np.nonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0)[0]:
        poles.append(float(optimize.brentq(dispersion, grid[i], grid[i + 1], xtol=1e-14)))
    return tuple(poles)


_COMPONENT_LAYOUT = {
    # component: (target wavenumber attribute, orientation, offset in units of d)
    # s3 is measured from y=0 with orientation -1; its e^{d w3} shift sits in sigma3
    ThreeLayerComponent.S1: ("k1", 1, 0.0),
    ThreeLayerComponent.S2T: ("k2", -1, 0.0),
    ThreeLayerComponent.S2B: ("k2", 1, 2.0),
    ThreeLayerComponent.S3: ("k3", -1, 0.0),
}

_COMPONENT_INDEX = {
    ThreeLayerComponent.S1: 0,
    ThreeLayerComponent.S2T: 1,
    ThreeLayerComponent.S2B: 2,
    ThreeLayerComponent.S3: 3,
}


def make_three_layer(params: ThreeLayerParams, component) -> KernelSpec:
    """
    One scattered-field piece of the three-layer medium, source in the top layer.

    The bottom-layer piece decays away from y=-d, so it is stored with the
    target factor e^{+w3 y} (orientation -1, offset 0 rather than an offset of 2d);
    the closed-form sigma3 carries the e^{d w3} shift.
    """
    if isinstance(component, str):
        component = ThreeLayerComponent.from_tag(component)
    if not isinstance(component, ThreeLayerComponent):
        raise DomainError(f"Invalid three-layer component: {component}", "component", component)
    k_attr, orientation, offset = _COMPONENT_LAYOUT[component]
    index = _COMPONENT_INDEX[component]

    def evaluate(pts: SpectralPoints) -> np.ndarray:
        w1, w2, w3 = pts.w(params.k1), pts.w(params.k2), pts.w(params.k3)
        return _three_layer_closed(w1, w2, w3, params.d, pts.lam)[index]

    limits = (0.0, 1.0, 0.0, 1.0)
    poles = guided_mode_poles(params)
    if poles:
        logger.warning("three-layer medium %s has guided-mode poles at %s", params, poles)
    sigma = SigmaFunction(evaluate, complex(limits[index]),
                          (params.k1, params.k2, params.k3),
                          tuple(sorted({*poles, *(-p for p in poles)})))
    strips = {
        ThreeLayerComponent.S1: (0.0, np.inf),
        ThreeLayerComponent.S2T: (-params.d, 0.0),
        ThreeLayerComponent.S2B: (-params.d, 0.0),
        ThreeLayerComponent.S3: (-np.inf, -params.d),
    }
    return KernelSpec(getattr(params, k_attr), params.k1, offset * params.d, -1, sigma,
                      KernelFamily.THREE_LAYER, orientation=orientation, component=component,
                      parameters={"k1": params.k1, "k2": params.k2, "k3": params.k3,
                                  "d": params.d},
                      target_strip=strips[component], source_strip=(0.0, np.inf))


KERNEL_TAGS = ("free", "dirichlet", "impedance", "three-layer")


def make_kernel(family: str, k: Optional[float] = None, alpha: float = 0.0,
                k1: Optional[float] = None, k2: Optional[float] = None,
                k3: Optional[float] = None, d: Optional[float] = None,
                component: Optional[str] = None) -> KernelSpec:
    """
    Build a kernel from its command-line/config tag.

    `family` is one of KERNEL_TAGS; "three-layer:s2t" style tags carry the component.

    Raises:
        DomainError: For an unknown tag or missing parameters
    """
    if ":" in family:
        family, component = family.split(":", 1)
    if family == "three-layer":
        missing = [name for name, value in (("k1", k1), ("k2", k2), ("k3", k3), ("d", d))
                   if value is None]
        if missing or component is None:
            raise DomainError(f"three-layer kernel needs {', '.join(missing) or 'a component'}",
                              "kernel", family)
        return make_three_layer(ThreeLayerParams(k1, k2, k3, d), component)
    if family not in KERNEL_TAGS:
        raise DomainError(f"Unknown kernel: {family}", "kernel", family)
    if k is None:
        raise DomainError(f"{family} kernel needs a wavenumber k", "k", k)
    if family == "free":
        return make_free_space(k)
    if family == "dirichlet":
        return make_dirichlet_scattered(k)
    return make_impedance_scattered(k, alpha)


def reference_value(spec: KernelSpec, x: Point2, x0: Point2) -> Optional[complex]:
    """
    Closed-form value of a kernel when one exists, otherwise None.

    Free space uses (i/4) H_0(k r); the Dirichlet and the alpha=0 impedance
    (Neumann) kernels use the image source at (x0, -y0).
    """
    k = spec.k_target
    if spec.family is KernelFamily.FREE_SPACE:
        r = np.hypot(x[0] - x0[0], x[1] - x0[1])
        if r == 0:
            raise GeometryError("free-space kernel is singular at coincident points", x, x0)
        return 0.25j * hankel1(0, k * r)
    image_r = np.hypot(x[0] - x0[0], x[1] + x0[1])
    if spec.family is KernelFamily.DIRICHLET:
        return -0.25j * hankel1(0, k * image_r)
    if spec.family is KernelFamily.IMPEDANCE and spec.parameters.get("alpha") == 0:
        return 0.25j * hankel1(0, k * image_r)
    return None


def _check_wavenumber(k: float):
    if not k > 0:
        raise DomainError("wavenumber must be positive", "k", k)
