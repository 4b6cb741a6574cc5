"""
Multipole and local expansions of layered-media kernels.

Coefficients are the free-space Helmholtz ones; only the basis functions carry
the layered structure. With zeta = -i(lam - sign w(lam,k0))/k0 and
eta = i(lam + o w(lam,k))/k,

    sum_p M_p zeta^p = sum_j q_j e^{sign w0 (y_j - y_c)} e^{-i lam (x_j - x_c)}
    e^{-o w dy + i lam dx} = sum_p J_p(k r) e^{i p theta} eta^p

so Phi_p (multipole basis) and Psi_p (local basis) are canonical integrals with
one extra power factor. Powers are formed as exp(p log zeta) inside the
quadrature so that no intermediate overflows.
"""
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Sequence, Tuple, Union

import numpy as np

from .errors import DomainError, GeometryError
from .greens import KernelSpec
from .sommerfeld import (DEFAULT_N_EVAN, DEFAULT_TOL, LogFactor, Parts, Variant,
                         admissible_separation, choose_direction, default_plan, evaluate)
from .quadrature import MAX_LAGUERRE_NODES
from .special_functions import bessel_j, w_sqrt

logger = logging.getLogger(__name__)

Point2 = Tuple[float, float]
Particles = Iterable[Tuple[Point2, complex]]

MIN_ORDER = 4


def _orders(P: int) -> np.ndarray:
    return np.arange(-P, P + 1)


def _polar(offsets: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    offsets = np.asarray(offsets, dtype=float).reshape(-1, 2)
    return np.hypot(offsets[:, 0], offsets[:, 1]), np.arctan2(offsets[:, 1], offsets[:, 0])


@dataclass(frozen=True, eq=False)
class MultipoleExpansion:
    """Coefficients M_p, p in [-P, P], about `center` in the source layer (wavenumber k0)."""
    center: Point2
    k0: float
    coeffs: np.ndarray

    @property
    def order(self) -> int:
        return (len(self.coeffs) - 1) // 2

    def coefficient(self, p: int) -> complex:
        return complex(self.coeffs[p + self.order]) if abs(p) <= self.order else 0j

    @classmethod
    def zeros(cls, center: Point2, k0: float, P: int) -> 'MultipoleExpansion':
        return cls(tuple(center), k0, np.zeros(2 * P + 1, dtype=complex))


@dataclass(frozen=True, eq=False)
class LocalExpansion:
    """Coefficients L_p of sum_p L_p J_p(k r) e^{i p theta} about `center`."""
    center: Point2
    k: float
    coeffs: np.ndarray

    @property
    def order(self) -> int:
        return (len(self.coeffs) - 1) // 2

    def coefficient(self, p: int) -> complex:
        return complex(self.coeffs[p + self.order]) if abs(p) <= self.order else 0j

    @classmethod
    def zeros(cls, center: Point2, k: float, P: int) -> 'LocalExpansion':
        return cls(tuple(center), k, np.zeros(2 * P + 1, dtype=complex))


class Role(Enum):
    MULTIPOLE = "multipole"  # distance from a source-box center to a target point
    LOCAL = "local"          # distance from a source point to a target-box center


@dataclass(frozen=True)
class ModifiedDistance:
    """Image- and offset-corrected distance that governs convergence (rate r / rho)."""
    rho: float
    dx: float
    h: float
    role: Role


def s2m_arrays(positions, charges, center: Point2, k0: float, P: int) -> np.ndarray:
    """M_p = sum_j q_j J_p(k0 r_j) e^{-i p theta_j} for arrays of positions (n, 2) and charges (n,)."""
    if P < 0:
        raise DomainError("expansion order must be non-negative", "P", P)
    charges = np.asarray(charges, dtype=complex).reshape(-1)
    if charges.size == 0:
        return np.zeros(2 * P + 1, dtype=complex)
    r, theta = _polar(np.asarray(positions, dtype=float).reshape(-1, 2) - np.asarray(center))
    orders = _orders(P)[:, None]
    basis = np.asarray(bessel_j(orders, k0 * r[None, :])) * np.exp(-1j * orders * theta[None, :])
    return basis @ charges


def s2m(particles: Particles, center: Point2, k0: float, P: int) -> MultipoleExpansion:
    """
    Source-to-multipole: the free-space Helmholtz S2M, shared by every kernel.

    Args:
        particles: Iterable of ((x, y), charge)
        center: Expansion center
        k0: Source-layer wavenumber
        P: Truncation order

    Returns:
        MultipoleExpansion with 2P+1 coefficients
    """
    particles = list(particles)
    positions = np.array([p for p, _ in particles], dtype=float).reshape(-1, 2)
    charges = np.array([q for _, q in particles], dtype=complex)
    return MultipoleExpansion(tuple(center), k0, s2m_arrays(positions, charges, center, k0, P))


def source_log_variable(spec: KernelSpec) -> LogFactor:
    """log zeta, zeta = -i(lam - sign w(lam, k0)) / k0."""
    k0, sign = spec.k_source, spec.sign
    return lambda pts: np.log(-1j * (pts.lam - sign * pts.w(k0)) / k0)


def target_log_variable(spec: KernelSpec) -> LogFactor:
    """log eta, eta = i(lam + o w(lam, k)) / k."""
    k, orientation = spec.k_target, spec.orientation
    return lambda pts: np.log(1j * (pts.lam + orientation * pts.w(k)) / k)


def _channel_factor(orders: np.ndarray, log_variable: LogFactor) -> LogFactor:
    def factor(pts):
        log_value = log_variable(pts)
        return orders.reshape(orders.shape + (1,) * np.ndim(log_value)) * log_value
    return factor


def basis_plan_size(max_order: int) -> int:
    """Starting Laguerre size for integrands carrying a power of order max_order."""
    return min(max(DEFAULT_N_EVAN, max_order + 20), MAX_LAGUERRE_NODES // 2)


def _basis_values(spec: KernelSpec, target: Point2, source: Point2, orders: Sequence[int],
                  log_variable: LogFactor, tol: float, variant: Variant,
                  parts: Parts) -> np.ndarray:
    orders = np.asarray(orders, dtype=int)
    raw = spec.separation(np.asarray(target, dtype=float)[None, :],
                          np.asarray(source, dtype=float)[None, :])
    sep = admissible_separation(spec, raw, [target], [source])
    mirrored = bool(raw.h[0] < 0)
    if mirrored:
        # free space only: y -> -y maps the order p term to (-1)^p times order -p
        orders_used = -orders
    else:
        orders_used = orders
    direction = choose_direction(float(sep.dx[0]), float(sep.h[0]))
    plan = replace(default_plan(spec, sep, direction, variant),
                   n_evan=basis_plan_size(int(np.max(np.abs(orders), initial=0))))
    values = evaluate(spec, sep, plan, tol, _channel_factor(orders_used, log_variable), parts)
    values = values[..., 0]
    if mirrored:
        values = values * (-1.0) ** np.abs(orders)
    return values


def phi_terms(orders: Sequence[int], x: Point2, spec: KernelSpec, source_center: Point2,
              tol: float = DEFAULT_TOL, variant: Variant = Variant.CONTOUR1,
              parts: Parts = Parts.ALL) -> np.ndarray:
    """Phi_p(x) for several orders sharing one set of quadrature nodes."""
    return _basis_values(spec, x, source_center, orders, source_log_variable(spec), tol,
                         variant, parts)


def psi_terms(orders: Sequence[int], x0: Point2, spec: KernelSpec, target_center: Point2,
              tol: float = DEFAULT_TOL, variant: Variant = Variant.CONTOUR1,
              parts: Parts = Parts.ALL) -> np.ndarray:
    """Psi_p(x0) for several orders sharing one set of quadrature nodes."""
    return _basis_values(spec, target_center, x0, orders, target_log_variable(spec), tol,
                         variant, parts)


def phi_basis(p: int, x: Point2, spec: KernelSpec, source_center: Point2,
              tol: float = DEFAULT_TOL, variant: Variant = Variant.CONTOUR1) -> complex:
    """
    Multipole basis function Phi_p at target x for expansions about source_center.

    Raises:
        GeometryError: If the target is not admissible for the kernel
        NumericalError: If the quadrature does not converge
    """
    return complex(phi_terms([p], x, spec, source_center, tol, variant)[0])


def psi_basis(p: int, x0: Point2, spec: KernelSpec, target_center: Point2,
              tol: float = DEFAULT_TOL, variant: Variant = Variant.CONTOUR1) -> complex:
    """Local basis function Psi_p for a source x0 and expansions about target_center."""
    return complex(psi_terms([p], x0, spec, target_center, tol, variant)[0])


def m2t(multipole: MultipoleExpansion, x: Point2, spec: KernelSpec,
        tol: float = DEFAULT_TOL) -> complex:
    """Evaluate sum_p M_p Phi_p(x) directly (validation only; the FMM never calls it)."""
    values = phi_terms(_orders(multipole.order), x, spec, multipole.center, tol)
    return complex(np.dot(multipole.coeffs, values))


def l2t(local: LocalExpansion, x) -> Union[complex, np.ndarray]:
    """
    Local-to-target: sum_p L_p J_p(k r) e^{i p theta} about the local center.

    Args:
        local: Local expansion
        x: One point (x, y) or an (n, 2) array of points

    Returns:
        complex for one point, array of shape (n,) otherwise
    """
    points = np.asarray(x, dtype=float)
    r, theta = _polar(points.reshape(-1, 2) - np.asarray(local.center))
    orders = _orders(local.order)[None, :]
    basis = np.asarray(bessel_j(orders, local.k * r[:, None])) * np.exp(1j * orders * theta[:, None])
    values = basis @ local.coeffs
    return complex(values[0]) if points.ndim == 1 else values


def modified_distance(spec: KernelSpec, a: Point2, b: Point2,
                      role: Union[Role, str] = Role.MULTIPOLE) -> ModifiedDistance:
    """
    Distance that controls expansion convergence for this kernel.

    For a multipole expansion a is the target and b the source-box center; for a
    local expansion a is the target-box center and b the source. Both reduce to
    the canonical sqrt(h^2 + dx^2), which for image kernels measures to the
    image point.
    """
    role = Role(role)
    sep = spec.separation(a, b)
    dx, h = float(sep.dx), float(sep.h)
    return ModifiedDistance(math.hypot(dx, h), dx, h, role)


def estimate_order(r: float, rho: float, eps: float, k_pair: float = 0.0) -> int:
    """
    Truncation order for an expansion of radius r evaluated at modified distance rho.

    Smallest P with (r/rho)^{P+1} / (1 - r/rho) <= eps, raised to e k r / 2 when
    the box is large compared to the wavelength, never below 4.

    Raises:
        GeometryError: If r >= rho (the expansion does not converge)
        DomainError: If eps is not positive
    """
    if not eps > 0:
        raise DomainError("tolerance must be positive", "eps", eps)
    if not 0 <= r < rho:
        raise GeometryError(f"expansion radius {r:g} is not inside modified distance {rho:g}")
    if r == 0:
        return MIN_ORDER
    ratio = r / rho
    geometric = math.ceil(math.log(eps * (1.0 - ratio)) / math.log(ratio)) - 1
    wave = math.ceil(math.e * k_pair * r / 2.0)
    return max(MIN_ORDER, geometric, wave)


def laurent_check(particles: Particles, center: Point2, k0: float, sign: int,
                  lambdas: Sequence[float], P: int) -> float:
    """
    Largest deviation of sum_p M_p zeta^p from the exact spectral source factor at real lam.
    """
    particles = list(particles)
    positions = np.array([p for p, _ in particles], dtype=float).reshape(-1, 2)
    charges = np.array([q for _, q in particles], dtype=complex)
    coeffs = s2m_arrays(positions, charges, center, k0, P)
    lam = np.asarray(lambdas, dtype=float)
    w0 = np.asarray(w_sqrt(lam, k0), dtype=complex)
    zeta = -1j * (lam - sign * w0) / k0
    series = np.sum(coeffs[:, None] * zeta[None, :] ** _orders(P)[:, None], axis=0)
    offsets = positions - np.asarray(center)
    exact = np.sum(charges[:, None]
                   * np.exp(sign * w0[None, :] * offsets[:, 1:2]
                            - 1j * lam[None, :] * offsets[:, 0:1]), axis=0)
    return float(np.max(np.abs(series - exact)))
