"""
Translation operators.

M2M and L2L are the free-space Helmholtz shifts (Graf's addition theorem for
J_p) and are shared by every kernel. M2L for a layered kernel is the matrix
A_{p,q}: the canonical integral between the two box centers with the factor
eta^p zeta^q, all (2P+1)(2Q+1) entries accumulated on one set of nodes.
"""
import logging
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, replace
from typing import Callable, Hashable, Optional, Tuple

import numpy as np
from scipy import special

from .errors import DomainError, GeometryError, NumericalError
from .expansions import (LocalExpansion, MultipoleExpansion, basis_plan_size,
                         source_log_variable, target_log_variable)
from .greens import KernelSpec
from .sommerfeld import (DEFAULT_TOL, MASS_FLOOR, Variant, admissible_separation,
                         choose_direction, default_plan, evaluate)
from .special_functions import bessel_j, hankel1

logger = logging.getLogger(__name__)

Point2 = Tuple[float, float]

DEFAULT_CACHE_MB = 256.0


def _orders(P: int) -> np.ndarray:
    return np.arange(-P, P + 1)


def _offset(a: Point2, b: Point2) -> Tuple[float, float]:
    """Polar form (r, theta) of a - b."""
    dx, dy = a[0] - b[0], a[1] - b[1]
    return math.hypot(dx, dy), math.atan2(dy, dx)


def _shift_matrix(order_out: int, order_in: int, k: float, r: float,
                  phase: float) -> np.ndarray:
    """T[p, p'] = J_{p-p'}(k r) e^{-i (p-p') phase}, the convolution shared by M2M and L2L."""
    difference = _orders(order_out)[:, None] - _orders(order_in)[None, :]
    return np.asarray(bessel_j(difference, k * r)) * np.exp(-1j * difference * phase)


def m2m(child: MultipoleExpansion, parent_center: Point2,
        order: Optional[int] = None) -> MultipoleExpansion:
    """
    Shift a multipole expansion to the parent box center.

    M'_p = sum_q M_{p-q} J_q(k0 r12) e^{-i q theta12}, (r12, theta12) the child
    center relative to the parent center.
    """
    order = child.order if order is None else order
    r, theta = _offset(child.center, parent_center)
    coeffs = _shift_matrix(order, child.order, child.k0, r, theta) @ child.coeffs
    return MultipoleExpansion(tuple(parent_center), child.k0, coeffs)


def l2l(parent: LocalExpansion, child_center: Point2,
        order: Optional[int] = None) -> LocalExpansion:
    """
    Shift a local expansion to a child box center.

    L'_p = sum_q L_{p-q} J_q(k r12) e^{-i q (theta12 - pi)}, (r12, theta12) the
    child center relative to the parent center.
    """
    order = parent.order if order is None else order
    r, theta = _offset(child_center, parent.center)
    coeffs = _shift_matrix(order, parent.order, parent.k, r, theta - math.pi) @ parent.coeffs
    return LocalExpansion(tuple(child_center), parent.k, coeffs)


def m2l_free_space(multipole: MultipoleExpansion, target_center: Point2,
                   P: Optional[int] = None) -> LocalExpansion:
    """
    Free-space Helmholtz M2L from the Hankel addition theorem:
    L_p = (i/4) sum_q M_q H_{q-p}(k |D|) e^{i (q-p) arg D}, D = target - source center.

    Raises:
        GeometryError: If the two centers coincide
    """
    P = multipole.order if P is None else P
    distance, angle = _offset(target_center, multipole.center)
    if distance == 0:
        raise GeometryError("free-space M2L needs separated box centers",
                            tuple(target_center), multipole.center)
    difference = _orders(multipole.order)[None, :] - _orders(P)[:, None]
    matrix = 0.25j * np.asarray(hankel1(difference, multipole.k0 * distance)) \
        * np.exp(1j * difference * angle)
    return LocalExpansion(tuple(target_center), multipole.k0, matrix @ multipole.coeffs)


@dataclass(frozen=True, eq=False)
class M2LMatrix:
    """Entries A_{p,q} (rows p in [-P, P], columns q in [-Q, Q]) for one pair of box centers."""
    source_center: Point2
    target_center: Point2
    spec: KernelSpec
    entries: np.ndarray

    @property
    def P(self) -> int:
        return (self.entries.shape[0] - 1) // 2

    @property
    def Q(self) -> int:
        return (self.entries.shape[1] - 1) // 2


def _log_scaled_bessel_bound(orders: np.ndarray, k: float, radius: float) -> np.ndarray:
    """log of (k r / 2)^{|p|} / |p|!, the size of J_p(k r) inside a box of radius r."""
    p = np.abs(orders).astype(float)
    if k * radius <= 0:
        return np.where(p == 0, 0.0, -np.inf)
    return p * math.log(k * radius / 2.0) - special.gammaln(p + 1.0)


def _weighted_criterion(log_weights: np.ndarray):
    """Accept when max |dA| alpha_p beta_q <= tol max |A| alpha_p beta_q over all entries."""
    weights = np.exp(log_weights - np.max(log_weights))[..., None]

    def criterion(error, value, mass, tol):
        scale = np.maximum(np.abs(value), MASS_FLOOR * mass) * weights
        worst = np.max((error * weights).reshape(-1, error.shape[-1]), axis=0)
        return worst <= tol * np.max(scale.reshape(-1, error.shape[-1]), axis=0)
    return criterion


def m2l_entries(spec: KernelSpec, source_center: Point2, target_center: Point2, P: int, Q: int,
                tol: float = DEFAULT_TOL, target_radius: Optional[float] = None,
                source_radius: Optional[float] = None,
                variant: Variant = Variant.CONTOUR1) -> np.ndarray:
    """
    The (2P+1, 2Q+1) array of A_{p,q} between two centers.

    Accuracy is judged on the entries weighted by the size of J_p and J_q inside
    the two boxes (radii default to a quarter of the modified distance).

    Raises:
        GeometryError: If the centers are not an admissible pair for the kernel
        NumericalError: If the quadrature does not converge (detail carries the orders)
    """
    if P < 0 or Q < 0:
        raise DomainError("M2L orders must be non-negative", "order", (P, Q))
    target = np.asarray(target_center, dtype=float)[None, :]
    source = np.asarray(source_center, dtype=float)[None, :]
    raw = spec.separation(target, source)
    sep = admissible_separation(spec, raw, target, source)
    rho = float(sep.rho[0])
    target_radius = rho / 4.0 if target_radius is None else target_radius
    source_radius = rho / 4.0 if source_radius is None else source_radius

    p = _orders(P)
    q = _orders(Q)
    mirrored = bool(raw.h[0] < 0)
    # free space mirrored in y: A_{p,q} = (-1)^{p+q} A_{-p,-q} of the mirror image
    p_used, q_used = (-p, -q) if mirrored else (p, q)
    log_eta = target_log_variable(spec)
    log_zeta = source_log_variable(spec)

    def factor(pts):
        eta, zeta = log_eta(pts), log_zeta(pts)
        extra = (1,) * np.ndim(eta)
        return (p_used.reshape((-1, 1) + extra) * eta
                + q_used.reshape((1, -1) + extra) * zeta)

    log_weights = (_log_scaled_bessel_bound(p, spec.k_target, target_radius)[:, None]
                   + _log_scaled_bessel_bound(q, spec.k_source, source_radius)[None, :])
    direction = choose_direction(float(sep.dx[0]), float(sep.h[0]))
    plan = replace(default_plan(spec, sep, direction, variant),
                   n_evan=basis_plan_size(P + Q))
    try:
        entries = evaluate(spec, sep, plan, tol, factor,
                           criterion=_weighted_criterion(log_weights))[..., 0]
    except NumericalError as e:
        raise NumericalError(f"M2L matrix P={P}, Q={Q} did not converge: {e.message}",
                             estimate=e.estimate, detail={"orders": (P, Q), "cause": e.detail})
    if mirrored:
        entries = entries * (-1.0) ** np.abs(p[:, None] + q[None, :])
    if not np.all(np.isfinite(entries)):
        bad = np.argwhere(~np.isfinite(entries))[0]
        raise NumericalError("M2L matrix has non-finite entries",
                             detail={"p": int(p[bad[0]]), "q": int(q[bad[1]])})
    return entries


def m2l_matrix(spec: KernelSpec, source_center: Point2, target_center: Point2, P: int,
               Q: int, tol: float = DEFAULT_TOL, **options) -> M2LMatrix:
    """M2L matrix for one pair of centers; see `m2l_entries` for options and errors."""
    entries = m2l_entries(spec, source_center, target_center, P, Q, tol, **options)
    return M2LMatrix(tuple(source_center), tuple(target_center), spec, entries)


def m2l_apply(matrix: M2LMatrix, multipole: MultipoleExpansion) -> LocalExpansion:
    """
    L_p = sum_q A_{p,q} M_q.

    Raises:
        DomainError: If the multipole order or wavenumber does not match the matrix
    """
    if multipole.order != matrix.Q:
        raise DomainError(f"multipole order {multipole.order} does not match matrix order {matrix.Q}",
                          "order", multipole.order)
    if multipole.k0 != matrix.spec.k_source:
        raise DomainError("multipole wavenumber does not match the kernel's source layer",
                          "k0", multipole.k0)
    return LocalExpansion(matrix.target_center, matrix.spec.k_target,
                          matrix.entries @ multipole.coeffs)


class M2LCache:
    """
    LRU cache of M2L entry arrays bounded in megabytes.

    Keys are built by `key`; one lock guards the table, and values are computed
    outside the lock so concurrent misses may compute the same matrix, the first
    insertion wins.
    """

    def __init__(self, max_mb: float = DEFAULT_CACHE_MB):
        if max_mb < 0:
            raise DomainError("cache size must be non-negative", "max_mb", max_mb)
        self.max_bytes = int(max_mb * 1024 * 1024)
        self._entries: "OrderedDict[Hashable, np.ndarray]" = OrderedDict()
        self._bytes = 0
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(spec: KernelSpec, P: int, Q: int, dx: float, a: float, b: float,
            radii: Tuple[float, float]) -> Hashable:
        def snap(value):
            return round(float(value), 10)
        return (spec.cache_key, P, Q, snap(dx), snap(a), snap(b), snap(radii[0]), snap(radii[1]))

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def size_bytes(self) -> int:
        return self._bytes

    def get_or_compute(self, key: Hashable, compute: Callable[[], np.ndarray]) -> np.ndarray:
        with self._lock:
            if key in self._entries:
                self._entries.move_to_end(key)
                self.hits += 1
                return self._entries[key]
            self.misses += 1
        value = compute()
        value.setflags(write=False)
        with self._lock:
            if key in self._entries:
                return self._entries[key]
            if value.nbytes <= self.max_bytes:
                self._entries[key] = value
                self._bytes += value.nbytes
                while self._bytes > self.max_bytes:
                    _, evicted = self._entries.popitem(last=False)
                    self._bytes -= evicted.nbytes
                    logger.debug("M2L cache evicted a %d-byte matrix", evicted.nbytes)
        return value
