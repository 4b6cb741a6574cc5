"""Bessel and Hankel functions of integer order and the radical branch rule.

Every Sommerfeld integrand in this package goes through `w_sqrt` (or its tail form
`tail_radical`) so that the choice of branch lives in exactly one place.
"""
import logging
from typing import Union

import numpy as np
from scipy import special

from .errors import DomainError, NumericalError

logger = logging.getLogger(__name__)

MAX_ORDER = 10_000

ArrayLike = Union[float, complex, np.ndarray]


def _check_order(p) -> np.ndarray:
    order = np.asarray(p)
    if not np.issubdtype(order.dtype, np.integer):
        if not np.all(np.equal(np.mod(order, 1), 0)):
            raise DomainError("Bessel order must be an integer", "p", p)
        order = order.astype(np.int64)
    if np.any(np.abs(order) > MAX_ORDER):
        raise DomainError(f"Bessel order exceeds {MAX_ORDER}", "p", p)
    return order


def _finite_or_raise(values: np.ndarray, what: str, p, z) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise NumericalError(f"{what} is not finite", estimate=values,
                             detail={"p": p, "z": z})
    return values


def _unwrap(values: np.ndarray):
    return values.item() if values.ndim == 0 else values


def bessel_j(p, z) -> ArrayLike:
    """
    Bessel function of the first kind J_p(z) for integer p and z >= 0.

    Args:
        p: Integer order (scalar or array), |p| <= 10^4
        z: Non-negative argument (scalar or array)

    Returns:
        J_p(z), broadcast over p and z

    Raises:
        DomainError: If p is not an integer, too large, or z is negative
        NumericalError: If the library returns a non-finite value
    """
    order = _check_order(p)
    arg = np.asarray(z, dtype=float)
    if np.any(arg < 0):
        raise DomainError("Bessel argument must be non-negative", "z", z)
    values = special.jv(order, arg)
    return _unwrap(_finite_or_raise(np.asarray(values), "J_p(z)", p, z))


def hankel1(p, z) -> ArrayLike:
    """
    Hankel function of the first kind H_p^(1)(z) = J_p(z) + iY_p(z).

    Raises:
        DomainError: If z <= 0 (the function is singular at the origin)
        NumericalError: If the value overflows
    """
    order = _check_order(p)
    arg = np.asarray(z, dtype=float)
    if np.any(arg <= 0):
        raise DomainError("Hankel argument must be positive", "z", z)
    values = special.hankel1(order, arg)
    return _unwrap(_finite_or_raise(np.asarray(values), "H_p(z)", p, z))


def bessel_j_asymptotic(p, z) -> ArrayLike:
    """
    One-term large-order form J_p(z) ~ (1/sqrt(2 pi p)) (e z / 2p)^p.

    Evaluated in the log domain, so tiny values underflow to 0 instead of
    producing NaN. Only the order estimator and the tests use it.
    """
    order = np.asarray(p, dtype=float)
    if np.any(order < 1):
        raise DomainError("asymptotic form needs order >= 1", "p", p)
    arg = np.asarray(z, dtype=float)
    magnitude = np.abs(arg)
    with np.errstate(divide="ignore"):
        log_value = (order * np.log(np.e * magnitude / (2.0 * order))
                     - 0.5 * np.log(2.0 * np.pi * order))
    values = np.where(magnitude > 0, np.exp(log_value), 0.0)
    values = np.where(arg < 0, values * (-1.0) ** order, values)
    return _unwrap(np.asarray(values))


class SqrtBranch:
    """
    Branch rule for w(lam, k) = sqrt(lam^2 - k^2).

    Real lam, |lam| >= k: the non-negative root.
    Real lam, |lam| < k: -i sqrt(k^2 - lam^2), so e^{-w y} is an outgoing wave.
    Complex lam: sqrt(z - k) sqrt(z + k) with principal roots and z = lam folded to
    Re z >= 0 (w is even in lam). The real segment (-k, k) is a cut that no
    integration contour in this package crosses.

    The root is always formed as a product so lam close to k does not cancel.
    """

    def __call__(self, lam, k: float) -> ArrayLike:
        if k <= 0:
            raise DomainError("wavenumber must be positive", "k", k)
        values = np.asarray(lam)
        if np.iscomplexobj(values):
            on_axis = values.imag == 0
            folded = np.where(values.real < 0, -values, values)
            result = np.sqrt(folded - k) * np.sqrt(folded + k)
            if np.any(on_axis):
                result = np.where(on_axis, self._real_rule(values.real, k), result)
        else:
            result = self._real_rule(values.astype(float), k)
        return _unwrap(np.asarray(result))

    @staticmethod
    def _real_rule(lam: np.ndarray, k: float) -> np.ndarray:
        magnitude = np.abs(lam)
        evanescent = np.sqrt(np.maximum(magnitude - k, 0.0)) * np.sqrt(magnitude + k)
        propagating = -1j * np.sqrt(np.maximum(k - magnitude, 0.0)) * np.sqrt(k + magnitude)
        return np.where(magnitude >= k, evanescent + 0j, propagating)


DEFAULT_BRANCH = SqrtBranch()


def w_sqrt(lam, k: float) -> ArrayLike:
    """w(lam, k) = sqrt(lam^2 - k^2) under the package branch rule."""
    return DEFAULT_BRANCH(lam, k)


def tail_radical(t, K: float, k: float) -> np.ndarray:
    """
    w(lam, k) on a tail parametrized by t = w(lam, K), i.e. sqrt(t^2 + K^2 - k^2).

    Principal root. Used on the real tails and on both deformed contours, where
    t stays off the imaginary axis, so the root is the continuation of the
    real-axis rule. K^2 - k^2 is formed as a product to keep t small accurate.
    """
    t = np.asarray(t)
    if K == k:
        return t + 0j
    return np.sqrt(t * t + (K - k) * (K + k) + 0j)
