"""Gauss-Legendre and Gauss-Laguerre rules for the propagating and evanescent parts."""
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg, special

from .errors import DomainError

MAX_LEGENDRE_NODES = 4096
MAX_LAGUERRE_NODES = 512
NEWTON_STEPS = 2
RESCALE = 1e150


class RuleKind(Enum):
    """Weight function family of a rule."""
    LEGENDRE = "legendre"  # w(x) = 1 on [-1, 1] (or a mapped interval)
    LAGUERRE = "laguerre"  # w(t) = e^{-s t} on [0, inf)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """
    Nodes and weights of a Gauss rule. Arrays are read-only so a cached rule
    can be shared between callers and threads.
    """
    kind: RuleKind
    nodes: np.ndarray
    weights: np.ndarray
    lower: float = -1.0
    upper: float = 1.0
    rate: float = 1.0  # decay rate s of the Laguerre weight e^{-s t}
    log_weights: Optional[np.ndarray] = None  # finite where the weights underflow

    def __post_init__(self):
        if self.log_weights is None:
            with np.errstate(divide="ignore"):
                object.__setattr__(self, "log_weights", np.log(self.weights))
        for array in (self.nodes, self.weights, self.log_weights):
            array.setflags(write=False)

    def __len__(self) -> int:
        return len(self.nodes)

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]):
        """Apply the rule to f (f(x) times the weight function for Laguerre)."""
        return np.sum(self.weights * f(self.nodes), axis=-1)


def _frozen(values: np.ndarray) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@lru_cache(maxsize=256)
def gauss_legendre(n: int) -> QuadratureRule:
    """
    n-point Gauss-Legendre rule on [-1, 1], exact for degree <= 2n - 1.

    Raises:
        DomainError: If n is outside [1, 4096]
    """
    if not 1 <= n <= MAX_LEGENDRE_NODES:
        raise DomainError(f"Legendre rule size must be in [1, {MAX_LEGENDRE_NODES}]", "n", n)
    nodes, weights = special.roots_legendre(n)
    return QuadratureRule(RuleKind.LEGENDRE, _frozen(nodes), _frozen(weights))


def _laguerre_pair(n: int, x: np.ndarray):
    """L_n(x) and L_{n-1}(x), both divided by e^{log_scale}, and log_scale."""
    previous = np.ones_like(x)
    current = 1.0 - x
    log_scale = np.zeros_like(x)
    for k in range(1, n):
        previous, current = current, ((2 * k + 1 - x) * current - k * previous) / (k + 1)
        size = np.maximum(np.abs(current), np.abs(previous))
        big = size > RESCALE
        if np.any(big):
            previous[big] /= size[big]
            current[big] /= size[big]
            log_scale[big] += np.log(size[big])
    return current, previous, log_scale


@lru_cache(maxsize=256)
def gauss_laguerre(n: int) -> QuadratureRule:
    """
    n-point Gauss-Laguerre rule for the weight e^{-t} on [0, inf).

    Nodes are the eigenvalues of the Jacobi matrix, polished by Newton steps
    on a rescaled three-term recurrence; weights x / (n L_{n-1}(x))^2 are
    formed in log form, so no Laguerre polynomial value overflows. Capped at
    512 nodes: beyond that the weights underflow and add nothing.

    Raises:
        DomainError: If n is outside [1, 512]
    """
    if not 1 <= n <= MAX_LAGUERRE_NODES:
        raise DomainError(f"Laguerre rule size must be in [1, {MAX_LAGUERRE_NODES}]", "n", n)
    if n == 1:
        nodes = np.array([1.0])
    else:
        nodes = linalg.eigh_tridiagonal(2.0 * np.arange(n) + 1.0, np.arange(1.0, n),
                                        eigvals_only=True)
    for _ in range(NEWTON_STEPS):
        value, previous, _ = _laguerre_pair(n, nodes)
        nodes = nodes - value * nodes / (n * (value - previous))
    _, previous, log_scale = _laguerre_pair(n, nodes)
    log_weights = np.log(nodes) - 2.0 * (np.log(n) + np.log(np.abs(previous)) + log_scale)
    return QuadratureRule(RuleKind.LAGUERRE, _frozen(nodes), _frozen(np.exp(log_weights)),
                          lower=0.0, upper=np.inf, log_weights=_frozen(log_weights))


def map_to_interval(rule: QuadratureRule, a: float, b: float) -> QuadratureRule:
    """Affinely map a Legendre rule from [-1, 1] to [a, b]."""
    if rule.kind is not RuleKind.LEGENDRE:
        raise DomainError("only Legendre rules map to a finite interval", "rule", rule.kind)
    if not a < b:
        raise DomainError("interval must satisfy a < b", "interval", (a, b))
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    return QuadratureRule(RuleKind.LEGENDRE,
                          _frozen(mid + half * rule.nodes),
                          _frozen(half * rule.weights),
                          lower=a, upper=b)


def scale_laguerre(rule: QuadratureRule, s: float) -> QuadratureRule:
    """Turn a rule for e^{-t} into one for e^{-s t}: nodes t/s, weights w/s."""
    if rule.kind is not RuleKind.LAGUERRE:
        raise DomainError("only Laguerre rules carry a decay rate", "rule", rule.kind)
    if not s > 0:
        raise DomainError("Laguerre decay rate must be positive", "s", s)
    return QuadratureRule(RuleKind.LAGUERRE,
                          _frozen(rule.nodes / s),
                          _frozen(rule.weights / s),
                          lower=0.0, upper=np.inf, rate=rule.rate * s,
                          log_weights=_frozen(rule.log_weights - np.log(s)))


def composite_legendre(breaks: Sequence[float], n: int) -> QuadratureRule:
    """n-point Gauss-Legendre on every panel [breaks[i], breaks[i+1]], concatenated."""
    base = gauss_legendre(n)
    panels = [map_to_interval(base, a, b) for a, b in zip(breaks[:-1], breaks[1:])]
    if not panels:
        raise DomainError("composite rule needs at least two break points", "breaks", breaks)
    return QuadratureRule(RuleKind.LEGENDRE,
                          _frozen(np.concatenate([p.nodes for p in panels])),
                          _frozen(np.concatenate([p.weights for p in panels])),
                          lower=float(breaks[0]), upper=float(breaks[-1]))
