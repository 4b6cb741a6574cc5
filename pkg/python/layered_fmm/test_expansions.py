import math

import numpy as np
import pytest

from .errors import DomainError, GeometryError
from .expansions import (MIN_ORDER, LocalExpansion, MultipoleExpansion, Role, estimate_order,
                         l2t, laurent_check, m2t, modified_distance, phi_terms, psi_terms, s2m)
from .greens import make_dirichlet_scattered, make_free_space, reference_value
from .special_functions import bessel_j, hankel1


@pytest.fixture
def cluster():
    """Five charges within 0.3 of the origin."""
    rng = np.random.default_rng(11)
    radius = rng.uniform(0.0, 0.3, size=5)
    angle = rng.uniform(0.0, 2 * np.pi, size=5)
    charges = rng.normal(size=5) + 1j * rng.normal(size=5)
    return [((r * np.cos(t), r * np.sin(t)), q) for r, t, q in zip(radius, angle, charges)]


class TestSourceToMultipole:

    def test_charge_at_center_is_monopole(self):
        multipole = s2m([((1.0, 2.0), 2.0 - 1j)], (1.0, 2.0), 1.0, 6)
        assert multipole.order == 6
        assert multipole.coefficient(0) == 2.0 - 1j
        assert multipole.coefficient(3) == 0
        assert multipole.coefficient(9) == 0

    def test_empty_and_invalid(self):
        np.testing.assert_array_equal(s2m([], (0.0, 0.0), 1.0, 3).coeffs, np.zeros(7))
        with pytest.raises(DomainError):
            s2m([((0.0, 0.0), 1.0)], (0.0, 0.0), 1.0, -1)

    @pytest.mark.parametrize("sign", [1, -1])
    def test_laurent_series_reproduces_spectral_factor(self, cluster, sign):
        """sum_p M_p zeta^p equals the exact source factor on and off the propagating band."""
        lambdas = np.linspace(-1.5, 1.5, 61)
        assert laurent_check(cluster, (0.0, 0.0), 1.0, sign, lambdas, 24) < 1e-10


def test_l2t_sums_bessel_terms():
    """L_0 = 1 alone gives J_0(k r), L_1 = 1 gives J_1(k r) e^{i theta}."""
    coeffs = np.zeros(5, dtype=complex)
    coeffs[2] = 1.0
    local = LocalExpansion((1.0, 1.0), 2.0, coeffs)
    assert l2t(local, (1.0, 1.5)) == pytest.approx(bessel_j(0, 1.0))
    values = l2t(local, np.array([[1.0, 1.5], [2.0, 1.0]]))
    np.testing.assert_allclose(values, [bessel_j(0, 1.0), bessel_j(0, 2.0)])

    coeffs[:] = 0
    coeffs[3] = 1.0
    assert l2t(local, (1.0, 1.5)) == pytest.approx(bessel_j(1, 1.0) * 1j)


class TestFreeSpaceBasis:
    """For free space Phi_p = (i/4) H_p(k rho) e^{i p phi}, Psi_p = (i/4) H_p(k rho) e^{-i p phi}."""

    @pytest.mark.parametrize("point", [(0.5, 2.0), (2.5, 0.4), (0.3, -1.5)])
    def test_multipole_basis(self, point):
        k, center = 1.2, (0.0, 0.0)
        orders = np.arange(-3, 4)
        rho, phi = np.hypot(*point), np.arctan2(point[1], point[0])
        expected = 0.25j * hankel1(orders, k * rho) * np.exp(1j * orders * phi)
        values = phi_terms(orders, point, make_free_space(k), center)
        np.testing.assert_allclose(values, expected, rtol=1e-8)

    def test_local_basis(self):
        k, center, source = 0.8, (0.0, 0.0), (0.6, -2.0)
        orders = np.arange(-3, 4)
        rho, phi = np.hypot(*source), np.arctan2(source[1], source[0])
        expected = 0.25j * hankel1(orders, k * rho) * np.exp(-1j * orders * phi)
        values = psi_terms(orders, source, make_free_space(k), center)
        np.testing.assert_allclose(values, expected, rtol=1e-8)


def test_multipole_evaluation_of_image_kernel(cluster):
    """sum_p M_p Phi_p reproduces the Dirichlet image field of the charges."""
    spec = make_dirichlet_scattered(1.0)
    shifted = [((x, y + 0.5), q) for (x, y), q in cluster]
    multipole = s2m(shifted, (0.0, 0.5), spec.k_source, 16)
    target = (1.0, 1.5)
    expected = sum(q * reference_value(spec, target, point) for point, q in shifted)
    assert m2t(multipole, target, spec) == pytest.approx(expected, rel=1e-8)


def test_modified_distance_uses_image():
    distance = modified_distance(make_dirichlet_scattered(1.0), (0.0, 2.0), (0.0, 1.0))
    assert distance.rho == pytest.approx(3.0)
    assert distance.role is Role.MULTIPOLE
    assert modified_distance(make_free_space(1.0), (3.0, 0.0), (0.0, 4.0), "local").rho == \
        pytest.approx(5.0)


class TestEstimateOrder:

    def test_geometric_bound(self):
        """(1/2)^{P+1} / (1/2) <= 1e-6 first holds at P = 20."""
        assert estimate_order(1.0, 2.0, 1e-6) == 20

    def test_study_geometry(self):
        """r / rho = 1.5 / sqrt(13) ~ 0.416: ceil(log(1e-6 * 0.584) / log(0.416)) - 1 = 16."""
        assert estimate_order(0.416, 1.0, 1e-6) == 16
        assert estimate_order(1.5, math.sqrt(13.0), 1e-6) == 16

    def test_wavelength_bound(self):
        assert estimate_order(1.0, 2.0, 1e-6, k_pair=20.0) == 28

    def test_floor(self):
        assert estimate_order(0.0, 1.0, 1e-6) == MIN_ORDER
        assert estimate_order(0.01, 10.0, 0.5) == MIN_ORDER

    def test_errors(self):
        with pytest.raises(GeometryError):
            estimate_order(2.0, 2.0, 1e-6)
        with pytest.raises(DomainError):
            estimate_order(1.0, 2.0, 0.0)


def test_zero_expansions():
    assert MultipoleExpansion.zeros((0.0, 0.0), 1.0, 3).coeffs.shape == (7,)
    assert LocalExpansion.zeros((0.0, 0.0), 1.0, 2).order == 2
