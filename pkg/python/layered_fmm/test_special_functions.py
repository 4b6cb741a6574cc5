import numpy as np
import pytest
from scipy import special

from .errors import DomainError
from .special_functions import (MAX_ORDER, SqrtBranch, bessel_j, bessel_j_asymptotic,
                                hankel1, tail_radical, w_sqrt)


def test_bessel_j_matches_known_values():
    """J_0 and J_1 at a few arguments from the tables."""
    assert bessel_j(0, 0.0) == 1.0
    assert bessel_j(3, 0.0) == 0.0
    assert bessel_j(0, 1.0) == pytest.approx(0.7651976865579666, rel=1e-14)
    assert bessel_j(1, 2.0) == pytest.approx(0.5767248077568734, rel=1e-14)


def test_bessel_j_negative_order_symmetry():
    """J_{-p} = (-1)^p J_p."""
    z = np.linspace(0.1, 30.0, 50)
    for p in range(1, 12):
        np.testing.assert_allclose(bessel_j(-p, z), (-1) ** p * bessel_j(p, z), rtol=1e-14)


def test_bessel_j_broadcasts_over_order_and_argument():
    """Orders along one axis and arguments along the other."""
    orders = np.arange(-5, 6)[:, None]
    z = np.array([0.5, 1.0, 4.0])[None, :]
    values = bessel_j(orders, z)
    assert values.shape == (11, 3)
    np.testing.assert_allclose(values, special.jv(orders, z), rtol=1e-15)


def test_hankel_first_kind():
    """H_0(1) = J_0(1) + i Y_0(1)."""
    value = hankel1(0, 1.0)
    assert value.real == pytest.approx(0.7651976865579666, rel=1e-14)
    assert value.imag == pytest.approx(0.08825696421567696, rel=1e-13)


def test_hankel_wronskian():
    """J_{p+1} Y_p - J_p Y_{p+1} = 2 / (pi z), written with H = J + iY."""
    z = np.linspace(0.5, 20.0, 30)
    for p in (0, 3, 10):
        h_p, h_q = hankel1(p, z), hankel1(p + 1, z)
        wronskian = bessel_j(p + 1, z) * h_p.imag - bessel_j(p, z) * h_q.imag
        np.testing.assert_allclose(wronskian, 2.0 / (np.pi * z), rtol=1e-10)


def test_bessel_order_checks():
    """Non-integer, too large and negative-argument inputs are domain errors."""
    with pytest.raises(DomainError):
        bessel_j(0.5, 1.0)
    with pytest.raises(DomainError):
        bessel_j(MAX_ORDER + 1, 1.0)
    with pytest.raises(DomainError):
        bessel_j(1, -1.0)
    with pytest.raises(DomainError):
        hankel1(0, 0.0)


def test_asymptotic_form_tracks_large_orders():
    """The one-term form is within a few percent once p >> z."""
    for p in (40, 80):
        exact = bessel_j(p, 2.0)
        assert bessel_j_asymptotic(p, 2.0) == pytest.approx(exact, rel=0.05)


def test_asymptotic_form_underflows_to_zero():
    """Very large orders give 0, not NaN."""
    assert bessel_j_asymptotic(5000, 0.1) == 0.0


class TestSqrtBranch:
    """Branch rule of w(lam, k) = sqrt(lam^2 - k^2)."""

    def test_evanescent_root_is_positive(self):
        """|lam| > k gives the non-negative real root."""
        assert w_sqrt(5.0, 3.0) == pytest.approx(4.0)
        assert w_sqrt(-5.0, 3.0) == pytest.approx(4.0)

    def test_propagating_root_is_negative_imaginary(self):
        """|lam| < k gives -i sqrt(k^2 - lam^2)."""
        assert w_sqrt(0.0, 2.0) == pytest.approx(-2j)
        assert w_sqrt(1.2, 2.0) == pytest.approx(-1.6j)

    def test_square_recovers_argument(self):
        """w^2 = lam^2 - k^2 on both sides of the branch point."""
        lam = np.linspace(-4.0, 4.0, 401)
        w = w_sqrt(lam, 1.5)
        np.testing.assert_allclose(w * w, lam * lam - 2.25, atol=1e-12)
        assert np.all(w.real >= 0)
        assert np.all(w.imag <= 0)

    def test_no_cancellation_near_branch_point(self):
        """lam = k (1 + 1e-12) keeps relative accuracy."""
        k = 1.0
        lam = k * (1 + 1e-12)
        expected = np.sqrt((lam - k) * (lam + k))
        assert w_sqrt(lam, k) == pytest.approx(expected, rel=1e-9)

    def test_complex_argument_is_even(self):
        """w(-z) = w(z) off the real axis."""
        z = np.array([2.0 + 0.5j, 0.3 + 1.0j, -1.0 + 0.2j])
        np.testing.assert_allclose(w_sqrt(-z, 1.0), w_sqrt(z, 1.0), rtol=1e-15)

    def test_rejects_non_positive_wavenumber(self):
        """k must be positive."""
        with pytest.raises(DomainError):
            SqrtBranch()(1.0, 0.0)


def test_tail_radical_continues_real_rule():
    """On the real tail t = w(lam, K) >= 0 the tail form agrees with w_sqrt."""
    K, k = 3.0, 1.0
    t = np.linspace(0.0, 5.0, 21)
    lam = np.sqrt(t * t + K * K)
    np.testing.assert_allclose(tail_radical(t, K, k), w_sqrt(lam, k), rtol=1e-14)
    np.testing.assert_allclose(tail_radical(t, K, K), t, rtol=0, atol=0)
