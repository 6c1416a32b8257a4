import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from movarray.numerics import (
    ConvergenceError,
    DomainError,
    NotPSDError,
    QuadratureSpec,
    bessel_j0,
    bessel_j1,
    general_complex_eig,
    hermitian_eig,
    integrate_half_line,
    integrate_interval,
    integrate_real_line,
    psd_sqrt,
    regularized_lower_gamma,
)

finite_x = st.floats(-500, 500, allow_nan=False)


def _series_j0(x, terms=60):
    # independent power series in exact rationals scaled to float
    total, term = mpmath.mpf(0), mpmath.mpf(1)
    x2 = mpmath.mpf(x) ** 2 / 4
    for k in range(terms):
        total += term
        term *= -x2 / ((k + 1) ** 2)
    return float(total)


class TestBessel:
    def test_origin(self):
        assert bessel_j0(0.0) == 1.0
        assert bessel_j1(0.0) == 0.0

    def test_first_zero(self):
        assert abs(bessel_j0(2.404825557695773)) < 1e-10

    def test_at_pi_against_series(self):
        assert bessel_j0(math.pi) == pytest.approx(_series_j0(math.pi), abs=1e-13)
        assert bessel_j0(math.pi) == pytest.approx(-0.304242, abs=1e-6)

    @pytest.mark.parametrize("order,fn", [(0, bessel_j0), (1, bessel_j1)])
    def test_against_mpmath_on_grid(self, order, fn):
        xs = np.concatenate([np.linspace(0, 30, 301), np.linspace(30, 500, 471)])
        got = fn(xs)
        ref = np.array([float(mpmath.besselj(order, x)) for x in xs])
        assert np.max(np.abs(got - ref)) < 1e-12

    @given(finite_x)
    def test_symmetry(self, x):
        assert bessel_j0(-x) == bessel_j0(x)
        assert bessel_j1(-x) == -bessel_j1(x)

    @given(st.floats(0, 500))
    def test_bounded(self, x):
        assert abs(bessel_j0(x)) <= 1.0 + 1e-15
        assert abs(bessel_j1(x)) <= 0.5820 + 1e-12

    @given(st.floats(0.5, 400))
    def test_derivative_identity(self, x):
        # J0' = -J1, checked with a central difference
        h = 1e-5
        fd = (bessel_j0(x + h) - bessel_j0(x - h)) / (2 * h)
        assert fd == pytest.approx(-bessel_j1(x), abs=1e-8)

    @pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
    def test_non_finite(self, bad):
        with pytest.raises(DomainError):
            bessel_j0(bad)
        with pytest.raises(DomainError):
            bessel_j1(np.array([0.0, bad]))

    def test_array_shape(self):
        x = np.linspace(0, 10, 12).reshape(3, 4)
        assert bessel_j0(x).shape == (3, 4)


class TestIncompleteGamma:
    def test_exponential_case(self):
        assert regularized_lower_gamma(1, 1.0) == pytest.approx(1 - math.exp(-1), rel=1e-15)

    def test_erlang_case(self):
        assert regularized_lower_gamma(4, 4.0) == pytest.approx(0.566529879633291, rel=1e-13)

    @given(st.integers(1, 12), st.floats(0, 80))
    def test_against_mpmath(self, m, x):
        ref = float(mpmath.gammainc(m, 0, x, regularized=True))
        assert regularized_lower_gamma(m, x) == pytest.approx(ref, rel=1e-12, abs=1e-300)

    def test_edges(self):
        assert regularized_lower_gamma(3, 0.0) == 0.0
        assert regularized_lower_gamma(3, math.inf) == 1.0

    @given(st.integers(1, 10), st.floats(0, 40), st.floats(0, 5))
    def test_monotone_in_x(self, m, x, dx):
        assert regularized_lower_gamma(m, x + dx) >= regularized_lower_gamma(m, x)

    @pytest.mark.parametrize("m,x", [(0, 1.0), (1.5, 1.0), (2, -0.1)])
    def test_domain(self, m, x):
        with pytest.raises(DomainError):
            regularized_lower_gamma(m, x)


class TestQuadrature:
    def test_spec_invariants(self):
        with pytest.raises(DomainError):
            QuadratureSpec(abs_tol=0)
        with pytest.raises(DomainError):
            QuadratureSpec(max_panels=0)
        with pytest.raises(DomainError):
            QuadratureSpec(truncation_threshold=-1)

    def test_gaussian(self):
        val = integrate_real_line(lambda t: np.exp(-t * t))
        assert val.real == pytest.approx(math.sqrt(math.pi), rel=1e-12)
        assert abs(val.imag) < 1e-15

    def test_algebraic_tail(self):
        val = integrate_real_line(lambda t: 1.0 / (1.0 + t * t), QuadratureSpec(1e-10, 1e-10),
                                  hermitian=True)
        assert val.real == pytest.approx(math.pi, rel=1e-8)

    def test_fourier_of_lorentzian(self):
        # int cos(t)/(1+t^2) = pi/e, needs the oscillatory mode
        spec = QuadratureSpec(1e-10, 1e-10)
        val = integrate_real_line(lambda t: np.exp(1j * t) / (1 + t * t), spec,
                                  hermitian=True, oscillation=1.0)
        assert val.real == pytest.approx(math.pi / math.e, abs=1e-8)

    def test_gamma_characteristic_inversion(self):
        # density of Exp(1) at x=1 from its characteristic function 1/(1 - jt)
        spec = QuadratureSpec(1e-10, 1e-10)
        val = integrate_real_line(lambda t: np.exp(-1j * t) / (1 - 1j * t) ** 2, spec,
                                  hermitian=True, oscillation=1.0)
        # second-order pole gives the Erlang(2) density x e^-x at x=1
        assert val.real / (2 * math.pi) == pytest.approx(math.exp(-1), abs=1e-8)

    def test_interval(self):
        val, err = integrate_interval(np.sin, 0.0, math.pi)
        assert val == pytest.approx(2.0, rel=1e-13)
        assert err < 1e-9

    def test_budget_exhaustion_reports_estimate(self):
        with pytest.raises(ConvergenceError) as info:
            integrate_half_line(lambda t: 1.0 / (1.0 + t), QuadratureSpec(max_panels=20))
        assert np.isfinite(info.value.estimate)

    @given(st.floats(0.2, 5.0))
    def test_scaled_gaussian(self, a):
        val = integrate_real_line(lambda t: np.exp(-a * t * t), hermitian=True)
        assert val.real == pytest.approx(math.sqrt(math.pi / a), rel=1e-9)


def _random_hermitian(seed, n):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return a + a.conj().T


class TestEigen:
    @given(st.integers(0, 10_000), st.integers(1, 8))
    def test_hermitian_eig_contract(self, seed, n):
        a = _random_hermitian(seed, n)
        w, u = hermitian_eig(a)
        assert np.all(np.diff(w) <= 0)
        assert np.allclose(u.conj().T @ u, np.eye(n), atol=1e-12)
        assert np.allclose((u * w) @ u.conj().T, a, atol=1e-10)

    def test_rejects_non_hermitian(self):
        with pytest.raises(DomainError):
            hermitian_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))
        with pytest.raises(DomainError):
            hermitian_eig(np.ones((2, 3)))

    def test_general_triangular(self):
        a = np.array([[1 + 1j, 5.0], [0.0, 2 - 3j]])
        assert sorted(general_complex_eig(a), key=lambda z: z.real) == pytest.approx([1 + 1j, 2 - 3j])

    @given(st.integers(0, 10_000), st.integers(1, 6))
    def test_general_matches_trace_and_det(self, seed, n):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        ev = general_complex_eig(a)
        assert np.sum(ev) == pytest.approx(np.trace(a), abs=1e-9)
        assert np.prod(ev) == pytest.approx(np.linalg.det(a), rel=1e-8, abs=1e-9)

    def test_general_rejects_nan(self):
        with pytest.raises(DomainError):
            general_complex_eig(np.array([[np.nan]]))

    @given(st.integers(0, 10_000), st.integers(1, 6))
    def test_psd_sqrt_squares_back(self, seed, n):
        rng = np.random.default_rng(seed)
        g = rng.standard_normal((n, n))
        a = g @ g.T
        r = psd_sqrt(a)
        assert np.allclose(r, r.T)
        assert np.allclose(r @ r, a, atol=1e-9 * max(1, np.abs(a).max()))
        assert np.linalg.eigvalsh(r).min() >= -1e-12

    def test_psd_sqrt_clips_round_off(self):
        a = np.array([[1.0, 1.0], [1.0, 1.0]]) + np.diag([0.0, -1e-14])
        r = psd_sqrt(a)
        assert np.allclose(r @ r, [[1, 1], [1, 1]], atol=1e-12)

    def test_psd_sqrt_rejects_indefinite(self):
        with pytest.raises(NotPSDError):
            psd_sqrt(np.diag([1.0, -0.5]))
