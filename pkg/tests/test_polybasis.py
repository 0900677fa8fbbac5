import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.integrate import quad

from kernel_spectra import polybasis as pb

SQRT_2_PI = math.sqrt(2.0 / math.pi)


def hermite_explicit(l):
    """Independent oracle: the closed-form sum for the Hermite coefficients."""
    coeffs = [0.0] * (l + 1)
    for k in range(l // 2 + 1):
        coeffs[l - 2 * k] = (
            math.factorial(l) * (-0.5) ** k / (math.factorial(k) * math.factorial(l - 2 * k))
        )
    return np.array(coeffs) / math.sqrt(math.factorial(l))


class TestHermite:
    def test_low_degrees(self):
        assert pb.hermite_orthonormal(0).monomial_coeffs == (1.0,)
        assert pb.hermite_orthonormal(1).monomial_coeffs == (0.0, 1.0)
        h2 = pb.hermite_orthonormal(2).monomial_coeffs
        assert h2 == pytest.approx((-1 / math.sqrt(2), 0.0, 1 / math.sqrt(2)), abs=1e-15)

    @pytest.mark.parametrize("l", range(13))
    def test_matches_explicit_formula(self, l):
        got = np.array(pb.hermite_orthonormal(l).monomial_coeffs)
        assert np.allclose(got, hermite_explicit(l), rtol=1e-13, atol=1e-13)

    def test_derivative_identity_exact_integers(self):
        # d/dx He_l = l He_{l-1} holds exactly in the integer recurrence
        for l in range(1, 20):
            he = pb._hermite_he_int_coeffs(l)
            lower = pb._hermite_he_int_coeffs(l - 1)
            deriv = tuple(j * he[j] for j in range(1, l + 1))
            assert deriv == tuple(l * c for c in lower)

    def test_derivative_identity_floating(self):
        for l in range(1, 13):
            hl = np.array(pb.hermite_orthonormal(l).monomial_coeffs)
            hlm1 = np.array(pb.hermite_orthonormal(l - 1).monomial_coeffs)
            deriv = hl[1:] * np.arange(1, l + 1)
            assert np.allclose(deriv, math.sqrt(l) * hlm1, atol=1e-12)

    def test_orthonormality_under_200_node_rule(self):
        rule = pb.gauss_hermite_rule(200)
        polys = [pb.hermite_orthonormal(l) for l in range(13)]
        vals = np.array([pb.eval_poly(c, rule.nodes) for c in polys])
        gram = (vals * rule.weights) @ vals.T
        assert np.max(np.abs(gram - np.eye(13))) <= 1e-10

    def test_degree_cap(self):
        pb.hermite_orthonormal(64)
        with pytest.raises(ValueError):
            pb.hermite_orthonormal(65)


class TestEvalPoly:
    def test_linear_at_point(self):
        assert pb.eval_poly(pb.hermite_orthonormal(1), 2.5) == 2.5

    def test_h2_root(self):
        assert pb.eval_poly(pb.hermite_orthonormal(2), 1.0) == pytest.approx(0.0, abs=1e-15)

    def test_odd_at_origin(self):
        assert pb.eval_poly(pb.hermite_orthonormal(3), 0.0) == 0.0

    def test_vectorized(self):
        xs = np.linspace(-2, 2, 7)
        got = pb.eval_poly(pb.hermite_orthonormal(2), xs)
        assert np.allclose(got, (xs ** 2 - 1) / math.sqrt(2))


class TestQuadratureRule:
    def test_weights_sum_to_one(self):
        for n in (24, 200):
            rule = pb.gauss_hermite_rule(n)
            assert abs(rule.weights.sum() - 1.0) <= 1e-12

    def test_polynomial_exactness(self):
        n = 24
        rule = pb.gauss_hermite_rule(n)
        for k in range(0, 2 * n - 1):
            got = float(np.dot(rule.weights, rule.nodes ** k))
            expect = 0.0 if k % 2 else float(pb._double_factorial(k))
            # relative to the scale of the absolute-moment integrand
            scale = float(np.dot(rule.weights, np.abs(rule.nodes) ** k))
            assert abs(got - expect) <= 1e-10 * max(scale, 1.0)


class TestMoments:
    def test_second_moment_is_one(self):
        for p in (1, 3, 10, 500):
            assert pb.gaussian_inner_moments(p, 2).moments[2] == 1.0
        for p in (2, 10, 500):
            assert pb.sphere_inner_moments(p, 2).moments[2] == 1.0

    def test_odd_moments_vanish(self):
        g = pb.gaussian_inner_moments(10, 9)
        s = pb.sphere_inner_moments(10, 9)
        assert all(g.moments[k] == 0.0 for k in range(1, 10, 2))
        assert all(s.moments[k] == 0.0 for k in range(1, 10, 2))

    def test_frozen_fourth_moments(self):
        # hand Wick expansion: E xi^4 = 3 + 6/p; sphere divides the product out
        assert pb.gaussian_inner_moments(10, 4).moments[4] == pytest.approx(3.6, abs=1e-14)
        assert pb.sphere_inner_moments(10, 4).moments[4] == pytest.approx(2.5, abs=1e-14)

    def test_consistency_identity_exact(self):
        # sphere moment times (E|X|^{2m})^2 equals the gaussian moment, exactly
        for p in (3, 7, 50):
            for m in range(1, 9):
                prod = Fraction(1)
                for j in range(m):
                    prod *= Fraction(p + 2 * j, p)
                lhs = pb.sphere_inner_moment_exact(p, 2 * m) * prod * prod
                assert lhs == pb.gaussian_inner_moment_exact(p, 2 * m)

    def test_limit_is_gaussian(self):
        g = pb.gaussian_inner_moments(10 ** 9, 12)
        u = pb.unit_gaussian_moments(12)
        assert np.allclose(g.moments, u.moments, rtol=1e-6)

    def test_hankel_positive_definite(self):
        for make, p in ((pb.gaussian_inner_moments, 5), (pb.sphere_inner_moments, 5)):
            m = make(p, 12)
            H = np.array([[m.moments[i + j] for j in range(7)] for i in range(7)])
            assert np.all(np.linalg.eigvalsh(H) > 0)

    def test_validation(self):
        with pytest.raises(ValueError):
            pb.gaussian_inner_moments(0, 4)
        with pytest.raises(ValueError):
            pb.sphere_inner_moments(1, 4)


class TestOrthonormalFromMoments:
    def test_unit_gaussian_reproduces_hermite(self):
        m = pb.unit_gaussian_moments(16)
        for l in range(9):
            got = np.array(pb.orthonormal_from_moments(m, l).monomial_coeffs)
            want = np.array(pb.hermite_orthonormal(l).monomial_coeffs)
            assert np.max(np.abs(got - want)) <= 1e-10

    def test_degree_one_is_identity(self):
        m = pb.gaussian_inner_moments(37, 4)
        assert pb.orthonormal_from_moments(m, 1).monomial_coeffs == pytest.approx((0.0, 1.0))

    @pytest.mark.parametrize("p", [10, 100, 1000])
    def test_degree_two_closed_form(self, p):
        m = pb.gaussian_inner_moments(p, 4)
        got = np.array(pb.orthonormal_from_moments(m, 2).monomial_coeffs)
        scale = 1.0 / math.sqrt(2.0 + 6.0 / p)
        assert np.max(np.abs(got - np.array([-scale, 0.0, scale]))) <= 1e-10

    def test_leading_coefficient_positive(self):
        m = pb.sphere_inner_moments(25, 12)
        for l in range(7):
            assert pb.orthonormal_from_moments(m, l).monomial_coeffs[-1] > 0

    def test_orthonormal_under_own_moments(self):
        m = pb.gaussian_inner_moments(20, 12)
        mus = np.array(m.moments)
        polys = [np.array(pb.orthonormal_from_moments(m, l).monomial_coeffs) for l in range(6)]
        for i, pi in enumerate(polys):
            for j, pj in enumerate(polys):
                acc = 0.0
                for r, cr in enumerate(pi):
                    for s, cs in enumerate(pj):
                        acc += cr * cs * mus[r + s]
                assert acc == pytest.approx(1.0 if i == j else 0.0, abs=1e-12)

    def test_degenerate_moments_error(self):
        # two-point distribution at +-1: Hankel of degree 2 is singular
        m = pb.MomentSequence(model="unit-gaussian", p=None, moments=(1.0, 0.0, 1.0, 0.0, 1.0))
        with pytest.raises(pb.DegenerateMomentsError):
            pb.orthonormal_from_moments(m, 2)

    def test_coefficient_drift_halving(self):
        # coefficient distance to the Gaussian limit scales like 1/p
        for l in range(2, 7):
            h = np.array(pb.hermite_orthonormal(l).monomial_coeffs)
            for p in (50, 100, 200, 400):
                d1 = np.max(np.abs(np.array(
                    pb.orthonormal_from_moments(pb.gaussian_inner_moments(p, 2 * l), l).monomial_coeffs) - h))
                d2 = np.max(np.abs(np.array(
                    pb.orthonormal_from_moments(pb.gaussian_inner_moments(2 * p, 2 * l), l).monomial_coeffs) - h))
                assert 1.5 <= d1 / d2 <= 2.5


class TestExpansionCoefficients:
    def test_sign_kernel_low_coefficients(self):
        from kernel_spectra.kernels import sign_kernel
        coeffs = pb.expansion_coefficients(sign_kernel(), basis="hermite", L=6)
        assert coeffs[1] == pytest.approx(SQRT_2_PI, abs=1e-10)
        assert coeffs[0] == pytest.approx(0.0, abs=1e-12)
        assert coeffs[2] == pytest.approx(0.0, abs=1e-12)
        assert coeffs[4] == pytest.approx(0.0, abs=1e-12)
        # frozen from the adaptive-quadrature oracle below
        assert coeffs[3] == pytest.approx(-0.3257350079352802, abs=1e-10)

    def test_sign_c3_against_adaptive_oracle(self):
        from kernel_spectra.kernels import sign_kernel
        h3 = pb.hermite_orthonormal(3)

        def integrand(x):
            return np.sign(x) * pb.eval_poly(h3, x) * math.exp(-x * x / 2) / math.sqrt(2 * math.pi)

        left, _ = quad(integrand, -np.inf, 0.0, limit=200)
        right, _ = quad(integrand, 0.0, np.inf, limit=200)
        oracle = left + right
        got = pb.expansion_coefficients(sign_kernel(), basis="hermite", L=3)[3]
        assert got == pytest.approx(oracle, abs=1e-9)
        assert oracle == pytest.approx(-SQRT_2_PI / math.sqrt(6), abs=1e-12)

    def test_parseval_partial_sums(self):
        from kernel_spectra.kernels import sign_kernel
        coeffs = pb.expansion_coefficients(sign_kernel(), basis="hermite", L=21)
        sums = np.cumsum(coeffs ** 2)
        assert np.all(sums <= 1.0 + 1e-9)     # E[sign^2] = 1
        # tail decays like L^(-1/2); monotone approach toward the full mass
        assert sums[-1] >= 0.85
        assert sums[-1] > sums[5]

    def test_linear_kernel_single_term(self):
        from kernel_spectra.kernels import linear_kernel
        coeffs = pb.expansion_coefficients(linear_kernel(2.0), basis="hermite", L=5)
        want = np.zeros(6)
        want[1] = 2.0
        assert np.allclose(coeffs, want, atol=1e-10)

    def test_matched_weight_moments(self):
        # integrating x^k under the finite-p weight reproduces the exact moments
        for model, make in (("gaussian-inner", pb.gaussian_inner_moments),
                            ("sphere-inner", pb.sphere_inner_moments)):
            m = make(100, 8)
            got4 = pb.inner_product_expectation(lambda x: x ** 4, model, 100)
            assert got4 == pytest.approx(m.moments[4], abs=5e-9)

    def test_nonconvergent_reports_tolerance(self):
        # x^{-0.6} is not square integrable at 0: E[k^2] diverges under refinement
        with pytest.raises(pb.QuadratureConvergenceError) as err:
            pb.gaussian_expectation(
                lambda x: np.abs(x) ** (-1.2), split_points=(0.0,), what="divergent",
            )
        assert err.value.achieved > 1e-6


class TestJlDimension:
    def test_degree_zero_and_one(self):
        assert pb.jl_dimension(0, 17) == 1
        assert pb.jl_dimension(1, 17) == 17

    def test_degree_two_in_three_dims(self):
        assert pb.jl_dimension(2, 3) == 5

    def test_classical_table_p3(self):
        # degree-l spherical harmonics in R^3: 2l + 1
        for l in range(8):
            assert pb.jl_dimension(l, 3) == 2 * l + 1

    def test_large_values_exact(self):
        val = pb.jl_dimension(60, 10 ** 6)
        assert isinstance(val, int)
        assert val > 10 ** 270  # exact big-integer arithmetic (~p^60/60!), no overflow

    def test_growth_rate(self):
        # |J_l| ~ p^l / l!
        for l in (2, 3, 4):
            p = 10 ** 4
            assert pb.jl_dimension(l, p) == pytest.approx(p ** l / math.factorial(l), rel=0.01)
