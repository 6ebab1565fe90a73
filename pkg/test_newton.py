from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import newton
import sympoly
from newton import Endomorphism

rationals = st.fractions(min_value=-10, max_value=10, max_denominator=12)


def _random_symmetric(rng, n):
    m = rng.normal(size=(n, n))
    return 0.5 * (m + m.T)


@settings(max_examples=80, deadline=None)
@given(rationals, st.lists(rationals, min_size=1, max_size=6), st.data())
def test_exact_identities_on_diagonal_operators(mu0, mu, data):
    A = Endomorphism.diagonal(mu)
    n = len(mu)
    k = data.draw(st.integers(min_value=0, max_value=n - 1))
    assert newton.trace_identity_residual(mu0, A, k) == 0
    assert newton.trace_newton_residual(mu0, A, k) == 0
    assert all(r == 0 for r in newton.eigenstructure_residual(mu0, A, k))
    chain = newton.newton_chain(mu0, A, k)
    explicit = newton.newton_explicit(mu0, A, k)
    assert np.all(explicit.entries == chain.T[k].entries)


def test_chain_starts_at_identity_and_shares_sigmas():
    A = Endomorphism.diagonal([1, 2, 3])
    chain = newton.newton_chain(1, A, 2)
    assert np.all(chain.T[0].entries == Endomorphism.identity(3).entries)
    assert chain.sigma[2] == Fraction(35, 2)
    # T_1 = sigma_1^inf I - A
    assert chain.T[1].diagonal_values() == [6, 5, 4]


def test_float_chain_matches_explicit_on_full_matrix():
    rng = np.random.default_rng(5)
    for n in range(2, 6):
        A = Endomorphism(_random_symmetric(rng, n))
        mu0 = float(rng.normal())
        for k in range(n + 1):
            chain = newton.newton_chain(mu0, A, k).T[k].entries
            explicit = newton.newton_explicit(mu0, A, k).entries
            assert np.allclose(chain, explicit, atol=1e-10)


def test_float_trace_identities():
    rng = np.random.default_rng(8)
    for n in range(2, 6):
        A = Endomorphism(_random_symmetric(rng, n))
        mu0 = float(rng.normal())
        for k in range(n):
            assert abs(newton.trace_identity_residual(mu0, A, k)) < 1e-9
            assert abs(newton.trace_newton_residual(mu0, A, k)) < 1e-9


def test_cayley_hamilton_for_classical_case():
    # T_n(0, A) = 0 for the classical transformation
    rng = np.random.default_rng(2)
    A = Endomorphism(_random_symmetric(rng, 4))
    T = newton.newton_chain(0.0, A, 4).T[4].entries
    assert np.max(np.abs(T)) < 1e-9


def test_power_sum_kernel_matches_explicit():
    rng = np.random.default_rng(9)
    stack = np.stack([_random_symmetric(rng, 3) for _ in range(6)])
    mu0 = rng.normal(size=6)
    sigma = sympoly.sigma_inf_array(mu0, np.linalg.eigvalsh(stack), 3)
    for k in range(4):
        stacked = newton.newton_power_sum(sigma, stack, k)
        for p in range(6):
            expected = newton.newton_explicit(float(mu0[p]), Endomorphism(stack[p]), k).entries
            assert np.allclose(stacked[p], expected, atol=1e-10)


def test_weighted_mean_curvatures_of_unit_sphere():
    A = Endomorphism.diagonal([1, 1])
    assert newton.weighted_mean_curvature(0, A, 1) == 1
    assert newton.weighted_mean_curvature(0, A, 2) == 1
    H = newton.curvature_vector(Fraction(2), A)
    # sigma_1^inf = 2 + 2, sigma_2^inf = 1 + 2*2 + 2
    assert H.H == [1, 2, 7]
    assert H.binomials == [1, 2, 1]


def test_flux_constants():
    H = newton.curvature_vector(0, Endomorphism.diagonal([1, 2, 3]))
    assert H.c(1) == 6
    assert H.c_prev_printed(1) == 3
    assert H.c_prev_trace(1) == 1
    assert H.c_prev_printed(2) == 3 * H.c_prev_trace(2)


def test_minimality():
    saddle = Endomorphism.diagonal([1, -1])
    assert newton.minimality_test(0, saddle, 1)
    assert not newton.minimality_test(Fraction(1, 2), saddle, 1)


def test_spectrum_of_float_operator():
    A = Endomorphism.from_rows([[2.0, 1.0], [1.0, 2.0]])
    assert A.spectrum() == pytest.approx([1.0, 3.0])
    assert not A.exact


def test_from_rows_keeps_exact_mode():
    A = Endomorphism.from_rows([[1, Fraction(1, 2)], [Fraction(1, 2), 3]])
    assert A.exact
    assert A.trace() == 4


def test_non_symmetric_operator_rejected():
    with pytest.raises(newton.ContractViolation):
        Endomorphism.from_rows([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(newton.ContractViolation):
        Endomorphism(np.zeros((2, 3)))


def test_exact_mode_requires_diagonal():
    A = Endomorphism.from_rows([[1, 1], [1, 1]])
    with pytest.raises(newton.ContractViolation):
        newton.newton_chain(0, A, 1)


def test_order_out_of_range():
    A = Endomorphism.diagonal([1, 2])
    with pytest.raises(sympoly.DomainError):
        newton.newton_chain(0, A, 3)
    with pytest.raises(sympoly.DomainError):
        newton.trace_identity_residual(0, A, 2)
    with pytest.raises(sympoly.DomainError):
        newton.eigenstructure_residual(0.0, Endomorphism.from_rows([[1.0, 0.5], [0.5, 1.0]]), 1)
