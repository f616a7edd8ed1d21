import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wedgescatter._validation import PreconditionError
from wedgescatter.modular import (CyclicVector, FiniteVNAlgebra, left, modular_residuals,
                                  random_instance, regularization_errors, regularize, right,
                                  swap_partner, swap_residuals, tomita_operator, verify_duality)

seeds = st.integers(0, 2**32 - 1)


def real_linear_tomita(omega):
    """S as a real 2n²×2n² matrix, built from S(E_ij Ω) = E_ji Ω and S(iE_ij Ω) = −iE_ji Ω."""
    n = omega.n
    om = omega.vector
    cols_in, cols_out = [], []
    for i in range(n):
        for j in range(n):
            e = np.zeros((n, n))
            e[i, j] = 1.0
            for c in (1.0, 1j):
                a = left(c * e)
                cols_in.append(a @ om)
                cols_out.append(a.conj().T @ om)
    to_real = lambda v: np.concatenate([v.real, v.imag])  # noqa: E731
    vin = np.column_stack([to_real(v) for v in cols_in])
    vout = np.column_stack([to_real(v) for v in cols_out])
    return vout @ np.linalg.inv(vin)


def test_tracial_vector_gives_trivial_modular_operator():
    for n in (2, 3, 4):
        alg = FiniteVNAlgebra.random(n, np.random.default_rng(n))
        mod = tomita_operator(alg, CyclicVector.tracial(n))
        assert np.max(np.abs(mod.delta - np.eye(n * n))) <= 1e-12


@pytest.mark.parametrize("p", [0.1, 0.3, 0.45])
def test_schmidt_weights_give_known_spectrum(p):
    omega = CyclicVector.schmidt([p, 1 - p])
    mod = tomita_operator(FiniteVNAlgebra.random(2, np.random.default_rng(0)), omega)
    expected = np.sort([p / (1 - p), (1 - p) / p, 1.0, 1.0])
    assert np.allclose(np.sort(mod.eigenvalues), expected, rtol=1e-12)
    s = real_linear_tomita(omega)
    brute = np.sort(np.linalg.eigvalsh(s.T @ s))
    assert np.allclose(brute, np.repeat(expected, 2), rtol=1e-10)


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(2, 4))
def test_random_instances_satisfy_modular_identities(seed, n):
    alg, omega, _ = random_instance(n, seed)
    mod = tomita_operator(alg, omega)
    res = modular_residuals(alg, mod)
    assert max(res.values()) <= 1e-10
    assert np.all(mod.eigenvalues > 0)
    s = real_linear_tomita(omega)
    brute = np.sort(np.linalg.eigvalsh(s.T @ s))
    assert np.allclose(brute, np.repeat(np.sort(mod.eigenvalues), 2), rtol=1e-8)


def test_non_separating_vector_is_refused():
    alg = FiniteVNAlgebra.random(2, np.random.default_rng(1))
    with pytest.raises(PreconditionError):
        tomita_operator(alg, CyclicVector(np.diag([1.0, 0.0])))
    with pytest.raises(ValueError):
        tomita_operator(FiniteVNAlgebra.random(3, np.random.default_rng(1)), CyclicVector.tracial(2))


def test_tracial_conjugation_by_j():
    n = 3
    rng = np.random.default_rng(2)
    mod = tomita_operator(FiniteVNAlgebra.random(n, rng), CyclicVector.tracial(n))
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    assert np.max(np.abs(mod.conjugate_by_j(left(a)) - right(a.conj()))) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(2, 4))
def test_duality_residuals(seed, n):
    alg, omega, _ = random_instance(n, seed)
    report = verify_duality(alg, tomita_operator(alg, omega))
    assert max(report.commutant_residual, report.commutator_residual, report.flow_residual) <= 1e-9


def test_zero_flow_time_is_exact():
    alg, omega, _ = random_instance(3, 5)
    report = verify_duality(alg, tomita_operator(alg, omega), taus=(0.0,))
    assert report.flow_residual <= 1e-14


def test_swap_partner_of_identity():
    alg, omega, _ = random_instance(3, 6)
    mod = tomita_operator(alg, omega)
    assert np.allclose(swap_partner(np.eye(9), mod), np.eye(9), atol=1e-12)


def test_tracial_swap_partner_is_conjugate_on_right():
    n = 3
    rng = np.random.default_rng(7)
    mod = tomita_operator(FiniteVNAlgebra.random(n, rng), CyclicVector.tracial(n))
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    a = a + a.conj().T
    partner = swap_partner(left(a), mod)
    assert np.max(np.abs(partner - right(a.conj()))) <= 1e-12
    om = mod.omega.vector
    assert np.linalg.norm(left(a) @ om - partner @ om) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(2, 4))
def test_swap_residuals_for_random_operators(seed, n):
    alg, omega, rng = random_instance(n, seed)
    mod = tomita_operator(alg, omega)
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    vec, comm = swap_residuals(left(a), swap_partner(left(a), mod), alg, mod)
    assert vec <= 1e-9 and comm <= 1e-9


def test_swap_partner_refuses_ill_conditioned_flow():
    omega = CyclicVector.schmidt([1.0 - 1e-14, 1e-14])
    mod = tomita_operator(FiniteVNAlgebra.random(2, np.random.default_rng(0)), omega)
    with pytest.raises(PreconditionError):
        swap_partner(left(np.eye(2)), mod)


def test_regularize_with_trivial_flow_is_identity():
    rng = np.random.default_rng(8)
    mod = tomita_operator(FiniteVNAlgebra.random(2, rng), CyclicVector.tracial(2))
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    for delta in (1e-3, 1.0, 1e3):
        assert np.allclose(regularize(a, mod, delta), a, atol=1e-12)
    with pytest.raises(ValueError):
        regularize(a, mod, 0.0)


def test_regularization_error_decreases_to_zero():
    for seed in range(20):
        alg, omega, rng = random_instance(3, seed)
        mod = tomita_operator(alg, omega)
        a = left(rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
        errs = regularization_errors(a, mod, [1.0, 0.1, 0.01, 1e-6])
        assert np.all(np.diff(errs) <= 0)
        assert errs[-1] <= 1e-4 * errs[0]


def test_large_delta_removes_off_diagonal_blocks():
    alg, omega, rng = random_instance(2, 9)
    mod = tomita_operator(alg, omega)
    a = rng.normal(size=(4, 4))
    v = mod.eigenvectors
    big = v.conj().T @ regularize(a, mod, 1e4) @ v
    logs = np.log(mod.eigenvalues)
    distinct = np.abs(logs[:, None] - logs[None, :]) > 1e-3
    assert np.max(np.abs(big[distinct])) <= 1e-8


def test_regularization_matches_gaussian_average_of_the_flow():
    alg, omega, rng = random_instance(2, 10)
    mod = tomita_operator(alg, omega)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    delta, t = 0.3, 0.7

    def flow(s):
        return mod.delta_power(1j * s) @ a @ mod.delta_power(-1j * s)

    s = np.linspace(t - 12 * np.sqrt(delta), t + 12 * np.sqrt(delta), 4001)
    w = np.exp(-(s - t) ** 2 / (2 * delta)) / np.sqrt(2 * np.pi * delta)
    averaged = np.trapezoid(w[:, None, None] * np.array([flow(x) for x in s]), s, axis=0)
    moved = mod.delta_power(1j * t) @ regularize(a, mod, delta) @ mod.delta_power(-1j * t)
    assert np.max(np.abs(moved - averaged)) <= 1e-8
