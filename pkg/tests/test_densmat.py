import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from generators import random_mixed, random_pure
from reduced_purities.densmat import (DensityMatrixExpansion, PureState, ValidationError, dephase,
                                      dephase_all, from_pure, nbody_purity)
from reduced_purities.fock import SlaterDeterminant

G = SlaterDeterminant.from_string("11001100")
S1 = SlaterDeterminant.from_string("10101100")
S2 = SlaterDeterminant.from_string("11001010")


def type1():
    return from_pure(PureState((G, S1), np.sqrt([0.75, 0.25])))


def test_basis_state():
    rho = from_pure(PureState((G, S1), np.array([1.0, 0.0])))
    np.testing.assert_allclose(rho.coeffs, [[1, 0], [0, 0]])


def test_type1_coefficients():
    a = type1().coeffs
    assert a[0, 0] == pytest.approx(0.75)
    assert a[1, 1] == pytest.approx(0.25)
    assert abs(a[0, 1]) ** 2 == pytest.approx(3 / 16)


def test_unnormalized_pure_state_rejected():
    with pytest.raises(ValidationError):
        PureState((G, S1), np.array([1.0, 1.0]))


@pytest.mark.parametrize("a, expected", [
    ([[1, 0], [0, 0]], 1.0),
    ([[0.5, 0], [0, 0.5]], 0.5),
    ([[0.75, 0], [0, 0.25]], 0.625),
])
def test_nbody_purity_values(a, expected):
    assert nbody_purity(DensityMatrixExpansion((G, S1), np.array(a))) == pytest.approx(expected)


def test_validation():
    with pytest.raises(ValidationError):
        DensityMatrixExpansion((G, S1), np.array([[0.5, 0.1], [0.2, 0.5]]))  # not Hermitian
    with pytest.raises(ValidationError):
        DensityMatrixExpansion((G, S1), np.array([[0.6, 0], [0, 0.6]]))  # trace
    with pytest.raises(ValidationError):
        DensityMatrixExpansion((G, S1), np.array([[0.5, 0.6], [0.6, 0.5]]))  # not PSD


def test_duplicate_determinants_merge():
    rho = DensityMatrixExpansion((G, G), np.full((2, 2), 0.25))
    assert rho.M == 1
    assert rho.coeffs[0, 0] == pytest.approx(1.0)


def test_dephase_all_and_nothing():
    rho = type1()
    np.testing.assert_allclose(dephase_all(rho).coeffs, np.diag([0.75, 0.25]))
    np.testing.assert_array_equal(dephase(rho, lambda n, m: False).coeffs, rho.coeffs)


def test_partially_coherent_triad():
    # ground state plus two spin-flipped single excitations, only the
    # coherence between the two excitations kept
    c = np.sqrt([0.5, 0.25, 0.25])
    rho = from_pure(PureState((G, S1, S2), c))
    out = dephase(rho, lambda n, m: 0 in (n, m))
    a = out.coeffs
    assert a[0, 1] == 0 and a[0, 2] == 0
    assert a[1, 2] == pytest.approx(0.25)


def test_dephasing_can_break_positivity():
    # a rank-one state over three determinants: zeroing a single coherence
    # leaves a matrix with a negative eigenvalue
    rho = from_pure(PureState((G, S1, S2), np.full(3, 1 / np.sqrt(3))))
    with pytest.raises(ValidationError):
        dephase(rho, lambda n, m: (n, m) == (0, 1))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_pure_states_have_unit_purity(seed):
    rng = np.random.default_rng(seed)
    assert nbody_purity(from_pure(random_pure(rng))) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_purity_unitary_invariance(seed):
    rng = np.random.default_rng(seed)
    rho = random_mixed(rng)
    Z = rng.normal(size=(rho.M, rho.M)) + 1j * rng.normal(size=(rho.M, rho.M))
    Q, _ = np.linalg.qr(Z)
    rotated = DensityMatrixExpansion(rho.dets, Q @ rho.coeffs @ Q.conj().T)
    assert nbody_purity(rotated) == pytest.approx(nbody_purity(rho), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_full_dephasing_never_increases_purity(seed):
    rng = np.random.default_rng(seed)
    rho = random_mixed(rng)
    assert nbody_purity(dephase_all(rho)) <= nbody_purity(rho) + 1e-12
