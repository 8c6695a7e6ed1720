import numpy as np
import pytest
from numpy.polynomial import polynomial

from identifiability_oracle import (MomentSequence, VandermondeSystem, exact_moments, hankel_polynomial,
                                    recover_class, recover_mar, vandermonde_system)
from sampling_designs import ClassSampling, DoubleStandard, RandomDyad, Star
from sbm_core import SbmParameters
from sbm_errors import DegeneracyError, InputError

TWO_BLOCKS = SbmParameters([0.4, 0.6], [[0.8, 0.1], [0.1, 0.5]])


def sorted_truth(params, atoms):
    order = np.argsort(atoms)
    return params.permuted(order), order


def well_separated_instance(rng, q, min_gap=0.15, min_alpha=0.1):
    """Random (alpha, pi, rho) whose atoms rho * pi alpha are at least min_gap apart"""
    while True:
        alpha = rng.dirichlet(np.ones(q))
        upper = rng.uniform(0, 1, (q, q))
        pi = np.triu(upper) + np.triu(upper, 1).T
        rho = rng.uniform(0.5, 1.0)
        atoms = rho * pi @ alpha
        if alpha.min() > min_alpha and (q == 1 or np.min(np.diff(np.sort(atoms))) > min_gap):
            return SbmParameters(alpha, pi), rho, atoms


def test_single_block_recovery():
    params = SbmParameters([1.0], [[0.3]])
    moments = exact_moments(params, RandomDyad(0.5))
    np.testing.assert_allclose(moments.u, [1.0, 0.15])
    recovered = recover_mar(moments, 0.5, 1)
    assert recovered.alpha.tolist() == [1.0]
    assert recovered.pi[0, 0] == pytest.approx(0.3)


def test_two_block_round_trip():
    rho = 0.7
    moments = exact_moments(TWO_BLOCKS, RandomDyad(rho))
    truth, _ = sorted_truth(TWO_BLOCKS, rho * TWO_BLOCKS.pi @ TWO_BLOCKS.alpha)
    recovered = recover_mar(moments, rho, 2)
    np.testing.assert_allclose(recovered.alpha, truth.alpha, atol=1e-10)
    np.testing.assert_allclose(recovered.pi, truth.pi, atol=1e-10)


def test_random_instances_round_trip():
    rng = np.random.default_rng(0)
    for k in range(100):
        q = 2 + k % 2
        params, rho, atoms = well_separated_instance(rng, q)
        truth, _ = sorted_truth(params, atoms)
        recovered = recover_mar(exact_moments(params, RandomDyad(rho)), rho, q)
        np.testing.assert_allclose(recovered.alpha, truth.alpha, atol=1e-6)
        np.testing.assert_allclose(recovered.pi, truth.pi, atol=1e-6)


def test_star_round_trip():
    rho = 0.6
    moments = exact_moments(TWO_BLOCKS, Star(rho))
    assert moments.u[0] == pytest.approx(rho)
    truth, _ = sorted_truth(TWO_BLOCKS, TWO_BLOCKS.pi @ TWO_BLOCKS.alpha)
    recovered = recover_mar(moments, rho, 2)
    np.testing.assert_allclose(recovered.alpha, truth.alpha, atol=1e-10)
    np.testing.assert_allclose(recovered.pi, truth.pi, atol=1e-10)


def test_hankel_polynomial_roots_are_the_atoms():
    rng = np.random.default_rng(1)
    for q in (2, 3):
        params, rho, atoms = well_separated_instance(rng, q)
        coefficients = hankel_polynomial(exact_moments(params, RandomDyad(rho)).u, q)
        monic = coefficients / coefficients[-1]
        np.testing.assert_allclose(monic, polynomial.polyfromroots(atoms), atol=1e-6)
        system = vandermonde_system(exact_moments(params, RandomDyad(rho)).u, q)
        np.testing.assert_allclose(system.roots, np.sort(atoms), atol=1e-7)


def test_repeated_atoms_are_degenerate():
    params = SbmParameters([0.5, 0.5], np.full((2, 2), 0.3))
    with pytest.raises(DegeneracyError):
        recover_mar(exact_moments(params, RandomDyad(0.8)), 0.8, 2)
    with pytest.raises(DegeneracyError):
        VandermondeSystem.from_roots([0.2, 0.2])


def test_recovery_ignores_block_labels():
    rng = np.random.default_rng(2)
    params, rho, _ = well_separated_instance(rng, 3)
    base = recover_mar(exact_moments(params, RandomDyad(rho)), rho, 3)
    for perm in ([2, 0, 1], [1, 0, 2]):
        permuted = recover_mar(exact_moments(params.permuted(perm), RandomDyad(rho)), rho, 3)
        np.testing.assert_allclose(permuted.alpha, base.alpha, atol=1e-8)
        np.testing.assert_allclose(permuted.pi, base.pi, atol=1e-8)


def test_distinct_parameters_give_distinct_moments():
    other = SbmParameters([0.4, 0.6], [[0.8, 0.1], [0.1, 0.45]])
    a = exact_moments(TWO_BLOCKS, RandomDyad(0.7))
    b = exact_moments(other, RandomDyad(0.7))
    assert not (np.allclose(a.u, b.u) and np.allclose(a.U, b.U))


def test_class_round_trip():
    rho = np.array([0.3, 0.8])
    moments = exact_moments(TWO_BLOCKS, ClassSampling(tuple(rho)))
    assert moments.v[0] == pytest.approx(1.0)
    assert moments.u[0] == pytest.approx(rho @ TWO_BLOCKS.alpha)
    # atoms pi (rho alpha) = (0.144, 0.252) keep the block order, pi alpha = (0.38, 0.34) reverses it
    recovered, rho_hat = recover_class(moments, 2)
    np.testing.assert_allclose(recovered.alpha, TWO_BLOCKS.alpha, atol=1e-10)
    np.testing.assert_allclose(recovered.pi, TWO_BLOCKS.pi, atol=1e-10)
    np.testing.assert_allclose(rho_hat, rho, atol=1e-10)


def test_class_with_full_sampling_matches_mar():
    rng = np.random.default_rng(3)
    params, _, _ = well_separated_instance(rng, 3)
    recovered, rho_hat = recover_class(exact_moments(params, ClassSampling((1.0, 1.0, 1.0))), 3)
    mar = recover_mar(exact_moments(params, RandomDyad(1.0)), 1.0, 3)
    np.testing.assert_allclose(recovered.alpha, mar.alpha, atol=1e-8)
    np.testing.assert_allclose(recovered.pi, mar.pi, atol=1e-8)
    np.testing.assert_allclose(rho_hat, 1.0, atol=1e-8)


def test_invalid_requests():
    moments = exact_moments(TWO_BLOCKS, RandomDyad(0.7))
    with pytest.raises(InputError):
        recover_mar(moments, 0.7, 0)
    with pytest.raises(InputError):
        recover_mar(moments, 0.7, 6)
    with pytest.raises(InputError):
        recover_mar(moments, 0.0, 2)
    with pytest.raises(InputError):
        recover_class(moments, 2)
    with pytest.raises(InputError):
        exact_moments(TWO_BLOCKS, DoubleStandard(0.2, 0.8))
    with pytest.raises(InputError):
        exact_moments(TWO_BLOCKS, ClassSampling((0.5, 0.5, 0.5)))
    with pytest.raises(InputError):
        MomentSequence('random-dyad', [0.9, 0.3], [[0.1]])
    with pytest.raises(InputError):
        MomentSequence('star', [0.9, 1.3], [[0.1]])
    with pytest.raises(InputError):
        hankel_polynomial(moments.u[:3], 2)
