import numpy as np
import pytest

from smodcert.algebra import (
    AlgebraElement,
    BlockAlgebra,
    StarAutomorphism,
    action_residuals,
    apply_automorphism,
    off_block_mass,
    project_to_algebra,
    verify_automorphism,
)
from smodcert.errors import AlgebraMismatch, DimensionMismatch

from oracles import haar, matrix_units

X = np.array([[0, 1], [1, 0]], dtype=complex)


def test_canonical_basis_order():
    A = BlockAlgebra((2,))
    for got, want in zip(A.basis_matrices, matrix_units((2,))):
        np.testing.assert_array_equal(got, want)
    assert [e.embed().tolist() for e in BlockAlgebra((1, 1)).canonical_basis()] == [
        [[1, 0], [0, 0]],
        [[0, 0], [0, 1]],
    ]


def test_partition_of_identity():
    A = BlockAlgebra((2, 1))
    assert A.dim == 5
    units = A.basis_matrices[list(A.diagonal_units)]
    assert len(units) == 3
    np.testing.assert_array_equal(units.sum(axis=0), np.eye(3))


def test_invalid_blocks():
    with pytest.raises(ValueError):
        BlockAlgebra(())
    with pytest.raises(ValueError):
        BlockAlgebra((0, 2))


def test_embedding_is_star_homomorphism():
    rng = np.random.default_rng(0)
    A = BlockAlgebra((2, 3))
    a = AlgebraElement.from_coords(A, rng.standard_normal(A.dim) + 1j * rng.standard_normal(A.dim))
    b = AlgebraElement.from_coords(A, rng.standard_normal(A.dim))
    np.testing.assert_allclose((a @ b).embed(), a.embed() @ b.embed(), atol=1e-14)
    np.testing.assert_array_equal(a.star.embed(), a.embed().conj().T)


def test_pauli_inner_automorphism():
    A = BlockAlgebra((2,))
    alpha = StarAutomorphism(A, (0,), (X,))
    E11 = AlgebraElement.from_matrix(A, np.diag([1.0, 0.0]))
    np.testing.assert_array_equal(apply_automorphism(alpha, E11).embed(), np.diag([0, 1]))
    rep = verify_automorphism(alpha)
    assert rep.verdict
    assert max(rep.unital, rep.multiplicative, rep.star) < 1e-15


def test_block_swap_is_involution():
    A = BlockAlgebra((1, 1))
    swap = StarAutomorphism(A, (1, 0))
    a = AlgebraElement.from_coords(A, [2.0, 5.0])
    once = apply_automorphism(swap, a)
    np.testing.assert_array_equal(once.coords(), [5, 2])
    np.testing.assert_array_equal(apply_automorphism(swap, once).embed(), a.embed())


def test_identity_automorphism_residuals():
    rep = verify_automorphism(StarAutomorphism.identity(BlockAlgebra((2, 1))))
    assert rep.verdict and rep.unital == rep.multiplicative == rep.star == 0


def test_transpose_action_fails_multiplicativity():
    A = BlockAlgebra((2,))
    # coordinates of E_rs^T = E_sr
    action = np.zeros((4, 4))
    for p, (_, r, s) in enumerate(A.basis_index):
        action[A.basis_index.index((0, s, r)), p] = 1
    rep = action_residuals(A, action)
    assert not rep.verdict
    # E12 E21 = E11 but E21^T... transposes compose in reverse order
    assert rep.multiplicative == pytest.approx(np.sqrt(2))
    assert rep.star < 1e-15 and rep.unital < 1e-15


def test_inverse_round_trip_with_permutation():
    rng = np.random.default_rng(4)
    A = BlockAlgebra((2, 3, 2))
    alpha = StarAutomorphism(A, (2, 1, 0), (haar(rng, 2), haar(rng, 3), haar(rng, 2)))
    assert verify_automorphism(alpha).verdict
    a = rng.standard_normal(A.dim) + 1j * rng.standard_normal(A.dim)
    back = alpha.inverse().apply_matrix(alpha.apply_matrix(A.embed(a)))
    np.testing.assert_allclose(back, A.embed(a), atol=1e-12)


def test_automorphism_must_preserve_dims():
    with pytest.raises(ValueError):
        StarAutomorphism(BlockAlgebra((1, 2)), (1, 0))


def test_apply_rejects_other_algebra():
    alpha = StarAutomorphism.identity(BlockAlgebra((2,)))
    with pytest.raises(AlgebraMismatch):
        apply_automorphism(alpha, AlgebraElement.from_coords(BlockAlgebra((1, 1)), [1, 2]))


def test_project_to_algebra():
    A = BlockAlgebra((1, 1))
    _, mass = project_to_algebra(np.diag([3.0, 4.0]), A)
    assert mass == 0
    _, mass = project_to_algebra(np.array([[0, 1], [0, 0]]), A)
    assert mass == 1
    elem, _ = project_to_algebra(np.array([[1, 7], [0, 2]]), A)
    assert project_to_algebra(elem.embed(), A)[1] == 0
    with pytest.raises(DimensionMismatch):
        project_to_algebra(np.eye(3), A)


def test_module_inner_products_are_in_algebra():
    # rows of a block-diagonal standard module give block-diagonal x^* y
    A = BlockAlgebra((2, 1))
    x = np.zeros((4, 3))
    x[0, 0] = x[1, 1] = 1
    y = np.zeros((4, 3))
    y[2, 2] = 1
    assert off_block_mass(x.T @ x, A) <= 1e-12
    assert off_block_mass(x.T @ y, A) <= 1e-12
