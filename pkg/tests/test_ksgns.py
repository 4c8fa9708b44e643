import numpy as np
import pytest

from smodcert.algebra import BlockAlgebra, StarAutomorphism
from smodcert.alphacp import OperatorCpMap, choi_matrix, generate_instance, twisted_gram
from smodcert.errors import NotAlphaCp, NotTauMap, U2NotIdentity
from smodcert.hmodule import SModule, hilbert_space, standard_module
from smodcert.ksgns import (
    construct_ksgns,
    dilate,
    factorize_tau_map,
    generate_taumap_instance,
    verify_dilation,
)
from smodcert.numkit import fit_operator

from oracles import kraus_from_choi, matrix_units, stinespring_vectors

M2 = BlockAlgebra((2,))
ID = StarAutomorphism.identity(M2)


def identity_on_m2():
    return OperatorCpMap(M2, SModule.trivial(standard_module(M2, [2])), M2.basis_matrices.copy())


def worst(cert):
    return max(cert.residuals.values())


def test_identity_map_dilation():
    d, cert = dilate(identity_on_m2(), ID)
    assert d.h0_dim == 2
    assert cert.verdict and worst(cert) <= 1e-10
    # pi0 is the defining representation up to a unitary change of basis
    for E, P in zip(M2.basis_matrices, d.pi0.on_basis):
        np.testing.assert_allclose(np.linalg.svd(P, compute_uv=False), np.linalg.svd(E, compute_uv=False), atol=1e-12)
    np.testing.assert_allclose(d.v.matrix.conj().T @ d.v.matrix, np.eye(2), atol=1e-12)


def test_depolarizing_dilation_dimension():
    values = np.array([np.trace(E) / 2 * np.eye(2) for E in M2.basis_matrices])
    tau = OperatorCpMap(M2, SModule.trivial(hilbert_space(2)), values)
    d, cert = dilate(tau, ID)
    assert d.h0_dim == 8
    assert cert.verdict


def test_zero_map_dilation():
    tau = OperatorCpMap(M2, SModule.trivial(hilbert_space(2)), np.zeros((4, 2, 2)))
    d, cert = dilate(tau, ID)
    assert d.h0_dim == 0 and d.e0.dim == 0
    assert cert.verdict


def test_rejects_non_cp():
    tau = OperatorCpMap(M2, SModule.trivial(hilbert_space(2)), np.array([E.T for E in M2.basis_matrices]))
    with pytest.raises(NotAlphaCp):
        construct_ksgns(tau, ID)


def test_perturbed_v_fails_reconstruction():
    inst = generate_instance("F1", 2, 7)
    d, _ = dilate(inst.tau, inst.alpha)
    rng = np.random.default_rng(0)
    bump = rng.standard_normal(d.v.matrix.shape)
    bad = d.perturbed(v_matrix=d.v.matrix + 1e-4 * bump / np.linalg.norm(bump))
    cert = verify_dilation(bad, inst.tau, inst.alpha)
    assert not cert.verdict
    assert "tau_reconstruction" in cert.failing
    assert 1e-6 < cert.residuals["tau_reconstruction"] < 1e-3


@pytest.mark.parametrize("family,seed", [(f, s) for f in ("F1", "F2") for s in range(8)])
def test_generated_dilations(family, seed):
    inst = generate_instance(family, 3, seed)
    d, cert = dilate(inst.tau, inst.alpha)
    assert cert.verdict, cert.failing
    assert cert.residuals["tau_reconstruction"] <= 1e-8
    assert cert.residuals["pi0_multiplicative"] <= 1e-8
    assert cert.residuals["minimality_rank_defect"] == 0
    E1 = inst.tau.module
    assert d.h0_dim <= inst.algebra.dim * E1.dim * E1.cols


def _hilbert_f1(seeds):
    for seed in seeds:
        inst = generate_instance("F1", 3, seed)
        if inst.label.endswith("b1"):
            yield inst


def test_stinespring_agreement():
    checked = 0
    for inst in _hilbert_f1(range(40)):
        tau = inst.tau
        k = inst.algebra.block_dims[0]
        m = tau.module.ambient_rows
        kraus = kraus_from_choi(choi_matrix(tau), k, m)
        units = matrix_units((k,))
        S = stinespring_vectors(kraus, units)
        d, cert = dilate(tau, inst.alpha)
        assert d.h0_dim == np.linalg.matrix_rank(S, tol=1e-8)
        np.testing.assert_allclose(d.u0.matrix, np.eye(d.h0_dim), atol=1e-10)
        # both realizations share the Gram matrix, so a partial isometry maps one onto the other
        gens = np.concatenate(list(d.pi0.on_basis @ d.v.matrix), axis=1)
        _, res = fit_operator(S, gens)
        assert res <= 1e-8
        np.testing.assert_allclose(S.conj().T @ S, twisted_gram(tau, inst.alpha), atol=1e-10)
        checked += 1
    assert checked >= 5


def test_taumap_identity_example():
    tau = identity_on_m2()
    d, _ = dilate(tau, ID)
    E = standard_module(M2, [2])
    s2 = SModule.trivial(standard_module(M2, [2]))
    fac = factorize_tau_map(E.basis.copy(), E, tau, ID, d, s2)
    assert fac.verdict and max(fac.certificate.values()) <= 1e-10
    np.testing.assert_allclose(fac.w.matrix, np.eye(2), atol=1e-12)
    assert fac.closure == "trivial"


def test_taumap_zero():
    tau = OperatorCpMap(M2, SModule.trivial(hilbert_space(2)), np.zeros((4, 2, 2)))
    d, _ = dilate(tau, ID)
    E = standard_module(M2, [2])
    s2 = SModule.trivial(hilbert_space(3))
    fac = factorize_tau_map(np.zeros((E.dim, 3, 2)), E, tau, ID, d, s2)
    assert fac.e4.dim == 0 and fac.verdict


@pytest.mark.parametrize("family,seed", [("F1", 1), ("F1", 4), ("F2", 1), ("F2", 3), ("F2", 8)])
def test_generated_taumaps(family, seed):
    inst = generate_taumap_instance(family, 2, seed)
    d, _ = dilate(inst.tau, inst.alpha)
    fac = factorize_tau_map(inst.T_images, inst.E, inst.tau, inst.alpha, d, inst.s2)
    assert fac.verdict, fac.certificate


def test_taumap_hypotheses_enforced():
    inst = generate_taumap_instance("F1", 2, 1)
    d, _ = dilate(inst.tau, inst.alpha)
    with pytest.raises(NotTauMap):
        factorize_tau_map(1.5 * inst.T_images, inst.E, inst.tau, inst.alpha, d, inst.s2)
    m2 = inst.s2.module.ambient_rows
    flip = -np.eye(m2)
    with pytest.raises(U2NotIdentity):
        factorize_tau_map(inst.T_images, inst.E, inst.tau, inst.alpha, d, SModule.with_unitary(inst.s2.module, flip))
