"""Acceptance criteria, one test per criterion.

Each test records a single pass/fail line which the terminal summary prints
(see ``conftest.py``); ``pytest tests/test_acceptance.py -s`` also echoes it
inline.
"""
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from make_golden import GOLDEN, corpus
from oracles import brute_twisted_gram, choi, expand, kraus_from_choi, matrix_units, stinespring_vectors

from smodcert.algebra import BlockAlgebra, StarAutomorphism
from smodcert.alphacp import (
    OperatorCpMap,
    choi_matrix,
    generate_instance,
    kraus_map_values,
    minimal_domination_constant,
    random_choi_map,
    verify_alpha_cp,
)
from smodcert.cpdkernel import (
    construct_correspondence,
    generate_kernel_instance,
    minimal_kernel_domination,
    nu_isometry_check,
    verify_alpha_cpd,
    verify_kfamily_factorization,
    verify_reproducing,
)
from smodcert.hmodule import SModule, hilbert_space
from smodcert.ksgns import dilate, factorize_tau_map, generate_taumap_instance
from smodcert.numkit import fit_operator


def record(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


DILATION_KEYS = ("tau_reconstruction", "u0_unitarity", "v_natural_adjoint", "twisted_identity", "minimality_rank_defect")


def _criterion1_instances():
    # F1 at size 3 and F2 at size 2 keep dim A <= 16 and m1 <= 8
    for seed in range(50):
        yield generate_instance("F1", 3, seed)
        yield generate_instance("F2", 2, seed)


def test_criterion_1_ksgns_round_trip():
    start = time.perf_counter()
    worst = 0.0
    count = 0
    for inst in _criterion1_instances():
        assert inst.algebra.dim <= 16 and inst.tau.module.ambient_rows <= 8
        _, cert = dilate(inst.tau, inst.alpha)
        r = cert.residuals
        keys = list(DILATION_KEYS) + [k for k in r if k.startswith("pi0_")]
        worst = max(worst, max(r[k] for k in keys))
        count += 1
    elapsed = time.perf_counter() - start
    record(1, count == 100 and worst <= 1e-8 and elapsed <= 60,
           f"{count} dilations, max residual {worst:.2e} (<= 1e-8), {elapsed:.1f} s (<= 60 s)")


def test_criterion_2_stinespring_agreement():
    rng = np.random.default_rng(20240602)
    worst = 0.0
    mismatched = 0
    for _ in range(50):
        k, n = (int(x) for x in rng.integers(1, 5, size=2))
        r = int(rng.integers(1, 4))
        kraus = (rng.standard_normal((r, k, n)) + 1j * rng.standard_normal((r, k, n))) / np.sqrt(2 * r * k)
        A = BlockAlgebra((k,))
        tau = OperatorCpMap(A, SModule.trivial(hilbert_space(n)), kraus_map_values(A, kraus))
        d, cert = dilate(tau, StarAutomorphism.identity(A))
        # oracle: minimal Kraus family from the Choi matrix, then span{rho(a) V h}
        J = choi(lambda a: np.einsum("kia,ij,kjb->ab", kraus.conj(), a, kraus), k)
        S = stinespring_vectors(kraus_from_choi(J, k, n), matrix_units((k,)))
        h_oracle = np.linalg.matrix_rank(S, tol=1e-8 * max(1.0, np.linalg.norm(S, 2)))
        mismatched += int(h_oracle != d.h0_dim)
        gens = np.concatenate(list(d.pi0.on_basis @ d.v.matrix), axis=1)
        _, res = fit_operator(S, gens)
        worst = max(worst, res)
    record(2, mismatched == 0 and worst <= 1e-8,
           f"h0_dim mismatches {mismatched}/50, Gram fit residual {worst:.2e} (<= 1e-8)")


def test_criterion_3_soundness_fixtures():
    transpose = generate_instance("F3", 1, 0)
    swap = generate_instance("F3", 1, 1)
    assert transpose.label == "F3-transpose" and swap.label == "F3-swap-average"
    ct = verify_alpha_cp(transpose.tau, transpose.alpha)
    cs = verify_alpha_cp(swap.tau, swap.alpha)

    def oracle_min(inst):
        units = matrix_units(inst.algebra.block_dims)
        f = lambda a: inst.tau.of(expand(a, units))
        G = brute_twisted_gram(f, inst.alpha.apply_matrix, units, list(inst.tau.module.basis))
        return np.linalg.eigvalsh((G + G.conj().T) / 2).min()

    ok = (
        not ct.verdict and ct.gram_min_eig <= -0.9 * ct.gram_scale
        and not cs.verdict and abs(cs.gram_min_eig + 0.5) <= 1e-10
        and abs(oracle_min(transpose) - ct.gram_min_eig) <= 1e-12
        and abs(oracle_min(swap) - cs.gram_min_eig) <= 1e-12
        and np.linalg.eigvalsh(choi_matrix(transpose.tau)).min() == pytest.approx(-1)
    )
    record(3, ok, f"transpose min eig {ct.gram_min_eig:.3f} (scale {ct.gram_scale:.3f}), swap-average {cs.gram_min_eig:.12f}")


def test_criterion_4_oracle_agreement():
    rng = np.random.default_rng(777)
    agree = total = 0
    while total < 100:
        k, n = (int(x) for x in rng.integers(1, 4, size=2))
        tau = random_choi_map(rng, k, n)
        J = choi(lambda a: tau.of(expand(a, matrix_units((k,)))), k)
        lam = np.linalg.eigvalsh(J).min()
        if abs(lam) < 1e-6:
            continue
        total += 1
        agree += int(verify_alpha_cp(tau, StarAutomorphism.identity(tau.domain)).verdict == (lam >= 0))
    record(4, agree == 100, f"verdicts agree on {agree}/100 maps")


def test_criterion_5_taumap_factorization():
    worst = {"factorization": 0.0, "w_coisometry": 0.0, "pi_map_law": 0.0}
    count = 0
    for seed in range(15):
        for family in ("F1", "F2"):
            inst = generate_taumap_instance(family, 2, seed)
            d, _ = dilate(inst.tau, inst.alpha)
            fac = factorize_tau_map(inst.T_images, inst.E, inst.tau, inst.alpha, d, inst.s2)
            for key in worst:
                worst[key] = max(worst[key], fac.certificate[key])
            count += 1
    ok = count == 30 and worst["factorization"] <= 1e-8 and worst["w_coisometry"] <= 1e-10 and worst["pi_map_law"] <= 1e-8
    record(5, ok, f"{count} instances, " + ", ".join(f"{k} {v:.2e}" for k, v in worst.items()))


def test_criterion_6_kernels():
    worst = {"reproducing": 0.0, "factorization": 0.0, "rederived": 0.0, "nu": 0.0, "u_identity": 0.0}
    identity_cases = 0
    for seed in range(50):
        inst = generate_kernel_instance(2, seed)
        k, alpha = inst.kernel, inst.alpha
        assert k.size <= 4 and k.source.dim <= 8 and k.target.dim <= 4
        c = construct_correspondence(k, alpha)
        worst["reproducing"] = max(worst["reproducing"], verify_reproducing(c, k, alpha).max_residual)
        fac = verify_kfamily_factorization(inst.kfamily, c, alpha)
        worst["factorization"] = max(worst["factorization"], fac.max_residual)
        worst["rederived"] = max(worst["rederived"], float(np.max(np.abs(c.derived_kernel().values - k.values))))
        if alpha.is_identity_residual() <= 1e-12:
            identity_cases += 1
            worst["nu"] = max(worst["nu"], nu_isometry_check(inst.kfamily, c, alpha).max_residual)
            worst["u_identity"] = max(worst["u_identity"], float(np.max(np.abs(c.u.matrix - np.eye(c.hf_dim)), initial=0.0)))
    ok = (worst["reproducing"] <= 1e-8 and worst["factorization"] <= 1e-8 and worst["rederived"] <= 1e-9
          and worst["nu"] <= 1e-9 and worst["u_identity"] <= 1e-10 and identity_cases > 0)
    record(6, ok, f"50 kernels ({identity_cases} with alpha = id), " + ", ".join(f"{k} {v:.2e}" for k, v in worst.items()))


def test_criterion_7_domination():
    rng = np.random.default_rng(7)
    bad = []
    for inst in _criterion1_instances():
        cert = verify_alpha_cp(inst.tau, inst.alpha)
        if not cert.verdict:
            continue
        one = inst.algebra.unit()
        m1 = minimal_domination_constant(inst.tau, inst.alpha, one)
        m2 = minimal_domination_constant(inst.tau, inst.alpha, 2 * one)
        if abs(m1 - 1) > 1e-10 or abs(m2 - 4) > 1e-8 or not cert.lemma_domination_finite:
            bad.append(inst.label)
    for seed in range(50):
        inst = generate_kernel_instance(2, seed)
        k, alpha = inst.kernel, inst.alpha
        if not verify_alpha_cpd(k, alpha).verdict:
            continue
        B = k.source
        one = B.unit()
        if abs(minimal_kernel_domination(k, alpha, one) - 1) > 1e-10 or abs(minimal_kernel_domination(k, alpha, 2 * one) - 4) > 1e-8:
            bad.append(inst.label)
        samples = list(B.basis_matrices) + [B.embed(rng.standard_normal(B.dim) + 1j * rng.standard_normal(B.dim)) for _ in range(3)]
        for b in samples:
            if minimal_kernel_domination(k, alpha, b) > np.linalg.norm(b, 2) ** 2 * (1 + 1e-8):
                bad.append(f"{inst.label}:M(b)")
    record(7, not bad, f"{len(bad)} violations" + (f" ({bad[:3]})" if bad else ""))


def test_criterion_8_golden_corpus():
    first, second = corpus(), corpus()
    stored = {p.name: p.read_text(encoding="ascii") for p in GOLDEN.glob("*.json")}
    differ = sorted(name for name in first if stored.get(name) != first[name])
    unstable = sorted(name for name in first if first[name] != second[name])
    extra = sorted(set(stored) - set(first))
    ok = not differ and not unstable and not extra
    record(8, ok, f"{len(first)} files, {len(differ)} differ from tests/golden, {len(unstable)} unstable between runs")
