"""KSGNS dilation of an alpha-CP map and factorization of tau-maps through it.

The generators ``a_p ⊗ e_q ⊗ delta_t`` of the algebraic tensor product are
quotiented by the null space of the twisted Gram matrix; the quotient space
``H0`` realizes ``E0 ⊗ C^n`` and elements of ``E0`` are the induced
``h0 x n`` operators.  Every map defined on generators (``U0``, ``pi0'``,
``V``, ``Psi``) is fit by least squares, and the fit residual certifies that
the map descends to the quotient.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import BlockAlgebra, StarAutomorphism
from .alphacp import (
    OperatorCpMap,
    generate_instance,
    generator_columns,
    twisted_gram,
    verify_alpha_cp,
    verify_operator_tau_map,
)
from .errors import (
    AlgebraMismatch,
    DimensionMismatch,
    IllDefinedQuotientMap,
    NotAlphaCp,
    NotTauMap,
    U2NotIdentity,
)
from .hmodule import (
    ConcreteModule,
    ModuleOperator,
    SModule,
    URepresentation,
    check_adjointable,
    hilbert_space,
    make_module,
    standard_module,
    verify_u_representation,
)
from .numkit import (
    DEFAULT_TOL,
    Tolerances,
    adjoint,
    as_complex,
    fit_operator,
    fro,
    numerical_rank,
    opnorm,
    quotient,
)


def _module_unitary_coords(S: SModule) -> np.ndarray:
    """``Uc[q', q] = tr(e_q'^* U e_q)``, the unitary on basis coordinates."""
    E = S.module
    if E.dim == 0:
        return np.zeros((0, 0), dtype=complex)
    return E.coords(S.U @ E.basis).T


def _compress(D, left: np.ndarray, right: np.ndarray) -> float:
    return fro(adjoint(left) @ D @ right)


@dataclass(frozen=True, eq=False)
class KsgnsDilation:
    h0_dim: int
    e0: ConcreteModule
    u0: ModuleOperator
    pi0: URepresentation
    v: ModuleOperator
    fit_residuals: dict
    certificate: dict = field(default_factory=dict)
    verdict: bool = False

    @property
    def s0(self) -> SModule:
        return self.pi0.smodule

    def with_certificate(self, certificate: dict, verdict: bool) -> "KsgnsDilation":
        return KsgnsDilation(self.h0_dim, self.e0, self.u0, self.pi0, self.v, self.fit_residuals, certificate, verdict)

    def perturbed(self, v_matrix=None, u0_matrix=None) -> "KsgnsDilation":
        """Copy with replaced ``V`` or ``U0`` matrices (used by perturbation tests)."""
        v = self.v if v_matrix is None else ModuleOperator(self.v.source, self.v.target, v_matrix)
        pi0 = self.pi0
        u0 = self.u0
        if u0_matrix is not None:
            u0 = ModuleOperator(self.e0, self.e0, u0_matrix)
            pi0 = URepresentation(pi0.algebra, SModule(self.e0, u0), pi0.on_basis)
        return KsgnsDilation(self.h0_dim, self.e0, u0, pi0, v, self.fit_residuals)


def _fit(which: str, source, target, tol: Tolerances):
    op, res = fit_operator(source, target, tol)
    if res > tol.residual_tol * max(1.0, fro(target)):
        raise IllDefinedQuotientMap(which, res)
    return op, res


def construct_ksgns(tau: OperatorCpMap, alpha: StarAutomorphism, s1: SModule | None = None,
                    tol: Tolerances = DEFAULT_TOL, check: bool = True) -> KsgnsDilation:
    """Build ``(E0, U0, pi0, V)`` with ``tau(a) = V^* pi0(a) V``."""
    if s1 is not None and s1 is not tau.carrier:
        tau = OperatorCpMap(tau.domain, s1, tau.on_basis)
    if tau.domain != alpha.algebra:
        raise AlgebraMismatch("tau's domain differs from the automorphism's algebra")
    if check:
        cert = verify_alpha_cp(tau, alpha, tol)
        if not cert.verdict:
            raise NotAlphaCp(cert)
    A = tau.domain
    S1 = tau.carrier
    E1 = S1.module
    B = E1.algebra
    n = B.ambient_dim
    d1 = E1.dim
    k = d1 * n

    G = twisted_gram(tau, alpha, tol=tol)
    q = quotient(G, tol)
    h0 = q.rank
    C = q.coords

    # E0 element for (p, q) has the generator columns (p, q, t), t = 0..n-1
    gens = C.reshape(h0, A.dim * d1, n).transpose(1, 0, 2) if h0 else []
    e0 = make_module(B, h0, list(gens), tol) if h0 else ConcreteModule(B, 0, np.zeros((0, 0, n)))

    Uc = _module_unitary_coords(S1)
    I_n = np.eye(n)
    Aalpha = alpha.action_matrix
    u0_target = C @ np.kron(Aalpha, np.kron(Uc, I_n))
    u0_mat, u0_res = _fit("U0", C, u0_target, tol)

    pip_ops = []
    pip_res = 0.0
    I_k = np.eye(k)
    for s in range(A.dim):
        L = A.left_mult_matrix(A.basis_matrices[s])
        op, res = _fit(f"pi0'(a_{s})", C, C @ np.kron(L, I_k), tol)
        pip_ops.append(op)
        pip_res = max(pip_res, res)
    pip_ops = np.array(pip_ops).reshape(A.dim, h0, h0)

    # V e_q delta_t is the class of 1 ⊗ U1 e_q ⊗ delta_t
    Ec = generator_columns(E1)
    Cg = C.reshape(h0, A.dim, d1, n)
    unit = Cg[:, list(A.diagonal_units)].sum(axis=1)
    v_target = np.einsum("hqt,qr->hrt", unit, Uc).reshape(h0, k)
    v_mat, v_res = _fit("V", Ec, v_target, tol)

    pi0_ops = np.tensordot(Aalpha.T, pip_ops, axes=([1], [0]))
    u0 = ModuleOperator(e0, e0, u0_mat)
    s0 = SModule(e0, u0)
    pi0 = URepresentation(A, s0, pi0_ops)
    v = ModuleOperator(E1, e0, v_mat)
    fits = {"fit_residual[U0]": u0_res, "fit_residual[pi0']": pip_res, "fit_residual[V]": v_res}
    return KsgnsDilation(h0, e0, u0, pi0, v, fits)


@dataclass(frozen=True)
class DilationCertificate:
    residuals: dict
    verdict: bool
    failing: tuple

    def residual_table(self) -> dict:
        return dict(self.residuals)


def verify_dilation(d: KsgnsDilation, tau: OperatorCpMap, alpha: StarAutomorphism, s1: SModule | None = None,
                    tol: Tolerances = DEFAULT_TOL) -> DilationCertificate:
    """Recompute every conclusion of the dilation theorem from ``d`` alone."""
    S1 = tau.carrier if s1 is None else s1
    A = tau.domain
    E1 = S1.module
    U1 = S1.U
    e0 = d.e0
    h0 = d.h0_dim
    if d.v.matrix.shape != (h0, E1.ambient_rows) or d.pi0.on_basis.shape != (A.dim, h0, h0):
        raise DimensionMismatch("dilation shapes do not match tau")
    V = d.v.matrix
    U0 = d.u0.matrix
    pi0 = d.pi0.on_basis
    Q1 = E1.column_basis
    Q0 = e0.column_basis if h0 else np.zeros((0, 0))
    n = E1.cols
    d1 = E1.dim
    k = d1 * n
    ainv = alpha.inverse()
    pip = np.tensordot(ainv.action_matrix.T, pi0, axes=([1], [0]))

    # generators pi0'(a_p) V U1^* e_q delta_t represent a_p ⊗ e_q ⊗ delta_t
    Ec = generator_columns(E1)
    base = V @ adjoint(U1) @ Ec
    gens = np.concatenate(list(pip @ base), axis=1) if A.dim and h0 else np.zeros((h0, A.dim * k))
    G = twisted_gram(tau, alpha, tol=tol)
    gram_res = fro(adjoint(gens) @ gens - G) / max(1.0, fro(G))

    r = {}
    r["gram_match"] = gram_res
    iso, co, leak = d.s0.unitarity_residuals()
    r["u0_unitarity"] = max(iso, co, leak)
    nat = adjoint(U1) @ adjoint(V) @ U0 - adjoint(V)
    r["v_natural_adjoint"] = _compress(nat, Q1, Q0)
    recon = tau.on_basis - adjoint(V) @ pi0 @ V
    r["tau_reconstruction"] = float(max((_compress(D, Q1, Q1) for D in recon), default=0.0))

    VpV = adjoint(V)[None] @ pi0 @ V[None]  # V* pi0(a_q) V
    left = adjoint(V)[None] @ adjoint(pi0)  # V* pi0(a_p)^*
    twisted = 0.0
    Aalpha = alpha.action_matrix
    B_ = A.basis_matrices
    for p in range(A.dim):
        alpha_p_star = adjoint(alpha.apply_matrix(B_[p]))
        coeff = A.coords(alpha_p_star @ B_)
        rhs = np.tensordot(coeff, VpV, axes=([1], [0]))
        lhs = left[p] @ pi0 @ V
        twisted = max(twisted, max((_compress(D, Q1, Q1) for D in lhs - rhs), default=0.0))
    r["twisted_identity"] = twisted

    urep = verify_u_representation(d.pi0, tol)
    r.update(urep.residual_table("pi0_"))

    Uc = _module_unitary_coords(S1)
    I_n = np.eye(n)
    if h0:
        inter = fro(U0 @ gens - gens @ np.kron(Aalpha, np.kron(Uc, I_n)))
        inter_star = fro(adjoint(U0) @ gens - gens @ np.kron(ainv.action_matrix, np.kron(adjoint(Uc), I_n)))
        scale = max(1.0, fro(gens))
        r["u0_intertwining"] = inter / scale
        r["u0_adjoint_action"] = inter_star / scale
    else:
        r["u0_intertwining"] = 0.0
        r["u0_adjoint_action"] = 0.0

    rank = numerical_rank(gens, tol.rank_tol) if gens.size else 0
    r["minimality_rank_defect"] = float(abs(rank - h0))
    tau1 = tau.of(A.unit_coords)
    vv = opnorm(adjoint(Q1) @ adjoint(V) @ V @ Q1) if Q1.size else 0.0
    r["v_bound_excess"] = max(0.0, vv - opnorm(adjoint(Q1) @ tau1 @ Q1) if Q1.size else 0.0)
    adj = check_adjointable(V, E1, e0, tol)
    r["v_adjointable"] = max(adj.forward, adj.backward)
    r.update(d.fit_residuals)

    failing = tuple(key for key, val in r.items() if key != "minimality_rank_defect" and val > _limit(key, tol))
    if r["minimality_rank_defect"] > 0:
        failing += ("minimality_rank_defect",)
    cert = DilationCertificate(r, not failing, failing)
    return cert


def _limit(key: str, tol: Tolerances) -> float:
    if key in ("u0_unitarity", "v_natural_adjoint"):
        return 1e-9
    return tol.residual_tol


def dilate(tau: OperatorCpMap, alpha: StarAutomorphism, tol: Tolerances = DEFAULT_TOL) -> tuple:
    """Construct and certify; returns ``(dilation, certificate)``."""
    d = construct_ksgns(tau, alpha, tol=tol)
    cert = verify_dilation(d, tau, alpha, tol=tol)
    return d.with_certificate(cert.residuals, cert.verdict), cert


@dataclass(frozen=True, eq=False)
class TauMapFactorization:
    psi_on_Ebasis: np.ndarray
    w: ModuleOperator
    e4: ConcreteModule
    fit_residual: float
    certificate: dict
    verdict: bool
    closure: str = "trivial"


def factorize_tau_map(T_images, E: ConcreteModule, tau: OperatorCpMap, alpha: StarAutomorphism,
                      dilation: KsgnsDilation, s2: SModule, tol: Tolerances = DEFAULT_TOL) -> TauMapFactorization:
    """Factor ``T(x) = W^* Psi(x) V`` with ``Psi`` a pi0-map and ``W`` a coisometry.

    ``T_images[j]`` is ``T(e_j)`` as an ``m2 x m1`` matrix for the basis of
    ``E`` (a module over ``tau``'s domain); ``s2`` carries ``E2``.
    """
    T_images = as_complex(T_images)
    E1 = tau.module
    E2 = s2.module
    if T_images.shape != (E.dim, E2.ambient_rows, E1.ambient_rows):
        raise DimensionMismatch(f"T images have shape {T_images.shape}, expected {(E.dim, E2.ambient_rows, E1.ambient_rows)}")
    u2 = s2.identity_residual()
    if u2 > tol.residual_tol:
        raise U2NotIdentity(u2)
    rep = verify_operator_tau_map(T_images, tau, E, tol)
    if not rep.verdict:
        raise NotTauMap(rep.residual)

    A = tau.domain
    B = E1.algebra
    m2 = E2.ambient_rows
    h0 = dilation.h0_dim
    V = dilation.v.matrix
    pi0 = dilation.pi0.on_basis
    Ec = generator_columns(E1)

    e4_gens = [T_images[j] @ e for j in range(E.dim) for e in E1.basis]
    e4 = make_module(B, m2, e4_gens, tol)
    Q4 = e4.column_basis
    W = Q4 @ adjoint(Q4)

    # Psi(e_j) pi0(a_p) V e_q delta_t = T(e_j a_p) e_q delta_t
    sources = np.concatenate(list(pi0 @ V @ Ec), axis=1) if A.dim and h0 else np.zeros((h0, 0))
    moved = E.coords(E.basis[:, None] @ A.basis_matrices[None, :])  # (j, p, k)
    psi = []
    fit_res = 0.0
    for j in range(E.dim):
        Tjp = np.tensordot(moved[j], T_images, axes=([1], [0]))  # (p, m2, m1)
        targets = np.concatenate(list(Tjp @ Ec), axis=1) if A.dim else np.zeros((m2, 0))
        if h0 == 0:
            op, res = np.zeros((m2, 0), dtype=complex), fro(targets)
        else:
            op, res = fit_operator(sources, targets, tol)
        if res > tol.residual_tol * max(1.0, fro(targets)):
            raise IllDefinedQuotientMap(f"Psi(e_{j})", res)
        fit_res = max(fit_res, res)
        psi.append(op)
    psi = np.array(psi).reshape(E.dim, m2, h0)

    Q1 = E1.column_basis
    Q0 = dilation.e0.column_basis if h0 else np.zeros((0, 0))
    r = {}
    r["w_coisometry"] = fro(adjoint(Q4) @ W @ adjoint(W) @ Q4 - np.eye(Q4.shape[1]))
    r["w_natural_adjoint"] = fro(adjoint(s2.U) @ adjoint(W) - adjoint(W))
    r["factorization"] = float(max((_compress(T_images[j] - adjoint(W) @ psi[j] @ V, np.eye(m2), Q1)
                                    for j in range(E.dim)), default=0.0))
    inner = A.coords(np.conj(np.swapaxes(E.basis, -1, -2))[:, None] @ E.basis[None, :])
    pimap = 0.0
    for i in range(E.dim):
        for j in range(E.dim):
            D = adjoint(psi[i]) @ psi[j] - dilation.pi0.of(inner[i, j])
            pimap = max(pimap, _compress(D, Q0, Q0) if h0 else 0.0)
    r["pi_map_law"] = pimap
    r["psi_range_in_e4"] = float(max((fro(psi[j] - W @ psi[j]) for j in range(E.dim)), default=0.0))
    r["fit_residual[Psi]"] = fit_res
    r["tau_map_residual"] = rep.residual
    limit = {"w_coisometry": 1e-10}
    verdict = all(v <= limit.get(key, tol.residual_tol) for key, v in r.items())
    return TauMapFactorization(psi, ModuleOperator(E2, e4, W), e4, fit_res, r, verdict)


@dataclass(frozen=True, eq=False)
class TauMapInstance:
    base: object
    E: ConcreteModule
    T_images: np.ndarray
    s2: SModule

    @property
    def tau(self) -> OperatorCpMap:
        return self.base.tau

    @property
    def alpha(self) -> StarAutomorphism:
        return self.base.alpha


def tau_map_from_kraus(algebra: BlockAlgebra, kraus: np.ndarray, E1: ConcreteModule):
    """``E = A`` over itself and ``T(x) = (I_r ⊗ x) V_S`` with ``V_S`` the stacked Kraus operators."""
    r, nA, m1 = kraus.shape
    VS = kraus.reshape(r * nA, m1)
    E = standard_module(algebra, algebra.block_dims)
    images = np.array([np.kron(np.eye(r), x) @ VS for x in E.basis])
    B = E1.algebra
    E2 = hilbert_space(r * nA) if B.ambient_dim == 1 else standard_module(B, [r * nA])
    return E, images, SModule.trivial(E2)


def generate_taumap_instance(family: str, size: int, seed: int) -> TauMapInstance:
    """Seeded tau-map instance built on an F1 or F2 alpha-CP instance."""
    if family not in ("F1", "F2"):
        raise ValueError("tau-map instances exist for families F1 and F2 only")
    base = generate_instance(family, size, seed)
    E, images, s2 = tau_map_from_kraus(base.algebra, base.kraus, base.tau.module)
    return TauMapInstance(base, E, images, s2)
