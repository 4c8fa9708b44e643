"""alpha-completely positive maps: representation, certification, generators.

A map ``tau: A -> B^a(E1)`` is stored by its values on the canonical basis of
``A``.  Positivity of the twisted form is checked on the Gram matrix of the
generators ``a_p ⊗ e_q ⊗ delta_t`` (``a_p`` algebra basis, ``e_q`` module
basis, ``delta_t`` standard basis of ``C^n``); any finite tuple in the
definition is a linear combination of these, so the basis Gram suffices.

The domination condition is reduced to finitely many eigenproblems: the
twisted Gram with ``a`` inserted on the left equals ``M_a^* G M_a`` where
``M_a`` is left multiplication by ``a`` on algebra coordinates (tensored with
the identity), so ``G_a <= M G`` holds for some finite ``M`` iff ``M_a`` maps
the null space of ``G`` into itself, and the least such ``M`` is the top
eigenvalue of the pencil restricted to the range of ``G``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .algebra import BlockAlgebra, StarAutomorphism
from .errors import (
    AlgebraMismatch,
    DimensionMismatch,
    MultiBlockUnsupported,
    NonHermitianKernel,
    SizeCapExceeded,
)
from .hmodule import ConcreteModule, SModule, check_adjointable, hilbert_space, standard_module
from .numkit import (
    DEFAULT_TOL,
    Tolerances,
    adjoint,
    as_complex,
    fro,
    gram_scale,
    hermitian_eig,
    hermiticity_residual,
    opnorm,
    rank_threshold,
)

MAX_ALGEBRA_DIM = 64
MAX_CARRIER_ROWS = 16


@dataclass(frozen=True, eq=False)
class OperatorCpMap:
    domain: BlockAlgebra
    carrier: SModule
    on_basis: np.ndarray

    def __post_init__(self):
        ops = as_complex(self.on_basis)
        m = self.carrier.module.ambient_rows
        if ops.shape != (self.domain.dim, m, m):
            raise DimensionMismatch(f"expected {self.domain.dim} operators of size {m}x{m}, got {ops.shape}")
        object.__setattr__(self, "on_basis", ops)

    @property
    def module(self) -> ConcreteModule:
        return self.carrier.module

    def of(self, coords) -> np.ndarray:
        return np.tensordot(np.asarray(coords, dtype=complex), self.on_basis, axes=([-1], [0]))

    def of_matrix(self, a) -> np.ndarray:
        return self.of(self.domain.coords(a))

    def scaled(self, c) -> "OperatorCpMap":
        return OperatorCpMap(self.domain, self.carrier, c * self.on_basis)


def generator_columns(E: ConcreteModule) -> np.ndarray:
    """``m x (d n)`` matrix whose column ``(q, t)`` is ``e_q delta_t``."""
    if E.dim == 0:
        return np.zeros((E.ambient_rows, 0), dtype=complex)
    return np.concatenate(list(E.basis), axis=1)


def _check_pair(tau: OperatorCpMap, alpha: StarAutomorphism):
    if tau.domain != alpha.algebra:
        raise AlgebraMismatch("tau's domain differs from the automorphism's algebra")


def twisted_gram_raw(tau: OperatorCpMap, alpha: StarAutomorphism, a_left=None) -> np.ndarray:
    """Unsymmetrized twisted Gram, indexed by ``(p, q, t)`` lexicographically."""
    _check_pair(tau, alpha)
    A = tau.domain
    left = A.basis_matrices
    if a_left is not None:
        a = np.asarray(a_left, dtype=complex)
        a = A.embed(a) if a.ndim == 1 else a
        left = a @ left
    twisted = np.conj(np.swapaxes(alpha.apply_matrix(left), -1, -2))
    coeff = A.coords(twisted[:, None] @ left[None, :])
    X = np.einsum("abr,rij->abij", coeff, tau.on_basis)
    Ec = generator_columns(tau.module)
    k = Ec.shape[1]
    blocks = np.einsum("ia,pqij,jb->paqb", np.conj(Ec), X, Ec)
    return blocks.reshape(A.dim * k, A.dim * k)


def twisted_gram(tau: OperatorCpMap, alpha: StarAutomorphism, a_left=None, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Hermitian twisted Gram matrix; raises if the raw matrix is not Hermitian."""
    G = twisted_gram_raw(tau, alpha, a_left)
    res = hermiticity_residual(G)
    if res > tol.residual_tol * max(1.0, fro(G)):
        raise NonHermitianKernel(res)
    return 0.5 * (G + adjoint(G))


def apply_left_mult(L: np.ndarray, X: np.ndarray, k: int) -> np.ndarray:
    """``(L ⊗ I_k) X`` for ``X`` with rows indexed by ``(p, t)``."""
    D = L.shape[0]
    Y = X.reshape(D, k, -1)
    return np.einsum("pq,qkc->pkc", L, Y).reshape(D * k, -1)


def left_mult_rows(R: np.ndarray, L: np.ndarray, k: int) -> np.ndarray:
    """``R (L ⊗ I_k)`` for ``R`` with columns indexed by ``(p, t)``."""
    D = L.shape[0]
    Y = R.reshape(R.shape[0], D, k)
    return np.einsum("rpk,pq->rqk", Y, L).reshape(R.shape[0], D * k)


@dataclass(frozen=True)
class GramSpectrum:
    """Eigen-split of a (possibly indefinite) Gram matrix."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    threshold: float
    scale: float

    @classmethod
    def of(cls, G, tol: Tolerances) -> "GramSpectrum":
        w, Q = hermitian_eig(G, symmetrize=True)
        return cls(w, Q, rank_threshold(w, tol), gram_scale(w))

    @property
    def min_eig(self) -> float:
        return float(self.eigenvalues[-1]) if self.eigenvalues.size else 0.0

    @property
    def pos(self) -> np.ndarray:
        return self.eigenvalues > self.threshold

    @property
    def null(self) -> np.ndarray:
        return np.abs(self.eigenvalues) <= self.threshold

    @property
    def nonnull(self) -> np.ndarray:
        return ~self.null


def domination_data(spec: GramSpectrum, L: np.ndarray, k: int):
    """Null-space leak and pencil maximum for left multiplication by ``L``.

    Leak is ``||G (L ⊗ I) N||_2 / scale`` over an orthonormal null basis ``N``;
    the pencil maximum is the least ``M`` with ``(L⊗I)^* G (L⊗I) <= M G`` on
    the range of the positive part of ``G``.
    """
    w, Q = spec.eigenvalues, spec.eigenvectors
    if w.size == 0:
        return 0.0, 0.0
    nz = spec.nonnull
    Qnz = Q[:, nz]
    R = left_mult_rows(adjoint(Qnz), L, k)
    N = Q[:, spec.null]
    leak = 0.0
    if N.shape[1] and Qnz.shape[1]:
        leak = opnorm(w[nz][:, None] * (R @ N)) / spec.scale
    pos = spec.pos
    if not np.any(pos):
        return leak, 0.0
    lam = w[pos]
    Rpos = R[pos[nz]]
    Y = np.sqrt(lam)[:, None] * (Rpos @ Q[:, pos]) / np.sqrt(lam)[None, :]
    return leak, opnorm(Y) ** 2


@dataclass(frozen=True)
class AlphaCpCertificate:
    cond_i_residual: float
    star_residual: float
    adjointable_residual: float
    gram_hermiticity_residual: float
    gram_min_eig: float
    gram_scale: float
    gram_rank: int
    cond_iii_nullspace_leak: float
    domination_table: tuple
    lemma_domination_M: float
    verdict: bool
    tolerances: Tolerances
    notes: tuple = field(default=())

    @property
    def lemma_domination_finite(self) -> bool:
        return math.isfinite(self.lemma_domination_M)

    def residual_table(self) -> dict:
        table = {
            "cond_i_residual": self.cond_i_residual,
            "star_residual": self.star_residual,
            "adjointable_residual": self.adjointable_residual,
            "gram_hermiticity_residual": self.gram_hermiticity_residual,
            "gram_min_eig": self.gram_min_eig,
            "gram_scale": self.gram_scale,
            "cond_iii_nullspace_leak": self.cond_iii_nullspace_leak,
        }
        return table

    def failing(self) -> list:
        tol = self.tolerances
        out = []
        if self.cond_i_residual > tol.residual_tol:
            out.append("cond_i_residual")
        if self.star_residual > tol.residual_tol:
            out.append("star_residual")
        if self.adjointable_residual > tol.residual_tol:
            out.append("adjointable_residual")
        if self.gram_min_eig < -tol.psd_tol * self.gram_scale:
            out.append("gram_min_eig")
        if self.cond_iii_nullspace_leak > tol.residual_tol:
            out.append("cond_iii_nullspace_leak")
        return out


def _restricted_max(E: ConcreteModule, diffs: np.ndarray) -> float:
    if diffs.shape[0] == 0:
        return 0.0
    Q = E.column_basis
    return float(np.max(np.linalg.norm(diffs @ Q, axis=(-2, -1)))) if Q.shape[1] else 0.0


def _lemma_gram_factor(tau: OperatorCpMap) -> np.ndarray:
    """``F`` with ``F^* F = [<e_q d_t, tau(a_p)^* tau(a_p') e_q' d_t'>]``."""
    Ec = generator_columns(tau.module)
    F = tau.on_basis @ Ec
    return np.concatenate(list(F), axis=1) if F.shape[0] else np.zeros((tau.module.ambient_rows, 0))


def verify_alpha_cp(tau: OperatorCpMap, alpha: StarAutomorphism, tol: Tolerances = DEFAULT_TOL) -> AlphaCpCertificate:
    _check_pair(tau, alpha)
    A = tau.domain
    E = tau.module
    ops = tau.on_basis
    U = tau.carrier.U

    star = _restricted_max(E, ops[A.star_index] - adjoint(ops))
    alpha_ops = tau.of(alpha.action_matrix.T)
    cond_i = max(
        _restricted_max(E, alpha_ops - ops),
        _restricted_max(E, adjoint(U) @ ops @ U - ops),
    )
    adj = 0.0
    for T in ops:
        rep = check_adjointable(T, E, E, tol)
        adj = max(adj, rep.forward, rep.backward)

    raw = twisted_gram_raw(tau, alpha)
    herm = hermiticity_residual(raw)
    spec = GramSpectrum.of(raw, tol)
    k = E.dim * E.cols

    leak = 0.0
    table = []
    for s in range(A.dim):
        l_s, m_s = domination_data(spec, A.left_mult_matrix(A.basis_matrices[s]), k)
        leak = max(leak, l_s)
        table.append(m_s)

    lemma = lemma_domination_constant(tau, spec, tol)

    cert = AlphaCpCertificate(
        cond_i_residual=cond_i,
        star_residual=star,
        adjointable_residual=adj,
        gram_hermiticity_residual=herm,
        gram_min_eig=spec.min_eig,
        gram_scale=spec.scale,
        gram_rank=int(np.count_nonzero(spec.pos)),
        cond_iii_nullspace_leak=leak,
        domination_table=tuple(table),
        lemma_domination_M=lemma,
        verdict=False,
        tolerances=tol,
        notes=(
            "condition (ii) checked on the canonical-basis Gram; tuples are linear combinations of basis tuples",
            "condition (iii) via null-space invariance under basis left multiplications plus pencil maxima",
        ),
    )
    verdict = not cert.failing() and herm <= tol.residual_tol * max(1.0, fro(raw))
    return AlphaCpCertificate(**{**cert.__dict__, "verdict": bool(verdict)})


def lemma_domination_constant(tau: OperatorCpMap, spec: GramSpectrum, tol: Tolerances) -> float:
    """Least ``M`` with ``[tau(a_i)^* tau(a_j)] <= M [tau(alpha(a_i)^* a_j)]``; ``inf`` if none."""
    F = _lemma_gram_factor(tau)
    w, Q = spec.eigenvalues, spec.eigenvectors
    if w.size == 0:
        return 0.0
    N = Q[:, spec.null]
    scale = max(opnorm(F) ** 2, 1.0)
    if N.shape[1]:
        leak = opnorm(adjoint(F) @ (F @ N)) / scale
        if leak > tol.residual_tol:
            return math.inf
    pos = spec.pos
    if not np.any(pos):
        return 0.0
    Y = F @ Q[:, pos] / np.sqrt(w[pos])[None, :]
    return opnorm(Y) ** 2


def minimal_domination_constant(tau: OperatorCpMap, alpha: StarAutomorphism, a, tol: Tolerances = DEFAULT_TOL) -> float:
    """Least ``M(a)`` in the domination condition; ``math.inf`` when infeasible."""
    _check_pair(tau, alpha)
    A = tau.domain
    a = np.asarray(a, dtype=complex)
    a = A.embed(a) if a.ndim == 1 else a
    spec = GramSpectrum.of(twisted_gram(tau, alpha, tol=tol), tol)
    leak, M = domination_data(spec, A.left_mult_matrix(a), tau.module.dim * tau.module.cols)
    return math.inf if leak > tol.residual_tol else M


@dataclass(frozen=True)
class TauMapReport:
    residual: float
    verdict: bool


def _tau_map_residual(images: np.ndarray, tau_values: np.ndarray, E: ConcreteModule, compress=None) -> float:
    if E.dim == 0:
        return 0.0
    A = E.algebra
    inner = np.einsum("iab,jac->ijbc", np.conj(E.basis), E.basis)
    coeff = A.coords(inner)
    rhs = np.tensordot(coeff, tau_values, axes=([-1], [0]))
    lhs = np.conj(np.swapaxes(images, -1, -2))[:, None] @ images[None, :]
    D = lhs - rhs
    if compress is not None:
        D = adjoint(compress) @ D @ compress
    return float(np.max(np.linalg.norm(D, axis=(-2, -1))))


def verify_tau_map(T, tau_values, E: ConcreteModule, F: ConcreteModule, tol: Tolerances = DEFAULT_TOL) -> TauMapReport:
    """Module-level check of ``<T x, T y> = tau(<x, y>)`` over basis pairs.

    ``T`` is the ``d_F x d_E`` coordinate matrix; ``tau_values`` holds
    ``tau(a_p)`` as matrices in ``F``'s coefficient algebra.
    """
    T = as_complex(T)
    if T.shape != (F.dim, E.dim):
        raise DimensionMismatch(f"T has shape {T.shape}, expected {(F.dim, E.dim)}")
    tau_values = as_complex(tau_values)
    if tau_values.shape[0] != E.algebra.dim:
        raise DimensionMismatch("tau must be given on every basis element of E's algebra")
    images = F.realize(T.T) if E.dim else np.zeros((0, F.ambient_rows, F.cols))
    res = _tau_map_residual(images, tau_values, E)
    return TauMapReport(res, res <= tol.residual_tol)


def verify_operator_tau_map(T_images, tau: OperatorCpMap, E: ConcreteModule, tol: Tolerances = DEFAULT_TOL) -> TauMapReport:
    """``T(x)^* T(y) = tau(<x, y>)`` for ``T: E -> B^a(E1, E2)``, compared on ``E1``."""
    T_images = as_complex(T_images)
    if T_images.shape[0] != E.dim or T_images.shape[-1] != tau.module.ambient_rows:
        raise DimensionMismatch("one operator E1 -> E2 per basis element of E is required")
    if E.algebra != tau.domain:
        raise AlgebraMismatch("E must be a module over tau's domain")
    res = _tau_map_residual(T_images, tau.on_basis, E, compress=tau.module.column_basis)
    return TauMapReport(res, res <= tol.residual_tol)


def choi_matrix(tau: OperatorCpMap) -> np.ndarray:
    """Block matrix ``[tau(E_rs)]_{r,s}``; the alpha = id oracle."""
    if len(tau.domain.block_dims) != 1:
        raise MultiBlockUnsupported("the Choi oracle needs a single-block domain")
    k = tau.domain.block_dims[0]
    m = tau.module.ambient_rows
    J = tau.on_basis.reshape(k, k, m, m)
    return J.transpose(0, 2, 1, 3).reshape(k * m, k * m)


# ---------------------------------------------------------------------------
# instance generation
# ---------------------------------------------------------------------------


def haar_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    Z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    ph = np.diag(R) / np.abs(np.diag(R))
    return Q * ph[None, :]


def ginibre(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def kraus_map_values(algebra: BlockAlgebra, kraus: np.ndarray) -> np.ndarray:
    """``tau(a_p) = sum_k V_k^* a_p V_k`` on the canonical basis."""
    B = algebra.basis_matrices
    return np.einsum("kia,pij,kjb->pab", np.conj(kraus), B, kraus)


def commutant_hermitian(rng: np.random.Generator, ops: np.ndarray, tol: float = 1e-9):
    """A random Hermitian element of the commutant of ``ops`` (row-major vec)."""
    m = ops.shape[-1]
    I = np.eye(m)
    rows = [np.kron(T, I) - np.kron(I, T.T) for T in ops]
    A = np.concatenate(rows, axis=0) if rows else np.zeros((0, m * m))
    _, s, Vh = np.linalg.svd(A) if A.size else (None, np.zeros(0), np.eye(m * m))
    s_full = np.zeros(m * m)
    s_full[: s.size] = s
    cutoff = tol * max(s_full.max(initial=0.0), 1.0)
    null = np.conj(Vh[s_full <= cutoff]).T
    X = (null @ rng.standard_normal(null.shape[1])).reshape(m, m)
    H = 0.5 * (X + adjoint(X))
    nrm = opnorm(H)
    return H / nrm if nrm > 0 else H


def unitary_from_hermitian(H: np.ndarray) -> np.ndarray:
    w, Q = hermitian_eig(H, symmetrize=True)
    return (Q * np.exp(1j * w)[None, :]) @ adjoint(Q)


@dataclass(frozen=True, eq=False)
class GeneratedInstance:
    family: str
    label: str
    seed: int
    algebra: BlockAlgebra
    alpha: StarAutomorphism
    tau: OperatorCpMap
    expected_verdict: bool
    kraus: np.ndarray = None

    @property
    def carrier(self) -> SModule:
        return self.tau.carrier


FAMILIES = ("F1", "F2", "F3")
F3_FIXTURES = ("transpose", "swap-average", "hermiticity-broken")


def _carrier(rng, rows: int, coeff_dim: int) -> ConcreteModule:
    if coeff_dim == 1:
        return hilbert_space(rows)
    return standard_module(BlockAlgebra((coeff_dim,)), [rows])


def generate_instance(family: str, size: int, seed: int) -> GeneratedInstance:
    """Seeded instance of family F1 (CP, alpha = id), F2 (twisted, alpha != id) or F3 (negative).

    Draw order for F1: block dim k, carrier kind, carrier rows, Kraus count,
    Kraus operators.  F2: k1, k2, carrier rows, split point, Kraus count,
    Kraus operators, beta unitary, commutant element.  F3 fixture is
    ``seed % 3``; only the Hermiticity-broken fixture draws numbers.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    size = int(size)
    if size < 1 or size > 4:
        raise SizeCapExceeded(f"size must lie in 1..4 (algebra dim <= {MAX_ALGEBRA_DIM}, carrier rows <= {MAX_CARRIER_ROWS})")
    rng = np.random.default_rng(seed)

    if family == "F1":
        k = int(rng.integers(1, size + 1))
        A = BlockAlgebra((k,))
        coeff = 1 if rng.random() < 0.5 else 2
        rows_cap = min(2 * size, 8) if coeff == 1 else min(size, 4)
        m1 = int(rng.integers(1, rows_cap + 1))
        r = int(rng.integers(1, 4))
        kraus = ginibre(rng, (r, k, m1)) / np.sqrt(r * k)
        E1 = _carrier(rng, m1, coeff)
        tau = OperatorCpMap(A, SModule.trivial(E1), kraus_map_values(A, kraus))
        return GeneratedInstance("F1", f"F1-cp-k{k}-m{m1}-r{r}-b{coeff}", seed, A, StarAutomorphism.identity(A), tau, True, kraus)

    if family == "F2":
        k1 = int(rng.integers(1, size + 1))
        k2 = int(rng.integers(2, max(2, size) + 1))
        A = BlockAlgebra((k1, k2))
        m1 = int(rng.integers(1, min(2 * size, 8) + 1))
        split = int(rng.integers(0, m1)) if m1 > 1 else 0
        r = int(rng.integers(1, 4))
        kraus = np.zeros((r, A.ambient_dim, m1), dtype=complex)
        kraus[:, :k1, :] = ginibre(rng, (r, k1, m1)) / np.sqrt(r * k1)
        if split:
            # block-diagonal Kraus supports give tau a nontrivial commutant
            half = r // 2 + 1 if r > 1 else 1
            kraus[:half, :k1, split:] = 0.0
            kraus[half:, :k1, :split] = 0.0
        beta = haar_unitary(rng, k2)
        alpha = StarAutomorphism(A, (0, 1), (np.eye(k1), beta))
        E1 = hilbert_space(m1)
        values = kraus_map_values(A, kraus)
        H = commutant_hermitian(rng, values)
        U1 = unitary_from_hermitian(H) if np.any(H) else np.eye(m1)
        tau = OperatorCpMap(A, SModule.with_unitary(E1, U1), values)
        return GeneratedInstance("F2", f"F2-twisted-k{k1}+{k2}-m{m1}-r{r}", seed, A, alpha, tau, True, kraus)

    fixture = F3_FIXTURES[seed % 3]
    if fixture == "transpose":
        A = BlockAlgebra((2,))
        values = np.array([M.T for M in A.basis_matrices])
        tau = OperatorCpMap(A, SModule.trivial(hilbert_space(2)), values)
        return GeneratedInstance("F3", "F3-transpose", seed, A, StarAutomorphism.identity(A), tau, False)
    if fixture == "swap-average":
        A = BlockAlgebra((1, 1))
        alpha = StarAutomorphism(A, (1, 0))
        values = np.full((2, 1, 1), 0.5, dtype=complex)
        tau = OperatorCpMap(A, SModule.trivial(hilbert_space(1)), values)
        return GeneratedInstance("F3", "F3-swap-average", seed, A, alpha, tau, False)
    k = int(rng.integers(1, size + 1))
    A = BlockAlgebra((k,))
    m1 = int(rng.integers(1, min(2 * size, 8) + 1))
    kraus = ginibre(rng, (2, k, m1)) / np.sqrt(2 * k)
    Nh = ginibre(rng, (m1, m1))
    Nh = Nh - adjoint(Nh) + 0.1 * np.eye(m1) * 1j
    traces = np.array([np.trace(M) for M in A.basis_matrices])
    values = kraus_map_values(A, kraus) + traces[:, None, None] * Nh[None]
    tau = OperatorCpMap(A, SModule.trivial(hilbert_space(m1)), values)
    return GeneratedInstance("F3", f"F3-hermiticity-broken-k{k}-m{m1}", seed, A, StarAutomorphism.identity(A), tau, False)


def random_choi_map(rng: np.random.Generator, k: int, n: int, cp_bias: float = 0.5) -> OperatorCpMap:
    """Hermiticity-preserving map ``M_k -> M_n`` from a random Hermitian Choi matrix.

    With probability ``cp_bias`` the Choi matrix is shifted to be positive,
    otherwise it is shifted to have a negative eigenvalue.
    """
    Y = ginibre(rng, (k * n, k * n))
    J = Y @ adjoint(Y) / (k * n)
    w = np.linalg.eigvalsh(J)
    gap = 0.05 + 0.5 * rng.random()
    shift = w[0] - gap if rng.random() < cp_bias else w[0] + gap
    J = J - shift * np.eye(k * n)
    values = J.reshape(k, n, k, n).transpose(0, 2, 1, 3).reshape(k * k, n, n)
    A = BlockAlgebra((k,))
    return OperatorCpMap(A, SModule.trivial(hilbert_space(n)), values)
