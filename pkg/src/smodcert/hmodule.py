"""Concrete Hilbert C*-modules in the operator picture.

A module over ``B ⊆ M_n`` is a space of ``m x n`` matrices closed under right
multiplication by ``B``; the inner product is ``<x, y> = x^* y``, which must
land in ``B``.  The ``m``-dimensional column space plays the role of
``E ⊗ H``.  Operators act by left multiplication with ``m_F x m_E`` matrices,
so right ``B``-linearity is automatic.

Elements are handled as coordinate vectors against a trace-orthonormal basis.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .algebra import AlgebraElement, BlockAlgebra, off_block_mass
from .errors import DimensionMismatch, InnerProductEscapesAlgebra, NotAdjointable
from .numkit import (
    DEFAULT_TOL,
    Tolerances,
    adjoint,
    as_complex,
    fro,
    hermitian_eig,
    orthonormal_columns,
)


@dataclass(frozen=True, eq=False)
class ConcreteModule:
    algebra: BlockAlgebra
    ambient_rows: int
    basis: np.ndarray

    def __post_init__(self):
        m, n = int(self.ambient_rows), self.algebra.ambient_dim
        basis = as_complex(self.basis) if np.size(self.basis) else np.zeros((0, m, n), dtype=complex)
        basis = basis.reshape((-1, m, n)) if basis.size else np.zeros((0, m, n), dtype=complex)
        object.__setattr__(self, "ambient_rows", m)
        object.__setattr__(self, "basis", basis)
        basis.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def cols(self) -> int:
        return self.algebra.ambient_dim

    @cached_property
    def _flat(self) -> np.ndarray:
        return self.basis.reshape(self.dim, self.ambient_rows * self.cols).T

    def coords(self, X) -> np.ndarray:
        """Trace-form coordinates ``c_j = tr(B_j^* X)`` of one or more elements."""
        X = np.asarray(X, dtype=complex)
        flat = X.reshape(X.shape[:-2] + (X.shape[-2] * X.shape[-1],))
        return flat @ np.conj(self._flat)

    def realize(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=complex)
        return np.tensordot(c, self.basis, axes=([-1], [0]))

    def membership_residual(self, X) -> float:
        X = np.asarray(X, dtype=complex)
        return fro(X - self.realize(self.coords(X)))

    @cached_property
    def column_basis(self) -> np.ndarray:
        """Orthonormal basis of the span of all columns of all elements."""
        if self.dim == 0:
            return np.zeros((self.ambient_rows, 0), dtype=complex)
        stacked = np.concatenate(list(self.basis), axis=1)
        return orthonormal_columns(stacked)

    @cached_property
    def column_projector(self) -> np.ndarray:
        Q = self.column_basis
        return Q @ adjoint(Q)

    def restrict(self, D) -> float:
        """Frobenius size of an ambient operator difference seen on this module."""
        return fro(np.asarray(D) @ self.column_basis)

    def inner_product(self, x, y, tol: Tolerances = DEFAULT_TOL) -> AlgebraElement:
        X, Y = self.realize(x), self.realize(y)
        # elementwise products in a fixed order make <x,y> = <y,x>^* exact
        M = np.einsum("ab,ac->bc", np.conj(X), Y)
        mass = off_block_mass(M, self.algebra)
        if mass > tol.residual_tol:
            raise InnerProductEscapesAlgebra(("x", "y"), mass)
        return AlgebraElement.from_matrix(self.algebra, M)

    def basis_inner_products(self) -> np.ndarray:
        """``G[i, j] = B_i^* B_j`` as an array of ``n x n`` matrices."""
        return np.einsum("iab,jac->ijbc", np.conj(self.basis), self.basis)

    def orthonormality_residual(self) -> float:
        return fro(adjoint(self._flat) @ self._flat - np.eye(self.dim))

    def closure_residual(self) -> float:
        if self.dim == 0:
            return 0.0
        prods = self.basis[:, None] @ self.algebra.basis_matrices[None, :]
        return fro(prods - self.realize(self.coords(prods)))

    def escape_mass(self):
        if self.dim == 0:
            return 0.0, (0, 0)
        G = self.basis_inner_products()
        flat = G - self.algebra.embed(self.algebra.coords(G))
        masses = np.linalg.norm(flat, axis=(-2, -1))
        i, j = np.unravel_index(int(np.argmax(masses)), masses.shape)
        return float(masses[i, j]), (int(i), int(j))

    def check(self, tol: Tolerances = DEFAULT_TOL) -> dict:
        mass, _ = self.escape_mass()
        return {
            "orthonormality": self.orthonormality_residual(),
            "right_action_closure": self.closure_residual(),
            "inner_product_escape": mass,
        }

    def to_json_parts(self):
        return self.ambient_rows, list(self.basis)


def trace_orthonormalize(generators: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Trace-orthonormal basis of the span of ``generators`` (shape ``(k, m, n)``)."""
    k = generators.shape[0]
    if k == 0:
        return generators[:0]
    flat = generators.reshape(k, -1).T
    G = adjoint(flat) @ flat
    w, Q = hermitian_eig(G, symmetrize=True)
    cutoff = max(tol.rank_tol * max(w[0], 0.0), 1e-14)
    keep = w > cutoff
    vecs = flat @ (Q[:, keep] / np.sqrt(w[keep]))
    # one re-orthonormalization pass keeps the basis orthonormal to ~1e-15
    w2, Q2 = hermitian_eig(adjoint(vecs) @ vecs, symmetrize=True)
    vecs = vecs @ (Q2 / np.sqrt(w2)) @ adjoint(Q2)
    return vecs.T.reshape((-1,) + generators.shape[1:])


def make_module(algebra: BlockAlgebra, ambient_rows: int, generators, tol: Tolerances = DEFAULT_TOL) -> ConcreteModule:
    """Right-``B``-closure of the generators, trace-orthonormalized and certified."""
    m, n = int(ambient_rows), algebra.ambient_dim
    gens = [as_complex(g) for g in generators]
    for g in gens:
        if g.shape != (m, n):
            raise DimensionMismatch(f"generator of shape {g.shape}, expected {(m, n)}")
    if not gens:
        return ConcreteModule(algebra, m, np.zeros((0, m, n), dtype=complex))
    G = np.stack(gens)
    # span{g b} is already right-closed since (g b) b' = g (b b')
    closed = (G[:, None] @ algebra.basis_matrices[None, :]).reshape(-1, m, n)
    basis = trace_orthonormalize(closed, tol)
    module = ConcreteModule(algebra, m, basis)
    mass, pair = module.escape_mass()
    if mass > tol.residual_tol:
        raise InnerProductEscapesAlgebra(pair, mass)
    return module


def standard_module(algebra: BlockAlgebra, multiplicities) -> ConcreteModule:
    """``⊕ M_{m_i x n_i}`` placed block-diagonally; matrix units form its basis."""
    mults = [int(k) for k in multiplicities]
    if len(mults) != len(algebra.block_dims):
        raise DimensionMismatch("one multiplicity per block is required")
    m, n = sum(mults), algebra.ambient_dim
    basis = []
    row = 0
    for k, o, d in zip(mults, algebra.offsets, algebra.block_dims):
        for r in range(k):
            for s in range(d):
                X = np.zeros((m, n), dtype=complex)
                X[row + r, o + s] = 1.0
                basis.append(X)
        row += k
    return ConcreteModule(algebra, m, np.array(basis) if basis else np.zeros((0, m, n)))


def hilbert_space(dim: int) -> ConcreteModule:
    """``C^dim`` as a module over ``C``."""
    return standard_module(BlockAlgebra((1,)), [dim])


@dataclass(frozen=True, eq=False)
class ModuleOperator:
    source: ConcreteModule
    target: ConcreteModule
    matrix: np.ndarray

    def __post_init__(self):
        M = as_complex(self.matrix)
        shape = (self.target.ambient_rows, self.source.ambient_rows)
        if M.shape != shape:
            raise DimensionMismatch(f"operator of shape {M.shape}, expected {shape}")
        object.__setattr__(self, "matrix", M)

    def apply(self, X) -> np.ndarray:
        return self.matrix @ X

    def coord_matrix(self) -> np.ndarray:
        """Matrix of the operator on basis coordinates (``d_target x d_source``)."""
        return self.target.coords(self.matrix @ self.source.basis).T

    @property
    def adjoint(self) -> "ModuleOperator":
        return ModuleOperator(self.target, self.source, adjoint(self.matrix))


@dataclass(frozen=True)
class AdjointabilityReport:
    forward: float
    backward: float
    witness: tuple
    verdict: bool


def _escape(T, E: ConcreteModule, F: ConcreteModule):
    if E.dim == 0:
        return 0.0, None
    imgs = T @ E.basis
    res = np.linalg.norm((imgs - F.realize(F.coords(imgs))).reshape(E.dim, -1), axis=1)
    j = int(np.argmax(res))
    return float(res[j]), j


def check_adjointable(T, E: ConcreteModule, F: ConcreteModule, tol: Tolerances = DEFAULT_TOL) -> AdjointabilityReport:
    T = as_complex(T)
    if T.shape != (F.ambient_rows, E.ambient_rows):
        raise DimensionMismatch(f"operator of shape {T.shape}, expected {(F.ambient_rows, E.ambient_rows)}")
    fwd, jf = _escape(T, E, F)
    bwd, jb = _escape(adjoint(T), F, E)
    witness = ("forward", jf) if fwd >= bwd else ("backward", jb)
    return AdjointabilityReport(fwd, bwd, witness, max(fwd, bwd) <= tol.residual_tol)


@dataclass(frozen=True, eq=False)
class SModule:
    module: ConcreteModule
    unitary: ModuleOperator

    def __post_init__(self):
        if self.unitary.source is not self.module or self.unitary.target is not self.module:
            object.__setattr__(self, "unitary", ModuleOperator(self.module, self.module, self.unitary.matrix))

    @classmethod
    def trivial(cls, module: ConcreteModule) -> "SModule":
        return cls(module, ModuleOperator(module, module, np.eye(module.ambient_rows)))

    @classmethod
    def with_unitary(cls, module: ConcreteModule, U) -> "SModule":
        return cls(module, ModuleOperator(module, module, U))

    @property
    def U(self) -> np.ndarray:
        return self.unitary.matrix

    def unitarity_residuals(self):
        Q = self.module.column_basis
        U = self.U
        k = Q.shape[1]
        iso = fro(adjoint(Q) @ adjoint(U) @ U @ Q - np.eye(k))
        co = fro(adjoint(Q) @ U @ adjoint(U) @ Q - np.eye(k))
        leak = fro(U @ Q - Q @ (adjoint(Q) @ U @ Q))
        return iso, co, leak

    def is_unitary(self, tol: float = 1e-10) -> bool:
        return max(self.unitarity_residuals()) <= tol

    def krein_residual(self) -> float:
        return self.module.restrict(self.U - adjoint(self.U))

    def is_krein(self, tol: Tolerances = DEFAULT_TOL) -> bool:
        return self.is_unitary() and self.krein_residual() <= tol.residual_tol

    def identity_residual(self) -> float:
        return self.module.restrict(self.U - np.eye(self.module.ambient_rows))


def sesquilinear_form(S: SModule, x, y, tol: Tolerances = DEFAULT_TOL) -> AlgebraElement:
    """``[x, y] = <x, U y>`` on coordinates."""
    Uy = S.module.coords(S.U @ S.module.realize(y))
    return S.module.inner_product(x, Uy, tol)


def pair_block_max(left: ConcreteModule, D, right: ConcreteModule | None = None) -> float:
    """``max_{i,j} ||L_i^* D R_j||_F`` over basis elements of two modules."""
    right = left if right is None else right
    if left.dim == 0 or right.dim == 0:
        return 0.0
    L = np.concatenate(list(left.basis), axis=1)
    R = np.concatenate(list(right.basis), axis=1)
    M = adjoint(L) @ np.asarray(D) @ R
    n1, n2 = left.cols, right.cols
    blocks = M.reshape(left.dim, n1, right.dim, n2)
    return float(np.max(np.sqrt(np.sum(np.abs(blocks) ** 2, axis=(1, 3)))))


def natural_adjoint(T: ModuleOperator, S1: SModule, S2: SModule, tol: Tolerances = DEFAULT_TOL):
    """``T^natural = U1^* T^* U2`` together with the pairing-identity residual.

    The residual is ``max ||<T x, U2 y> - <x, U1 T^natural y>||`` over basis
    pairs ``x`` of the source and ``y`` of the target.
    """
    rep = check_adjointable(T.matrix, S1.module, S2.module, tol)
    if not rep.verdict:
        raise NotAdjointable(max(rep.forward, rep.backward))
    nat = adjoint(S1.U) @ adjoint(T.matrix) @ S2.U
    op = ModuleOperator(S2.module, S1.module, nat)
    D = adjoint(T.matrix) @ S2.U - S1.U @ nat
    return op, pair_block_max(S1.module, D, S2.module)


@dataclass(frozen=True, eq=False)
class URepresentation:
    algebra: BlockAlgebra
    smodule: SModule
    on_basis: np.ndarray

    def __post_init__(self):
        ops = as_complex(self.on_basis)
        m = self.smodule.module.ambient_rows
        if ops.shape != (self.algebra.dim, m, m):
            raise DimensionMismatch(f"expected {self.algebra.dim} operators of size {m}x{m}, got {ops.shape}")
        object.__setattr__(self, "on_basis", ops)

    def of(self, coords) -> np.ndarray:
        return np.tensordot(np.asarray(coords, dtype=complex), self.on_basis, axes=([-1], [0]))

    def of_matrix(self, a) -> np.ndarray:
        return self.of(self.algebra.coords(a))


@dataclass(frozen=True)
class URepReport:
    multiplicative: float
    unital: float
    natural_symmetry: float
    bracket: float
    adjointable: float
    verdict: bool

    def residual_table(self, prefix: str = "") -> dict:
        return {
            f"{prefix}multiplicative": self.multiplicative,
            f"{prefix}unital": self.unital,
            f"{prefix}natural_symmetry": self.natural_symmetry,
            f"{prefix}bracket": self.bracket,
            f"{prefix}adjointable": self.adjointable,
        }


def verify_u_representation(pi: URepresentation, tol: Tolerances = DEFAULT_TOL) -> URepReport:
    A = pi.algebra
    E = pi.smodule.module
    U = pi.smodule.U
    ops = pi.on_basis
    Q = E.column_basis
    m = E.ambient_rows
    table = A.product_table
    mult = 0.0
    for p in range(A.dim):
        left = ops[p] @ ops @ Q
        for q in range(A.dim):
            r = table[p, q]
            target = ops[r] @ Q if r >= 0 else 0.0
            mult = max(mult, fro(left[q] - target))
    unital = fro((pi.of(A.unit_coords) - np.eye(m)) @ Q)
    star_ops = ops[A.star_index]
    nat = 0.0
    bracket = 0.0
    adj = 0.0
    for p in range(A.dim):
        D = star_ops[p] - adjoint(U) @ adjoint(ops[p]) @ U
        nat = max(nat, fro(D @ Q))
        # [pi(a) x, y] - [x, pi(a^*) y] = x^* (pi(a)^* U - U pi(a^*)) y
        bracket = max(bracket, pair_block_max(E, adjoint(ops[p]) @ U - U @ star_ops[p]))
        rep = check_adjointable(ops[p], E, E, tol)
        adj = max(adj, rep.forward, rep.backward)
    verdict = max(mult, unital, nat, bracket, adj) <= tol.residual_tol
    return URepReport(mult, unital, nat, bracket, adj, verdict)
