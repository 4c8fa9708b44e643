"""Finite-dimensional C*-algebras as direct sums of full matrix blocks.

Elements live block-diagonally in ``M_n(C)`` with ``n = sum(block_dims)``.
The canonical basis is the matrix units ``E_rs`` of each block, blocks in
order and ``(r, s)`` row-major inside a block; every Gram matrix and every
file format in the package is indexed by this order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import AlgebraMismatch, DimensionMismatch
from .numkit import DEFAULT_TOL, Tolerances, adjoint, as_complex, fro


@dataclass(frozen=True)
class BlockAlgebra:
    block_dims: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.block_dims)
        if not dims or any(d < 1 for d in dims):
            raise ValueError(f"block dimensions must be a non-empty list of positive integers, got {self.block_dims!r}")
        object.__setattr__(self, "block_dims", dims)

    @property
    def ambient_dim(self) -> int:
        return sum(self.block_dims)

    @property
    def dim(self) -> int:
        return sum(d * d for d in self.block_dims)

    @cached_property
    def offsets(self) -> tuple:
        out, acc = [], 0
        for d in self.block_dims:
            out.append(acc)
            acc += d
        return tuple(out)

    @cached_property
    def basis_index(self) -> tuple:
        """``(block, r, s)`` for each canonical basis element."""
        return tuple((i, r, s) for i, d in enumerate(self.block_dims) for r in range(d) for s in range(d))

    @cached_property
    def basis_matrices(self) -> np.ndarray:
        n = self.ambient_dim
        out = np.zeros((self.dim, n, n), dtype=complex)
        for p, (i, r, s) in enumerate(self.basis_index):
            o = self.offsets[i]
            out[p, o + r, o + s] = 1.0
        out.setflags(write=False)
        return out

    @cached_property
    def _positions(self):
        rows = np.array([self.offsets[i] + r for i, r, _ in self.basis_index], dtype=int)
        cols = np.array([self.offsets[i] + s for i, _, s in self.basis_index], dtype=int)
        return rows, cols

    def canonical_basis(self) -> list:
        return [AlgebraElement.from_matrix(self, M) for M in self.basis_matrices]

    def coords(self, M) -> np.ndarray:
        """Coordinates of an embedded element (off-block entries are ignored)."""
        M = np.asarray(M)
        rows, cols = self._positions
        return M[..., rows, cols]

    def embed(self, coords) -> np.ndarray:
        c = np.asarray(coords, dtype=complex)
        if c.shape[-1] != self.dim:
            raise DimensionMismatch(f"expected {self.dim} coordinates, got {c.shape[-1]}")
        n = self.ambient_dim
        out = np.zeros(c.shape[:-1] + (n, n), dtype=complex)
        rows, cols = self._positions
        out[..., rows, cols] = c
        return out

    def unit(self) -> np.ndarray:
        return np.eye(self.ambient_dim, dtype=complex)

    @cached_property
    def unit_coords(self) -> np.ndarray:
        return self.coords(self.unit())

    @cached_property
    def diagonal_units(self) -> tuple:
        return tuple(p for p, (_, r, s) in enumerate(self.basis_index) if r == s)

    @cached_property
    def star_index(self) -> np.ndarray:
        lookup = {key: p for p, key in enumerate(self.basis_index)}
        return np.array([lookup[(i, s, r)] for i, r, s in self.basis_index], dtype=int)

    def left_mult_matrix(self, a) -> np.ndarray:
        """Matrix ``L`` with ``coords(a @ b_p) = L[:, p]``."""
        A = np.asarray(a, dtype=complex)
        if A.ndim == 1:
            A = self.embed(A)
        return self.coords(A @ self.basis_matrices).T

    def right_mult_matrix(self, a) -> np.ndarray:
        A = np.asarray(a, dtype=complex)
        if A.ndim == 1:
            A = self.embed(A)
        return self.coords(self.basis_matrices @ A).T

    @cached_property
    def product_table(self) -> np.ndarray:
        """``T[p, q] = r`` when ``b_p b_q = b_r`` and ``-1`` when the product vanishes."""
        lookup = {key: p for p, key in enumerate(self.basis_index)}
        D = self.dim
        table = np.full((D, D), -1, dtype=int)
        for p, (i, r, s) in enumerate(self.basis_index):
            for q, (j, t, u) in enumerate(self.basis_index):
                if i == j and s == t:
                    table[p, q] = lookup[(i, r, u)]
        return table

    def product_coords(self) -> np.ndarray:
        """``P[p, q] = coords(b_p b_q)``; matrix units make this a table lookup."""
        B = self.basis_matrices
        return self.coords(B[:, None] @ B[None, :])

    def to_json(self) -> dict:
        return {"blocks": list(self.block_dims)}


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    algebra: BlockAlgebra
    blocks: tuple

    def __post_init__(self):
        blocks = tuple(as_complex(b) for b in self.blocks)
        if len(blocks) != len(self.algebra.block_dims):
            raise DimensionMismatch("wrong number of blocks")
        for b, d in zip(blocks, self.algebra.block_dims):
            if b.shape != (d, d):
                raise DimensionMismatch(f"block of shape {b.shape}, expected {(d, d)}")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def from_matrix(cls, algebra: BlockAlgebra, M) -> "AlgebraElement":
        M = as_complex(M)
        blocks = [M[o:o + d, o:o + d].copy() for o, d in zip(algebra.offsets, algebra.block_dims)]
        return cls(algebra, tuple(blocks))

    @classmethod
    def from_coords(cls, algebra: BlockAlgebra, coords) -> "AlgebraElement":
        return cls.from_matrix(algebra, algebra.embed(coords))

    def embed(self) -> np.ndarray:
        n = self.algebra.ambient_dim
        out = np.zeros((n, n), dtype=complex)
        for o, b in zip(self.algebra.offsets, self.blocks):
            out[o:o + b.shape[0], o:o + b.shape[0]] = b
        return out

    def coords(self) -> np.ndarray:
        return np.concatenate([b.reshape(-1) for b in self.blocks])

    def _check(self, other):
        if other.algebra != self.algebra:
            raise AlgebraMismatch("elements of different algebras")

    def __matmul__(self, other):
        self._check(other)
        return AlgebraElement(self.algebra, tuple(x @ y for x, y in zip(self.blocks, other.blocks)))

    def __add__(self, other):
        self._check(other)
        return AlgebraElement(self.algebra, tuple(x + y for x, y in zip(self.blocks, other.blocks)))

    def __sub__(self, other):
        self._check(other)
        return AlgebraElement(self.algebra, tuple(x - y for x, y in zip(self.blocks, other.blocks)))

    def scale(self, c) -> "AlgebraElement":
        return AlgebraElement(self.algebra, tuple(c * x for x in self.blocks))

    @property
    def star(self) -> "AlgebraElement":
        return AlgebraElement(self.algebra, tuple(adjoint(x) for x in self.blocks))

    def norm(self) -> float:
        return max(float(np.linalg.norm(b, 2)) for b in self.blocks)


def _perm_ok(algebra: BlockAlgebra, perm) -> bool:
    k = len(algebra.block_dims)
    if sorted(perm) != list(range(k)):
        return False
    return all(algebra.block_dims[i] == algebra.block_dims[perm[i]] for i in range(k))


@dataclass(frozen=True, eq=False)
class StarAutomorphism:
    """``alpha(a)_{perm[i]} = u_{perm[i]} a_i u_{perm[i]}^*``.

    ``unitaries`` is indexed by the target block.
    """

    algebra: BlockAlgebra
    perm: tuple
    unitaries: tuple = field(default=())

    def __post_init__(self):
        perm = tuple(int(p) for p in self.perm)
        if not _perm_ok(self.algebra, perm):
            raise ValueError(f"block permutation {perm} does not preserve block dimensions {self.algebra.block_dims}")
        us = tuple(as_complex(u) for u in self.unitaries) if self.unitaries else tuple(
            np.eye(d, dtype=complex) for d in self.algebra.block_dims)
        if len(us) != len(perm):
            raise DimensionMismatch("one unitary per block is required")
        for u, d in zip(us, self.algebra.block_dims):
            if u.shape != (d, d):
                raise DimensionMismatch(f"unitary of shape {u.shape}, expected {(d, d)}")
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "unitaries", us)

    @classmethod
    def identity(cls, algebra: BlockAlgebra) -> "StarAutomorphism":
        return cls(algebra, tuple(range(len(algebra.block_dims))))

    def apply_matrix(self, M) -> np.ndarray:
        """Apply to an embedded element (or a stack of them)."""
        A = self.algebra
        M = np.asarray(M, dtype=complex)
        out = np.zeros_like(M)
        for i, j in enumerate(self.perm):
            oi, oj, d = A.offsets[i], A.offsets[j], A.block_dims[i]
            u = self.unitaries[j]
            out[..., oj:oj + d, oj:oj + d] = u @ M[..., oi:oi + d, oi:oi + d] @ adjoint(u)
        return out

    def inverse(self) -> "StarAutomorphism":
        k = len(self.perm)
        inv = [0] * k
        for i, j in enumerate(self.perm):
            inv[j] = i
        # alpha^{-1}(b)_i = u_{perm[i]}^* b_{perm[i]} u_{perm[i]}
        return StarAutomorphism(self.algebra, tuple(inv), tuple(adjoint(self.unitaries[self.perm[i]]) for i in range(k)))

    @cached_property
    def action_matrix(self) -> np.ndarray:
        A = self.algebra
        return A.coords(self.apply_matrix(A.basis_matrices)).T

    def is_identity_residual(self) -> float:
        return fro(self.action_matrix - np.eye(self.algebra.dim))

    def to_json_parts(self):
        return list(self.perm), list(self.unitaries)


def apply_automorphism(alpha: StarAutomorphism, a: AlgebraElement) -> AlgebraElement:
    if a.algebra != alpha.algebra:
        raise AlgebraMismatch("element does not belong to the automorphism's algebra")
    return AlgebraElement.from_matrix(alpha.algebra, alpha.apply_matrix(a.embed()))


@dataclass(frozen=True)
class AutomorphismReport:
    unital: float
    multiplicative: float
    star: float
    bijective_min_singular: float
    unitary_drift: float
    verdict: bool

    def residual_table(self) -> dict:
        return {
            "unital": self.unital,
            "multiplicative": self.multiplicative,
            "star": self.star,
            "bijective_min_singular": self.bijective_min_singular,
            "unitary_drift": self.unitary_drift,
        }


def action_residuals(algebra: BlockAlgebra, action: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> AutomorphismReport:
    """Residual harness for an arbitrary linear action given on coordinates."""
    action = as_complex(action)
    B = algebra.basis_matrices
    images = algebra.embed(action.T)
    unital = fro(algebra.embed(action @ algebra.unit_coords) - algebra.unit())
    prod = algebra.product_coords()
    lhs = algebra.embed(np.einsum("ij,pqj->pqi", action, prod))
    rhs = images[:, None] @ images[None, :]
    multiplicative = float(np.max(np.linalg.norm(lhs - rhs, axis=(-2, -1)))) if len(B) else 0.0
    star_imgs = images[algebra.star_index]
    star = float(np.max(np.linalg.norm(star_imgs - np.conj(np.swapaxes(images, -1, -2)), axis=(-2, -1))))
    smin = float(np.linalg.svd(action, compute_uv=False).min())
    verdict = max(unital, multiplicative, star) <= tol.residual_tol and smin > tol.residual_tol
    return AutomorphismReport(unital, multiplicative, star, smin, 0.0, verdict)


def verify_automorphism(alpha: StarAutomorphism, tol: Tolerances = DEFAULT_TOL) -> AutomorphismReport:
    r = action_residuals(alpha.algebra, alpha.action_matrix, tol)
    drift = max(fro(adjoint(u) @ u - np.eye(u.shape[0])) for u in alpha.unitaries)
    verdict = r.verdict and drift <= 1e-12
    return AutomorphismReport(r.unital, r.multiplicative, r.star, r.bijective_min_singular, drift, verdict)


def project_to_algebra(M, algebra: BlockAlgebra):
    """Diagonal blocks of ``M`` and the Frobenius mass left outside them."""
    M = as_complex(M)
    n = algebra.ambient_dim
    if M.shape != (n, n):
        raise DimensionMismatch(f"expected a {n}x{n} matrix, got {M.shape}")
    elem = AlgebraElement.from_matrix(algebra, M)
    return elem, fro(M - elem.embed())


def off_block_mass(M, algebra: BlockAlgebra) -> float:
    M = np.asarray(M)
    return fro(M - algebra.embed(algebra.coords(M)))
