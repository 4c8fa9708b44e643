"""Dense complex linear-algebra substrate.

Everything downstream reduces to three primitives: a deterministic Hermitian
eigendecomposition, the rank-revealing quotient of a positive semidefinite
Gram matrix, and least-squares fitting of an operator from its action on a
spanning set of generators.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DimensionMismatch, NonHermitian, NonSquare, NotPSD

RANK_FLOOR = 1e-14


@dataclass(frozen=True)
class Tolerances:
    psd_tol: float = 1e-9
    rank_tol: float = 1e-10
    residual_tol: float = 1e-8

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (value > 0 and np.isfinite(value)):
                raise ValueError(f"tolerance {name} must be strictly positive, got {value!r}")

    def replace(self, **overrides) -> "Tolerances":
        fields = asdict(self)
        fields.update({k: v for k, v in overrides.items() if v is not None})
        return Tolerances(**fields)

    def as_dict(self) -> dict:
        return asdict(self)


DEFAULT_TOL = Tolerances()


def as_complex(M) -> np.ndarray:
    A = np.asarray(M, dtype=complex)
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def adjoint(M: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(np.asarray(M), -1, -2))


def fro(M) -> float:
    M = np.asarray(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M))


def opnorm(M) -> float:
    M = np.asarray(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def hermiticity_residual(M) -> float:
    M = np.asarray(M)
    return fro(M - adjoint(M))


def _first_nonzero(v: np.ndarray, cutoff: float) -> int:
    idx = np.flatnonzero(np.abs(v) > cutoff)
    return int(idx[0]) if idx.size else 0


def hermitian_eig(M, symmetrize: bool = False, residual_tol: float = DEFAULT_TOL.residual_tol):
    """Eigenvalues in descending order and matching orthonormal eigenvectors.

    Output is a deterministic function of the input bits: each eigenvector is
    phase-normalized so its first non-negligible coordinate is positive real,
    and eigenvectors of tied eigenvalues are ordered by the position of that
    coordinate (then by its size, larger first).
    """
    M = as_complex(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NonSquare(f"expected a square matrix, got shape {M.shape}")
    n = M.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros((0, 0), dtype=complex)
    if not symmetrize:
        res = hermiticity_residual(M)
        if res > residual_tol * max(fro(M), 1e-300):
            raise NonHermitian(res)
    H = 0.5 * (M + adjoint(M))
    w, V = np.linalg.eigh(H)
    w = w[::-1].copy()
    V = V[:, ::-1].copy()

    cutoff = 1e-8 / np.sqrt(n)
    for j in range(n):
        i = _first_nonzero(V[:, j], cutoff)
        z = V[i, j]
        if abs(z) > 0:
            V[:, j] *= np.conj(z) / abs(z)

    tie = 1e-12 * max(float(np.max(np.abs(w))), 1.0)
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and w[stop - 1] - w[stop] <= tie:
            stop += 1
        if stop - start > 1:
            keys = []
            for j in range(start, stop):
                i = _first_nonzero(V[:, j], cutoff)
                keys.append((i, -abs(V[i, j]), j))
            order = [k[2] for k in sorted(keys)]
            V[:, start:stop] = V[:, order]
        start = stop
    return w, V


@dataclass(frozen=True)
class Quotient:
    """Spectral data of a PSD Gram matrix and its quotient coordinates.

    ``coords`` has one row per retained eigenvalue and one column per
    generator, so that ``coords^* coords`` reproduces the Gram matrix.
    """

    rank: int
    coords: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    threshold: float
    scale: float

    @property
    def min_eig(self) -> float:
        return float(self.eigenvalues[-1]) if self.eigenvalues.size else 0.0

    @property
    def range_basis(self) -> np.ndarray:
        return self.eigenvectors[:, : self.rank]

    @property
    def null_basis(self) -> np.ndarray:
        return self.eigenvectors[:, self.rank:]

    @property
    def kept(self) -> np.ndarray:
        return self.eigenvalues[: self.rank]


def gram_scale(eigenvalues: np.ndarray) -> float:
    lam_max = float(eigenvalues[0]) if eigenvalues.size else 0.0
    return max(lam_max, 1.0)


def rank_threshold(eigenvalues: np.ndarray, tol: Tolerances) -> float:
    lam_max = float(eigenvalues[0]) if eigenvalues.size else 0.0
    return max(tol.rank_tol * max(lam_max, 0.0), RANK_FLOOR)


def quotient(G, tol: Tolerances = DEFAULT_TOL, check_psd: bool = True) -> Quotient:
    G = as_complex(G)
    w, Q = hermitian_eig(G, symmetrize=True)
    scale = gram_scale(w)
    if check_psd and w.size and w[-1] < -tol.psd_tol * scale:
        raise NotPSD(float(w[-1]), scale)
    threshold = rank_threshold(w, tol)
    rank = int(np.count_nonzero(w > threshold))
    kept = w[:rank]
    coords = np.sqrt(kept)[:, None] * adjoint(Q[:, :rank])
    return Quotient(rank, coords, w, Q, threshold, scale)


def psd_quotient(G, tol: Tolerances = DEFAULT_TOL):
    """Rank and quotient coordinates ``Lambda_+^{1/2} Q_+^*`` of a PSD Gram matrix."""
    q = quotient(G, tol)
    return q.rank, q.coords


def fit_operator(source_coords, target_coords, tol: Tolerances = DEFAULT_TOL):
    """Least-squares ``op`` with ``op @ source ~= target``; returns ``(op, residual)``.

    A residual above ``tol.residual_tol`` means the map prescribed on the
    generators does not descend to the span of ``source_coords``.
    """
    S = as_complex(source_coords)
    T = as_complex(target_coords)
    if S.ndim != 2 or T.ndim != 2 or S.shape[1] != T.shape[1]:
        raise DimensionMismatch(f"generator counts differ: source {S.shape}, target {T.shape}")
    if S.shape[0] == 0 or S.shape[1] == 0:
        op = np.zeros((T.shape[0], S.shape[0]), dtype=complex)
        return op, fro(T)
    if T.shape[0] == 0:
        return np.zeros((0, S.shape[0]), dtype=complex), 0.0
    sol, *_ = np.linalg.lstsq(S.T, T.T, rcond=None)
    op = sol.T
    return op, fro(op @ S - T)


def orthonormal_columns(M, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of the column space (relative SVD cutoff)."""
    M = as_complex(M)
    if M.size == 0:
        return np.zeros((M.shape[0], 0), dtype=complex)
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    cutoff = max(tol * (s[0] if s.size else 0.0), RANK_FLOOR)
    return U[:, s > cutoff]


def numerical_rank(M, tol: float = 1e-10) -> int:
    return orthonormal_columns(M, tol).shape[1]


def projector(columns: np.ndarray) -> np.ndarray:
    return columns @ adjoint(columns)
