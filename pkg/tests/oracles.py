"""Independent reference computations used by the tests.

Everything here is written with explicit loops over basis elements or with
textbook formulas, deliberately avoiding the vectorized code paths of the
package under test.
"""
import numpy as np


def matrix_units(dims):
    """Matrix units of a block algebra, in the package's canonical order."""
    n = sum(dims)
    out = []
    off = 0
    for d in dims:
        for r in range(d):
            for s in range(d):
                E = np.zeros((n, n), dtype=complex)
                E[off + r, off + s] = 1
                out.append(E)
        off += d
    return out


def expand(M, units):
    """Coordinates of a block-diagonal matrix against matrix units."""
    return np.array([np.vdot(E, M) for E in units])


def brute_twisted_gram(tau, alpha, units, module_basis, a_left=None):
    """Loop-based twisted Gram ``d_t^* e_q^* tau(alpha(a_p)^* a_p') e_q' d_t'``."""
    n = module_basis[0].shape[1] if len(module_basis) else 1
    left = [E if a_left is None else a_left @ E for E in units]
    idx = [(p, q, t) for p in range(len(units)) for q in range(len(module_basis)) for t in range(n)]
    G = np.zeros((len(idx), len(idx)), dtype=complex)
    for i, (p, q, t) in enumerate(idx):
        ap = alpha(left[p]).conj().T
        for j, (p2, q2, t2) in enumerate(idx):
            val = tau(ap @ left[p2])
            G[i, j] = (module_basis[q][:, t].conj() @ val @ module_basis[q2][:, t2])
    return G


def choi(tau, k):
    """``sum_rs E_rs ⊗ tau(E_rs)`` for a map on ``M_k``."""
    blocks = []
    for r in range(k):
        row = []
        for s in range(k):
            E = np.zeros((k, k))
            E[r, s] = 1
            row.append(tau(E))
        blocks.append(row)
    return np.block(blocks)


def kraus_from_choi(J, k, m, cutoff=1e-10):
    """Minimal Kraus family ``V_j: C^m -> C^k`` of a CP map with Choi ``J``.

    With ``J = sum_j v_j v_j^*`` and ``v_j`` reshaped to ``k x m`` as
    ``K_j``, the map is ``a -> sum_j K_j^* a^T ...``; we use the convention
    ``tau(a) = sum_j V_j^* a V_j`` with ``V_j = conj(K_j)``.
    """
    w, U = np.linalg.eigh(J)
    keep = w > cutoff * max(w.max(), 1e-300)
    ops = []
    for lam, v in zip(w[keep], U[:, keep].T):
        K = np.sqrt(lam) * v.reshape(k, m)
        ops.append(K.conj())
    return ops


def stinespring_vectors(kraus, units):
    """Columns ``rho(a_p) V_S delta_q`` with ``rho(a) = I_r ⊗ a``, ordered ``(p, q)``."""
    r = len(kraus)
    VS = np.vstack(kraus)
    cols = []
    for E in units:
        rho = np.kron(np.eye(r), E)
        X = rho @ VS
        for q in range(VS.shape[1]):
            cols.append(X[:, q])
    return np.array(cols).T


def pencil_max(Gb, G, cutoff=1e-10):
    """Largest ``M`` with ``Gb <= M G`` on the range of ``G`` (``G`` PSD)."""
    w, Q = np.linalg.eigh(G)
    keep = w > cutoff * max(w.max(), 1.0)
    R = Q[:, keep] / np.sqrt(w[keep])
    return float(np.linalg.eigvalsh(R.conj().T @ Gb @ R).max()) if keep.any() else 0.0


def haar(rng, d):
    Z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def random_hermitian(rng, d):
    X = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (X + X.conj().T) / 2
