"""alpha-CPD kernels, reproducing kernel S-correspondences and kernel families.

A kernel over a finite index set ``Omega`` is stored as a dense value table
``values[s, s', p]`` holding the ``r x r`` matrix of ``K^{s,s'}(b_p)``.

Condition (i) quantifies over coefficients ``c_i`` in the target algebra.
Because the unit lies in that algebra, the vectors ``c_i delta`` exhaust
``C^r``, so it suffices to test positivity of the scalar Gram over
``(sigma, p, t)`` with ``t`` a standard basis index of ``C^r``.

Domination is certified in the operator order ``G_b <= M G``.  This is
sufficient for the norm form of condition (iii): compress both sides by the
coefficient vector and take norms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .algebra import BlockAlgebra, StarAutomorphism
from .alphacp import GramSpectrum, domination_data, ginibre, haar_unitary
from .errors import (
    AlgebraMismatch,
    AlphaNotIdentity,
    DimensionMismatch,
    IllDefinedQuotientMap,
    NonHermitianKernel,
    NotAlphaCpd,
    SizeCapExceeded,
)
from .hmodule import (
    ConcreteModule,
    ModuleOperator,
    SModule,
    URepresentation,
    make_module,
    standard_module,
    verify_u_representation,
)
from .numkit import DEFAULT_TOL, Tolerances, adjoint, as_complex, fit_operator, fro, quotient

DOMINATION_NOTE = (
    "sufficient: G_b <= M G in the operator order implies the norm inequality "
    "by compressing with the coefficient vector"
)


@dataclass(frozen=True, eq=False)
class Kernel:
    omega: tuple
    source: BlockAlgebra
    target: BlockAlgebra
    values: np.ndarray

    def __post_init__(self):
        vals = as_complex(self.values)
        w, D, r = len(self.omega), self.source.dim, self.target.ambient_dim
        if vals.shape != (w, w, D, r, r):
            raise DimensionMismatch(f"kernel table has shape {vals.shape}, expected {(w, w, D, r, r)}")
        object.__setattr__(self, "omega", tuple(self.omega))
        object.__setattr__(self, "values", vals)

    @property
    def size(self) -> int:
        return len(self.omega)

    def of(self, s: int, t: int, coords) -> np.ndarray:
        return np.tensordot(np.asarray(coords, dtype=complex), self.values[s, t], axes=([-1], [0]))

    def hermiticity_residual(self) -> float:
        B = self.source
        star = self.values[:, :, B.star_index]
        flipped = np.conj(np.swapaxes(np.swapaxes(self.values, 0, 1), -1, -2))
        return fro(star - flipped)

    def membership_residual(self) -> float:
        """Mass of kernel values outside the target algebra."""
        C = self.target
        V = self.values
        return fro(V - C.embed(C.coords(V)))

    def scaled(self, c) -> "Kernel":
        return Kernel(self.omega, self.source, self.target, c * self.values)


def kernel_gram_raw(k: Kernel, alpha: StarAutomorphism, a_left=None) -> np.ndarray:
    """Gram over ``(sigma, p, t)`` with entry ``K^{s,s'}(alpha(b_p)^* b_p')[t, t']``."""
    if alpha.algebra != k.source:
        raise AlgebraMismatch("alpha must act on the kernel's source algebra")
    B = k.source
    left = B.basis_matrices
    if a_left is not None:
        a = np.asarray(a_left, dtype=complex)
        left = (B.embed(a) if a.ndim == 1 else a) @ left
    twisted = np.conj(np.swapaxes(alpha.apply_matrix(left), -1, -2))
    coeff = B.coords(twisted[:, None] @ left[None, :])  # (p, p', r)
    blocks = np.einsum("pqx,abxij->apibqj", coeff, k.values)
    w, D, r = k.size, B.dim, k.target.ambient_dim
    return blocks.reshape(w * D * r, w * D * r)


@dataclass(frozen=True)
class AlphaCpdCertificate:
    hermiticity_residual: float
    membership_residual: float
    alpha_invariance_residual: float
    gram_min_eig: float
    gram_scale: float
    gram_rank: int
    cond_iii_nullspace_leak: float
    domination_table: tuple
    verdict: bool
    tolerances: Tolerances
    notes: tuple = field(default=(DOMINATION_NOTE,))

    def residual_table(self) -> dict:
        return {
            "hermiticity_residual": self.hermiticity_residual,
            "membership_residual": self.membership_residual,
            "alpha_invariance_residual": self.alpha_invariance_residual,
            "gram_min_eig": self.gram_min_eig,
            "gram_scale": self.gram_scale,
            "cond_iii_nullspace_leak": self.cond_iii_nullspace_leak,
        }

    def failing(self) -> list:
        tol = self.tolerances
        out = []
        for key in ("membership_residual", "alpha_invariance_residual", "cond_iii_nullspace_leak"):
            if getattr(self, key) > tol.residual_tol:
                out.append(key)
        if self.gram_min_eig < -tol.psd_tol * self.gram_scale:
            out.append("gram_min_eig")
        return out


def check_hermitian(k: Kernel, tol: Tolerances = DEFAULT_TOL) -> float:
    res = k.hermiticity_residual()
    if res > tol.residual_tol * max(1.0, fro(k.values)):
        raise NonHermitianKernel(res)
    return res


def verify_alpha_cpd(k: Kernel, alpha: StarAutomorphism, tol: Tolerances = DEFAULT_TOL) -> AlphaCpdCertificate:
    herm = check_hermitian(k, tol)
    B = k.source
    mem = k.membership_residual()
    moved = np.tensordot(alpha.action_matrix.T, k.values, axes=([1], [2]))  # (p, s, s', r, r)
    inv = fro(np.moveaxis(moved, 0, 2) - k.values)
    G = kernel_gram_raw(k, alpha)
    spec = GramSpectrum.of(G, tol)
    r = k.target.ambient_dim
    leak = 0.0
    table = []
    I_w = np.eye(k.size)
    for s in range(B.dim):
        L = np.kron(I_w, B.left_mult_matrix(B.basis_matrices[s]))
        l_s, m_s = domination_data(spec, L, r)
        leak = max(leak, l_s)
        table.append(m_s)
    cert = AlphaCpdCertificate(herm, mem, inv, spec.min_eig, spec.scale, int(np.count_nonzero(spec.pos)),
                               leak, tuple(table), False, tol)
    return AlphaCpdCertificate(**{**cert.__dict__, "verdict": not cert.failing()})


def minimal_kernel_domination(k: Kernel, alpha: StarAutomorphism, b, tol: Tolerances = DEFAULT_TOL) -> float:
    """Least ``M(b)`` in the operator order; ``math.inf`` when the null space leaks."""
    B = k.source
    b = np.asarray(b, dtype=complex)
    b = B.embed(b) if b.ndim == 1 else b
    spec = GramSpectrum.of(kernel_gram_raw(k, alpha), tol)
    leak, M = domination_data(spec, np.kron(np.eye(k.size), B.left_mult_matrix(b)), k.target.ambient_dim)
    return math.inf if leak > tol.residual_tol else M


@dataclass(frozen=True, eq=False)
class RksCorrespondence:
    hf_dim: int
    generators: np.ndarray
    fmodule: ConcreteModule
    u: ModuleOperator
    pi_on_Bbasis: np.ndarray
    kernel_elements: np.ndarray
    fit_residuals: dict
    source: BlockAlgebra
    omega: tuple

    @property
    def smodule(self) -> SModule:
        return SModule(self.fmodule, self.u)

    @property
    def pi(self) -> URepresentation:
        return URepresentation(self.source, self.smodule, self.pi_on_Bbasis)

    def generator(self, sigma: int, p: int) -> np.ndarray:
        """``b_p k_sigma`` as an ``hf x r`` matrix."""
        return self.generators[sigma, p]

    def derived_kernel(self) -> Kernel:
        """``K'^{s,s'}(b) = <k_s, pi(b) k_s'>``; recovers the kernel it was built from."""
        ks = self.kernel_elements
        vals = np.einsum("aix,pij,bjy->abpxy", np.conj(ks), self.pi_on_Bbasis, ks)
        target = BlockAlgebra(self.fmodule.algebra.block_dims)
        return Kernel(self.omega, self.source, target, vals)


def construct_correspondence(k: Kernel, alpha: StarAutomorphism, tol: Tolerances = DEFAULT_TOL,
                             check: bool = True) -> RksCorrespondence:
    if check:
        cert = verify_alpha_cpd(k, alpha, tol)
        if not cert.verdict:
            raise NotAlphaCpd(cert)
    B, Cc = k.source, k.target
    w, D, r = k.size, B.dim, Cc.ambient_dim
    G = kernel_gram_raw(k, alpha)
    G = 0.5 * (G + adjoint(G))
    q = quotient(G, tol)
    hf, C = q.rank, q.coords

    gens = C.reshape(hf, w, D, r).transpose(1, 2, 0, 3)  # (sigma, p, hf, r)
    if hf:
        fmod = make_module(Cc, hf, list(gens.reshape(w * D, hf, r)), tol)
    else:
        fmod = ConcreteModule(Cc, 0, np.zeros((0, 0, r)))
    ks = gens[:, list(B.diagonal_units)].sum(axis=1)

    def fit(which, target):
        op, res = fit_operator(C, target, tol)
        if res > tol.residual_tol * max(1.0, fro(target)):
            raise IllDefinedQuotientMap(which, res)
        return op, res

    I_w, I_r = np.eye(w), np.eye(r)
    u_mat, u_res = fit("U", C @ np.kron(I_w, np.kron(alpha.action_matrix, I_r)))
    pis = []
    pi_res = 0.0
    for s in range(D):
        L = B.left_mult_matrix(B.basis_matrices[s])
        op, res = fit(f"pi(b_{s})", C @ np.kron(I_w, np.kron(L, I_r)))
        pis.append(op)
        pi_res = max(pi_res, res)
    pis = np.array(pis).reshape(D, hf, hf)
    u = ModuleOperator(fmod, fmod, u_mat)
    return RksCorrespondence(hf, gens, fmod, u, pis, ks, {"fit_residual[U]": u_res, "fit_residual[pi]": pi_res},
                             B, k.omega)


@dataclass(frozen=True)
class Report:
    residuals: dict
    verdict: bool

    def residual_table(self) -> dict:
        return dict(self.residuals)

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)


def verify_correspondence(c: RksCorrespondence, k: Kernel, alpha: StarAutomorphism, tol: Tolerances = DEFAULT_TOL) -> Report:
    """Generator inner products, unitarity of ``U`` and the representation laws."""
    B = k.source
    w, D, r = k.size, B.dim, k.target.ambient_dim
    g = c.generators.reshape(w * D, c.hf_dim, r)
    G = kernel_gram_raw(k, alpha)
    cat = np.concatenate(list(g), axis=1) if c.hf_dim else np.zeros((0, w * D * r))
    res = {"generator_gram": float(np.max(np.abs(adjoint(cat) @ cat - G), initial=0.0))}
    iso, co, leak = c.smodule.unitarity_residuals()
    res["u_unitarity"] = max(iso, co, leak)
    pi = c.pi_on_Bbasis
    alpha_pi = np.tensordot(alpha.action_matrix.T, pi, axes=([1], [0]))
    res["remark_identity"] = float(max((fro(adjoint(pi[B.star_index[p]]) - alpha_pi[p]) for p in range(D)), default=0.0))
    res.update(verify_u_representation(c.pi, tol).residual_table("pi_"))
    res.update(c.fit_residuals)
    limits = {"u_unitarity": 1e-9}
    return Report(res, all(v <= limits.get(key, tol.residual_tol) for key, v in res.items()))


def verify_reproducing(c: RksCorrespondence, k: Kernel, alpha: StarAutomorphism, tol: Tolerances = DEFAULT_TOL,
                       kernel_elements=None) -> Report:
    """``<k_s, b f> = K^{s,s''}(b b_p)`` and ``= <alpha(b^*) k_s, f>`` for ``f = b_p k_s''``.

    Coefficients ``c`` multiply both sides on the right, so comparing the
    ``r x r`` values covers every coefficient basis element.
    """
    B = k.source
    ks = c.kernel_elements if kernel_elements is None else as_complex(kernel_elements)
    pi = c.pi_on_Bbasis
    g = c.generators
    prod = B.coords(B.basis_matrices[:, None] @ B.basis_matrices[None, :])  # (s, p, x)
    alpha_star = alpha.action_matrix[:, B.star_index]  # column s: alpha(b_s^*)
    eval_res = 0.0
    swap_res = 0.0
    for s in range(B.dim):
        moved = pi[s] @ g  # (s'', p, hf, r)
        lhs = np.einsum("aix,bpiy->abpxy", np.conj(ks), moved)
        rhs = np.einsum("px,abxij->abpij", prod[s], k.values)
        eval_res = max(eval_res, float(np.max(np.abs(lhs - rhs), initial=0.0)))
        ak = np.tensordot(alpha_star[:, s], pi, axes=([0], [0])) @ ks  # alpha(b_s^*) k_sigma
        other = np.einsum("aix,bpiy->abpxy", np.conj(ak), g)
        swap_res = max(swap_res, float(np.max(np.abs(lhs - other), initial=0.0)))
    res = {"reproducing_evaluation": eval_res, "reproducing_alpha_star": swap_res}
    return Report(res, max(res.values()) <= tol.residual_tol)


@dataclass(frozen=True, eq=False)
class KFamily:
    kernel: Kernel
    e: ConcreteModule
    f: ConcreteModule
    maps: np.ndarray

    def __post_init__(self):
        M = as_complex(self.maps)
        if M.shape != (self.kernel.size, self.f.dim, self.e.dim):
            raise DimensionMismatch(f"maps have shape {M.shape}, expected {(self.kernel.size, self.f.dim, self.e.dim)}")
        if self.e.algebra != self.kernel.source or self.f.algebra != self.kernel.target:
            raise AlgebraMismatch("E must live over the kernel's source and F over its target")
        object.__setattr__(self, "maps", M)

    def images(self) -> np.ndarray:
        """``K^s(e_q)`` realized as ``m_F x r`` matrices, shape ``(sigma, q, m_F, r)``."""
        return np.tensordot(self.maps.transpose(0, 2, 1), self.f.basis, axes=([2], [0]))

    def scaled(self, sigma: int, c) -> "KFamily":
        maps = self.maps.copy()
        maps[sigma] *= c
        return KFamily(self.kernel, self.e, self.f, maps)


def kfamily_law_residual(fam: KFamily) -> float:
    E, k = fam.e, fam.kernel
    if E.dim == 0:
        return 0.0
    Y = fam.images()
    inner = k.source.coords(np.conj(np.swapaxes(E.basis, -1, -2))[:, None] @ E.basis[None, :])
    lhs = np.einsum("aqix,bkiy->aqbkxy", np.conj(Y), Y)
    rhs = np.einsum("qkp,abpxy->aqbkxy", inner, k.values)
    return float(np.max(np.abs(lhs - rhs)))


def _module_times_basis(E: ConcreteModule, B: BlockAlgebra) -> np.ndarray:
    """Coordinates of ``e_q b_s`` in ``E``, shape ``(q, s, d_E)``."""
    return E.coords(E.basis[:, None] @ B.basis_matrices[None, :])


def verify_kfamily_factorization(fam: KFamily, c: RksCorrespondence, alpha: StarAutomorphism,
                                 tol: Tolerances = DEFAULT_TOL) -> Report:
    """``<K^s(x b) c, K^s'(x' b') c'> = <alpha(b) k_s c, <x, x'> b' k_s' c'>`` over basis tuples."""
    k = fam.kernel
    B = k.source
    E = fam.e
    law = kfamily_law_residual(fam)
    if E.dim == 0:
        return Report({"kfamily_law": law, "factorization_identity": 0.0}, law <= tol.residual_tol)
    w, dE, D = k.size, E.dim, B.dim
    xb = _module_times_basis(E, B)  # (q, s, j)
    Y = fam.images()  # (sigma, j, m, r)
    img = np.einsum("qsj,ajmr->aqsmr", xb, Y)
    flat = img.reshape(w * dE * D, *img.shape[-2:])
    lhs = np.einsum("imx,jmy->ijxy", np.conj(flat), flat)

    pi = c.pi_on_Bbasis
    ks = c.kernel_elements
    alpha_pi = np.tensordot(alpha.action_matrix.T, pi, axes=([1], [0]))  # pi(alpha(b_s))
    left = alpha_pi @ ks[:, None]  # (sigma, s, hf, r)
    inner = np.conj(np.swapaxes(E.basis, -1, -2))[:, None] @ E.basis[None, :]  # (q, q', n, n)
    zb = B.coords(inner[:, :, None] @ B.basis_matrices[None, None])  # (q, q', s', x)
    piz = np.tensordot(zb, pi, axes=([3], [0]))  # (q, q', s', hf, hf)
    right = np.einsum("kjtuv,bvy->kjbtuy", piz, ks)  # (q, q', s', sigma', hf, r)
    rhs = np.einsum("asux,qkbtuy->aqsbktxy", np.conj(left), right)  # right is (q, q', sigma', s', hf, r)
    rhs = rhs.reshape(w * dE * D, w * dE * D, *rhs.shape[-2:])
    fact = float(np.max(np.abs(lhs - rhs)))
    res = {"kfamily_law": law, "factorization_identity": fact}
    return Report(res, max(res.values()) <= tol.residual_tol)


def nu_isometry_check(fam: KFamily, c: RksCorrespondence, alpha: StarAutomorphism, tol: Tolerances = DEFAULT_TOL) -> Report:
    """With ``alpha = id``, ``x ⊗ b k_s c -> K^s(x b) c`` preserves inner products."""
    drift = alpha.is_identity_residual()
    if drift > tol.residual_tol:
        raise AlphaNotIdentity(drift)
    k = fam.kernel
    B = k.source
    E = fam.e
    w, dE, D = k.size, E.dim, B.dim
    if E.dim == 0 or c.hf_dim == 0:
        images = fam.images() if E.dim else np.zeros((w, 0, fam.f.ambient_rows, k.target.ambient_dim))
        return Report({"nu_isometry": float(np.max(np.abs(images), initial=0.0))}, True)
    inner = B.coords(np.conj(np.swapaxes(E.basis, -1, -2))[:, None] @ E.basis[None, :])
    pin = np.tensordot(inner, c.pi_on_Bbasis, axes=([2], [0]))  # (q, q', hf, hf)
    g = c.generators  # (sigma, p, hf, r)
    tensor = np.einsum("apix,qkij,bsjy->qapksbxy", np.conj(g), pin, g)
    xb = _module_times_basis(E, B)
    img = np.einsum("qsj,ajmr->qasmr", xb, fam.images())
    image = np.einsum("qapmx,kbsmy->qapksbxy", np.conj(img), img)
    res = float(np.max(np.abs(tensor - image)))
    return Report({"nu_isometry": res}, res <= tol.residual_tol)


# ---------------------------------------------------------------------------
# instance generation
# ---------------------------------------------------------------------------

TARGETS = ((1,), (2,), (1, 1))


@dataclass(frozen=True, eq=False)
class KernelInstance:
    label: str
    seed: int
    kernel: Kernel
    alpha: StarAutomorphism
    kfamily: KFamily | None
    expected_verdict: bool


def scalar_kernel(matrix) -> Kernel:
    """Kernel over ``Omega = {0..w-1}`` from C to C acting by multiplication."""
    M = as_complex(matrix)
    w = M.shape[0]
    C = BlockAlgebra((1,))
    return Kernel(tuple(range(w)), C, C, M.reshape(w, w, 1, 1, 1))


def kernel_from_vectors(B: BlockAlgebra, Cc: BlockAlgebra, K: np.ndarray, mu: int) -> Kernel:
    """``K^{s,s'}(b) = K_s^* (b_1 ⊗ I_mu) K_s'`` with ``b_1`` the first block of ``b``."""
    k1 = B.block_dims[0]
    first = B.basis_matrices[:, :k1, :k1]
    rho = np.array([np.kron(b, np.eye(mu)) for b in first])
    vals = np.einsum("aix,pij,bjy->abpxy", np.conj(K), rho, K)
    return Kernel(tuple(range(K.shape[0])), B, Cc, vals)


def kfamily_from_vectors(kernel: Kernel, K: np.ndarray, mu: int, E: ConcreteModule, tol: Tolerances = DEFAULT_TOL) -> KFamily:
    """``K^s(x) = ((x iota_1) ⊗ I_mu) K_s`` with ``iota_1`` the first-block inclusion."""
    k1 = kernel.source.block_dims[0]
    Cc = kernel.target
    imgs = np.array([[np.kron(x[:, :k1], np.eye(mu)) @ K[s] for x in E.basis] for s in range(K.shape[0])])
    mF = imgs.shape[2]
    F = make_module(Cc, mF, list(imgs.reshape(-1, mF, Cc.ambient_dim)), tol)
    maps = F.coords(imgs).transpose(0, 2, 1)
    return KFamily(kernel, E, F, maps)


def generate_kernel_instance(size: int, seed: int, omega: int | None = None, blocks=None,
                             with_family: bool = True) -> KernelInstance:
    """Seeded positive kernel instance with ``B = M_k1 ⊕ M_k2`` and ``alpha = id ⊕ Ad(beta)``.

    Draw order: ``|Omega|``, block dims, target choice, multiplicity ``mu``,
    kernel vectors, ``beta``, identity coin (``alpha = id`` with probability
    1/3), module multiplicities, module isometry.
    ``omega`` and ``blocks`` override the corresponding draws (the draws
    still happen so the stream stays aligned).
    """
    size = int(size)
    if size < 1 or size > 4:
        raise SizeCapExceeded("size must lie in 1..4")
    rng = np.random.default_rng(seed)
    w = int(rng.integers(1, 4))
    k1 = int(rng.integers(1, size + 1))
    k2 = int(rng.integers(1, size + 1))
    if omega is not None:
        w = int(omega)
    if blocks is not None:
        k1, k2 = (int(b) for b in blocks)
    B = BlockAlgebra((k1, k2))
    tdims = TARGETS[int(rng.integers(0, len(TARGETS)))]
    Cc = BlockAlgebra(tdims)
    r = Cc.ambient_dim
    mu = int(rng.integers(1, 3))
    if tdims == (1, 1):
        # each target coordinate lives in its own copy so the values stay diagonal
        K = np.zeros((w, k1, 2 * mu, 2), dtype=complex)
        K[:, :, :mu, 0] = ginibre(rng, (w, k1, mu))
        K[:, :, mu:, 1] = ginibre(rng, (w, k1, mu))
        K = K.reshape(w, 2 * k1 * mu, 2)
        mu_eff = 2 * mu
    else:
        K = ginibre(rng, (w, k1 * mu, r))
        mu_eff = mu
    K = K / np.sqrt(k1 * mu_eff)
    beta = haar_unitary(rng, k2)
    alpha = StarAutomorphism(B, (0, 1), (np.eye(k1), beta))
    if rng.random() < 1 / 3:
        alpha = StarAutomorphism.identity(B)
    kernel = kernel_from_vectors(B, Cc, K, mu_eff)
    mults = [int(rng.integers(1, 3)), int(rng.integers(0, 2))]
    fam = None
    label = f"kernel-w{w}-b{k1}+{k2}-c{'+'.join(map(str, tdims))}-mu{mu}"
    if with_family:
        E0 = standard_module(B, mults)
        extra = int(rng.integers(0, 2))
        R = haar_unitary(rng, E0.ambient_rows + extra)[:, : E0.ambient_rows]
        E = ConcreteModule(B, E0.ambient_rows + extra, R @ E0.basis)
        fam = kfamily_from_vectors(kernel, K, mu_eff, E)
    return KernelInstance(label, seed, kernel, alpha, fam, True)


NEGATIVE_KERNELS = ("hermiticity-broken", "indefinite")


def negative_kernel(name: str) -> KernelInstance:
    C = BlockAlgebra((1,))
    ident = StarAutomorphism.identity(C)
    if name == "hermiticity-broken":
        return KernelInstance(name, 0, scalar_kernel([[1.0, 1.0], [0.0, 1.0]]), ident, None, False)
    if name == "indefinite":
        return KernelInstance(name, 0, scalar_kernel([[1.0, 2.0], [2.0, 1.0]]), ident, None, False)
    raise ValueError(f"unknown negative kernel {name!r}")
