"""JSON instance and certificate formats.

Complex scalars are ``[re, im]`` pairs and matrices are nested row-major
lists of them.  Canonical output sorts keys, uses compact separators and the
shortest round-trip float repr, and ends with a newline, so equal objects
always serialize to equal bytes.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .algebra import BlockAlgebra, StarAutomorphism
from .alphacp import OperatorCpMap
from .cpdkernel import Kernel, KFamily
from .errors import InnerProductEscapesAlgebra, ParseError, SchemaError, ShapeError
from .hmodule import ConcreteModule, SModule
from .numkit import Tolerances

FORMAT_VERSION = "1"
KINDS = ("alphacp", "taumap", "kernel", "kfamily")
ORTHONORMAL_TOL = 1e-10


def canonical_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False, ensure_ascii=True) + "\n"


def digest(obj) -> str:
    return hashlib.sha256(canonical_dumps(obj).encode("ascii")).hexdigest()


# ---------------------------------------------------------------------------
# encoding
# ---------------------------------------------------------------------------


def enc_complex(z) -> list:
    z = complex(z)
    return [float(z.real), float(z.imag)]


def enc_matrix(M) -> list:
    M = np.asarray(M, dtype=complex)
    return [[[float(v.real), float(v.imag)] for v in row] for row in M]


def enc_stack(Ms) -> list:
    return [enc_matrix(M) for M in Ms]


def enc_algebra(A: BlockAlgebra) -> dict:
    return {"blocks": [int(b) for b in A.block_dims]}


def enc_automorphism(alpha: StarAutomorphism) -> dict:
    return {"perm": [int(p) for p in alpha.perm], "unitaries": [enc_matrix(u) for u in alpha.unitaries]}


def enc_module(E: ConcreteModule) -> dict:
    return {"algebra": enc_algebra(E.algebra), "ambient_rows": int(E.ambient_rows), "basis": enc_stack(E.basis)}


def enc_smodule(S: SModule) -> dict:
    return {"module": enc_module(S.module), "unitary": enc_matrix(S.U)}


def document(kind: str, payload: dict, seed=None, tolerances: dict | None = None, label: str | None = None) -> dict:
    doc = {"version": FORMAT_VERSION, "kind": kind, "payload": payload}
    if seed is not None:
        doc["seed"] = int(seed)
    if tolerances:
        doc["tolerances"] = dict(tolerances)
    if label is not None:
        doc["label"] = label
    return doc


def alphacp_payload(tau: OperatorCpMap, alpha: StarAutomorphism) -> dict:
    return {
        "algebra": enc_algebra(tau.domain),
        "alpha": enc_automorphism(alpha),
        "carrier": enc_smodule(tau.carrier),
        "tau": {"on_basis": enc_stack(tau.on_basis)},
    }


def taumap_payload(tau, alpha, E: ConcreteModule, T_images, s2: SModule) -> dict:
    payload = alphacp_payload(tau, alpha)
    payload.update({"E": enc_module(E), "T": {"on_basis": enc_stack(T_images)}, "E2": enc_smodule(s2)})
    return payload


def kernel_payload(k: Kernel, alpha: StarAutomorphism) -> dict:
    return {
        "omega": [str(s) for s in k.omega],
        "source": enc_algebra(k.source),
        "target": enc_algebra(k.target),
        "alpha": enc_automorphism(alpha),
        "values": [[enc_stack(k.values[a, b]) for b in range(k.size)] for a in range(k.size)],
    }


def kfamily_payload(fam: KFamily, alpha: StarAutomorphism) -> dict:
    payload = kernel_payload(fam.kernel, alpha)
    images = fam.images()
    payload.update({
        "E": enc_module(fam.e),
        "F": enc_module(fam.f),
        "maps": {"images": [enc_stack(images[s]) for s in range(fam.kernel.size)]},
    })
    return payload


# ---------------------------------------------------------------------------
# decoding
# ---------------------------------------------------------------------------


def _where(path: str, key) -> str:
    return f"{path}[{key}]" if isinstance(key, int) else f"{path}.{key}"


def _get(node, key, path: str, kind=None):
    if not isinstance(node, dict):
        raise SchemaError(path, "expected an object")
    if key not in node:
        raise SchemaError(_where(path, key), "missing field")
    value = node[key]
    if kind is not None and not isinstance(value, kind):
        raise SchemaError(_where(path, key), f"expected {kind.__name__ if isinstance(kind, type) else 'value'}")
    return value


def _count(value, path: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise SchemaError(path, f"expected an integer >= {minimum}")
    return value


def dec_complex(node, path: str) -> complex:
    if (not isinstance(node, list) or len(node) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in node)):
        raise SchemaError(path, "expected a complex number [re, im]")
    z = complex(float(node[0]), float(node[1]))
    if not np.isfinite(z):
        raise SchemaError(path, "non-finite number")
    return z


def dec_matrix(node, path: str, shape=None) -> np.ndarray:
    if not isinstance(node, list):
        raise SchemaError(path, "expected a matrix (list of rows)")
    rows = len(node)
    width = None
    out = []
    for i, row in enumerate(node):
        rp = _where(path, i)
        if not isinstance(row, list):
            raise SchemaError(rp, "expected a row (list of [re, im])")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ShapeError(rp, f"ragged matrix: row has {len(row)} entries, expected {width}")
        out.append([dec_complex(v, _where(rp, j)) for j, v in enumerate(row)])
    M = np.array(out, dtype=complex).reshape(rows, width or 0)
    if shape is not None and M.shape != tuple(shape):
        raise ShapeError(path, f"matrix has shape {M.shape}, expected {tuple(shape)}")
    return M


def dec_stack(node, path: str, count=None, shape=None) -> np.ndarray:
    if not isinstance(node, list):
        raise SchemaError(path, "expected a list of matrices")
    if count is not None and len(node) != count:
        raise ShapeError(path, f"expected {count} matrices, got {len(node)}")
    mats = [dec_matrix(m, _where(path, i), shape) for i, m in enumerate(node)]
    if not mats:
        return np.zeros((0,) + tuple(shape or (0, 0)), dtype=complex)
    first = mats[0].shape
    for i, m in enumerate(mats):
        if m.shape != first:
            raise ShapeError(_where(path, i), f"matrix has shape {m.shape}, expected {first}")
    return np.array(mats)


def dec_algebra(node, path: str) -> BlockAlgebra:
    blocks = _get(node, "blocks", path, list)
    if not blocks:
        raise SchemaError(_where(path, "blocks"), "at least one block is required")
    dims = tuple(_count(b, _where(_where(path, "blocks"), i), 1) for i, b in enumerate(blocks))
    return BlockAlgebra(dims)


def dec_automorphism(node, path: str, A: BlockAlgebra) -> StarAutomorphism:
    perm = _get(node, "perm", path, list)
    k = len(A.block_dims)
    pp = _where(path, "perm")
    if len(perm) != k:
        raise ShapeError(pp, f"expected {k} entries")
    perm = tuple(_count(p, _where(pp, i)) for i, p in enumerate(perm))
    if sorted(perm) != list(range(k)):
        raise SchemaError(pp, "not a permutation of the blocks")
    for i, j in enumerate(perm):
        if A.block_dims[i] != A.block_dims[j]:
            raise SchemaError(_where(pp, i), "permutation must preserve block dimensions")
    up = _where(path, "unitaries")
    units = _get(node, "unitaries", path, list)
    if len(units) != k:
        raise ShapeError(up, f"expected {k} unitaries")
    us = tuple(dec_matrix(u, _where(up, i), (A.block_dims[i], A.block_dims[i])) for i, u in enumerate(units))
    return StarAutomorphism(A, perm, us)


def dec_module(node, path: str) -> ConcreteModule:
    A = dec_algebra(_get(node, "algebra", path), _where(path, "algebra"))
    m = _count(_get(node, "ambient_rows", path), _where(path, "ambient_rows"))
    bp = _where(path, "basis")
    basis = dec_stack(_get(node, "basis", path, list), bp, shape=(m, A.ambient_dim))
    E = ConcreteModule(A, m, basis)
    if E.dim and E.orthonormality_residual() > ORTHONORMAL_TOL:
        raise SchemaError(bp, "basis is not orthonormal under the trace form")
    mass, pair = E.escape_mass()
    if mass > ORTHONORMAL_TOL:
        raise InnerProductEscapesAlgebra(pair, mass)
    return E


def dec_smodule(node, path: str) -> SModule:
    E = dec_module(_get(node, "module", path), _where(path, "module"))
    U = dec_matrix(_get(node, "unitary", path), _where(path, "unitary"), (E.ambient_rows, E.ambient_rows))
    return SModule.with_unitary(E, U)


@dataclass(frozen=True, eq=False)
class InstanceFile:
    kind: str
    raw: dict
    objects: dict
    tolerances: dict = field(default_factory=dict)
    seed: int | None = None
    source: str = "<memory>"

    @property
    def digest(self) -> str:
        return digest(self.raw)

    def tol(self, base: Tolerances | None = None, **overrides) -> Tolerances:
        base = base or Tolerances()
        return base.replace(**self.tolerances).replace(**overrides)


def _dec_alphacp(p, path):
    A = dec_algebra(_get(p, "algebra", path), _where(path, "algebra"))
    alpha = dec_automorphism(_get(p, "alpha", path), _where(path, "alpha"), A)
    s1 = dec_smodule(_get(p, "carrier", path), _where(path, "carrier"))
    m = s1.module.ambient_rows
    tp = _where(path, "tau")
    ops = dec_stack(_get(_get(p, "tau", path), "on_basis", tp, list), _where(tp, "on_basis"), A.dim, (m, m))
    return {"algebra": A, "alpha": alpha, "tau": OperatorCpMap(A, s1, ops)}


def _dec_taumap(p, path):
    objs = _dec_alphacp(p, path)
    E = dec_module(_get(p, "E", path), _where(path, "E"))
    if E.algebra != objs["algebra"]:
        raise SchemaError(_where(path, "E"), "E must be a module over the map's domain")
    s2 = dec_smodule(_get(p, "E2", path), _where(path, "E2"))
    tp = _where(path, "T")
    shape = (s2.module.ambient_rows, objs["tau"].module.ambient_rows)
    T = dec_stack(_get(_get(p, "T", path), "on_basis", tp, list), _where(tp, "on_basis"), E.dim, shape)
    objs.update({"E": E, "s2": s2, "T": T})
    return objs


def _dec_kernel(p, path):
    omega = _get(p, "omega", path, list)
    labels = []
    for i, s in enumerate(omega):
        if not isinstance(s, str):
            raise SchemaError(_where(_where(path, "omega"), i), "labels must be strings")
        labels.append(s)
    if len(set(labels)) != len(labels):
        raise SchemaError(_where(path, "omega"), "labels must be distinct")
    B = dec_algebra(_get(p, "source", path), _where(path, "source"))
    C = dec_algebra(_get(p, "target", path), _where(path, "target"))
    alpha = dec_automorphism(_get(p, "alpha", path), _where(path, "alpha"), B)
    vp = _where(path, "values")
    vals = _get(p, "values", path, list)
    w, r = len(labels), C.ambient_dim
    if len(vals) != w:
        raise ShapeError(vp, f"expected {w} rows of kernel values")
    table = np.zeros((w, w, B.dim, r, r), dtype=complex)
    for a, row in enumerate(vals):
        rp = _where(vp, a)
        if not isinstance(row, list) or len(row) != w:
            raise ShapeError(rp, f"expected {w} entries")
        for b, entry in enumerate(row):
            table[a, b] = dec_stack(entry, _where(rp, b), B.dim, (r, r))
    return {"kernel": Kernel(tuple(labels), B, C, table), "alpha": alpha}


def _dec_kfamily(p, path):
    objs = _dec_kernel(p, path)
    k = objs["kernel"]
    E = dec_module(_get(p, "E", path), _where(path, "E"))
    F = dec_module(_get(p, "F", path), _where(path, "F"))
    if E.algebra != k.source:
        raise SchemaError(_where(path, "E"), "E must be a module over the kernel's source")
    if F.algebra != k.target:
        raise SchemaError(_where(path, "F"), "F must be a module over the kernel's target")
    mp = _where(_where(path, "maps"), "images")
    images = _get(_get(p, "maps", path), "images", _where(path, "maps"), list)
    if len(images) != k.size:
        raise ShapeError(mp, f"expected {k.size} maps")
    maps = []
    for s, imgs in enumerate(images):
        Y = dec_stack(imgs, _where(mp, s), E.dim, (F.ambient_rows, F.cols))
        coords = F.coords(Y) if E.dim else np.zeros((0, F.dim))
        if E.dim and float(np.max(np.abs(F.realize(coords) - Y))) > ORTHONORMAL_TOL:
            raise SchemaError(_where(mp, s), "images must lie in F")
        maps.append(coords.T)
    objs["kfamily"] = KFamily(k, E, F, np.array(maps).reshape(k.size, F.dim, E.dim))
    return objs


DECODERS = {"alphacp": _dec_alphacp, "taumap": _dec_taumap, "kernel": _dec_kernel, "kfamily": _dec_kfamily}


def parse_document(doc, source: str = "<memory>") -> InstanceFile:
    if not isinstance(doc, dict):
        raise SchemaError("$", "top level must be an object")
    version = _get(doc, "version", "$")
    if version != FORMAT_VERSION:
        raise SchemaError("$.version", f"unsupported version {version!r}")
    kind = _get(doc, "kind", "$")
    if kind not in KINDS:
        raise SchemaError("$.kind", f"unknown kind {kind!r}; expected one of {KINDS}")
    tols = doc.get("tolerances", {})
    if not isinstance(tols, dict):
        raise SchemaError("$.tolerances", "expected an object")
    clean = {}
    for key, value in tols.items():
        if key not in ("psd_tol", "rank_tol", "residual_tol"):
            raise SchemaError(f"$.tolerances.{key}", "unknown tolerance")
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
            raise SchemaError(f"$.tolerances.{key}", "must be a positive number")
        clean[key] = float(value)
    seed = doc.get("seed")
    if seed is not None:
        _count(seed, "$.seed")
    objects = DECODERS[kind](_get(doc, "payload", "$", dict), "$.payload")
    return InstanceFile(kind, doc, objects, clean, seed, source)


def parse_text(text: str, source: str = "<memory>") -> InstanceFile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ParseError(f"{source}:byte {offset}", exc.msg) from None
    return parse_document(doc, source)


def load_instance(path) -> InstanceFile:
    path = str(path)
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ParseError(path, f"cannot read file: {exc.strerror}") from None
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}:byte {exc.start}", "invalid UTF-8") from None
    return parse_text(text, path)


def write_json(obj, path=None, stream=None) -> str:
    text = canonical_dumps(obj)
    if path is not None:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
    elif stream is not None:
        stream.write(text)
    return text


write_instance = write_json
write_certificate = write_json
