"""Command-line front end.

Exit codes: 0 verdict pass, 1 verdict fail or mathematical violation (a
certificate is still emitted), 2 malformed input or usage error.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .algebra import verify_automorphism
from .alphacp import generate_instance, verify_alpha_cp
from .cpdkernel import (
    NEGATIVE_KERNELS,
    construct_correspondence,
    generate_kernel_instance,
    kfamily_law_residual,
    negative_kernel,
    nu_isometry_check,
    verify_alpha_cpd,
    verify_correspondence,
    verify_kfamily_factorization,
    verify_reproducing,
)
from .errors import InputError, MathematicalViolation, SchemaError, SmodcertError
from .formats import (
    alphacp_payload,
    canonical_dumps,
    document,
    enc_matrix,
    enc_module,
    enc_stack,
    kernel_payload,
    kfamily_payload,
    load_instance,
    parse_text,
    taumap_payload,
    write_json,
)
from .ksgns import construct_ksgns, factorize_tau_map, generate_taumap_instance, verify_dilation
from .numkit import Tolerances, fro

CERT_VERSION = "1"


class Outcome:
    """Certificate plus exit code for one instance."""

    def __init__(self, certificate: dict, code: int):
        self.certificate = certificate
        self.code = code


def _floats(table: dict) -> dict:
    return {k: float(v) for k, v in table.items()}


def _finite_or_none(x):
    return float(x) if math.isfinite(x) else None


def certificate(command, inst, tol: Tolerances, dims, residuals, verdict, failing=(), extras=None,
                artifact=None, failure=None) -> dict:
    cert = {
        "certificate_version": CERT_VERSION,
        "command": command,
        "instance_digest": inst.digest,
        "instance_kind": inst.kind,
        "tolerances": tol.as_dict(),
        "dims": {k: int(v) for k, v in dims.items()},
        "residual_table": _floats(residuals),
        "verdict": "pass" if verdict else "fail",
        "failing": sorted(failing),
        "tool_version": __version__,
        "seed": inst.seed,
    }
    if extras:
        cert["extras"] = extras
    if artifact is not None:
        cert["artifact"] = artifact
    if failure is not None:
        cert["failure"] = failure
    return cert


def _failure(exc: MathematicalViolation) -> dict:
    return {"type": type(exc).__name__, "message": str(exc), "details": _floats(exc.details())}


def _require(inst, kinds, command):
    if inst.kind not in kinds:
        raise SchemaError("$.kind", f"{command} expects kind {' or '.join(kinds)}, got {inst.kind!r}")


def _failing(table: dict, limits: dict, tol: Tolerances) -> list:
    return [k for k, v in table.items() if v > limits.get(k, tol.residual_tol)]


def _automorphism_failing(auto, tol: Tolerances) -> list:
    out = [f"alpha_{k}" for k in ("unital", "multiplicative", "star") if getattr(auto, k) > tol.residual_tol]
    if auto.bijective_min_singular <= tol.residual_tol:
        out.append("alpha_bijective_min_singular")
    if auto.unitary_drift > 1e-12:
        out.append("alpha_unitary_drift")
    return out


# ---------------------------------------------------------------------------
# alpha-CP side
# ---------------------------------------------------------------------------


def _alphacp_dims(tau) -> dict:
    E = tau.module
    return {
        "algebra_dim": tau.domain.dim,
        "algebra_ambient": tau.domain.ambient_dim,
        "carrier_rows": E.ambient_rows,
        "carrier_dim": E.dim,
        "coefficient_ambient": E.cols,
        "gram_size": tau.domain.dim * E.dim * E.cols,
    }


def _alphacp_stage(tau, alpha, tol):
    """Residual table, failing keys, extras and verdict of the alpha-CP check."""
    auto = verify_automorphism(alpha, tol)
    cert = verify_alpha_cp(tau, alpha, tol)
    iso, co, leak = tau.carrier.unitarity_residuals()
    table = dict(cert.residual_table())
    table.update({f"alpha_{k}": v for k, v in auto.residual_table().items()})
    table["carrier_unitarity"] = max(iso, co, leak)
    failing = list(cert.failing())
    if not auto.verdict:
        failing += _automorphism_failing(auto, tol)
    if table["carrier_unitarity"] > 1e-10:
        failing.append("carrier_unitarity")
    if not cert.verdict and not cert.failing():
        failing.append("gram_hermiticity_residual")
    extras = {
        "domination_table": [float(m) for m in cert.domination_table],
        "lemma_domination_M": _finite_or_none(cert.lemma_domination_M),
        "lemma_domination_finite": cert.lemma_domination_finite,
        "gram_rank": cert.gram_rank,
        "notes": list(cert.notes),
    }
    return table, failing, extras, not failing


def cmd_verify_alphacp(inst, tol):
    _require(inst, ("alphacp", "taumap"), "verify-alphacp")
    tau, alpha = inst.objects["tau"], inst.objects["alpha"]
    table, failing, extras, ok = _alphacp_stage(tau, alpha, tol)
    cert = certificate("verify-alphacp", inst, tol, _alphacp_dims(tau), table, ok, failing, extras)
    return Outcome(cert, 0 if ok else 1)


def _encode_dilation(d) -> dict:
    return {
        "h0_dim": d.h0_dim,
        "e0": enc_module(d.e0),
        "u0": enc_matrix(d.u0.matrix),
        "pi0": {"on_basis": enc_stack(d.pi0.on_basis)},
        "v": enc_matrix(d.v.matrix),
    }


def _dilate_stage(inst, tau, alpha, tol, command):
    """Returns ``(dilation, table, failing, extras, dims)`` or an early Outcome."""
    table, failing, extras, ok = _alphacp_stage(tau, alpha, tol)
    dims = _alphacp_dims(tau)
    table = {f"alphacp.{k}": v for k, v in table.items()}
    failing = [f"alphacp.{k}" for k in failing]
    if not ok:
        failure = {"type": "NotAlphaCp", "message": "map is not alpha-completely positive", "details": {}}
        return None, Outcome(certificate(command, inst, tol, dims, table, False, failing, extras, failure=failure), 1)
    try:
        d = construct_ksgns(tau, alpha, tol=tol, check=False)
    except MathematicalViolation as exc:
        return None, Outcome(certificate(command, inst, tol, dims, table, False, failing, extras, failure=_failure(exc)), 1)
    dc = verify_dilation(d, tau, alpha, tol=tol)
    table.update(dc.residuals)
    failing += list(dc.failing)
    dims["h0_dim"] = d.h0_dim
    dims["e0_dim"] = d.e0.dim
    extras["closure"] = "trivial"
    return (d, table, failing, extras, dims), None


def cmd_dilate(inst, tol):
    _require(inst, ("alphacp", "taumap"), "dilate")
    tau, alpha = inst.objects["tau"], inst.objects["alpha"]
    staged, early = _dilate_stage(inst, tau, alpha, tol, "dilate")
    if early:
        return early
    d, table, failing, extras, dims = staged
    ok = not failing
    cert = certificate("dilate", inst, tol, dims, table, ok, failing, extras, artifact=_encode_dilation(d))
    return Outcome(cert, 0 if ok else 1)


def cmd_factorize_taumap(inst, tol):
    _require(inst, ("taumap",), "factorize-taumap")
    o = inst.objects
    tau, alpha = o["tau"], o["alpha"]
    staged, early = _dilate_stage(inst, tau, alpha, tol, "factorize-taumap")
    if early:
        return early
    d, table, failing, extras, dims = staged
    dims.update({"E_dim": o["E"].dim, "E2_rows": o["s2"].module.ambient_rows})
    try:
        fz = factorize_tau_map(o["T"], o["E"], tau, alpha, d, o["s2"], tol)
    except MathematicalViolation as exc:
        cert = certificate("factorize-taumap", inst, tol, dims, table, False, failing, extras, failure=_failure(exc))
        return Outcome(cert, 1)
    table.update({f"taumap.{k}": v for k, v in fz.certificate.items()})
    failing += [f"taumap.{k}" for k in _failing(fz.certificate, {"w_coisometry": 1e-10}, tol)]
    dims["e4_dim"] = fz.e4.dim
    artifact = {
        "dilation": _encode_dilation(d),
        "psi": {"on_basis": enc_stack(fz.psi_on_Ebasis)},
        "w": enc_matrix(fz.w.matrix),
        "e4": enc_module(fz.e4),
    }
    ok = not failing
    return Outcome(certificate("factorize-taumap", inst, tol, dims, table, ok, failing, extras, artifact), 0 if ok else 1)


# ---------------------------------------------------------------------------
# kernel side
# ---------------------------------------------------------------------------


def _kernel_dims(k) -> dict:
    return {
        "omega_size": k.size,
        "source_dim": k.source.dim,
        "target_dim": k.target.dim,
        "target_ambient": k.target.ambient_dim,
        "gram_size": k.size * k.source.dim * k.target.ambient_dim,
    }


def _cpd_stage(inst, tol, command):
    k, alpha = inst.objects["kernel"], inst.objects["alpha"]
    dims = _kernel_dims(k)
    auto = verify_automorphism(alpha, tol)
    try:
        cert = verify_alpha_cpd(k, alpha, tol)
    except MathematicalViolation as exc:
        return None, Outcome(certificate(command, inst, tol, dims, {}, False, ["hermiticity_residual"], failure=_failure(exc)), 1)
    table = dict(cert.residual_table())
    table.update({f"alpha_{key}": v for key, v in auto.residual_table().items()})
    failing = list(cert.failing())
    if not auto.verdict:
        failing += _automorphism_failing(auto, tol)
    if "kfamily" in inst.objects:
        law = kfamily_law_residual(inst.objects["kfamily"])
        table["kfamily_law"] = law
        if law > tol.residual_tol:
            failing.append("kfamily_law")
    extras = {
        "domination_table": [float(m) for m in cert.domination_table],
        "gram_rank": cert.gram_rank,
        "notes": list(cert.notes),
    }
    return (k, alpha, table, failing, extras, dims), None


def cmd_verify_cpd(inst, tol):
    _require(inst, ("kernel", "kfamily"), "verify-cpd")
    staged, early = _cpd_stage(inst, tol, "verify-cpd")
    if early:
        return early
    _, _, table, failing, extras, dims = staged
    ok = not failing
    return Outcome(certificate("verify-cpd", inst, tol, dims, table, ok, failing, extras), 0 if ok else 1)


def cmd_factorize_kernel(inst, tol):
    _require(inst, ("kernel", "kfamily"), "factorize-kernel")
    staged, early = _cpd_stage(inst, tol, "factorize-kernel")
    if early:
        return early
    k, alpha, table, failing, extras, dims = staged
    table = {f"cpd.{key}": v for key, v in table.items()}
    failing = [f"cpd.{key}" for key in failing]
    if failing:
        failure = {"type": "NotAlphaCpd", "message": "kernel is not alpha-CPD", "details": {}}
        return Outcome(certificate("factorize-kernel", inst, tol, dims, table, False, failing, extras, failure=failure), 1)
    try:
        c = construct_correspondence(k, alpha, tol, check=False)
    except MathematicalViolation as exc:
        return Outcome(certificate("factorize-kernel", inst, tol, dims, table, False, failing, extras, failure=_failure(exc)), 1)
    reports = [verify_correspondence(c, k, alpha, tol), verify_reproducing(c, k, alpha, tol)]
    derived = float(np.max(np.abs(c.derived_kernel().values - k.values), initial=0.0))
    table["derived_kernel"] = derived
    limits = {"u_unitarity": 1e-9}
    if "kfamily" in inst.objects:
        reports.append(verify_kfamily_factorization(inst.objects["kfamily"], c, alpha, tol))
    if alpha.is_identity_residual() <= tol.residual_tol:
        Q = c.fmodule.column_basis
        table["u_identity"] = fro((c.u.matrix - np.eye(c.hf_dim)) @ Q) if c.hf_dim else 0.0
        limits["u_identity"] = 1e-10
        if "kfamily" in inst.objects:
            reports.append(nu_isometry_check(inst.objects["kfamily"], c, alpha, tol))
    for rep in reports:
        table.update(rep.residuals)
    failing = _failing({key: v for key, v in table.items() if not key.startswith("cpd.")}, limits, tol)
    dims["hf_dim"] = c.hf_dim
    dims["fmodule_dim"] = c.fmodule.dim
    artifact = {
        "hf_dim": c.hf_dim,
        "fmodule": enc_module(c.fmodule),
        "u": enc_matrix(c.u.matrix),
        "pi": {"on_basis": enc_stack(c.pi_on_Bbasis)},
        "kernel_elements": enc_stack(c.kernel_elements),
    }
    ok = not failing
    return Outcome(certificate("factorize-kernel", inst, tol, dims, table, ok, failing, extras, artifact), 0 if ok else 1)


# ---------------------------------------------------------------------------
# generation and reporting
# ---------------------------------------------------------------------------


def generate_document(kind: str, family: str, seed: int, size: int) -> dict:
    if kind == "alphacp":
        g = generate_instance(family, size, seed)
        return document("alphacp", alphacp_payload(g.tau, g.alpha), seed=seed, label=g.label)
    if kind == "taumap":
        t = generate_taumap_instance(family, size, seed)
        return document("taumap", taumap_payload(t.tau, t.alpha, t.E, t.T_images, t.s2), seed=seed, label=t.base.label)
    if kind in ("kernel", "kfamily"):
        if family in NEGATIVE_KERNELS:
            if kind == "kfamily":
                raise ValueError("negative fixtures exist for kind kernel only")
            ki = negative_kernel(family)
            return document("kernel", kernel_payload(ki.kernel, ki.alpha), seed=seed, label=ki.label)
        if family != "positive":
            raise ValueError(f"unknown kernel family {family!r}")
        ki = generate_kernel_instance(size, seed, with_family=(kind == "kfamily"))
        if kind == "kernel":
            return document("kernel", kernel_payload(ki.kernel, ki.alpha), seed=seed, label=ki.label)
        return document("kfamily", kfamily_payload(ki.kfamily, ki.alpha), seed=seed, label=ki.label)
    raise ValueError(f"unknown kind {kind!r}")


# quantities in the table that are not "smaller is better" residuals
NOT_RESIDUALS = ("gram_scale", "gram_min_eig", "bijective_min_singular")


def worst_residual(cert: dict):
    table = cert.get("residual_table", {})
    failing = [k for k in cert.get("failing", []) if k in table]
    pool = failing or [k for k in table if not k.endswith(NOT_RESIDUALS)]
    if not pool:
        return None, None
    name = max(pool, key=lambda k: abs(table[k]))
    return name, table[name]


def render_report(cert: dict, color: bool = False) -> str:
    verdict = cert.get("verdict", "?")
    if color:
        tint = "\033[32m" if verdict == "pass" else "\033[31m"
        verdict_s = f"{tint}{verdict.upper()}\033[0m"
    else:
        verdict_s = verdict.upper()
    lines = [
        f"command   : {cert.get('command')}",
        f"verdict   : {verdict_s}",
        f"instance  : {cert.get('instance_kind')} sha256={cert.get('instance_digest')}",
        f"tool      : smodcert {cert.get('tool_version')}",
    ]
    if cert.get("seed") is not None:
        lines.append(f"seed      : {cert['seed']}")
    tols = cert.get("tolerances", {})
    lines.append("tolerances: " + ", ".join(f"{k}={v:g}" for k, v in sorted(tols.items())))
    dims = cert.get("dims", {})
    if dims:
        lines.append("dims      : " + ", ".join(f"{k}={v}" for k, v in sorted(dims.items())))
    name, value = worst_residual(cert)
    if name is not None:
        lines.append(f"worst residual: {name} = {value:.3e}")
    if cert.get("failing"):
        lines.append("failing   : " + ", ".join(cert["failing"]))
    if "failure" in cert:
        lines.append(f"failure   : {cert['failure']['type']}: {cert['failure']['message']}")
    lines.append("residuals:")
    table = cert.get("residual_table", {})
    width = max((len(k) for k in table), default=0)
    for k in sorted(table):
        lines.append(f"  {k.ljust(width)}  {table[k]: .3e}")
    return "\n".join(lines) + "\n"


def cmd_report(path: str, color: bool) -> int:
    import json

    try:
        with open(path, "r", encoding="utf-8") as fh:
            cert = json.load(fh)
    except OSError as exc:
        raise SchemaError(path, f"cannot read file: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        from .errors import ParseError

        raise ParseError(f"{path}:byte {exc.pos}", exc.msg) from None
    if not isinstance(cert, dict) or "verdict" not in cert or "residual_table" not in cert:
        raise SchemaError(path, "not a certificate")
    sys.stdout.write(render_report(cert, color))
    return 0 if cert["verdict"] == "pass" else 1


COMMANDS = {
    "verify-alphacp": cmd_verify_alphacp,
    "dilate": cmd_dilate,
    "factorize-taumap": cmd_factorize_taumap,
    "verify-cpd": cmd_verify_cpd,
    "factorize-kernel": cmd_factorize_kernel,
}


def run_file(command: str, path: str, tol_overrides: dict) -> Outcome:
    inst = load_instance(path)
    tol = inst.tol(**tol_overrides)
    return COMMANDS[command](inst, tol)


def run_text(command: str, text: str, tol_overrides: dict | None = None) -> Outcome:
    inst = parse_text(text)
    return COMMANDS[command](inst, inst.tol(**(tol_overrides or {})))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--psd-tol", type=float, default=None, help="relative negative-eigenvalue threshold")
    common.add_argument("--rank-tol", type=float, default=None, help="relative null-space threshold")
    common.add_argument("--residual-tol", type=float, default=None, help="absolute identity-residual threshold")
    common.add_argument("--format", choices=["json"], default="json", help="certificate format")

    parser = argparse.ArgumentParser(prog="smodcert", description="Certified alpha-CP dilations and kernel factorizations.")
    parser.add_argument("--version", action="version", version=f"smodcert {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("verify-alphacp", "verify-cpd"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("files", nargs="+")
        p.add_argument("-o", "--output", default=None, help="write certificates here instead of stdout")
        p.add_argument("-j", "--jobs", type=int, default=1, help="instances processed in parallel")
    for name in ("dilate", "factorize-taumap", "factorize-kernel"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("file")
        p.add_argument("-o", "--output", default=None)

    g = sub.add_parser("generate", parents=[common])
    g.add_argument("--kind", required=True, choices=["alphacp", "taumap", "kernel", "kfamily"])
    g.add_argument("--family", default=None, help="F1, F2, F3 (alphacp/taumap); positive, hermiticity-broken, indefinite (kernel)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--size", type=int, default=2)
    g.add_argument("-o", "--output", default=None)

    r = sub.add_parser("report")
    r.add_argument("file")
    return parser


def _emit(text: str, output):
    if output is None:
        sys.stdout.write(text)
    else:
        with open(output, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    try:
        if args.command == "report":
            color = "NO_COLOR" not in os.environ and sys.stdout.isatty()
            return cmd_report(args.file, color)
        overrides = {"psd_tol": args.psd_tol, "rank_tol": args.rank_tol, "residual_tol": args.residual_tol}
        Tolerances().replace(**overrides)
        if args.command == "generate":
            family = args.family or ("F1" if args.kind in ("alphacp", "taumap") else "positive")
            doc = generate_document(args.kind, family, args.seed, args.size)
            write_json(doc, path=args.output, stream=None if args.output else sys.stdout)
            return 0
        files = getattr(args, "files", None) or [args.file]
        jobs = max(1, getattr(args, "jobs", 1))

        def one(path):
            try:
                return run_file(args.command, path, overrides)
            except InputError as exc:
                return exc

        if jobs > 1 and len(files) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(one, files))
        else:
            results = [one(p) for p in files]
        code = 0
        text = []
        for path, res in zip(files, results):
            if isinstance(res, InputError):
                print(f"error: {res}", file=sys.stderr)
                code = 2
                continue
            if res.code == 1:
                print(f"{path}: verdict fail", file=sys.stderr)
            code = max(code, res.code)
            text.append(canonical_dumps(res.certificate))
        _emit("".join(text), args.output)
        return code
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, SmodcertError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main(argv=None):
    sys.exit(run_command(argv))


if __name__ == "__main__":
    main()
