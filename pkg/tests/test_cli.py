import json

import numpy as np
import pytest

from smodcert.algebra import BlockAlgebra, StarAutomorphism
from smodcert.alphacp import OperatorCpMap
from smodcert.cli import render_report, run_command
from smodcert.errors import ParseError, SchemaError, ShapeError
from smodcert.formats import alphacp_payload, canonical_dumps, digest, document, load_instance, parse_text
from smodcert.hmodule import SModule, standard_module

MINIMAL = {
    "version": "1",
    "kind": "alphacp",
    "payload": {
        "algebra": {"blocks": [1]},
        "alpha": {"perm": [0], "unitaries": [[[[1.0, 0.0]]]]},
        "carrier": {
            "module": {"algebra": {"blocks": [1]}, "ambient_rows": 1, "basis": [[[[1.0, 0.0]]]]},
            "unitary": [[[1.0, 0.0]]],
        },
        "tau": {"on_basis": [[[[1.0, 0.0]]]]},
    },
}


def write(path, obj):
    path.write_text(json.dumps(obj) if not isinstance(obj, str) else obj)
    return str(path)


def id2_document():
    M2 = BlockAlgebra((2,))
    tau = OperatorCpMap(M2, SModule.trivial(standard_module(M2, [2])), M2.basis_matrices.copy())
    return document("alphacp", alphacp_payload(tau, StarAutomorphism.identity(M2)))


def test_minimal_instance_loads(tmp_path):
    inst = load_instance(write(tmp_path / "min.json", MINIMAL))
    assert inst.kind == "alphacp"
    assert inst.digest == digest(MINIMAL)


def test_truncated_file_reports_byte_offset(tmp_path):
    text = json.dumps(MINIMAL)[:57]
    with pytest.raises(ParseError) as err:
        load_instance(write(tmp_path / "cut.json", text))
    assert ":byte " in str(err.value)
    assert run_command(["verify-alphacp", str(tmp_path / "cut.json")]) == 2


def test_ragged_rows_name_the_field():
    doc = json.loads(json.dumps(MINIMAL))
    doc["payload"]["tau"]["on_basis"] = [[[[1.0, 0.0], [0.0, 0.0]], [[1.0, 0.0]]]]
    with pytest.raises(ShapeError) as err:
        parse_text(json.dumps(doc))
    assert "tau.on_basis" in str(err.value)


def test_schema_errors_locate_the_path():
    doc = json.loads(json.dumps(MINIMAL))
    del doc["payload"]["alpha"]
    with pytest.raises(SchemaError) as err:
        parse_text(json.dumps(doc))
    assert "$.payload" in str(err.value) and "alpha" in str(err.value)
    with pytest.raises(SchemaError):
        parse_text(json.dumps({**MINIMAL, "version": "2"}))


def test_round_trip_is_bit_exact(tmp_path):
    text = canonical_dumps(id2_document())
    inst = parse_text(text)
    assert canonical_dumps(inst.raw) == text


def test_transpose_exits_one(tmp_path, capsys):
    out = tmp_path / "t.json"
    assert run_command(["generate", "--kind", "alphacp", "--family", "F3", "--seed", "0", "-o", str(out)]) == 0
    assert run_command(["verify-alphacp", str(out)]) == 1
    cert = json.loads(capsys.readouterr().out)
    assert cert["verdict"] == "fail" and "gram_min_eig" in cert["failing"]
    table = cert["residual_table"]
    assert table["gram_min_eig"] == pytest.approx(-table["gram_scale"])


def test_dilate_then_report(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("NO_COLOR", "1")
    src = write(tmp_path / "id2.json", id2_document())
    out = tmp_path / "d.json"
    assert run_command(["dilate", src, "-o", str(out)]) == 0
    cert = json.loads(out.read_text())
    assert cert["dims"]["h0_dim"] == 2
    capsys.readouterr()
    assert run_command(["report", str(out)]) == 0
    text = capsys.readouterr().out
    assert "PASS" in text and "\033[" not in text


def test_generate_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert run_command(["generate", "--kind", "alphacp", "--family", "F1", "--seed", "7", "-o", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_certificates_are_byte_stable(tmp_path):
    src = tmp_path / "k.json"
    run_command(["generate", "--kind", "kfamily", "--seed", "3", "-o", str(src)])
    outs = []
    for name in ("c1.json", "c2.json"):
        assert run_command(["factorize-kernel", str(src), "-o", str(tmp_path / name)]) == 0
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]
    cert = json.loads(outs[0])
    assert cert["instance_digest"] == load_instance(src).digest


def test_report_names_worst_failing_residual(tmp_path):
    cert = {
        "verdict": "fail",
        "command": "verify-alphacp",
        "residual_table": {"star_residual": 0.5, "cond_i_residual": 0.0, "gram_scale": 9.0},
        "failing": ["star_residual"],
    }
    assert "worst residual: star_residual" in render_report(cert)


def test_exit_code_discipline(tmp_path):
    # mathematically bad input exits 1, malformed input exits 2
    bad_math = tmp_path / "neg.json"
    run_command(["generate", "--kind", "kernel", "--family", "indefinite", "-o", str(bad_math)])
    assert run_command(["verify-cpd", str(bad_math)]) == 1
    assert run_command(["factorize-kernel", str(bad_math), "-o", str(tmp_path / "x.json")]) == 1
    broken = tmp_path / "herm.json"
    run_command(["generate", "--kind", "kernel", "--family", "hermiticity-broken", "-o", str(broken)])
    assert run_command(["verify-cpd", str(broken)]) == 1
    assert run_command(["verify-cpd", write(tmp_path / "junk.json", "{")]) == 2
    assert run_command(["verify-cpd", write(tmp_path / "wrong.json", MINIMAL)]) == 2
    assert run_command(["no-such-command"]) == 2
    assert run_command(["generate", "--kind", "alphacp", "--size", "9"]) == 2


def test_taumap_pipeline(tmp_path):
    src = tmp_path / "tm.json"
    run_command(["generate", "--kind", "taumap", "--family", "F2", "--seed", "2", "-o", str(src)])
    out = tmp_path / "f.json"
    assert run_command(["factorize-taumap", str(src), "-o", str(out)]) == 0
    cert = json.loads(out.read_text())
    assert cert["residual_table"]["taumap.w_coisometry"] <= 1e-10


def test_multiple_files_keep_argument_order(tmp_path, capsys):
    paths = []
    for seed in range(4):
        p = tmp_path / f"in{seed}.json"
        run_command(["generate", "--kind", "alphacp", "--family", "F2", "--seed", str(seed), "-o", str(p)])
        paths.append(str(p))
    capsys.readouterr()
    assert run_command(["verify-alphacp", "-j", "3", *paths]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [json.loads(l)["instance_digest"] for l in lines] == [load_instance(p).digest for p in paths]


def test_tolerance_override_changes_verdict(tmp_path):
    src = tmp_path / "min.json"
    doc = json.loads(json.dumps(MINIMAL))
    doc["payload"]["tau"]["on_basis"] = [[[[1.0, 1e-6]]]]
    write(src, doc)
    assert run_command(["verify-alphacp", str(src)]) == 1
    assert run_command(["verify-alphacp", "--residual-tol", "1e-5", str(src)]) == 0


def test_format_doc_examples_run(tmp_path):
    import pathlib
    import re

    doc = (pathlib.Path(__file__).parents[1] / "docs" / "format.md").read_text()
    blocks = re.findall(r"```json\n(.*?)```", doc, flags=re.S)
    expected = {"alphacp": ("verify-alphacp", 1), "taumap": ("factorize-taumap", 0),
                "kernel": ("verify-cpd", 0), "kfamily": ("factorize-kernel", 0)}
    seen = set()
    for i, text in enumerate(blocks):
        kind = json.loads(text)["kind"]
        command, code = expected[kind]
        path = write(tmp_path / f"ex{i}.json", text)
        assert run_command([command, path, "-o", str(tmp_path / "c.json")]) == code
        seen.add(kind)
    assert seen == set(expected)
