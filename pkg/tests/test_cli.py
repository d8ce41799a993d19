"""Command-line interface: subcommands, exit codes, file outputs."""

import json
from pathlib import Path

from clptcg.cli import main

FIXTURES = Path(__file__).parent / "fixtures"


def test_compile_writes_clause_text(tmp_path, capsys):
    out = tmp_path / "merge.ir"
    assert main(["compile", str(FIXTURES / "merge.moo"), "-o", str(out)]) == 0
    text = out.read_text()
    assert ":- entry('SortedList.merge'" in text
    assert "merge([r(" in text


def test_tcg_text_report(capsys):
    code = main(
        [
            "tcg",
            str(FIXTURES / "merge.moo"),
            "--entry",
            "SortedList.merge",
            "--criterion",
            "block-k:2",
            "--aliasing",
            "off",
        ]
    )
    captured = capsys.readouterr()
    assert code == 0
    assert "exc(NPE)" in captured.out
    assert "100.0%" in captured.out


def test_tcg_json_output(tmp_path, capsys):
    out = tmp_path / "suite.json"
    code = main(
        [
            "tcg",
            str(FIXTURES / "merge.moo"),
            "--entry",
            "SortedList.merge",
            "--aliasing",
            "on",
            "--pre",
            str(FIXTURES / "merge_noalias.pre"),
            "--out",
            str(out),
        ]
    )
    capsys.readouterr()
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["schema"] == 1
    assert doc["aliasing"] == "on"
    assert len(doc["cases"]) == 9


def test_tcg_accepts_compiled_input(tmp_path, capsys):
    code = main(
        [
            "tcg",
            str(FIXTURES / "merge_golden.ir"),
            "--entry",
            "SortedList.merge",
            "--report",
            "json",
        ]
    )
    captured = capsys.readouterr()
    assert code == 0
    assert json.loads(captured.out)["coverage"]["percent"] == 100.0


def test_bad_entry_is_a_diagnostic(capsys):
    code = main(
        ["tcg", str(FIXTURES / "merge.moo"), "--entry", "SortedList.nope"]
    )
    captured = capsys.readouterr()
    assert code == 1
    assert "unknown entry" in captured.err


def test_missing_file_is_a_diagnostic(capsys):
    assert main(["compile", "no-such-file.moo"]) == 1


def test_bad_bounds_is_a_diagnostic(capsys):
    code = main(
        [
            "tcg",
            str(FIXTURES / "merge.moo"),
            "--entry",
            "SortedList.merge",
            "--bounds",
            "oops",
        ]
    )
    assert code == 1
