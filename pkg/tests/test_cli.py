import io
import json
import re

import pytest

from pel.cli import main
from conftest import DATA, GOLDEN


def test_run_pipes(capsys):
    assert main(["run", str(DATA / "pipes.pel")]) == 0
    assert capsys.readouterr().out.strip().splitlines()[-1] == "9"


def test_run_quiet(tmp_path, capsys):
    p = tmp_path / "p.pel"
    p.write_text('(print "hi")\n(+ 1 2)\n')
    assert main(["run", str(p), "--quiet"]) == 0
    assert capsys.readouterr().out == "hi\n"


def test_run_error_aborts_without_answers(tmp_path, capsys):
    p = tmp_path / "p.pel"
    p.write_text("(+ 1 zzz)\n")
    assert main(["run", str(p)]) == 1
    out = capsys.readouterr().out
    assert "Error at line 1, col 6-8" in out


def test_run_with_answers_file(tmp_path, capsys):
    p = tmp_path / "p.pel"
    p.write_text("(def a 1)\n(+ a zzz)\n")
    answers = tmp_path / "answers.txt"
    answers.write_text("3\n41\n")
    assert main(["run", str(p), "--answers", str(answers)]) == 0
    assert capsys.readouterr().out.strip().splitlines()[-1] == "42"


def test_run_missing_file(capsys):
    assert main(["run", "/nonexistent/x.pel"]) == 2
    assert "cannot read program" in capsys.readouterr().err


def test_bad_usage():
    assert main(["frobnicate"]) == 2
    assert main([]) == 2


def test_run_with_caps(tmp_path, capsys):
    p = tmp_path / "p.pel"
    p.write_text("1 ▷ (+ 2)\n")
    caps = tmp_path / "caps.toml"
    caps.write_text("allow_pipe = false\n")
    assert main(["run", str(p), "--caps", str(caps)]) == 1
    assert "pipe disabled" in capsys.readouterr().out


def test_bad_caps_file(tmp_path, capsys):
    p = tmp_path / "p.pel"
    p.write_text("1\n")
    caps = tmp_path / "caps.toml"
    caps.write_text("nonsense = 1\n")
    assert main(["run", str(p), "--caps", str(caps)]) == 2


def test_bad_mock_script(tmp_path):
    p = tmp_path / "p.pel"
    p.write_text("1\n")
    m = tmp_path / "m.mock"
    m.write_text("garbage\n")
    assert main(["run", str(p), "--mock-script", str(m)]) == 2


def test_run_timing_async_with_trace(capsys):
    argv = [
        "run", str(DATA / "timing.pel"),
        "--org", str(DATA / "org.json"),
        "--mock-script", str(DATA / "timing.mock"),
        "--async", "--trace-schedule",
    ]
    assert main(argv) == 0
    captured = capsys.readouterr()
    assert "West leads sales" in captured.out
    events = [json.loads(line) for line in captured.err.splitlines()]
    assert {(e["form"], e["event"]) for e in events} == {(i, k) for i in range(3) for k in ("start", "finish")}
    at = {(e["form"], e["event"]): e["ms"] for e in events}
    assert at[2, "start"] >= max(at[0, "finish"], at[1, "finish"])


def test_grammar_export_ebnf(capsys):
    assert main(["grammar", "export"]) == 0
    assert 'PIPE = "▷" | "|>" ;' in capsys.readouterr().out


def test_grammar_export_regex(capsys):
    assert main(["grammar", "export", "--format", "regex", "--depth", "2"]) == 0
    pattern = capsys.readouterr().out.rstrip("\n")
    assert re.fullmatch(pattern, "(+ 1 2)")


def test_grammar_export_with_caps(tmp_path, capsys):
    caps = tmp_path / "caps.toml"
    caps.write_text("allow_pipe = false\n")
    assert main(["grammar", "export", "--caps", str(caps)]) == 0
    assert "PIPE" not in capsys.readouterr().out


def test_grammar_depth_errors(capsys):
    assert main(["grammar", "export", "--format", "regex", "--depth", "0"]) == 2
    assert main(["grammar", "export", "--format", "regex", "--depth", "11"]) == 2
    assert "size cap" in capsys.readouterr().err


def test_agents_run(tmp_path, capsys):
    transcript = tmp_path / "t.log"
    argv = [
        "agents", "run", str(DATA / "org.json"),
        "--task", "plan a social media campaign",
        "--mock-script", str(DATA / "scenario.mock"),
        "--transcript", str(transcript),
    ]
    assert main(argv) == 0
    out = capsys.readouterr().out
    assert out.startswith("[:social_media_budget 50000 :social_media_strategy ")
    assert "turns=6" in transcript.read_text()


def test_agents_run_twice_is_identical(capsys):
    argv = [
        "agents", "run", str(DATA / "org.json"),
        "--task", "plan", "--mock-script", str(DATA / "scenario.mock"),
    ]
    main(argv)
    first = capsys.readouterr().out
    main(argv)
    assert capsys.readouterr().out == first


def test_agents_run_failure(capsys):
    assert main(["agents", "run", str(DATA / "org.json"), "--task", "x"]) == 1
    assert "Error" in capsys.readouterr().err


def test_agents_bad_org(tmp_path):
    p = tmp_path / "org.json"
    p.write_text("[]")
    assert main(["agents", "run", str(p), "--task", "x"]) == 2


def test_repl_scripted(monkeypatch, tmp_path, capsys):
    answers = tmp_path / "answers.txt"
    answers.write_text("5\na\n")
    monkeypatch.setattr("sys.stdin", io.StringIO((GOLDEN / "transcript.pel").read_text()))
    argv = ["repl", "--answers", str(answers), "--mock-script", str(GOLDEN / "transcript.mock")]
    assert main(argv) == 0
    assert capsys.readouterr().out == (GOLDEN / "transcript.txt").read_text(encoding="utf-8")


@pytest.mark.parametrize("src, status", [("(+ 1 2)\n", 0), ("(+ 1 zzz)\n", 1)])
def test_repl_exit_status(monkeypatch, src, status):
    monkeypatch.setattr("sys.stdin", io.StringIO(src))
    assert main(["repl"]) == status
