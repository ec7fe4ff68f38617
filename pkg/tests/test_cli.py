import json
import socket
import subprocess
import sys

import pytest

from helpers import CASE_ANSWER, CASE_QUERY, case_study_engine, case_study_stub

from clustermem.cli import EXIT_BACKEND, EXIT_DATA, EXIT_OK, EXIT_USAGE, main


def run(argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


@pytest.fixture
def synth_file(tmp_path):
    path = tmp_path / "synth.jsonl"
    assert run(["synth", "--out", path, "--notes-per-topic", 100]) == EXIT_OK
    return path


@pytest.fixture
def case_files(tmp_path):
    snap, table = tmp_path / "case.json", tmp_path / "table.json"
    case_study_engine().snapshot(snap)
    table.write_text(json.dumps(case_study_stub().rules))
    return snap, table


def test_usage_errors_exit_one(tmp_path):
    assert run([]) == EXIT_USAGE
    assert run(["query"]) == EXIT_USAGE
    assert run(["ingest", tmp_path / "x.jsonl", "--out", tmp_path / "s.json", "--strategy", "bogus"]) == EXIT_USAGE


def test_synth_writes_dataset_and_labels(capsys, synth_file):
    labels = json.loads(synth_file.with_name("synth.jsonl.labels.json").read_text())
    assert len(labels["labels"]) == 300 and labels["topics"][:1] == ["travel"]
    assert "300 memories" in capsys.readouterr().out


def test_ingest_then_stats(synth_file, tmp_path, capsys):
    snap = tmp_path / "snap.json"
    assert run(["ingest", synth_file, "--out", snap, "--json"]) == EXIT_OK
    stats = json.loads(capsys.readouterr().out)
    assert stats["count"] >= 3 and stats["assigned"] == stats["notes"] == 300
    assert run(["stats", snap]) == EXIT_OK
    assert "clusters:" in capsys.readouterr().out


def test_strict_ingest_of_malformed_file(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"question": "q", "gold_answer": "a", "memory_stream": [{"content": "c"}]}\n{oops\n')
    assert run(["ingest", bad, "--out", tmp_path / "s.json", "--strict"]) == EXIT_DATA
    assert run(["ingest", bad, "--out", tmp_path / "s.json"]) == EXIT_OK
    assert "skipped 1" in capsys.readouterr().err


def test_missing_files_are_data_errors(tmp_path):
    assert run(["ingest", tmp_path / "nope.jsonl", "--out", tmp_path / "s.json"]) == EXIT_DATA
    assert run(["stats", tmp_path / "nope.json"]) == EXIT_DATA


def test_empty_dataset_is_fine(tmp_path, capsys):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert run(["ingest", empty, "--out", tmp_path / "s.json"]) == EXIT_OK
    assert run(["evaluate", empty, "--json"]) == EXIT_OK


def test_query_case_study(case_files, capsys):
    snap, table = case_files
    assert run(["query", snap, CASE_QUERY, "--stub", table, "--json"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.splitlines()[0] == CASE_ANSWER
    result = json.loads(out[out.index("{"):])
    assert result["mode"] == "two_stage" and result["selected_cluster_ids"] == [0]


def test_query_global_mode(case_files, capsys):
    snap, table = case_files
    assert run(["query", snap, CASE_QUERY, "--stub", table, "--mode", "global", "--json"]) == EXIT_OK
    out = capsys.readouterr().out
    assert json.loads(out[out.index("{"):])["r_reduction"] == 0.0


def test_query_before_initialization_uses_flat_search(tmp_path, capsys):
    data = tmp_path / "tiny.jsonl"
    data.write_text(json.dumps({"question": "q?", "gold_answer": "a",
                                "memory_stream": [{"content": "lighthouse keeper", "timestamp": "t"}]}) + "\n")
    snap = tmp_path / "s.json"
    assert run(["ingest", data, "--out", snap]) == EXIT_OK
    capsys.readouterr()
    assert run(["query", snap, "who kept the lighthouse?", "--json"]) == EXIT_OK
    out = capsys.readouterr().out
    assert json.loads(out[out.index("{"):])["mode"] == "flat_fallback"


def _dead_url():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    return f"http://127.0.0.1:{port}/v1/chat/completions"


def test_unreachable_model_is_backend_error(case_files):
    snap, _ = case_files
    assert run(["query", snap, CASE_QUERY, "--slm-url", _dead_url()]) == EXIT_BACKEND


def test_stub_and_url_together_is_usage_error(case_files):
    snap, table = case_files
    assert run(["query", snap, "q", "--stub", table, "--slm-url", "http://x"]) == EXIT_USAGE


def test_evaluate_report_replays(synth_file, tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(["evaluate", synth_file, "--report", a]) == EXIT_OK
    assert run(["evaluate", synth_file, "--report", b, "--workers", 1]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    captured = capsys.readouterr()
    assert "f1" in captured.out and "wall-clock" in captured.err


def test_evaluate_ablation_and_snapshot(synth_file, tmp_path, capsys):
    snap = tmp_path / "snap.json"
    assert run(["ingest", synth_file, "--out", snap]) == EXIT_OK
    capsys.readouterr()
    assert run(["evaluate", synth_file, "--snapshot", snap, "--ablate", "retrieval=global", "--json"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["ablation"] == "retrieval=global" and report["r_stats"]["mean"] == 0.0


def test_import_locomo(tmp_path, capsys):
    from test_harness import LOCOMO

    src, out = tmp_path / "locomo.json", tmp_path / "out.jsonl"
    src.write_text(json.dumps(LOCOMO))
    assert run(["import", "locomo", src, "--out", out]) == EXIT_OK
    assert "1 questions (1 skipped)" in capsys.readouterr().out
    assert len(out.read_text().splitlines()) == 2
    src.write_text("{}")
    assert run(["import", "hotpotqa", src, "--out", out]) == EXIT_DATA


def test_snapshot_validate_and_export(case_files, tmp_path, capsys):
    snap, _ = case_files
    resaved, notes = tmp_path / "re.json", tmp_path / "notes.jsonl"
    assert run(["snapshot", snap, "--out", resaved, "--export-notes", notes, "--json"]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["notes"] == 680 and summary["clusters"] == 3
    assert len(notes.read_text().splitlines()) == 680
    assert run(["stats", resaved, "--json"]) == EXIT_OK
    broken = tmp_path / "broken.json"
    broken.write_text(snap.read_text()[:100])
    assert run(["snapshot", broken]) == EXIT_DATA


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "clustermem.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "evaluate" in proc.stdout
