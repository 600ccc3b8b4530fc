import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest
from click.testing import CliRunner

from sonolex.cli import main
from sonolex import recordio

from fixtures import WORKED_REPORT


def _run(*args):
    runner = CliRunner()
    result = runner.invoke(main, list(args), catch_exceptions=False)
    return result


def test_parse_command(tmp_path):
    reports = tmp_path / "reports.jsonl"
    recordio.write_records(reports, [{"id": "worked", "text": WORKED_REPORT}])
    out = tmp_path / "sections.jsonl"
    result = _run("parse", "--in", str(reports), "--out", str(out))
    assert result.exit_code == 0
    [row] = list(recordio.read_records(out))
    assert row["observation"].startswith("At the right 9:00 axis")
    assert row["impression"].startswith("PROBABLY BENIGN")


def test_parse_plain_text_file(tmp_path):
    report = tmp_path / "report.txt"
    report.write_text(WORKED_REPORT, encoding="utf-8")
    out = tmp_path / "sections.jsonl"
    result = _run("parse", "--in", str(report), "--out", str(out))
    assert result.exit_code == 0
    [row] = list(recordio.read_records(out))
    assert row["id"] == "report"


def test_parse_rejects_reports_without_observation(tmp_path):
    reports = tmp_path / "reports.jsonl"
    recordio.write_records(
        reports,
        [
            {"id": "ok", "text": "Observation: left 3:00 cyst."},
            {"id": "bad", "text": "Impression: nothing else"},
        ],
    )
    out = tmp_path / "sections.jsonl"
    result = _run("parse", "--in", str(reports), "--out", str(out))
    assert result.exit_code == 0
    assert len(list(recordio.read_records(out))) == 1
    assert "rejected" in result.output


def test_gen_extract_eval_pipeline_is_perfect(tmp_path):
    reports = tmp_path / "reports.jsonl"
    truths = tmp_path / "truths.jsonl"
    result = _run("gen", "--seed", "7", "--n", "50", "--family", "A",
                  "--out-reports", str(reports), "--out-truths", str(truths))
    assert result.exit_code == 0

    preds = tmp_path / "preds.jsonl"
    result = _run("extract", "--in", str(reports), "--out", str(preds), "--backend", "rules")
    assert result.exit_code == 0

    metrics_out = tmp_path / "metrics.txt"
    metrics_json = tmp_path / "metrics.json"
    result = _run("eval", "--pred", str(preds), "--truth", str(truths),
                  "--out", str(metrics_out), "--json-out", str(metrics_json))
    assert result.exit_code == 0
    summary = json.loads(metrics_json.read_text())
    assert summary["jsonable_acc"] == 1.0
    assert summary["em_acc"] == 1.0
    assert summary["cdm_acc"] == 1.0
    assert all(v["f1"] == 1.0 for v in summary["per_key"].values())
    assert "Average" in metrics_out.read_text()


def test_gen_is_byte_reproducible(tmp_path):
    a_reports, a_truths = tmp_path / "a.jsonl", tmp_path / "at.jsonl"
    b_reports, b_truths = tmp_path / "b.jsonl", tmp_path / "bt.jsonl"
    for reports, truths in ((a_reports, a_truths), (b_reports, b_truths)):
        result = _run("gen", "--seed", "3", "--n", "20",
                      "--out-reports", str(reports), "--out-truths", str(truths))
        assert result.exit_code == 0
    assert a_reports.read_bytes() == b_reports.read_bytes()
    assert a_truths.read_bytes() == b_truths.read_bytes()


def test_extract_accepts_sections_or_raw_text(tmp_path):
    reports = tmp_path / "reports.jsonl"
    recordio.write_records(reports, [{"id": "w", "text": WORKED_REPORT}])
    sections = tmp_path / "sections.jsonl"
    _run("parse", "--in", str(reports), "--out", str(sections))

    from_raw = tmp_path / "from_raw.jsonl"
    from_sections = tmp_path / "from_sections.jsonl"
    assert _run("extract", "--in", str(reports), "--out", str(from_raw)).exit_code == 0
    assert _run("extract", "--in", str(sections), "--out", str(from_sections)).exit_code == 0
    assert from_raw.read_bytes() == from_sections.read_bytes()


def test_prompt_command_modes(tmp_path):
    reports = tmp_path / "reports.jsonl"
    recordio.write_records(reports, [{"id": "w", "text": WORKED_REPORT}])
    label_out = tmp_path / "label.jsonl"
    result = _run("prompt", "--in", str(reports), "--out", str(label_out), "--mode", "label")
    assert result.exit_code == 0
    [row] = list(recordio.read_records(label_out))
    assert "### Example 7" in row["prompt"]

    instruction_out = tmp_path / "instruction.jsonl"
    result = _run("prompt", "--in", str(reports), "--out", str(instruction_out),
                  "--mode", "instruction")
    assert result.exit_code == 0
    [row] = list(recordio.read_records(instruction_out))
    assert "### Example" not in row["prompt"]
    assert "At the right 9:00 axis" in row["prompt"]


def test_corrupt_writes_ledger_and_replays(tmp_path):
    reports = tmp_path / "reports.jsonl"
    truths = tmp_path / "truths.jsonl"
    _run("gen", "--seed", "11", "--n", "30", "--out-reports", str(reports),
         "--out-truths", str(truths))
    preds = tmp_path / "preds.jsonl"
    _run("extract", "--in", str(reports), "--out", str(preds))

    mutated = tmp_path / "mutated.jsonl"
    ledger = tmp_path / "ledger.jsonl"
    result = _run("corrupt", "--in", str(preds), "--out", str(mutated),
                  "--ledger", str(ledger), "--drop-rate", "0.3",
                  "--swap-rate", "0.5", "--na-rate", "0.2", "--seed", "5")
    assert result.exit_code == 0
    entries = list(recordio.read_records(ledger))
    assert entries, "expected mutations at these rates"
    assert {"report_id", "op", "index"} <= set(entries[0])

    # Replaying the ledger over the clean predictions reproduces the file.
    from sonolex.synth import MutationRecord, apply_ledger
    from sonolex.cli import _output_from_mapping, _output_to_mapping

    clean = [_output_from_mapping(o) for o in recordio.read_records(preds)]
    replayed = apply_ledger(clean, [MutationRecord.from_mapping(e) for e in entries])
    assert [_output_to_mapping(o) for o in replayed] == list(recordio.read_records(mutated))


def test_dataset_build_and_split(tmp_path):
    reports = tmp_path / "reports.jsonl"
    truths = tmp_path / "truths.jsonl"
    _run("gen", "--seed", "2", "--n", "40", "--out-reports", str(reports),
         "--out-truths", str(truths))
    preds = tmp_path / "preds.jsonl"
    _run("extract", "--in", str(reports), "--out", str(preds))

    data = tmp_path / "data.jsonl"
    result = _run("dataset", "build", "--reports", str(reports), "--labels", str(preds),
                  "--out", str(data), "--source", "rules")
    assert result.exit_code == 0
    rows = list(recordio.read_records(data))
    assert len(rows) == 40
    assert {"id", "instruction", "input", "output"} <= set(rows[0])

    manifest = tmp_path / "split.json"
    result = _run("dataset", "split", "--in", str(data), "--out", str(manifest),
                  "--ratios", "0.8,0.1,0.1", "--seed", "4")
    assert result.exit_code == 0
    body = json.loads(manifest.read_text())
    assert len(body["train"]) == 32
    assert len(body["validation"]) == 4
    assert len(body["test"]) == 4


def test_eval_errors_on_missing_predictions(tmp_path):
    truths = tmp_path / "truths.jsonl"
    recordio.write_records(truths, [{"id": "t1", "lesions": []}])
    preds = tmp_path / "preds.jsonl"
    recordio.write_records(preds, [])
    out = tmp_path / "metrics.txt"
    result = _run("eval", "--pred", str(preds), "--truth", str(truths), "--out", str(out))
    assert result.exit_code == 1
    assert "missing" in result.output


def test_lora_check_passes():
    result = _run("lora-check")
    assert result.exit_code == 0
    assert "PASS" in result.output
    assert "FAIL" not in result.output


def test_config_file_supplies_defaults(tmp_path):
    config = tmp_path / "config.yaml"
    config.write_text("gen:\n  seed: 9\n  n_reports: 5\n", encoding="utf-8")
    reports = tmp_path / "r.jsonl"
    truths = tmp_path / "t.jsonl"
    result = _run("--config", str(config), "gen",
                  "--out-reports", str(reports), "--out-truths", str(truths))
    assert result.exit_code == 0
    rows = list(recordio.read_records(reports))
    assert len(rows) == 5
    assert rows[0]["id"].startswith("synth-9-")

    # Explicit flags win over the config file.
    result = _run("--config", str(config), "gen", "--seed", "1",
                  "--out-reports", str(reports), "--out-truths", str(truths))
    assert result.exit_code == 0
    rows = list(recordio.read_records(reports))
    assert rows[0]["id"].startswith("synth-1-")


def test_usage_error_exits_2():
    result = CliRunner().invoke(main, ["extract", "--backend", "nope"])
    assert result.exit_code == 2


def test_llm_backend_requires_endpoint_flags(tmp_path):
    reports = tmp_path / "reports.jsonl"
    recordio.write_records(reports, [{"id": "w", "text": WORKED_REPORT}])
    result = CliRunner().invoke(
        main, ["extract", "--in", str(reports), "--out", str(tmp_path / "o.jsonl"),
               "--backend", "llm"],
    )
    assert result.exit_code == 1
    assert "--base-url" in result.output


class _ChatHandler(BaseHTTPRequestHandler):
    reply = "[]"

    def do_POST(self):
        length = int(self.headers.get("content-length", 0))
        self.rfile.read(length)
        body = json.dumps(
            {"choices": [{"message": {"role": "assistant", "content": self.reply}}]}
        ).encode()
        self.send_response(200)
        self.send_header("content-type", "application/json")
        self.send_header("content-length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture()
def chat_stub():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _ChatHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    thread.join(timeout=5)


def test_extract_and_label_against_llm_endpoint(tmp_path, chat_stub):
    reports = tmp_path / "reports.jsonl"
    recordio.write_records(reports, [{"id": "w", "text": WORKED_REPORT}])

    preds = tmp_path / "preds.jsonl"
    result = _run("extract", "--in", str(reports), "--out", str(preds),
                  "--backend", "llm", "--base-url", chat_stub, "--model", "m")
    assert result.exit_code == 0
    [row] = list(recordio.read_records(preds))
    assert row["backend"] == "llm"
    assert row["parsed"] == []
    assert row["error"] is None

    labels = tmp_path / "labels.jsonl"
    result = _run("label", "--in", str(reports), "--out", str(labels),
                  "--base-url", chat_stub, "--model", "m")
    assert result.exit_code == 0
    [row] = list(recordio.read_records(labels))
    assert row["raw_text"] == "[]"
