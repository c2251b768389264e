import csv
import io
import json
from contextlib import redirect_stdout

import pytest

from metareview.cli import SMOKE_CONFIG, TOY_DUMP, bundled, main
from metareview.conversation import load_jsonl
from metareview.synthetic import smoke_corpus, to_openreview_notes


def run(*argv):
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = main([str(a) for a in argv])
    return code, buf.getvalue()


def test_bundled_dump_matches_generator():
    on_disk = json.loads(bundled(TOY_DUMP).read_text())
    assert on_disk == json.loads(json.dumps(to_openreview_notes(smoke_corpus())))


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "data.jsonl"
    code, _ = run("ingest", "--out", out)
    assert code == 0
    return out


def test_ingest(data):
    samples = load_jsonl(data)
    assert len(samples) == 20


def test_stats_and_conflicts(data):
    code, out = run("stats", "--data", data, "--report", "json")
    assert code == 0 and json.loads(out)["n_samples"] == 20
    code, out = run("conflicts", "--data", data)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 20 and {r["label"] for r in rows} == {"CF", "Non-CF"}


def test_relations_grid(data):
    code, out = run("relations", "--sample", data, "--kind", "document_self")
    lines = out.strip().splitlines()[1:]
    assert code == 0 and all(line.split()[i] == "1" for i, line in enumerate(lines))


def test_split(data, tmp_path):
    code, out = run("split", "--data", data, "--out-dir", tmp_path)
    assert code == 0 and "train: 16" in out


def test_train_generate_evaluate(data, tmp_path):
    cfg = json.loads(bundled(SMOKE_CONFIG).read_text())
    cfg.update(max_steps=4, d_model=8, ffn_dim=16)
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    run_dir = tmp_path / "run"
    code, _ = run("train", "--data", data, "--config", tmp_path / "cfg.json", "--out", run_dir)
    assert code == 0
    with open(run_dir / "train_log.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["step", "L_g", "L_c", "L_r", "L_o", "L_a", "total"] and len(rows) == 4
    for name in ("checkpoint.npz", "vocab.txt", "acc_classifier.json", "config.json"):
        assert (run_dir / name).exists()
    code, _ = run("generate", "--checkpoint", run_dir / "checkpoint.npz", "--data", data,
                  "--out", tmp_path / "gen.jsonl", "--beam-size", "1")
    assert code == 0 and len((tmp_path / "gen.jsonl").read_text().splitlines()) == 20
    code, _ = run("evaluate", "--checkpoint", run_dir / "checkpoint.npz", "--data", data, "--split-conflicts",
                  "--generations", tmp_path / "gen.jsonl", "--out", tmp_path / "rep.csv")
    assert code == 0
    with open(tmp_path / "rep.csv") as fh:
        parts = [r["partition"] for r in csv.DictReader(fh)]
    assert parts == ["all", "CF", "Non-CF"]
    assert (tmp_path / "rep_classifier.json").exists()


def test_errors_become_exit_codes(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"paper_id": "p"}\n')
    code, _ = run("stats", "--data", bad)
    assert code == 1


def test_grad_check_cli():
    code, out = run("grad-check", "--max-entries", "3")
    assert code == 0 and "PASS" in out and "beta" in out
