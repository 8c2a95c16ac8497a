import json
import subprocess
from collections import Counter
from pathlib import Path

import pytest

from finqnlp.cli import content_hash, main


def run_dirs(root, command):
    return sorted(Path(root).glob(f"*-{command}*"))


def manifest(run_dir):
    return json.loads((run_dir / "manifest.json").read_text())


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    assert main(["gen-data", "--n", "60", "--seed", "1", "--out", str(root / "low.jsonl"),
                 "--runs-root", str(root / "runs")]) == 0
    return root / "low.jsonl"


class TestGenData:
    def test_stats_match_file(self, tmp_path, capsys):
        out = tmp_path / "low.jsonl"
        code = main(["gen-data", "--complexity", "low", "--n", "100", "--seed", "7", "--out", str(out),
                     "--runs-root", str(tmp_path / "runs")])
        assert code == 0
        records = [json.loads(line) for line in out.read_text().splitlines()]
        counts = Counter(r["label"] for r in records)
        words = [r["text"].split() for r in records]
        table = capsys.readouterr().out
        for label in (0, 1, 2):
            assert f"{round(100 * counts[label] / len(records))}%" in table
        assert f"{sum(map(len, words)) / len(words):.1f}" in table
        (run,) = run_dirs(tmp_path / "runs", "gen-data")
        assert run.name.split("-")[1] == "seed7"
        m = manifest(run)
        assert m["status"] == "ok" and m["seed"] == 7 and m["exit_code"] == 0
        assert (run / "data.jsonl").read_bytes() == out.read_bytes()

    def test_missing_n_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["gen-data", "--runs-root", str(tmp_path)])
        assert exc.value.code == 2

    def test_llm_without_endpoint(self, tmp_path, monkeypatch):
        monkeypatch.delenv("FINQNLP_LLM_ENDPOINT", raising=False)
        assert main(["gen-data", "--n", "5", "--llm", "--runs-root", str(tmp_path)]) == 3
        (run,) = run_dirs(tmp_path, "gen-data")
        assert manifest(run)["status"] == "failed"


class TestParse:
    def test_types(self, capsys):
        assert main(["parse", "alice loves bob", "--stage", "types"]) == 0
        assert capsys.readouterr().out.strip() == "n | n.r @ s @ n.l | n"

    def test_derivation(self, capsys):
        assert main(["parse", "alice loves bob"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["cups"] == [[0, 1], [3, 4]] and out["residue"] == [2]

    def test_not_a_sentence(self, capsys):
        assert main(["parse", "alice bob"]) == 4
        assert "NotASentence" in capsys.readouterr().err

    def test_circuit(self, capsys):
        assert main(["parse", "alice loves bob", "--stage", "circuit"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["circuit"]["n_qubits"] == 3
        assert out["postselect"] == {"0": 0, "2": 0} and out["s_qubits"] == [1]
        words = {g["param"]["sym"].split(":")[0] for g in out["circuit"]["gates"] if "param" in g}
        assert words == {"alice", "loves", "bob"}

    def test_diagram_without_rewrite(self, capsys):
        assert main(["parse", "alice loves bob", "--stage", "diagram", "--no-rewrite"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert [b["kind"] for b in out["boxes"]] == ["state"] * 3 and len(out["cups"]) == 2


class TestTrainEval:
    def test_lstm_curve_rows(self, corpus, tmp_path):
        assert main(["train", "--model", "lstm", "--data", str(corpus), "--epochs", "20", "--seed", "0",
                     "--out-dir", str(tmp_path), "--plot", "--threads", "1"]) == 0
        (run,) = run_dirs(tmp_path, "train")
        rows = (run / "curve.csv").read_text().splitlines()
        assert rows[0] == "epoch,train_loss,val_loss,train_acc,val_acc,wallclock_s"
        assert len(rows) == 21
        assert (run / "curve.svg").read_text().lstrip().startswith("<?xml")
        m = manifest(run)
        assert m["inputs"] == {str(corpus): content_hash(corpus)}
        assert m["config"]["train"]["seed"] == 0 and m["config"]["model"]["hidden_size"] == 8

        assert main(["eval", "--checkpoint", str(run / "model.ckpt"), "--data", str(corpus),
                     "--runs-root", str(tmp_path)]) == 0
        (ev,) = run_dirs(tmp_path, "eval")
        metrics = json.loads((ev / "metrics.json").read_text())
        assert 0 <= metrics["accuracy"] <= 1

    def test_discocat_counts(self, corpus, tmp_path):
        assert main(["train", "--model", "discocat", "--data", str(corpus), "--epochs", "1",
                     "--out-dir", str(tmp_path)]) == 0
        (run,) = run_dirs(tmp_path, "train")
        counts = manifest(run)["details"]["counts"]
        labels = Counter(json.loads(line)["label"] for line in corpus.read_text().splitlines())
        assert counts["dropped_neutral"] == labels[1]
        assert counts["used"] + counts["unparseable"] == labels[0] + labels[2]

    def test_missing_data_file(self, tmp_path):
        assert main(["train", "--model", "lstm", "--data", str(tmp_path / "nope.jsonl"),
                     "--out-dir", str(tmp_path)]) == 3

    def test_bad_split_is_usage_error(self, corpus, tmp_path):
        assert main(["train", "--model", "lstm", "--data", str(corpus), "--split", "0.5", "0.5", "0.5",
                     "--out-dir", str(tmp_path)]) == 2


def test_content_hash_matches_git(tmp_path):
    path = tmp_path / "f.txt"
    path.write_text("hello\n")
    git = subprocess.run(["git", "hash-object", str(path)], capture_output=True, text=True)
    if git.returncode != 0:
        pytest.skip("git unavailable")
    assert content_hash(path) == "sha1:" + git.stdout.strip()


def test_generator_config_file(tmp_path):
    cfg = tmp_path / "gen.json"
    cfg.write_text(json.dumps({"complexity": "low", "seed": 11, "target_shares": [0.5, 0.0, 0.5]}))
    out = tmp_path / "d.jsonl"
    assert main(["gen-data", "--n", "40", "--config", str(cfg), "--out", str(out), "--runs-root", str(tmp_path)]) == 0
    labels = Counter(json.loads(line)["label"] for line in out.read_text().splitlines())
    assert labels == {0: 20, 2: 20}
    (run,) = run_dirs(tmp_path, "gen-data")
    assert "seed11" in run.name and manifest(run)["config"]["generator"]["seed"] == 11
