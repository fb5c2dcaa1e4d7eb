"""End-to-end CLI tests over the full pipeline."""

import json
import subprocess
import sys

import pytest
from click.testing import CliRunner

from topicspot.cli import cli
from topicspot.corpus import save_corpus, synth_corpus


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A synthetic corpus plus split/train artifacts shared across CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    corpus = synth_corpus(n_topics=3, dialogs_per_topic=14, utterances_per_dialog=3,
                          utterance_len=6, keyword_rate=0.7, vocab_size=40, seed=21)
    corpus_path = root / "corpus.jsonl"
    save_corpus(corpus, corpus_path)
    runner = CliRunner()

    split_dir = root / "split"
    res = runner.invoke(cli, ["split", "--corpus", str(corpus_path), "--seed", "21",
                              "--min-dialogs", "2", "--test-frac", "0.25",
                              "--dev-frac", "0.1", "--out", str(split_dir)])
    assert res.exit_code == 0, res.output

    train_dir = root / "run"
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps({
        "model": {"embed_dim": 8, "hidden_dim": 6, "attention_dim": 4},
        "train": {"max_epochs": 8, "seed": 21},
    }))
    res = runner.invoke(cli, ["train", "--corpus", str(corpus_path),
                              "--split", str(split_dir / "split.json"),
                              "--config", str(cfg_path), "--out-dir", str(train_dir)])
    assert res.exit_code == 0, res.output
    return {"root": root, "corpus": corpus_path, "split": split_dir / "split.json",
            "model": train_dir / "model.ckpt", "train_dir": train_dir,
            "runner": runner}


class TestSplitCommand:
    def test_writes_manifest_stats_and_run_manifest(self, workspace):
        split_dir = workspace["split"].parent
        manifest = json.loads(workspace["split"].read_text())
        assert set(manifest) == {"seed", "train", "dev", "test", "removed_topics"}
        stats = (split_dir / "stats.csv").read_text().splitlines()
        assert stats[0] == "part,dialogs,topics,avg_utterances"
        run = json.loads((split_dir / "run_manifest.json").read_text())
        assert run["command"] == "split"
        assert len(run["inputs"]) == 1

    def test_same_seed_identical_manifest(self, workspace, tmp_path):
        runner = workspace["runner"]
        for name in ("a", "b"):
            res = runner.invoke(cli, ["split", "--corpus", str(workspace["corpus"]),
                                      "--seed", "21", "--min-dialogs", "2",
                                      "--test-frac", "0.25", "--dev-frac", "0.1",
                                      "--out", str(tmp_path / name)])
            assert res.exit_code == 0
        assert ((tmp_path / "a" / "split.json").read_text()
                == (tmp_path / "b" / "split.json").read_text())

    def test_min_dialogs_filters(self, workspace, tmp_path):
        res = workspace["runner"].invoke(
            cli, ["split", "--corpus", str(workspace["corpus"]), "--seed", "1",
                  "--min-dialogs", "100", "--out", str(tmp_path / "x")])
        assert res.exit_code != 0

    def test_validation_error_exit_code_2(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"id": "d0", "topic": "t", "utterances": []}\n')
        proc = subprocess.run(
            [sys.executable, "-m", "topicspot.cli", "split", "--corpus", str(bad),
             "--out", str(tmp_path / "o")],
            capture_output=True, text=True)
        assert proc.returncode == 2
        assert "error" in proc.stderr.lower()

    def test_unknown_flag_exit_code_2(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "topicspot.cli", "split", "--nonsense"],
            capture_output=True, text=True)
        assert proc.returncode == 2


class TestTrainCommand:
    def test_artifacts_written(self, workspace):
        train_dir = workspace["train_dir"]
        assert (train_dir / "model.ckpt").exists()
        assert (train_dir / "vocab.json").exists()
        history = (train_dir / "history.csv").read_text().splitlines()
        assert history[0] == "epoch,train_loss,train_acc,dev_acc,lr,seconds"
        run = json.loads((train_dir / "run_manifest.json").read_text())
        assert run["command"] == "train"
        assert len(run["inputs"]) == 2


class TestEvalCommand:
    def test_eval_writes_report_and_confusion(self, workspace, tmp_path):
        out = tmp_path / "eval"
        res = workspace["runner"].invoke(
            cli, ["eval", "--model", str(workspace["model"]),
                  "--corpus", str(workspace["corpus"]),
                  "--split", str(workspace["split"]), "--split-part", "test",
                  "--out-dir", str(out)])
        assert res.exit_code == 0, res.output
        summary = json.loads((out / "summary.json").read_text())
        assert set(summary) == {"accuracy", "n_correct", "n_total"}
        assert summary["n_total"] == 12  # 3 topics x round(0.25 * 14) test dialogs
        assert (out / "confusion_raw.csv").exists()
        assert (out / "confusion_normalized.csv").exists()
        payload = json.loads(res.output.strip().splitlines()[-1])
        assert payload["accuracy"] == summary["accuracy"]

    def test_perfect_toy_model_reports_100(self, workspace, tmp_path):
        # train split is fully learnable at this size; check the JSON shape on it
        out = tmp_path / "eval_train"
        res = workspace["runner"].invoke(
            cli, ["eval", "--model", str(workspace["model"]),
                  "--corpus", str(workspace["corpus"]),
                  "--split", str(workspace["split"]), "--split-part", "train",
                  "--out-dir", str(out)])
        assert res.exit_code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["accuracy"] == pytest.approx(100.0)


class TestOnlineCommand:
    def test_online_csv_and_full_row_matches_eval(self, workspace, tmp_path):
        runner = workspace["runner"]
        out = tmp_path / "online"
        res = runner.invoke(cli, ["online", "--model", str(workspace["model"]),
                                  "--corpus", str(workspace["corpus"]),
                                  "--split", str(workspace["split"]),
                                  "--split-part", "test", "--out-dir", str(out)])
        assert res.exit_code == 0, res.output
        rows = (out / "online.csv").read_text().strip().splitlines()
        assert rows[0] == "fraction,n_utterances_mean,absolute_acc,relative_acc"
        last = rows[-1].split(",")
        assert float(last[0]) == 1.0
        assert float(last[3]) == 1.0

        eval_out = tmp_path / "eval_again"
        res2 = runner.invoke(cli, ["eval", "--model", str(workspace["model"]),
                                   "--corpus", str(workspace["corpus"]),
                                   "--split", str(workspace["split"]),
                                   "--split-part", "test", "--out-dir", str(eval_out)])
        assert res2.exit_code == 0
        summary = json.loads((eval_out / "summary.json").read_text())
        assert float(last[2]) == pytest.approx(summary["accuracy"])


class TestPredictCommand:
    def test_streams_predictions(self, workspace, tmp_path):
        dialog = {"id": "q1", "utterances": [{"speaker": "A", "text": "w00000 w00001"}]}
        res = workspace["runner"].invoke(
            cli, ["predict", "--model", str(workspace["model"]),
                  "--out-dir", str(tmp_path / "pred")],
            input=json.dumps(dialog) + "\n")
        assert res.exit_code == 0, res.output
        payload = json.loads(res.output.strip().splitlines()[0])
        assert payload["id"] == "q1"
        assert set(payload) == {"id", "predicted_topic", "confidence"}


class TestSynthCommand:
    def test_generates_corpus(self, tmp_path):
        spec = {"n_topics": 2, "dialogs_per_topic": 3, "utterances_per_dialog": 2,
                "utterance_len": 4, "keyword_rate": 0.5, "vocab_size": 20}
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(spec))
        out = tmp_path / "synth" / "corpus.jsonl"
        res = CliRunner().invoke(cli, ["synth", "--spec", str(spec_path),
                                       "--seed", "5", "--out", str(out)])
        assert res.exit_code == 0, res.output
        assert len(out.read_text().strip().splitlines()) == 6

    def test_same_seed_identical_output(self, tmp_path):
        spec = {"n_topics": 2, "dialogs_per_topic": 3, "utterances_per_dialog": 2,
                "utterance_len": 4, "keyword_rate": 0.5, "vocab_size": 20}
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(spec))
        runner = CliRunner()
        outs = []
        for name in ("a.jsonl", "b.jsonl"):
            out = tmp_path / name
            res = runner.invoke(cli, ["synth", "--spec", str(spec_path),
                                      "--seed", "5", "--out", str(out)])
            assert res.exit_code == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]


class TestGradcheckCommand:
    def test_tiny_passes(self):
        res = CliRunner().invoke(cli, ["gradcheck", "--dims", "tiny"])
        assert res.exit_code == 0, res.output
        assert "max_rel_err" in res.output

    def test_small_with_subsampling(self):
        res = CliRunner().invoke(cli, ["gradcheck", "--dims", "small"])
        assert res.exit_code == 0, res.output


class TestHelp:
    @pytest.mark.parametrize("command", ["split", "train", "eval", "online",
                                         "predict", "synth", "gradcheck"])
    def test_help_documents_flags(self, command):
        res = CliRunner().invoke(cli, [command, "--help"])
        assert res.exit_code == 0
        assert "--" in res.output
