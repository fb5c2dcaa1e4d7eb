"""Command line pipeline: split, train, eval, online, predict, synth, gradcheck.

Every subcommand writes its artifacts plus a run_manifest.json recording the
command, configuration, seeds and input hashes; reruns with identical inputs
reproduce the artifacts bit-identically (timestamps aside). Exit codes:
0 success, 1 runtime failure, 2 invalid inputs or flags.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import time
from pathlib import Path

import click

from . import __version__
from .autodiff import grad_check
from .corpus import (Corpus, Vocab, build_vocab, corpus_stats, load_corpus,
                     make_swbd2_split, parse_dialog_record, save_corpus,
                     save_manifest, split_from_manifest, synth_corpus)
from .embeddings import load_pretrained
from .errors import TopicSpotError, ValidationError
from .evaluation import (confusion, evaluate, online_eval, write_confusion_csv,
                         write_online_csv, write_report_csv, write_report_json)
from .model import (ModelConfig, dialog_loss, init_params, load_checkpoint,
                    predict_dialog, save_checkpoint)
from .training import TrainConfig, train, write_history_csv


def _default_out_dir() -> str:
    return os.environ.get("TOPICSPOT_DATA_DIR", "runs")


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_run_manifest(out_dir: Path, command: str, config: dict,
                        inputs: list, artifacts: list) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "artifacts": sorted(str(a) for a in artifacts),
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    with open(out_dir / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


@click.group()
@click.version_option(version=__version__)
def cli():
    """Dialog topic spotting pipeline."""


@cli.command("split")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--min-dialogs", type=int, default=10, show_default=True)
@click.option("--test-frac", type=float, default=0.1, show_default=True)
@click.option("--dev-frac", type=float, default=0.05, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Output directory [default: $TOPICSPOT_DATA_DIR or ./runs]")
def cmd_split(corpus_path, seed, min_dialogs, test_frac, dev_frac, out_dir):
    """Drop infrequent topics and build a seeded train/dev/test split."""
    out = Path(out_dir or _default_out_dir())
    out.mkdir(parents=True, exist_ok=True)
    corpus = load_corpus(corpus_path)
    split = make_swbd2_split(corpus, seed=seed, min_dialogs=min_dialogs,
                             test_fraction=test_frac, dev_fraction=dev_frac)
    save_manifest(split, out / "split.json")
    stats = corpus_stats(split)
    with open(out / "stats.csv", "w", encoding="utf-8") as fh:
        fh.write("part,dialogs,topics,avg_utterances\n")
        for part in ("train", "dev", "test"):
            s = stats[part]
            fh.write(f"{part},{s['dialogs']},{s['topics']},{s['avg_utterances']:.2f}\n")
    click.echo(f"{'':6s} {'#Dialogues':>10s} {'#Topics':>8s} {'Avg. #Utterances':>17s}")
    for part in ("train", "dev", "test"):
        s = stats[part]
        click.echo(f"{part:6s} {s['dialogs']:>10d} {s['topics']:>8d} {s['avg_utterances']:>17.2f}")
    _write_run_manifest(out, "split",
                        {"seed": seed, "min_dialogs": min_dialogs,
                         "test_frac": test_frac, "dev_frac": dev_frac},
                        [corpus_path],
                        [out / "split.json", out / "stats.csv"])


def _load_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


@cli.command("train")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--split", "split_path", required=True, type=click.Path(exists=True))
@click.option("--embeddings", "embeddings_path", type=click.Path(exists=True), default=None,
              help="Optional pretrained vector file (.txt or .txt.gz)")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON file with 'model' and 'train' sections")
@click.option("--seed", type=int, default=None, help="Override the config seed")
@click.option("--max-epochs", type=int, default=None)
@click.option("--no-attention", is_flag=True, default=False,
              help="Train the no-attention ablation")
@click.option("--min-count", type=int, default=None)
@click.option("--out-dir", type=click.Path(), default=None)
def cmd_train(corpus_path, split_path, embeddings_path, config_path, seed,
              max_epochs, no_attention, min_count, out_dir):
    """Train the hierarchical model on a prepared split."""
    out = Path(out_dir or _default_out_dir())
    out.mkdir(parents=True, exist_ok=True)
    raw_cfg = _load_json(config_path) if config_path else {}
    model_kwargs = dict(raw_cfg.get("model", {}))
    train_kwargs = dict(raw_cfg.get("train", {}))
    if seed is not None:
        train_kwargs["seed"] = seed
    if max_epochs is not None:
        train_kwargs["max_epochs"] = max_epochs
    if no_attention:
        model_kwargs["attention_enabled"] = False
    vocab_min_count = min_count if min_count is not None else int(raw_cfg.get("min_count", 1))

    model_cfg = ModelConfig(**model_kwargs)
    train_cfg = TrainConfig(**train_kwargs)
    corpus = load_corpus(corpus_path)
    split = split_from_manifest(corpus, _load_json(split_path))
    vocab = build_vocab(split.train, min_count=vocab_min_count)
    embeddings = None
    if embeddings_path is not None:
        embeddings = load_pretrained(embeddings_path, vocab, dim=model_cfg.embed_dim,
                                     seed=train_cfg.seed)
        click.echo(f"pretrained coverage: {embeddings.coverage:.3f}")
    params = init_params(vocab, split.train.topics(), seed=train_cfg.seed,
                         config=model_cfg, embeddings=embeddings)
    best, history = train(params, split, train_cfg, vocab)

    with open(out / "vocab.json", "w", encoding="utf-8") as fh:
        json.dump(vocab.to_json(), fh)
        fh.write("\n")
    save_checkpoint(best, out / "model.ckpt", vocab)
    write_history_csv(history, out / "history.csv")
    inputs = [corpus_path, split_path]
    if embeddings_path:
        inputs.append(embeddings_path)
    _write_run_manifest(out, "train",
                        {"model": model_kwargs, "train": train_kwargs,
                         "min_count": vocab_min_count, "seed": train_cfg.seed},
                        inputs,
                        [out / "model.ckpt", out / "history.csv", out / "vocab.json"])
    click.echo(f"best dev accuracy: {history.best_dev_accuracy():.2f}% "
               f"over {len(history.records)} epochs")


def _load_model(model_path: str):
    model_path = Path(model_path)
    if model_path.is_dir():
        model_path = model_path / "model.ckpt"
    vocab_path = model_path.parent / "vocab.json"
    if not vocab_path.exists():
        raise ValidationError(f"vocabulary file not found next to checkpoint: {vocab_path}")
    vocab = Vocab.from_json(_load_json(vocab_path))
    return load_checkpoint(model_path, vocab), vocab, model_path, vocab_path


def _select_part(corpus_path, split_path, part) -> Corpus:
    corpus = load_corpus(corpus_path)
    if split_path is None:
        return corpus
    split = split_from_manifest(corpus, _load_json(split_path))
    if part == "all":
        return corpus
    return split.parts()[part]


@cli.command("eval")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--split", "split_path", type=click.Path(exists=True), default=None)
@click.option("--split-part", type=click.Choice(["train", "dev", "test", "all"]),
              default="test", show_default=True)
@click.option("--out-dir", type=click.Path(), default=None)
def cmd_eval(model_path, corpus_path, split_path, split_part, out_dir):
    """Accuracy report and confusion matrices on a corpus (or split part)."""
    out = Path(out_dir or _default_out_dir())
    out.mkdir(parents=True, exist_ok=True)
    params, vocab, ckpt_path, vocab_path = _load_model(model_path)
    part = _select_part(corpus_path, split_path, split_part if split_path else "all")
    report = evaluate(params, vocab, part)
    matrix = confusion(params, vocab, part)
    write_report_csv(report, out / "report.csv")
    write_report_json(report, out / "summary.json")
    write_confusion_csv(matrix, out / "confusion_raw.csv", normalized=False)
    write_confusion_csv(matrix, out / "confusion_normalized.csv", normalized=True)
    inputs = [corpus_path, str(ckpt_path), str(vocab_path)]
    if split_path:
        inputs.append(split_path)
    _write_run_manifest(out, "eval", {"split_part": split_part}, inputs,
                        [out / "report.csv", out / "summary.json",
                         out / "confusion_raw.csv", out / "confusion_normalized.csv"])
    click.echo(json.dumps({"accuracy": report.accuracy, "n_correct": report.n_correct,
                           "n_total": report.n_total}, sort_keys=True))


@cli.command("online")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--split", "split_path", type=click.Path(exists=True), default=None)
@click.option("--split-part", type=click.Choice(["train", "dev", "test", "all"]),
              default="test", show_default=True)
@click.option("--out-dir", type=click.Path(), default=None)
def cmd_online(model_path, corpus_path, split_path, split_part, out_dir):
    """Prefix evaluation at fractions 1/32, 1/16, ..., 1 of each dialog."""
    out = Path(out_dir or _default_out_dir())
    out.mkdir(parents=True, exist_ok=True)
    params, vocab, ckpt_path, vocab_path = _load_model(model_path)
    part = _select_part(corpus_path, split_path, split_part if split_path else "all")
    curve = online_eval(params, vocab, part)
    write_online_csv(curve, out / "online.csv")
    inputs = [corpus_path, str(ckpt_path), str(vocab_path)]
    if split_path:
        inputs.append(split_path)
    _write_run_manifest(out, "online", {"split_part": split_part}, inputs,
                        [out / "online.csv"])
    for p in curve.points:
        click.echo(f"f={p.fraction:.5f} mean_utts={p.mean_utterances:.1f} "
                   f"abs={p.absolute:.2f}% rel={p.relative:.4f}")


@cli.command("predict")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--out-dir", type=click.Path(), default=None,
              help="Where to put the run manifest")
def cmd_predict(model_path, out_dir):
    """Read dialog JSON lines on stdin, write one JSON prediction per line."""
    out = Path(out_dir or _default_out_dir())
    out.mkdir(parents=True, exist_ok=True)
    params, vocab, ckpt_path, vocab_path = _load_model(model_path)
    n = 0
    for lineno, raw in enumerate(sys.stdin, start=1):
        raw = raw.strip()
        if not raw:
            continue
        dialog = parse_dialog_record(json.loads(raw), line=lineno, require_topic=False)
        pred = predict_dialog(params, vocab, dialog)
        click.echo(json.dumps({"id": dialog.id, "predicted_topic": pred.label,
                               "confidence": float(pred.probs[pred.label_index])},
                              sort_keys=True))
        n += 1
    _write_run_manifest(out, "predict", {"n_dialogs": n},
                        [str(ckpt_path), str(vocab_path)], [])


@cli.command("synth")
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True),
              help="JSON with n_topics, dialogs_per_topic, utterances_per_dialog, "
                   "utterance_len, keyword_rate, vocab_size")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def cmd_synth(spec_path, seed, out_path):
    """Generate a seeded synthetic topic-keyword corpus."""
    spec = _load_json(spec_path)
    corpus = synth_corpus(n_topics=int(spec["n_topics"]),
                          dialogs_per_topic=int(spec["dialogs_per_topic"]),
                          utterances_per_dialog=int(spec["utterances_per_dialog"]),
                          utterance_len=int(spec["utterance_len"]),
                          keyword_rate=float(spec["keyword_rate"]),
                          vocab_size=int(spec["vocab_size"]),
                          seed=seed)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_corpus(corpus, out_path)
    _write_run_manifest(out_path.parent, "synth", {"seed": seed, **spec},
                        [spec_path], [out_path])
    click.echo(f"wrote {len(corpus.dialogs)} dialogs, {len(corpus.topic_set)} topics")


GRADCHECK_DIMS = {
    "tiny": {"vocab": 20, "embed": 8, "hidden": 4, "attention": 4, "topics": 3,
             "utterances": 2, "tokens": 3, "max_coords": None},
    "small": {"vocab": 60, "embed": 12, "hidden": 8, "attention": 8, "topics": 5,
              "utterances": 3, "tokens": 5, "max_coords": 25},
}


def gradcheck_model(dims: str, seed: int = 0) -> float:
    """Max relative gradient error of the full model loss at the given scale."""
    from .rng import Rng

    spec = GRADCHECK_DIMS[dims]
    cfg = ModelConfig(embed_dim=spec["embed"], hidden_dim=spec["hidden"],
                      attention_dim=spec["attention"])
    tokens = ["<pad>", "<unk>"] + [f"t{i}" for i in range(spec["vocab"] - 2)]
    vocab = Vocab.from_json({"tokens": tokens})
    topics = [f"topic{i}" for i in range(spec["topics"])]
    params = init_params(vocab, topics, seed=seed, config=cfg)
    rng = Rng(seed).derive("gradcheck-dialog")
    ids = [[2 + rng.randint(spec["vocab"] - 2) for _ in range(spec["tokens"])]
           for _ in range(spec["utterances"])]

    def objective():
        loss, _ = dialog_loss(params, ids, label_index=1)
        return loss

    return grad_check(objective, params.parameters(), eps=1e-5,
                      max_coords=spec["max_coords"], seed=seed)


@cli.command("gradcheck")
@click.option("--dims", type=click.Choice(sorted(GRADCHECK_DIMS)), default="tiny",
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def cmd_gradcheck(dims, seed):
    """Verify model gradients against central finite differences."""
    err = gradcheck_model(dims, seed=seed)
    click.echo(f"max_rel_err={err:.3e} (threshold 1e-3)")
    if not err < 1e-3:
        click.echo(f"gradient check failed: {err:.3e} >= 1e-3", err=True)
        sys.exit(1)


def main() -> None:
    try:
        cli(standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.exceptions.Abort:
        sys.exit(1)
    except TopicSpotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(2)
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
