"""Table-style comparison baselines: bag-of-words logistic regression and majority class."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Dialog, SplitCorpus, Vocab
from .errors import ValidationError
from .evaluation import DialogResult, EvalReport, build_report


@dataclass
class LogisticModel:
    W: np.ndarray  # (n_topics, |V|)
    b: np.ndarray  # (n_topics,)
    topics: tuple[str, ...]


def bow_features(dialog: Dialog, vocab: Vocab) -> dict[int, int]:
    """Token-id counts over the whole dialog; unseen tokens land in the UNK bucket."""
    counts: dict[int, int] = {}
    for u in dialog.utterances:
        for token_id in vocab.encode(u.tokens):
            counts[token_id] = counts.get(token_id, 0) + 1
    return counts


def features_matrix(corpus: Corpus, vocab: Vocab) -> np.ndarray:
    x = np.zeros((len(corpus.dialogs), len(vocab)))
    for i, d in enumerate(corpus.dialogs):
        for token_id, count in bow_features(d, vocab).items():
            x[i, token_id] = count
    return x


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def train_logistic(features: np.ndarray, labels: np.ndarray, topics,
                   l2: float = 1e-4, epochs: int = 500, lr: float = 0.1) -> LogisticModel:
    """Multinomial logistic regression by full-batch gradient descent on
    mean NLL + l2 * ||W||^2. Zero init keeps the convex fit deterministic."""
    topics = tuple(topics)
    if len(topics) < 2:
        raise ValidationError("logistic baseline requires at least 2 classes")
    n, vocab_size = features.shape
    onehot = np.zeros((n, len(topics)))
    onehot[np.arange(n), labels] = 1.0
    w = np.zeros((len(topics), vocab_size))
    b = np.zeros(len(topics))
    for _ in range(epochs):
        probs = _softmax_rows(features @ w.T + b)
        err = probs - onehot
        w -= lr * (err.T @ features / n + 2.0 * l2 * w)
        b -= lr * err.mean(axis=0)
    return LogisticModel(W=w, b=b, topics=topics)


def logistic_nll(model: LogisticModel, features: np.ndarray, labels: np.ndarray,
                 l2: float = 1e-4) -> float:
    probs = _softmax_rows(features @ model.W.T + model.b)
    picked = np.clip(probs[np.arange(len(labels)), labels], 1e-300, None)
    return float(-np.log(picked).mean() + l2 * np.sum(model.W ** 2))


def predict_logistic(model: LogisticModel, features: np.ndarray) -> np.ndarray:
    return np.argmax(features @ model.W.T + model.b, axis=1)


def fit_bow_logistic(split: SplitCorpus, vocab: Vocab, l2: float = 1e-4,
                     epochs: int = 500, lr: float = 0.1) -> LogisticModel:
    topics = tuple(split.train.topics())
    index = {t: i for i, t in enumerate(topics)}
    x = features_matrix(split.train, vocab)
    y = np.array([index[d.topic] for d in split.train.dialogs])
    return train_logistic(x, y, topics, l2=l2, epochs=epochs, lr=lr)


def evaluate_logistic(model: LogisticModel, corpus: Corpus, vocab: Vocab) -> EvalReport:
    unknown = corpus.topic_set - set(model.topics)
    if unknown:
        raise ValidationError(f"corpus has topics unknown to the baseline: {sorted(unknown)}")
    x = features_matrix(corpus, vocab)
    z = x @ model.W.T + model.b
    probs = _softmax_rows(z)
    records = []
    for i, d in enumerate(corpus.dialogs):
        j = int(np.argmax(z[i]))
        records.append(DialogResult(dialog_id=d.id, gold=d.topic,
                                    predicted=model.topics[j],
                                    confidence=float(probs[i, j])))
    return build_report(records)


def majority_baseline(split: SplitCorpus) -> float:
    """Accuracy (percent) of predicting the most frequent train topic for every
    test dialog; count ties break to the lexicographically smallest topic."""
    counts = Counter(d.topic for d in split.train.dialogs)
    if not counts:
        raise ValidationError("training split is empty")
    majority = min(counts, key=lambda t: (-counts[t], t))
    if not split.test.dialogs:
        return 0.0
    correct = sum(1 for d in split.test.dialogs if d.topic == majority)
    return 100.0 * correct / len(split.test.dialogs)
