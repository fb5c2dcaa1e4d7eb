"""Scikit-learn style estimators wrapping the dialog topic models.

X is a sequence of Dialog objects (or plain lists of utterance strings);
y is the topic labels, defaulting to each dialog's own topic field. All
estimators follow the fit/predict/predict_proba/get_params contract so
they compose with sklearn tooling (clone, pipelines, cross-validation on
list inputs).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .baselines import features_matrix, predict_logistic, train_logistic, _softmax_rows
from .corpus import Corpus, Dialog, SplitCorpus, build_vocab
from .embeddings import load_pretrained
from .errors import ValidationError
from .model import ModelConfig, init_params, predict_dialog
from .training import TrainConfig, train
from .validation import check_dialogs, check_labels


def _labeled_corpus(dialogs: list[Dialog], labels: list[str]) -> Corpus:
    out = []
    seen: set[str] = set()
    for i, (d, label) in enumerate(zip(dialogs, labels)):
        if d.topic != label:
            d = replace(d, topic=label)
        if d.id in seen:
            d = replace(d, id=f"{d.id}#{i}")
        seen.add(d.id)
        out.append(d)
    return Corpus(dialogs=tuple(out))


class HierarchicalTopicClassifier(BaseEstimator, ClassifierMixin):
    """Hierarchical BiLSTM dialog classifier with self-attention pooling.

    Set attention=False for the flat hierarchical ablation that pools each
    utterance by its final BiLSTM states instead.
    """

    def __init__(self, embed_dim: int = 300, hidden_dim: int = 256,
                 attention_dim: int = 128, attention: bool = True,
                 lr: float = 0.001, max_epochs: int = 30,
                 plateau_patience: int = 1, min_lr: float = 1e-5,
                 grad_clip_norm: float = 5.0, min_count: int = 1,
                 pretrained_path: str | None = None, shuffle: bool = True,
                 seed: int = 0):
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.attention_dim = attention_dim
        self.attention = attention
        self.lr = lr
        self.max_epochs = max_epochs
        self.plateau_patience = plateau_patience
        self.min_lr = min_lr
        self.grad_clip_norm = grad_clip_norm
        self.min_count = min_count
        self.pretrained_path = pretrained_path
        self.shuffle = shuffle
        self.seed = seed

    def _configs(self) -> tuple[ModelConfig, TrainConfig]:
        model_cfg = ModelConfig(embed_dim=self.embed_dim, hidden_dim=self.hidden_dim,
                                attention_dim=self.attention_dim,
                                attention_enabled=self.attention)
        train_cfg = TrainConfig(lr0=self.lr, max_epochs=self.max_epochs,
                                plateau_patience_epochs=self.plateau_patience,
                                min_lr=self.min_lr, grad_clip_norm=self.grad_clip_norm,
                                seed=self.seed, shuffle=self.shuffle)
        return model_cfg, train_cfg

    def fit(self, X, y=None, dev=None):
        """Fit on dialogs X with labels y; optional dev=(X_dev, y_dev) drives
        the plateau learning-rate schedule and best-model selection."""
        dialogs = check_dialogs(X)
        labels = check_labels(dialogs, y)
        train_corpus = _labeled_corpus(dialogs, labels)
        if dev is not None:
            dev_x, dev_y = dev if isinstance(dev, tuple) else (dev, None)
            dev_dialogs = check_dialogs(dev_x)
            dev_corpus = _labeled_corpus(dev_dialogs, check_labels(dev_dialogs, dev_y))
            unknown = dev_corpus.topic_set - set(labels)
            if unknown:
                raise ValidationError(f"dev labels unseen in training data: {sorted(unknown)}")
        else:
            dev_corpus = Corpus(dialogs=())
        split = SplitCorpus(train=train_corpus, dev=dev_corpus,
                            test=Corpus(dialogs=()), seed=self.seed)
        return self.fit_split(split)

    def fit_split(self, split: SplitCorpus):
        """Fit from a prepared SplitCorpus (labels from the dialogs themselves)."""
        model_cfg, train_cfg = self._configs()
        vocab = build_vocab(split.train, min_count=self.min_count)
        embeddings = None
        if self.pretrained_path is not None:
            embeddings = load_pretrained(self.pretrained_path, vocab,
                                         dim=self.embed_dim, seed=self.seed)
        topics = tuple(split.train.topics())
        params = init_params(vocab, topics, seed=self.seed, config=model_cfg,
                             embeddings=embeddings)
        self.params_, self.history_ = train(params, split, train_cfg, vocab)
        self.vocab_ = vocab
        self.classes_ = np.array(topics, dtype=object)
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        dialogs = check_dialogs(X)
        out = np.zeros((len(dialogs), len(self.classes_)))
        for i, d in enumerate(dialogs):
            out[i] = predict_dialog(self.params_, self.vocab_, d).probs
        return out

    def predict(self, X) -> np.ndarray:
        probs = self.predict_proba(X)
        return self.classes_[np.argmax(probs, axis=1)]


class BagOfWordsLogistic(BaseEstimator, ClassifierMixin):
    """Dialog-level bag-of-words counts into multinomial logistic regression."""

    def __init__(self, min_count: int = 1, l2: float = 1e-4, lr: float = 0.1,
                 epochs: int = 500):
        self.min_count = min_count
        self.l2 = l2
        self.lr = lr
        self.epochs = epochs

    def fit(self, X, y=None):
        dialogs = check_dialogs(X)
        labels = check_labels(dialogs, y)
        corpus = _labeled_corpus(dialogs, labels)
        self.vocab_ = build_vocab(corpus, min_count=self.min_count)
        topics = tuple(corpus.topics())
        index = {t: i for i, t in enumerate(topics)}
        features = features_matrix(corpus, self.vocab_)
        target = np.array([index[t] for t in labels])
        self.model_ = train_logistic(features, target, topics, l2=self.l2,
                                     epochs=self.epochs, lr=self.lr)
        self.classes_ = np.array(topics, dtype=object)
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        corpus = Corpus(dialogs=tuple(check_dialogs(X)))
        features = features_matrix(corpus, self.vocab_)
        return _softmax_rows(features @ self.model_.W.T + self.model_.b)

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        corpus = Corpus(dialogs=tuple(check_dialogs(X)))
        features = features_matrix(corpus, self.vocab_)
        return self.classes_[predict_logistic(self.model_, features)]


class MajorityTopic(BaseEstimator, ClassifierMixin):
    """Predicts the most frequent training label; ties break lexicographically."""

    def fit(self, X, y=None):
        dialogs = check_dialogs(X)
        labels = check_labels(dialogs, y)
        counts = Counter(labels)
        self.majority_ = min(counts, key=lambda t: (-counts[t], t))
        self.classes_ = np.array(sorted(counts), dtype=object)
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "majority_")
        return np.array([self.majority_] * len(check_dialogs(X)), dtype=object)
