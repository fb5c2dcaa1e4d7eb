"""NLL training loop: per-dialog Adam steps, plateau LR halving, best-dev snapshot."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, backward, zero_grads
from .corpus import PAD_ID, SplitCorpus, Vocab
from .errors import NumericalError, ValidationError
from .model import ModelParams, copy_params, dialog_loss, encode_dialog_tokens, predict
from .rng import Rng

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr0: float = 0.001
    max_epochs: int = 30
    lr_halve_on_plateau: bool = True
    plateau_patience_epochs: int = 1
    min_lr: float = 1e-5
    grad_clip_norm: float = 5.0  # 0 disables clipping
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValidationError("lr0 must be positive")
        if self.max_epochs < 1:
            raise ValidationError("max_epochs must be at least 1")


@dataclass
class AdamState:
    """First/second moment arrays mirroring the model parameters."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        named = params.named_parameters()
        return cls(m={n: np.zeros_like(t.data) for n, t in named},
                   v={n: np.zeros_like(t.data) for n, t in named})


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float  # percent
    dev_accuracy: float    # percent
    lr: float
    seconds: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def best_dev_accuracy(self) -> float:
        return max((r.dev_accuracy for r in self.records), default=0.0)

    def signature(self) -> list[tuple]:
        """Deterministic view of the history (wall time excluded)."""
        return [(r.epoch, r.train_loss, r.train_accuracy, r.dev_accuracy, r.lr)
                for r in self.records]


def global_grad_norm(grads: list[np.ndarray]) -> float:
    total = 0.0
    for g in grads:
        total += float(np.sum(g * g))
    return float(np.sqrt(total))


def clip_gradients(grads: list[np.ndarray], max_norm: float) -> list[np.ndarray]:
    """Scale all gradients by max_norm/norm when the global L2 norm exceeds it."""
    if max_norm <= 0:
        raise ValidationError("max_norm must be positive")
    norm = global_grad_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return grads


def adam_step(params: ModelParams, state: AdamState, lr: float) -> None:
    """Bias-corrected Adam update over all named parameters.

    The PAD embedding row is masked out so it stays exactly zero. Raises
    NumericalError (leaving parameters and state untouched) if any gradient
    is non-finite.
    """
    named = params.named_parameters()
    grads = {}
    for name, t in named:
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        if name == "embeddings.E":
            g = g.copy()
            g[PAD_ID] = 0.0
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in {name}")
        grads[name] = g

    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, t in named:
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        t.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def _accuracy_percent(params: ModelParams, encoded: list[tuple[list[list[int]], int]]) -> float:
    if not encoded:
        return 0.0
    correct = sum(1 for ids, label in encoded
                  if predict(params, ids).label_index == label)
    return 100.0 * correct / len(encoded)


def train(params: ModelParams, split: SplitCorpus, config: TrainConfig,
          vocab: Vocab) -> tuple[ModelParams, TrainHistory]:
    """Train on split.train with one Adam step per dialog.

    Dev accuracy is evaluated each epoch (falling back to train accuracy
    when the dev part is empty); when it fails to improve for
    plateau_patience_epochs the learning rate is halved. Returns the
    parameter snapshot from the best dev-accuracy epoch plus the history.
    """
    if not split.train.dialogs:
        raise ValidationError("training split is empty")
    label_index = {t: i for i, t in enumerate(params.topics)}
    for part_name, part in (("train", split.train), ("dev", split.dev)):
        unknown = part.topic_set - set(params.topics)
        if unknown:
            raise ValidationError(f"{part_name} split has topics unknown to the model: {sorted(unknown)}")

    train_set = [(encode_dialog_tokens(vocab, d), label_index[d.topic])
                 for d in split.train.dialogs]
    dev_set = [(encode_dialog_tokens(vocab, d), label_index[d.topic])
               for d in split.dev.dialogs]

    shuffle_rng = Rng(config.seed).derive("shuffle")
    state = AdamState.for_params(params)
    tensors = params.parameters()
    history = TrainHistory()
    lr = config.lr0
    best_dev = -1.0
    best_params = copy_params(params)
    plateau = 0

    for epoch in range(1, config.max_epochs + 1):
        started = time.perf_counter()
        order = list(range(len(train_set)))
        if config.shuffle:
            shuffle_rng.shuffle(order)

        total_loss = 0.0
        correct = 0
        for idx in order:
            ids, label = train_set[idx]
            zero_grads(tensors)
            with Tape():
                loss, probs = dialog_loss(params, ids, label)
            if not np.isfinite(loss.data):
                log.warning("epoch %d: non-finite loss on dialog %d, step skipped", epoch, idx)
                continue
            backward(loss)
            total_loss += float(loss.data)
            correct += int(np.argmax(probs) == label)
            if config.grad_clip_norm > 0:
                clip_gradients([t.grad for t in tensors if t.grad is not None],
                               config.grad_clip_norm)
            try:
                adam_step(params, state, lr)
            except NumericalError as exc:
                log.warning("epoch %d: %s, step skipped", epoch, exc)

        train_loss = total_loss / len(train_set)
        train_acc = 100.0 * correct / len(train_set)
        dev_acc = _accuracy_percent(params, dev_set) if dev_set else train_acc
        history.records.append(EpochRecord(
            epoch=epoch, train_loss=train_loss, train_accuracy=train_acc,
            dev_accuracy=dev_acc, lr=lr, seconds=time.perf_counter() - started))

        if dev_acc > best_dev:
            best_dev = dev_acc
            best_params = copy_params(params)
            plateau = 0
        else:
            plateau += 1
            if config.lr_halve_on_plateau and plateau >= config.plateau_patience_epochs:
                lr /= 2.0
                plateau = 0
        if lr < config.min_lr:
            break

    return best_params, history


def write_history_csv(history: TrainHistory, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "train_acc", "dev_acc", "lr", "seconds"])
        for r in history.records:
            writer.writerow([r.epoch, repr(r.train_loss), repr(r.train_accuracy),
                             repr(r.dev_accuracy), repr(r.lr), f"{r.seconds:.3f}"])
