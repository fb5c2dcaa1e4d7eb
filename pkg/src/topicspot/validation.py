"""Input validation helpers for the estimator API."""

from __future__ import annotations

import numpy as np

from .corpus import Dialog, Utterance, tokenize
from .errors import ValidationError


def as_dialog(item, index: int) -> Dialog:
    """Coerce one sample to a Dialog.

    Accepts a Dialog as-is, or a sequence of utterance strings which are
    tokenized on the fly (empty utterances dropped).
    """
    if isinstance(item, Dialog):
        if not item.utterances:
            raise ValidationError(f"sample {index}: dialog has no utterances")
        return item
    if isinstance(item, (list, tuple)) and all(isinstance(u, str) for u in item):
        utterances = []
        for k, text in enumerate(item):
            tokens = tokenize(text)
            if tokens:
                utterances.append(Utterance(speaker="AB"[k % 2], tokens=tuple(tokens)))
        if not utterances:
            raise ValidationError(f"sample {index}: no non-empty utterances")
        return Dialog(id=f"x{index}", topic="", utterances=tuple(utterances))
    raise ValidationError(
        f"sample {index}: expected a Dialog or a sequence of utterance strings, "
        f"got {type(item).__name__}")


def check_dialogs(X) -> list[Dialog]:
    if X is None or len(X) == 0:
        raise ValidationError("X must contain at least one dialog")
    return [as_dialog(item, i) for i, item in enumerate(X)]


def check_labels(dialogs: list[Dialog], y) -> list[str]:
    """Labels from y, falling back to each dialog's own topic field."""
    if y is None:
        labels = [d.topic for d in dialogs]
        if any(not t for t in labels):
            raise ValidationError("y is required when dialogs carry no topic labels")
        return labels
    labels = [str(v) for v in np.asarray(y).ravel()]
    if len(labels) != len(dialogs):
        raise ValidationError(f"X has {len(dialogs)} samples but y has {len(labels)}")
    if any(not t for t in labels):
        raise ValidationError("labels must be non-empty strings")
    return labels
