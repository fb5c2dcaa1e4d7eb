"""Word-embedding matrix: pretrained loading, random init, trainable lookup."""

from __future__ import annotations

import gzip
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, _make
from .corpus import PAD_ID, Vocab
from .errors import ParseError, ValidationError
from .rng import Rng

OOV_RANGE = 0.05


@dataclass
class EmbeddingMatrix:
    """|V| x d trainable matrix; row 0 (PAD) stays all-zero forever."""

    weights: Tensor
    dim: int
    coverage: float

    @property
    def vocab_size(self) -> int:
        return self.weights.data.shape[0]


def _open_maybe_gzip(path):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, encoding="utf-8")


def init_random(vocab: Vocab, dim: int, seed: int) -> EmbeddingMatrix:
    """All rows uniform in [-OOV_RANGE, OOV_RANGE] except the zero PAD row."""
    rng = Rng(seed).derive("embeddings")
    data = rng.uniform(-OOV_RANGE, OOV_RANGE, len(vocab) * dim).reshape(len(vocab), dim)
    data[PAD_ID] = 0.0
    return EmbeddingMatrix(weights=Tensor(data, requires_grad=True), dim=dim, coverage=0.0)


def load_pretrained(path, vocab: Vocab, dim: int = 300, seed: int = 0) -> EmbeddingMatrix:
    """Load whitespace-delimited text vectors (token v1 ... vd per line).

    An optional leading "count dim" header line is accepted; a gzipped file
    is detected by its .gz suffix. Vocab tokens missing from the file (and
    UNK) are initialized uniformly in [-OOV_RANGE, OOV_RANGE] from the seed.
    """
    matrix = init_random(vocab, dim, seed)
    data = matrix.weights.data
    found: set[int] = set()
    with _open_maybe_gzip(path) as fh:
        first = True
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.rstrip("\n").split()
            if not parts:
                continue
            if first:
                first = False
                if len(parts) == 2 and parts[0].isdigit() and parts[1].isdigit():
                    if int(parts[1]) != dim:
                        raise ValidationError(
                            f"embedding file dimension {parts[1]} does not match requested {dim}")
                    continue
                if len(parts) - 1 != dim:
                    raise ValidationError(
                        f"embedding file dimension {len(parts) - 1} does not match requested {dim}")
            elif len(parts) - 1 != dim:
                raise ParseError(
                    f"expected {dim + 1} fields, got {len(parts)}", lineno)
            token = parts[0]
            idx = vocab.token_to_id.get(token)
            if idx is None or idx in found or idx == PAD_ID:
                continue
            try:
                data[idx] = np.array([float(v) for v in parts[1:]], dtype=np.float64)
            except ValueError:
                raise ParseError("non-numeric vector component", lineno) from None
            found.add(idx)
    data[PAD_ID] = 0.0
    non_reserved = max(1, len(vocab) - 2)
    matrix.coverage = len(found) / non_reserved
    return matrix


def lookup(matrix: EmbeddingMatrix, ids) -> Tensor:
    """Gather rows for a token-id sequence; backward scatter-adds into the matrix."""
    if len(ids) == 0:
        raise ValidationError("lookup requires a non-empty id sequence")
    idx = np.asarray(ids, dtype=np.intp)
    if idx.min() < 0 or idx.max() >= matrix.vocab_size:
        raise IndexError(
            f"token id out of range [0, {matrix.vocab_size}): {int(idx.min())}..{int(idx.max())}")
    weights = matrix.weights
    out_data = weights.data[idx]

    def fn(out):
        def run(g):
            if weights.requires_grad:
                if weights.grad is None:
                    weights.grad = np.zeros_like(weights.data)
                np.add.at(weights.grad, idx, g)
        return run

    return _make(out_data, (weights,), fn)
