"""Hierarchical dialog topic model.

Two stacked single-layer BiLSTMs: an utterance encoder whose per-position
hidden states are pooled by a learned self-attention head (or, with
attention disabled, by taking the final-state concatenation), and a dialog
encoder whose final-state concatenation feeds a bias-free linear classifier
with a softmax output.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import (Tensor, add, concat, matmul, mul, row, sigmoid,
                       slice1d, softmax, softmax_nll, stack_rows, tanh,
                       transpose, zeros)
from .corpus import Dialog, Vocab
from .embeddings import EmbeddingMatrix, init_random
from .errors import ValidationError
from .rng import Rng

CHECKPOINT_MAGIC = b"TSPT0001"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 300
    hidden_dim: int = 256
    attention_dim: int = 128
    attention_enabled: bool = True
    # caps are safety bounds well above observed dialog sizes
    max_utterance_tokens: int = 128
    max_dialog_utterances: int = 512


@dataclass
class LstmDirection:
    """Fused-gate weights, gate order i, f, g, o along the first axis."""

    W_ih: Tensor  # (4h, input_dim)
    W_hh: Tensor  # (4h, h)
    b: Tensor     # (4h,)

    @property
    def hidden_dim(self) -> int:
        return self.W_hh.data.shape[1]


@dataclass
class BiLstmParams:
    fwd: LstmDirection
    bwd: LstmDirection
    input_dim: int
    hidden_dim: int


@dataclass
class AttentionParams:
    W1: Tensor  # (attention_dim, 2h)
    b1: Tensor  # (attention_dim,)
    w2: Tensor  # (attention_dim,)
    b2: Tensor  # scalar


@dataclass
class ModelParams:
    embeddings: EmbeddingMatrix
    utt_encoder: BiLstmParams
    attention: AttentionParams
    dlg_encoder: BiLstmParams
    classifier: Tensor  # (n_topics, 2 * hidden_dim)
    topics: tuple[str, ...]
    config: ModelConfig

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        """Trainable tensors in the fixed order used by checkpoints."""
        out = [("embeddings.E", self.embeddings.weights)]
        for enc_name, enc in (("utt_lstm", self.utt_encoder), ("dlg_lstm", self.dlg_encoder)):
            for dir_name, d in (("fwd", enc.fwd), ("bwd", enc.bwd)):
                out.append((f"{enc_name}.{dir_name}.W_ih", d.W_ih))
                out.append((f"{enc_name}.{dir_name}.W_hh", d.W_hh))
                out.append((f"{enc_name}.{dir_name}.b", d.b))
        out.append(("attention.W1", self.attention.W1))
        out.append(("attention.b1", self.attention.b1))
        out.append(("attention.w2", self.attention.w2))
        out.append(("attention.b2", self.attention.b2))
        out.append(("classifier.W", self.classifier))
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    @property
    def n_topics(self) -> int:
        return len(self.topics)


@dataclass
class TopicPrediction:
    probs: np.ndarray              # distribution over topics
    label_index: int
    label: str
    attention: list[np.ndarray] = field(default_factory=list)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------


def _glorot(rng: Rng, shape: tuple[int, ...], fan_in: int, fan_out: int) -> Tensor:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    n = int(np.prod(shape))
    return Tensor(rng.uniform(-limit, limit, n).reshape(shape), requires_grad=True)


def _init_direction(rng: Rng, input_dim: int, hidden_dim: int) -> LstmDirection:
    W_ih = _glorot(rng.derive("W_ih"), (4 * hidden_dim, input_dim), input_dim, 4 * hidden_dim)
    W_hh = _glorot(rng.derive("W_hh"), (4 * hidden_dim, hidden_dim), hidden_dim, 4 * hidden_dim)
    b = np.zeros(4 * hidden_dim)
    b[hidden_dim:2 * hidden_dim] = 1.0  # forget-gate slice
    return LstmDirection(W_ih=W_ih, W_hh=W_hh, b=Tensor(b, requires_grad=True))


def init_params(vocab: Vocab, topics, seed: int, config: ModelConfig | None = None,
                embeddings: EmbeddingMatrix | None = None) -> ModelParams:
    """Deterministic per seed: Glorot-uniform matrices, zero biases except
    the forget-gate slices, which start at 1.0."""
    config = config or ModelConfig()
    topics = tuple(topics)
    if not topics:
        raise ValidationError("model requires at least one topic label")
    rng = Rng(seed).derive("init")
    if embeddings is None:
        embeddings = init_random(vocab, config.embed_dim, seed)
    elif embeddings.dim != config.embed_dim:
        raise ValidationError(
            f"embedding dim {embeddings.dim} does not match config embed_dim {config.embed_dim}")

    h = config.hidden_dim
    rep = 2 * h
    utt = BiLstmParams(fwd=_init_direction(rng.derive("utt.fwd"), config.embed_dim, h),
                       bwd=_init_direction(rng.derive("utt.bwd"), config.embed_dim, h),
                       input_dim=config.embed_dim, hidden_dim=h)
    dlg = BiLstmParams(fwd=_init_direction(rng.derive("dlg.fwd"), rep, h),
                       bwd=_init_direction(rng.derive("dlg.bwd"), rep, h),
                       input_dim=rep, hidden_dim=h)
    a = config.attention_dim
    attention = AttentionParams(
        W1=_glorot(rng.derive("attn.W1"), (a, rep), rep, a),
        b1=Tensor(np.zeros(a), requires_grad=True),
        w2=_glorot(rng.derive("attn.w2"), (a,), a, 1),
        b2=Tensor(np.zeros(()), requires_grad=True),
    )
    classifier = _glorot(rng.derive("classifier"), (len(topics), rep), rep, len(topics))
    return ModelParams(embeddings=embeddings, utt_encoder=utt, attention=attention,
                       dlg_encoder=dlg, classifier=classifier, topics=topics, config=config)


def copy_params(params: ModelParams) -> ModelParams:
    """Deep copy of all trainable arrays (used for best-epoch snapshots)."""
    def clone(t: Tensor) -> Tensor:
        return Tensor(t.data.copy(), requires_grad=t.requires_grad)

    def clone_dir(d: LstmDirection) -> LstmDirection:
        return LstmDirection(W_ih=clone(d.W_ih), W_hh=clone(d.W_hh), b=clone(d.b))

    def clone_enc(e: BiLstmParams) -> BiLstmParams:
        return BiLstmParams(fwd=clone_dir(e.fwd), bwd=clone_dir(e.bwd),
                            input_dim=e.input_dim, hidden_dim=e.hidden_dim)

    emb = EmbeddingMatrix(weights=clone(params.embeddings.weights),
                          dim=params.embeddings.dim, coverage=params.embeddings.coverage)
    attn = AttentionParams(W1=clone(params.attention.W1), b1=clone(params.attention.b1),
                           w2=clone(params.attention.w2), b2=clone(params.attention.b2))
    return ModelParams(embeddings=emb, utt_encoder=clone_enc(params.utt_encoder),
                       attention=attn, dlg_encoder=clone_enc(params.dlg_encoder),
                       classifier=clone(params.classifier), topics=params.topics,
                       config=params.config)


def quantize_params(params: ModelParams) -> ModelParams:
    """Round every parameter through float32, as checkpoint IO does."""
    out = copy_params(params)
    for _, t in out.named_parameters():
        t.data = t.data.astype(np.float32).astype(np.float64)
    return out


# ---------------------------------------------------------------------------
# forward computation
# ---------------------------------------------------------------------------


def lstm_step(direction: LstmDirection, x: Tensor, state: tuple[Tensor, Tensor]):
    """One cell update: c' = f*c + i*g, h' = o*tanh(c')."""
    h_prev, c_prev = state
    hd = direction.hidden_dim
    gates = add(add(matmul(direction.W_ih, x), matmul(direction.W_hh, h_prev)), direction.b)
    gate_i = sigmoid(slice1d(gates, 0, hd))
    gate_f = sigmoid(slice1d(gates, hd, 2 * hd))
    gate_g = tanh(slice1d(gates, 2 * hd, 3 * hd))
    gate_o = sigmoid(slice1d(gates, 3 * hd, 4 * hd))
    c_new = add(mul(gate_f, c_prev), mul(gate_i, gate_g))
    h_new = mul(gate_o, tanh(c_new))
    return h_new, c_new


def _run_direction(direction: LstmDirection, xs: list[Tensor]) -> list[Tensor]:
    h = zeros(direction.hidden_dim)
    c = zeros(direction.hidden_dim)
    states = []
    for x in xs:
        h, c = lstm_step(direction, x, (h, c))
        states.append(h)
    return states


def bilstm_states(encoder: BiLstmParams, xs: list[Tensor]) -> tuple[list[Tensor], list[Tensor]]:
    """Per-position forward and backward hidden states, both aligned to input order."""
    fwd = _run_direction(encoder.fwd, xs)
    bwd = _run_direction(encoder.bwd, xs[::-1])[::-1]
    return fwd, bwd


def encode_utterance(params: ModelParams, token_vectors: Tensor) -> tuple[Tensor, Tensor]:
    """Pool BiLSTM states over a (L, embed_dim) token matrix.

    With attention enabled the pooled vector is the attention-weighted sum
    of the per-position state concatenations; otherwise it is the
    forward-final/backward-final concatenation and the returned weights are
    uniform (diagnostic only).
    """
    length = token_vectors.data.shape[0]
    if length == 0:
        raise ValidationError("cannot encode an empty utterance")
    xs = [row(token_vectors, i) for i in range(length)]
    fwd, bwd = bilstm_states(params.utt_encoder, xs)
    if not params.config.attention_enabled:
        pooled = concat(fwd[-1], bwd[0])
        return pooled, Tensor(np.full(length, 1.0 / length))
    states = stack_rows([concat(fwd[i], bwd[i]) for i in range(length)])  # (L, 2h)
    hidden = tanh(add(matmul(states, transpose(params.attention.W1)), params.attention.b1))
    scores = add(matmul(hidden, params.attention.w2), params.attention.b2)  # (L,)
    weights = softmax(scores)
    pooled = matmul(weights, states)  # (2h,)
    return pooled, weights


def encode_dialog(params: ModelParams, utterance_reps: list[Tensor]) -> Tensor:
    """Dialog representation: final-state concatenation of the dialog BiLSTM."""
    if not utterance_reps:
        raise ValidationError("cannot encode a dialog with no utterances")
    fwd, bwd = bilstm_states(params.dlg_encoder, utterance_reps)
    return concat(fwd[-1], bwd[0])


def forward_logits(params: ModelParams, token_ids: list[list[int]]):
    """Unnormalized class scores for a dialog given per-utterance token ids."""
    from .embeddings import lookup

    if not token_ids:
        raise ValidationError("dialog has no utterances")
    cfg = params.config
    reps, attentions = [], []
    for ids in token_ids[:cfg.max_dialog_utterances]:
        if not ids:
            raise ValidationError("utterance has no tokens")
        vectors = lookup(params.embeddings, ids[:cfg.max_utterance_tokens])
        pooled, weights = encode_utterance(params, vectors)
        reps.append(pooled)
        attentions.append(weights)
    dialog_rep = encode_dialog(params, reps)
    logits = matmul(params.classifier, dialog_rep)  # no bias term
    return logits, attentions


def _stable_softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    return e / e.sum()


def dialog_loss(params: ModelParams, token_ids: list[list[int]], label_index: int):
    """Fused softmax NLL for one dialog; also returns probs for accuracy tracking."""
    logits, _ = forward_logits(params, token_ids)
    loss = softmax_nll(logits, label_index)
    return loss, _stable_softmax(logits.data)


def encode_dialog_tokens(vocab: Vocab, dialog: Dialog) -> list[list[int]]:
    return [vocab.encode(u.tokens) for u in dialog.utterances]


def predict(params: ModelParams, token_ids: list[list[int]]) -> TopicPrediction:
    """Pure function of (params, dialog): probs, argmax label (ties -> lowest
    index), and per-utterance attention weights."""
    logits, attentions = forward_logits(params, token_ids)
    probs = _stable_softmax(logits.data)
    idx = int(np.argmax(probs))
    return TopicPrediction(probs=probs, label_index=idx, label=params.topics[idx],
                           attention=[a.data for a in attentions])


def predict_dialog(params: ModelParams, vocab: Vocab, dialog: Dialog) -> TopicPrediction:
    return predict(params, encode_dialog_tokens(vocab, dialog))


# ---------------------------------------------------------------------------
# checkpoint IO
# ---------------------------------------------------------------------------


def save_checkpoint(params: ModelParams, path, vocab: Vocab) -> None:
    """Binary container: magic, JSON header, then little-endian float32 arrays
    in header-declared order."""
    named = params.named_parameters()
    header = {
        "format_version": CHECKPOINT_VERSION,
        "embed_dim": params.config.embed_dim,
        "hidden_dim": params.config.hidden_dim,
        "attention_dim": params.config.attention_dim,
        "attention_enabled": params.config.attention_enabled,
        "max_utterance_tokens": params.config.max_utterance_tokens,
        "max_dialog_utterances": params.config.max_dialog_utterances,
        "topics": list(params.topics),
        "vocab_hash": vocab.content_hash(),
        "coverage": params.embeddings.coverage,
        "params": [{"name": n, "shape": list(t.data.shape)} for n, t in named],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for _, t in named:
            fh.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())


def load_checkpoint(path, vocab: Vocab) -> ModelParams:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValidationError(f"not a checkpoint file: bad magic {magic!r}")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("format_version") != CHECKPOINT_VERSION:
            raise ValidationError(f"unsupported checkpoint version {header.get('format_version')}")
        if header["vocab_hash"] != vocab.content_hash():
            raise ValidationError("checkpoint vocab hash does not match the provided vocabulary")
        config = ModelConfig(
            embed_dim=header["embed_dim"], hidden_dim=header["hidden_dim"],
            attention_dim=header["attention_dim"], attention_enabled=header["attention_enabled"],
            max_utterance_tokens=header["max_utterance_tokens"],
            max_dialog_utterances=header["max_dialog_utterances"])
        params = init_params(vocab, header["topics"], seed=0, config=config)
        for spec_entry, (name, t) in zip(header["params"], params.named_parameters()):
            if spec_entry["name"] != name or tuple(spec_entry["shape"]) != t.data.shape:
                raise ValidationError(
                    f"checkpoint parameter mismatch: {spec_entry['name']} vs {name}")
            n = int(np.prod(spec_entry["shape"])) if spec_entry["shape"] else 1
            raw = fh.read(4 * n)
            if len(raw) != 4 * n:
                raise ValidationError("checkpoint truncated")
            t.data = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(t.data.shape)
        if fh.read(1):
            raise ValidationError("trailing bytes after checkpoint payload")
    params.embeddings.coverage = float(header.get("coverage", 0.0))
    return params
