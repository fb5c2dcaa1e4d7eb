"""Dialog data model: tokenization, corpus IO, split construction, synthesis.

A corpus file is UTF-8 JSON-lines, one dialog per line:

    {"id": "sw2005", "topic": "GARDENING",
     "utterances": [{"speaker": "A", "text": "I grow roses <Laughter>"}, ...]}

Unknown fields are ignored; everything else is parsed strictly.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
import string
from dataclasses import dataclass, field

from .errors import ParseError, ValidationError
from .rng import Rng

log = logging.getLogger(__name__)

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

_MARKER = re.compile(r"<[^<>\s]+>")
_STRIP = string.punctuation


def tokenize(text: str) -> list[str]:
    """Minimal preprocessing: lowercase words, keep markers and # ? intact.

    Whitespace-delimited pieces are split around bracketed non-verbal
    markers (kept verbatim, case preserved); '#' and '?' become standalone
    tokens; remaining word tokens are lowercased with other leading and
    trailing punctuation stripped. Never emits empty tokens.
    """
    tokens: list[str] = []
    for piece in text.split():
        for fragment in _interleave_markers(piece):
            if _MARKER.fullmatch(fragment):
                tokens.append(fragment)
                continue
            for part in re.findall(r"[#?]|[^#?]+", fragment):
                if part in ("#", "?"):
                    tokens.append(part)
                else:
                    word = part.strip(_STRIP).lower()
                    if word:
                        tokens.append(word)
    return tokens


def _interleave_markers(piece: str) -> list[str]:
    """Split a piece into marker and non-marker fragments, in order."""
    out = []
    pos = 0
    for m in _MARKER.finditer(piece):
        if m.start() > pos:
            out.append(piece[pos:m.start()])
        out.append(m.group(0))
        pos = m.end()
    if pos < len(piece):
        out.append(piece[pos:])
    return out


@dataclass(frozen=True)
class Utterance:
    speaker: str
    tokens: tuple[str, ...]


@dataclass(frozen=True)
class Dialog:
    id: str
    topic: str
    utterances: tuple[Utterance, ...]

    def n_utterances(self) -> int:
        return len(self.utterances)


@dataclass(frozen=True)
class Corpus:
    dialogs: tuple[Dialog, ...]

    @property
    def topic_set(self) -> frozenset[str]:
        return frozenset(d.topic for d in self.dialogs)

    def topics(self) -> list[str]:
        return sorted(self.topic_set)

    def __len__(self) -> int:
        return len(self.dialogs)

    def by_topic(self) -> dict[str, list[Dialog]]:
        groups: dict[str, list[Dialog]] = {}
        for d in self.dialogs:
            groups.setdefault(d.topic, []).append(d)
        return groups


@dataclass(frozen=True)
class SplitCorpus:
    train: Corpus
    dev: Corpus
    test: Corpus
    seed: int
    provenance: dict = field(default_factory=dict)

    def parts(self) -> dict[str, Corpus]:
        return {"train": self.train, "dev": self.dev, "test": self.test}


# ---------------------------------------------------------------------------
# corpus file IO
# ---------------------------------------------------------------------------


def parse_dialog_record(obj, line: int | None = None, require_topic: bool = True) -> Dialog:
    if not isinstance(obj, dict):
        raise ParseError("record is not a JSON object", line)
    dialog_id = obj.get("id")
    topic = obj.get("topic", "")
    raw_utterances = obj.get("utterances")
    if not isinstance(dialog_id, str) or not dialog_id:
        raise ParseError("missing or invalid 'id'", line)
    if require_topic and (not isinstance(topic, str) or not topic):
        raise ParseError(f"dialog {dialog_id!r}: missing or invalid 'topic'", line)
    if not isinstance(raw_utterances, list):
        raise ParseError(f"dialog {dialog_id!r}: 'utterances' must be a list", line)

    utterances = []
    for u in raw_utterances:
        if not isinstance(u, dict) or not isinstance(u.get("text"), str):
            raise ParseError(f"dialog {dialog_id!r}: malformed utterance record", line)
        tokens = tokenize(u["text"])
        if not tokens:
            log.debug("dropping empty utterance in dialog %s", dialog_id)
            continue
        utterances.append(Utterance(speaker=str(u.get("speaker", "")), tokens=tuple(tokens)))
    if not utterances:
        raise ValidationError(
            f"dialog {dialog_id!r} has no non-empty utterances"
            + (f" (line {line})" if line is not None else ""))
    return Dialog(id=dialog_id, topic=str(topic), utterances=tuple(utterances))


def load_corpus(path) -> Corpus:
    """Load a JSON-lines dialog corpus; strict parsing, duplicate ids rejected."""
    dialogs = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", lineno) from exc
            dialog = parse_dialog_record(obj, line=lineno)
            if dialog.id in seen:
                raise ValidationError(f"duplicate dialog id {dialog.id!r} (line {lineno})")
            seen.add(dialog.id)
            dialogs.append(dialog)
    return Corpus(dialogs=tuple(dialogs))


def save_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in corpus.dialogs:
            record = {
                "id": d.id,
                "topic": d.topic,
                "utterances": [
                    {"speaker": u.speaker, "text": " ".join(u.tokens)} for u in d.utterances
                ],
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# vocabulary
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Vocab:
    """Token ids dense in [0, |V|); id 0 is PAD, id 1 is UNK."""

    id_to_token: tuple[str, ...]
    token_to_id: dict[str, int]

    def __len__(self) -> int:
        return len(self.id_to_token)

    def encode(self, tokens) -> list[int]:
        get = self.token_to_id.get
        return [get(t, UNK_ID) for t in tokens]

    def content_hash(self) -> str:
        payload = json.dumps(list(self.id_to_token)).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()

    def to_json(self) -> dict:
        return {"tokens": list(self.id_to_token)}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocab":
        tokens = obj["tokens"]
        if tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValidationError("vocab file does not start with PAD/UNK reserved entries")
        return cls(id_to_token=tuple(tokens),
                   token_to_id={t: i for i, t in enumerate(tokens)})


def build_vocab(corpus: Corpus, min_count: int = 1) -> Vocab:
    """Vocabulary over corpus tokens; ties broken by token string for determinism."""
    if not corpus.dialogs:
        raise ValidationError("cannot build a vocabulary from an empty corpus")
    counts: dict[str, int] = {}
    for d in corpus.dialogs:
        for u in d.utterances:
            for t in u.tokens:
                counts[t] = counts.get(t, 0) + 1
    kept = sorted((t for t, c in counts.items() if c >= min_count),
                  key=lambda t: (-counts[t], t))
    id_to_token = (PAD_TOKEN, UNK_TOKEN, *kept)
    return Vocab(id_to_token=id_to_token,
                 token_to_id={t: i for i, t in enumerate(id_to_token)})


# ---------------------------------------------------------------------------
# split construction
# ---------------------------------------------------------------------------


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def make_swbd2_split(corpus: Corpus, seed: int, min_dialogs: int = 10,
                     test_fraction: float = 0.1, dev_fraction: float = 0.05) -> SplitCorpus:
    """Drop infrequent topics, then assign per-topic so every retained topic
    lands in both train and test.

    Per topic the dialogs are shuffled with a seeded substream and split as
    test = max(1, round(test_fraction * n)), dev = round(dev_fraction * n)
    capped so train keeps at least one dialog. Dev coverage of every topic
    is not forced.
    """
    groups = corpus.by_topic()
    removed = sorted(t for t, ds in groups.items() if len(ds) < min_dialogs)
    retained = sorted(t for t in groups if t not in set(removed))
    if not retained:
        raise ValidationError("no topics retained after frequency filtering")
    for t in retained:
        if len(groups[t]) < 2:
            raise ValidationError(
                f"topic {t!r} has {len(groups[t])} dialog(s); cannot cover both train and test")

    split_rng = Rng(seed).derive("split")
    train, dev, test = [], [], []
    for t in retained:
        dialogs = list(groups[t])
        split_rng.derive(t).shuffle(dialogs)
        n = len(dialogs)
        n_test = min(max(1, _round_half_up(test_fraction * n)), n - 1)
        n_dev = min(_round_half_up(dev_fraction * n), n - n_test - 1)
        test.extend(dialogs[:n_test])
        dev.extend(dialogs[n_test:n_test + n_dev])
        train.extend(dialogs[n_test + n_dev:])

    provenance = {
        "procedure": "per-topic frequency filter + seeded proportional assignment",
        "min_dialogs": min_dialogs,
        "test_fraction": test_fraction,
        "dev_fraction": dev_fraction,
        "removed_topics": removed,
    }
    return SplitCorpus(train=Corpus(tuple(train)), dev=Corpus(tuple(dev)),
                       test=Corpus(tuple(test)), seed=seed, provenance=provenance)


def split_manifest(split: SplitCorpus) -> dict:
    return {
        "seed": split.seed,
        "train": [d.id for d in split.train.dialogs],
        "dev": [d.id for d in split.dev.dialogs],
        "test": [d.id for d in split.test.dialogs],
        "removed_topics": list(split.provenance.get("removed_topics", [])),
    }


def save_manifest(split: SplitCorpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(split_manifest(split), fh, indent=2, sort_keys=True)
        fh.write("\n")


def split_from_manifest(corpus: Corpus, manifest: dict) -> SplitCorpus:
    """Rebuild a SplitCorpus by id lists; ids must exist and be disjoint."""
    by_id = {d.id: d for d in corpus.dialogs}
    parts: dict[str, list[Dialog]] = {}
    claimed: set[str] = set()
    for part in ("train", "dev", "test"):
        ids = manifest.get(part, [])
        out = []
        for i in ids:
            if i not in by_id:
                raise ValidationError(f"manifest {part} id {i!r} not present in corpus")
            if i in claimed:
                raise ValidationError(f"dialog id {i!r} assigned to more than one part")
            claimed.add(i)
            out.append(by_id[i])
        parts[part] = out
    test_topics = {d.topic for d in parts["test"]}
    train_topics = {d.topic for d in parts["train"]}
    if not test_topics <= train_topics:
        raise ValidationError("manifest test split contains topics absent from train")
    return SplitCorpus(train=Corpus(tuple(parts["train"])), dev=Corpus(tuple(parts["dev"])),
                       test=Corpus(tuple(parts["test"])), seed=int(manifest.get("seed", 0)),
                       provenance={"removed_topics": manifest.get("removed_topics", [])})


# ---------------------------------------------------------------------------
# synthetic corpora
# ---------------------------------------------------------------------------

KEYWORDS_PER_TOPIC = 5


def synth_corpus(n_topics: int, dialogs_per_topic: int, utterances_per_dialog: int,
                 utterance_len: int, keyword_rate: float, vocab_size: int,
                 seed: int) -> Corpus:
    """Seeded synthetic corpus: each topic owns 5 disjoint keyword tokens and
    every token is a topic keyword with probability keyword_rate, else a
    shared background token.
    """
    if not 0.0 < keyword_rate <= 1.0:
        raise ValidationError(f"keyword_rate must be in (0, 1], got {keyword_rate}")
    n_keywords = KEYWORDS_PER_TOPIC * n_topics
    if vocab_size < n_keywords + 1:
        raise ValidationError(
            f"vocab_size {vocab_size} too small: need at least {n_keywords + 1} "
            f"for {n_topics} topics")

    words = [f"w{i:05d}" for i in range(vocab_size)]
    background = words[n_keywords:]
    rng = Rng(seed).derive("synth")
    dialogs = []
    for topic_idx in range(n_topics):
        topic = f"topic{topic_idx:02d}"
        lexicon = words[KEYWORDS_PER_TOPIC * topic_idx:KEYWORDS_PER_TOPIC * (topic_idx + 1)]
        for j in range(dialogs_per_topic):
            utterances = []
            for k in range(utterances_per_dialog):
                tokens = []
                for _ in range(utterance_len):
                    if rng.random() < keyword_rate:
                        tokens.append(lexicon[rng.randint(KEYWORDS_PER_TOPIC)])
                    else:
                        tokens.append(background[rng.randint(len(background))])
                utterances.append(Utterance(speaker="AB"[k % 2], tokens=tuple(tokens)))
            dialogs.append(Dialog(id=f"{topic}_d{j:04d}", topic=topic,
                                  utterances=tuple(utterances)))
    return Corpus(dialogs=tuple(dialogs))


def standard_benchmark(seed: int = 7) -> SplitCorpus:
    """The 8-topic benchmark corpus used by the verification suite.

    69 dialogs per topic split 50/6/13 per topic (400/48/104 overall), so
    the test set is exactly topic-balanced and the majority baseline is
    exactly 12.5%. Dialogs are 4 utterances of 32 tokens: long utterances
    keep position-selective pooling meaningfully harder than final-state
    pooling at small hidden sizes.
    """
    corpus = synth_corpus(n_topics=8, dialogs_per_topic=69, utterances_per_dialog=4,
                          utterance_len=32, keyword_rate=0.3, vocab_size=2000, seed=seed)
    return make_swbd2_split(corpus, seed=seed, min_dialogs=10,
                            test_fraction=13 / 69, dev_fraction=6 / 69)


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------


def corpus_stats(split: SplitCorpus) -> dict[str, dict]:
    """Per-part dialog count, topic count and mean utterances per dialog."""
    stats = {}
    for name, part in split.parts().items():
        n = len(part.dialogs)
        avg = sum(d.n_utterances() for d in part.dialogs) / n if n else 0.0
        stats[name] = {"dialogs": n, "topics": len(part.topic_set), "avg_utterances": avg}
    return stats
