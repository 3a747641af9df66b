"""Corpus records, JSONL I/O, tokenizer and vocabulary.

Wire formats:
  reviews: one JSON object per line with keys review_id, text, image_paths,
           category
  pairs:   pair_id, verbatim_id, review_id, verbatim, image_path, score and,
           once labelled, label
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional


class CorpusError(ValueError):
    pass


@dataclass
class ReviewRecord:
    review_id: str
    text: str
    image_paths: list[str]
    category: str


@dataclass
class Verbatim:
    verbatim_id: str
    review_id: str
    text: str
    char_span: tuple[int, int]


@dataclass
class PairRecord:
    pair_id: str
    verbatim_id: str
    review_id: str
    verbatim: str
    image_path: str
    score: float = 0.0
    label: Optional[str] = None  # "positive" | "negative" after thresholding
    confidence: Optional[float] = None

    def to_json(self) -> dict:
        d = {
            "pair_id": self.pair_id,
            "verbatim_id": self.verbatim_id,
            "review_id": self.review_id,
            "verbatim": self.verbatim,
            "image_path": self.image_path,
            # scores are rounded only here, at serialization time
            "score": round(self.score, 2),
        }
        if self.label is not None:
            d["label"] = self.label
        return d


REVIEW_FIELDS = ("review_id", "text", "image_paths", "category")


def load_corpus(path: str | Path) -> list[ReviewRecord]:
    """Read reviews JSONL in file order; malformed lines raise with line numbers."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"line {lineno}: invalid JSON ({e})") from e
            for fieldname in REVIEW_FIELDS:
                if fieldname not in obj:
                    raise CorpusError(f"line {lineno}: missing field {fieldname!r}")
            records.append(
                ReviewRecord(
                    review_id=str(obj["review_id"]),
                    text=str(obj["text"]),
                    image_paths=list(obj["image_paths"]),
                    category=str(obj["category"]),
                )
            )
    return records


def save_corpus(records: Iterable[ReviewRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {
                        "review_id": r.review_id,
                        "text": r.text,
                        "image_paths": r.image_paths,
                        "category": r.category,
                    }
                )
                + "\n"
            )


def save_pairs(pairs: Iterable[PairRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps(p.to_json()) + "\n")


def load_pairs(path: str | Path) -> list[PairRecord]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.append(
                PairRecord(
                    pair_id=obj["pair_id"],
                    verbatim_id=obj["verbatim_id"],
                    review_id=obj["review_id"],
                    verbatim=obj["verbatim"],
                    image_path=obj["image_path"],
                    score=float(obj.get("score", 0.0)),
                    label=obj.get("label"),
                )
            )
    return out


_NORM_WS_RE = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    """Lowercase, collapse whitespace, strip terminal punctuation."""
    t = _NORM_WS_RE.sub(" ", text.lower()).strip()
    return t.rstrip(".!?;:,")


# ---------------------------------------------------------------------------
# tokenizer + vocabulary
# ---------------------------------------------------------------------------

PAD, UNK, CLS, ENC, DEC, SEP, EOS = range(7)
RESERVED_TOKENS = ("[PAD]", "[UNK]", "[CLS]", "[ENC]", "[DEC]", "[SEP]", "[EOS]")

# decimal numbers stay whole so confidence scores round-trip; words; then
# any single non-space symbol
_TOKEN_RE = re.compile(r"-?\d+\.\d+|\w+|[^\w\s]")
_ATTACH_PUNCT = set(".,!?;:'\"")


def tokenize_text(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def detokenize_tokens(tokens: Iterable[str]) -> str:
    out: list[str] = []
    for tok in tokens:
        if out and tok in _ATTACH_PUNCT:
            out[-1] += tok
        else:
            out.append(tok)
    return " ".join(out)


@dataclass
class Vocabulary:
    token_to_id: dict[str, int] = field(default_factory=dict)
    id_to_token: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.id_to_token:
            for tok in RESERVED_TOKENS:
                self.token_to_id[tok] = len(self.id_to_token)
                self.id_to_token.append(tok)

    def __len__(self) -> int:
        return len(self.id_to_token)

    def add(self, token: str) -> int:
        if token not in self.token_to_id:
            self.token_to_id[token] = len(self.id_to_token)
            self.id_to_token.append(token)
        return self.token_to_id[token]

    def encode(self, text: str) -> list[int]:
        return [self.token_to_id.get(t, UNK) for t in tokenize_text(text)]

    def decode(self, ids: Iterable[int]) -> str:
        toks = [self.id_to_token[i] for i in ids if i not in (PAD, CLS, ENC, DEC, SEP, EOS)]
        return detokenize_tokens(toks)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"format_version": 1, "tokens": self.id_to_token}, fh)

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        toks = obj["tokens"]
        return cls(token_to_id={t: i for i, t in enumerate(toks)}, id_to_token=list(toks))


def build_vocabulary(texts: Iterable[str]) -> Vocabulary:
    """Vocabulary over all tokens seen in `texts`, most frequent first."""
    counts: dict[str, int] = {}
    for text in texts:
        for tok in tokenize_text(text):
            counts[tok] = counts.get(tok, 0) + 1
    vocab = Vocabulary()
    for tok in sorted(counts, key=lambda t: (-counts[t], t)):
        vocab.add(tok)
    return vocab


def tokenize(text: str, vocab: Vocabulary) -> list[int]:
    """Lowercased word/punctuation token ids; unknown tokens map to [UNK]."""
    return vocab.encode(text)
