"""Verbatim extraction: preprocessing, segmentation, neutral-segment removal.

Segmentation is rule based (sentence terminators, semicolons and a
configurable clause-conjunction list) and sentiment comes from a lexicon
classifier by default; both sit behind small interfaces so a real segmenter
or a served sentiment model can be swapped in.
"""

from __future__ import annotations

import html
import json
import logging
import re
import unicodedata
import urllib.request
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Protocol

from .corpus import Verbatim

log = logging.getLogger(__name__)

_HTML_TAG_RE = re.compile(r"<[^>]+>")
_URL_RE = re.compile(r"(?:https?://|www\.)\S+")
_WS_RE = re.compile(r"\s+")


def preprocess_text(raw: str) -> str:
    """Strip HTML tags and URLs, fold accents to ASCII, collapse whitespace."""
    text = html.unescape(raw)
    text = _HTML_TAG_RE.sub(" ", text)
    text = _URL_RE.sub(" ", text)
    text = unicodedata.normalize("NFKD", text)
    text = text.encode("ascii", "ignore").decode("ascii")
    return _WS_RE.sub(" ", text).strip()


# ---------------------------------------------------------------------------
# segmentation
# ---------------------------------------------------------------------------


@dataclass
class ConjunctionRule:
    pattern: re.Pattern
    keep: str  # "" drops the marker from the right-hand segment


def _compile_rule(marker: str, keep: str) -> ConjunctionRule:
    words = marker.strip().split()
    body = r"\s+".join(re.escape(w) for w in words)
    prefix = r"\b" if marker[0].isalnum() else ""
    if marker.startswith(","):
        body = r",\s+" + r"\s+".join(re.escape(w) for w in marker[1:].strip().split())
        prefix = ""
    return ConjunctionRule(re.compile(prefix + body + r"\b"), keep)


def load_conjunctions(path: str | Path | None = None) -> list[ConjunctionRule]:
    """marker<TAB>keep lines; keep '-' drops the marker entirely."""
    if path is None:
        text = resources.files("insightmine.data").joinpath("conjunctions.tsv").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    rules = []
    for line in text.splitlines():
        if not line.strip():
            continue
        marker, _, keep = line.partition("\t")
        keep = keep.strip()
        rules.append(_compile_rule(marker, "" if keep == "-" else keep))
    return rules


_TERMINATOR_RE = re.compile(r"[.!?;]")
_DEFAULT_RULES: list[ConjunctionRule] | None = None


def _default_rules() -> list[ConjunctionRule]:
    global _DEFAULT_RULES
    if _DEFAULT_RULES is None:
        _DEFAULT_RULES = load_conjunctions()
    return _DEFAULT_RULES


def _trim_span(text: str, start: int, end: int) -> tuple[int, int]:
    while start < end and text[start].isspace():
        start += 1
    while end > start and text[end - 1].isspace():
        end -= 1
    return start, end


def _word_count(s: str) -> int:
    return len(s.split())


def segment(text: str, rules: list[ConjunctionRule] | None = None) -> list[Verbatim]:
    """Split preprocessed text into clause-level segments with exact char spans.

    Splits on . ! ? ; and on clause conjunctions; single-word segments merge
    into their left neighbour or are dropped when first.
    """
    if rules is None:
        rules = _default_rules()
    spans: list[tuple[int, int]] = []
    prev = 0
    for m in _TERMINATOR_RE.finditer(text):
        spans.append((prev, m.start()))
        prev = m.end()
    spans.append((prev, len(text)))

    # conjunction splits inside each chunk
    split_spans: list[tuple[int, int]] = []
    for start, end in spans:
        queue = [(start, end)]
        while queue:
            s, e = queue.pop(0)
            chunk = text[s:e]
            hit = None
            for rule in rules:
                for m in rule.pattern.finditer(chunk):
                    if m.start() > 0:  # never split off an empty left side
                        if hit is None or m.start() < hit[0].start():
                            hit = (m, rule)
                        break
            if hit is None:
                split_spans.append((s, e))
                continue
            m, rule = hit
            left = (s, s + m.start())
            right_start = s + (m.start() if rule.keep else m.end())
            if rule.keep and rule.keep != text[s + m.start() : s + m.end()].strip().split()[0]:
                # marker like "and then": keep only the trailing keep-word
                kpos = chunk.find(rule.keep, m.start(), m.end())
                right_start = s + kpos
            split_spans.append(left)
            queue.insert(0, (right_start, e))

    segments: list[tuple[int, int]] = []
    for s, e in split_spans:
        s, e = _trim_span(text, s, e)
        if s >= e:
            continue
        piece = text[s:e]
        if _word_count(piece) < 2:
            if segments:
                segments[-1] = (segments[-1][0], e)  # merge into left neighbour
            continue  # no left neighbour: dropped
        segments.append((s, e))

    return [
        Verbatim(verbatim_id=f"s{i}", review_id="", text=text[s:e], char_span=(s, e))
        for i, (s, e) in enumerate(segments)
    ]


# ---------------------------------------------------------------------------
# sentiment
# ---------------------------------------------------------------------------


@dataclass
class SentimentLabel:
    label: str  # positive | negative | neutral
    score: float  # confidence in [0, 1]


class SentimentClassifier(Protocol):
    def classify(self, text: str) -> SentimentLabel: ...


class LexiconSentimentClassifier:
    """Token-polarity lexicon vote; no hits (or a tie) means neutral."""

    def __init__(self, lexicon_path: str | Path | None = None):
        if lexicon_path is None:
            text = resources.files("insightmine.data").joinpath("lexicon.tsv").read_text("utf-8")
        else:
            text = Path(lexicon_path).read_text("utf-8")
        self.polarity: dict[str, str] = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            token, _, pol = line.partition("\t")
            self.polarity[token.strip().lower()] = pol.strip()

    def classify(self, text: str) -> SentimentLabel:
        pos = neg = 0
        for tok in re.findall(r"[a-z']+", text.lower()):
            pol = self.polarity.get(tok)
            if pol == "positive":
                pos += 1
            elif pol == "negative":
                neg += 1
        if pos == neg:
            return SentimentLabel("neutral", 1.0 if pos == 0 else 0.5)
        winner = "positive" if pos > neg else "negative"
        return SentimentLabel(winner, max(pos, neg) / (pos + neg))


class HttpSentimentClassifier:
    """Client for a served classifier: POST /classify {"text"} -> {"label","score"}."""

    def __init__(self, url: str, timeout: float = 5.0):
        self.url = url.rstrip("/") + "/classify"
        self.timeout = timeout

    def classify(self, text: str) -> SentimentLabel:
        req = urllib.request.Request(
            self.url,
            data=json.dumps({"text": text}).encode("utf-8"),
            headers={"Content-Type": "application/json"},
        )
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            obj = json.loads(resp.read().decode("utf-8"))
        return SentimentLabel(obj["label"], float(obj["score"]))


def filter_actionable(
    segments: list[Verbatim], classifier: SentimentClassifier
) -> list[Verbatim]:
    """Keep only non-neutral segments, preserving order and spans."""
    kept = []
    for seg in segments:
        try:
            result = classifier.classify(seg.text)
        except Exception as e:  # classifier failure skips the segment only
            log.warning("sentiment classifier failed on %r: %s", seg.text, e)
            continue
        if result.label != "neutral":
            kept.append(seg)
    return kept


def extract_verbatims(
    review_id: str,
    raw_text: str,
    classifier: SentimentClassifier,
    rules: list[ConjunctionRule] | None = None,
) -> tuple[str, list[Verbatim]]:
    """Full pipeline for one review: preprocess, segment, drop neutral."""
    text = preprocess_text(raw_text)
    segs = filter_actionable(segment(text, rules), classifier)
    out = []
    for i, seg in enumerate(segs):
        out.append(
            Verbatim(
                verbatim_id=f"{review_id}:v{i}",
                review_id=review_id,
                text=seg.text,
                char_span=seg.char_span,
            )
        )
    return text, out
