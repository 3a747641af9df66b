"""Prompt building and target serialization for the three extraction regimes.

CSECS targets carry every verbatim with its confidence, MSECS only the
image-matching verbatims with confidences, MSE only the matching verbatims
without scores. Targets join entries with " | "; scored entries render as
"<verbatim>; <confidence>" with the confidence printed to exactly two
decimals. Parsing is total: any decoder output yields entries plus warnings.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

log = logging.getLogger(__name__)

CSECS = "csecs"
MSECS = "msecs"
MSE = "mse"
PROMPT_KINDS = (CSECS, MSECS, MSE)

_SCORED = {CSECS, MSECS}

MSE_TEMPLATE = "What is the verbatim matching with the image? Feedback: "
SCORED_TEMPLATE = "Extract all the verbatim and confidence score of each matching with image? Feedback: "


@dataclass
class TargetSequence:
    entries: list[tuple[str, Optional[float]]]
    serialized: str = ""
    warnings: list[str] = field(default_factory=list)


def build_prompt(kind: str, feedback_text: str) -> str:
    """Byte-exact input templates; CSECS and MSECS share the same prompt."""
    _check_kind(kind)
    if not feedback_text:
        log.warning("building a prompt over empty feedback text")
    template = MSE_TEMPLATE if kind == MSE else SCORED_TEMPLATE
    return template + feedback_text


def sanitize_verbatim(text: str) -> str:
    """Replace the codec's delimiters inside a verbatim so parsing stays unambiguous."""
    return text.replace("|", "/").replace(";", "/").strip()


def serialize_target(
    kind: str,
    entries: Sequence[tuple[str, Optional[float]]],
    keep_order: bool = False,
) -> str:
    """Join entries with " | "; scored kinds order by descending confidence.

    MSE drops any confidences it is handed. Confidences render with exactly
    two decimals.
    """
    _check_kind(kind)
    items = [(sanitize_verbatim(t), c) for t, c in entries]
    items = [(t, c) for t, c in items if t]
    if kind in _SCORED and not keep_order:
        items.sort(key=lambda e: -(e[1] if e[1] is not None else float("-inf")))
    chunks = []
    for text, conf in items:
        if kind in _SCORED and conf is not None:
            chunks.append(f"{text}; {conf:.2f}")
        else:
            chunks.append(text)
    return " | ".join(chunks)


def parse_output(kind: str, decoded: str) -> TargetSequence:
    """Total inverse of serialize_target; malformed chunks become warnings."""
    _check_kind(kind)
    out = TargetSequence(entries=[], serialized=decoded)
    if not decoded.strip():
        return out
    for chunk in decoded.split(" | "):
        chunk = chunk.strip()
        if not chunk:
            out.warnings.append("empty entry")
            continue
        if kind in _SCORED:
            text, sep, conf_str = chunk.rpartition("; ")
            if sep:
                try:
                    out.entries.append((text.strip(), float(conf_str)))
                    continue
                except ValueError:
                    out.warnings.append(f"unparsable confidence in {chunk!r}")
                    out.entries.append((chunk, None))
                    continue
            out.warnings.append(f"missing confidence in {chunk!r}")
            out.entries.append((chunk, None))
        else:
            out.entries.append((chunk, None))
    return out


def _check_kind(kind: str) -> None:
    if kind not in PROMPT_KINDS:
        raise ValueError(f"unknown prompt kind {kind!r}; expected one of {PROMPT_KINDS}")
