"""Robust extraction of XML-tagged contracts from untrusted model output.

These are tolerant scanners, not an XML parser: no attributes, no entities,
no nesting. Every function is pure and total — arbitrary text never raises,
except ``parse_verdict`` which raises ``MalformedVerdictError`` when the one
mandatory tag is missing.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .errors import MalformedVerdictError

_THINK_CLOSED_RE = re.compile(r"<think>.*?</think>", re.IGNORECASE | re.DOTALL)
_THINK_OPEN_RE = re.compile(r"<think>.*\Z", re.IGNORECASE | re.DOTALL)
_LIST_MARKER_RE = re.compile(r"^(?:[-*•]|\d+[.)])\s+")
_YES_NO_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)


class YesNo(Enum):
    YES = "yes"
    NO = "no"
    UNPARSEABLE = "unparseable"


@dataclass(frozen=True)
class CoverageVerdict:
    """Parsed document-review output.

    ``is_sufficient`` False with a missing ``new_query`` is a recoverable
    contract breach: the verdict is still returned and the agent substitutes
    a fallback reformulation to keep the loop live.
    """

    is_sufficient: bool
    new_query: Optional[str]
    useful_doc_local_ids: tuple[int, ...]
    summary: Optional[str]
    raw_text: str


def strip_think_blocks(text: str) -> str:
    """Remove every <think>...</think> span, including an unterminated
    trailing one (removed to end of text). Non-think content is untouched."""
    out = _THINK_CLOSED_RE.sub("", text)
    return _THINK_OPEN_RE.sub("", out)


def extract_tag_block(text: str, tag: str) -> Optional[str]:
    """Inner content of the first <tag>...</tag> pair, trimmed.

    Tag matching is case-insensitive. First match wins: models occasionally
    echo the format specification before answering, and the first complete
    pair is the reliable one. Absence is a value (None), not an error.
    """
    pattern = re.compile(
        rf"<{re.escape(tag)}>(.*?)</{re.escape(tag)}>",
        re.IGNORECASE | re.DOTALL,
    )
    match = pattern.search(text)
    if match is None:
        return None
    return match.group(1).strip()


def parse_query_list(block: str, max_n: int) -> list[str]:
    """Split a queries block into at most ``max_n`` queries.

    One query per line; leading list markers ("-", "*", "1.", "1)") are
    stripped, empties dropped, duplicates removed case-insensitively with
    first occurrence kept.
    """
    out: list[str] = []
    seen: set[str] = set()
    for raw_line in block.splitlines():
        line = _LIST_MARKER_RE.sub("", raw_line.strip()).strip()
        if not line:
            continue
        key = line.casefold()
        if key in seen:
            continue
        seen.add(key)
        out.append(line)
        if len(out) >= max_n:
            break
    return out


def parse_yes_no(text: str) -> YesNo:
    """Classify a reply as yes/no from a standalone word in its final
    non-empty line, after think blocks are stripped."""
    cleaned = strip_think_blocks(text)
    final_line = ""
    for line in cleaned.splitlines():
        if line.strip():
            final_line = line
    if not final_line and cleaned.strip():
        final_line = cleaned
    tokens = {m.group(1).lower() for m in _YES_NO_RE.finditer(final_line)}
    if tokens == {"yes"}:
        return YesNo.YES
    if tokens == {"no"}:
        return YesNo.NO
    return YesNo.UNPARSEABLE


def _parse_id_list(block: str) -> tuple[int, ...]:
    ids: list[int] = []
    seen: set[int] = set()
    for fragment in block.split(","):
        fragment = fragment.strip()
        if not re.fullmatch(r"\d+", fragment):
            continue
        value = int(fragment)
        if value <= 0 or value in seen:
            continue
        seen.add(value)
        ids.append(value)
    return tuple(ids)


def parse_verdict(text: str) -> CoverageVerdict:
    """Parse a document-review reply into a CoverageVerdict.

    Sufficiency is a prefix match ("yes." and "Yes" count): decoding
    occasionally appends punctuation even though the contract asks for bare
    yes/no. Non-numeric fragments inside <useful-docs> are discarded.

    Raises MalformedVerdictError when <is-sufficient> is absent.
    """
    cleaned = strip_think_blocks(text)
    sufficient_block = extract_tag_block(cleaned, "is-sufficient")
    if sufficient_block is None:
        raise MalformedVerdictError("missing <is-sufficient> tag", raw_text=text)
    is_sufficient = sufficient_block.lower().startswith("yes")

    new_query = extract_tag_block(cleaned, "new-query")
    if new_query is not None and not new_query:
        new_query = None

    docs_block = extract_tag_block(cleaned, "useful-docs")
    useful_ids = _parse_id_list(docs_block) if docs_block else ()

    summary = extract_tag_block(cleaned, "useful-docs-summary")
    if summary is not None and not summary:
        summary = None

    return CoverageVerdict(
        is_sufficient=is_sufficient,
        new_query=new_query,
        useful_doc_local_ids=useful_ids,
        summary=summary,
        raw_text=text,
    )
