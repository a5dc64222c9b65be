"""Text normalization rule chain, disabled by default.

Rules run in a fixed order: emoji strip, URL, date/hour, ordinal, number,
jargon, shouty-lowercase. All recognizers are case-insensitive and none of
the replacement tokens re-match any rule, which makes the chain idempotent.
When the shouty rule lowercases the text, the jargon pass is re-applied so
cased corrections survive; this keeps normalize(normalize(t)) == normalize(t)
as long as jargon replacements are fixed points of the dictionary and are
not majority-uppercase (the shipped dictionary satisfies both).
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import DataError

# Codepoint ranges treated as emoji. Covers the pictograph blocks, regional
# indicators, variation selector 16 and the zero-width joiner.
_EMOJI_RANGES = [
    (0x1F1E6, 0x1F1FF),
    (0x1F300, 0x1F5FF),
    (0x1F600, 0x1F64F),
    (0x1F680, 0x1F6FF),
    (0x1F700, 0x1F77F),
    (0x1F900, 0x1F9FF),
    (0x1FA00, 0x1FAFF),
    (0x2600, 0x26FF),
    (0x2700, 0x27BF),
    (0xFE0F, 0xFE0F),
    (0x200D, 0x200D),
]

_EMOJI_CLASS = "[" + "".join(f"{chr(lo)}-{chr(hi)}" for lo, hi in _EMOJI_RANGES) + "]"
_EMOJI_RUN = re.compile(rf"\s*{_EMOJI_CLASS}+\s*")

_URL = re.compile(r"(https?://\S+|www\.\S+)", re.IGNORECASE)
_DATE = re.compile(r"\b\d{1,4}([/-])\d{1,2}\1\d{1,4}\b")
_HOUR = re.compile(r"\b\d{1,2}:\d{2}(:\d{2})?\s*(am|pm)?\b", re.IGNORECASE)
_ORDINAL = re.compile(r"\b\d+(st|nd|rd|th)\b", re.IGNORECASE)
_NUMBER = re.compile(r"\b\d+(\.\d+)?\b")


@dataclass
class RuleConfig:
    """Which rules run. Everything defaults off; empty jargon_dict means the
    jargon rule is disabled."""

    strip_emoji: bool = False
    replace_urls: bool = False
    replace_datetimes: bool = False
    replace_ordinals: bool = False
    replace_numbers: bool = False
    lowercase_if_shouty: bool = False
    jargon_dict: dict[str, str] = field(default_factory=dict)


def load_jargon(path: str | Path) -> dict[str, str]:
    """Read a jargon file: one key<TAB>replacement per line, # comments."""
    table: dict[str, str] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            if "\t" not in line:
                raise DataError(f"{path}:{lineno}: expected key<TAB>replacement")
            key, repl = line.split("\t", 1)
            if not key:
                raise DataError(f"{path}:{lineno}: empty jargon key")
            table[key] = repl
    return table


def default_jargon() -> dict[str, str]:
    """The dictionary shipped with the package."""
    ref = resources.files("qcat").joinpath("data/jargon_default.tsv")
    with resources.as_file(ref) as path:
        return load_jargon(path)


def is_shouty(text: str) -> bool:
    """True iff uppercase letters strictly outnumber lowercase ones."""
    upper = sum(1 for c in text if c.isalpha() and c.isupper())
    lower = sum(1 for c in text if c.isalpha() and c.islower())
    return upper > lower


def _strip_emoji(text: str) -> str:
    def repl(m: re.Match) -> str:
        if m.start() == 0 or m.end() == len(text):
            return ""
        return " " if any(c.isspace() for c in m.group()) else ""

    return _EMOJI_RUN.sub(repl, text)


def _apply_jargon(text: str, table: dict[str, str]) -> str:
    # Entries are applied in dictionary order, each as a whole-token,
    # case-insensitive replacement.
    for key, repl in table.items():
        pattern = re.compile(rf"\b{re.escape(key)}\b", re.IGNORECASE)
        text = pattern.sub(lambda _m: repl, text)
    return text


def normalize(text: str, cfg: RuleConfig) -> str:
    """Run the enabled rules in the fixed chain order."""
    if cfg.strip_emoji:
        text = _strip_emoji(text)
    if cfg.replace_urls:
        text = _URL.sub("url link", text)
    if cfg.replace_datetimes:
        text = _DATE.sub("date", text)
        text = _HOUR.sub("hour", text)
    if cfg.replace_ordinals:
        text = _ORDINAL.sub("nth", text)
    if cfg.replace_numbers:
        text = _NUMBER.sub("num", text)
    if cfg.jargon_dict:
        text = _apply_jargon(text, cfg.jargon_dict)
    if cfg.lowercase_if_shouty and is_shouty(text):
        text = text.lower()
        if cfg.jargon_dict:
            text = _apply_jargon(text, cfg.jargon_dict)
    return text
