"""Deterministic token-count proxy used for prompt-size accounting.

A token is either a maximal run of word characters (letters, digits,
underscore) or a single non-whitespace, non-word character. The count is
additive over whitespace-joined fragments, which lets prompt sections be
accounted for independently.
"""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def count_tokens(text: str) -> int:
    """Count tokens in ``text`` under the word-run/punctuation rule."""
    return len(_TOKEN_RE.findall(text))
