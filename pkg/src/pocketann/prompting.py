"""Prompt assembly for retrieval-augmented generation."""

from __future__ import annotations

import re
from typing import Sequence

__all__ = ["USER_PLACEHOLDER", "CONTEXT_PLACEHOLDER", "CONTEXT_JOINER", "assemble_prompt"]

USER_PLACEHOLDER = "{{user}}"
CONTEXT_PLACEHOLDER = "{{context}}"
CONTEXT_JOINER = "\n\n---\n\n"

_PLACEHOLDER_RE = re.compile(r"\{\{user\}\}|\{\{context\}\}")


def assemble_prompt(template: str, user_query: str, context_texts: Sequence[str]) -> str:
    """Substitute ``{{user}}`` and ``{{context}}`` placeholders in ``template``.

    Every ``{{user}}`` becomes ``user_query``; every ``{{context}}`` becomes
    the context texts joined by the documented separator. Substitution is a
    single pass over the template only — placeholder-like text inside the
    query or the documents is never re-expanded.
    """
    joined = CONTEXT_JOINER.join(context_texts)

    def replace(match: re.Match) -> str:
        return user_query if match.group(0) == USER_PLACEHOLDER else joined

    return _PLACEHOLDER_RE.sub(replace, template)
