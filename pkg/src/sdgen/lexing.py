"""Longest-match tokenization over a grammar's terminal vocabulary."""

from __future__ import annotations

from dataclasses import dataclass


class LexicalError(ValueError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} at position {pos}")
        self.pos = pos


@dataclass(frozen=True, slots=True)
class Token:
    text: str
    pos: int


def tokenize(text: str, vocabulary: frozenset[str], skip_whitespace: bool = True) -> list[Token]:
    """Greedy longest-match scan of `text` into vocabulary tokens."""
    by_length = sorted(vocabulary, key=len, reverse=True)
    tokens: list[Token] = []
    i = 0
    n = len(text)
    while i < n:
        if skip_whitespace and text[i].isspace():
            i += 1
            continue
        for term in by_length:
            if text.startswith(term, i):
                tokens.append(Token(term, i))
                i += len(term)
                break
        else:
            raise LexicalError(f"unexpected character {text[i]!r}", i)
    return tokens
