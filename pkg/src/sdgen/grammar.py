"""Context-free grammars loaded from the `.grm` file format.

A grammar file is UTF-8 text with one block per nonterminal::

    # comment
    <nonterminal> -> alt1 | alt2 | ...

Each alternative is a whitespace-separated mix of `<nt>` references and
`'terminal'` literals.  The first block's left-hand side is the start
symbol.  Production indices are assigned top to bottom, left to right
across alternatives, so they are a pure function of the file bytes.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field


class GrammarError(ValueError):
    """Raised for malformed grammar files or inconsistent rule sets."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + loc)
        self.line = line
        self.column = column


class SymbolKind(enum.Enum):
    NONTERMINAL = "nonterminal"
    TERMINAL = "terminal"


@dataclass(frozen=True, slots=True)
class Symbol:
    """A grammar symbol; terminal symbols carry their literal text as name."""

    name: str
    kind: SymbolKind

    @property
    def is_terminal(self) -> bool:
        return self.kind is SymbolKind.TERMINAL

    def __repr__(self) -> str:
        if self.is_terminal:
            return f"'{self.name}'"
        return f"<{self.name}>"


def nonterminal(name: str) -> Symbol:
    return Symbol(name, SymbolKind.NONTERMINAL)


def terminal(text: str) -> Symbol:
    return Symbol(text, SymbolKind.TERMINAL)


@dataclass(frozen=True, slots=True)
class Production:
    """One rule `lhs -> rhs`, with its stable 0-based index."""

    index: int
    lhs: Symbol
    rhs: tuple[Symbol, ...]

    def __post_init__(self) -> None:
        if self.lhs.is_terminal:
            raise GrammarError(f"production {self.index}: lhs {self.lhs!r} is a terminal")
        if not self.rhs:
            raise GrammarError(f"production {self.index}: empty right-hand side")

    def __repr__(self) -> str:
        rhs = " ".join(repr(s) for s in self.rhs)
        return f"[{self.index}] {self.lhs!r} -> {rhs}"


@dataclass(frozen=True)
class Grammar:
    """An immutable CFG with indexed productions.

    Safe to share across threads/processes; all lookups are precomputed.
    """

    productions: tuple[Production, ...]
    start: Symbol
    source_text: str = ""
    productions_by_lhs: dict[str, tuple[int, ...]] = field(init=False)
    nonterminals: frozenset[str] = field(init=False)
    terminals: frozenset[str] = field(init=False)

    def __post_init__(self) -> None:
        by_lhs: dict[str, list[int]] = {}
        terms: set[str] = set()
        for prod in self.productions:
            by_lhs.setdefault(prod.lhs.name, []).append(prod.index)
            for sym in prod.rhs:
                if sym.is_terminal:
                    terms.add(sym.name)
        object.__setattr__(
            self, "productions_by_lhs", {k: tuple(v) for k, v in by_lhs.items()}
        )
        object.__setattr__(self, "nonterminals", frozenset(by_lhs))
        object.__setattr__(self, "terminals", frozenset(terms))
        self._validate()

    def _validate(self) -> None:
        if self.start.is_terminal or self.start.name not in self.nonterminals:
            raise GrammarError(f"start symbol {self.start!r} has no productions")
        for i, prod in enumerate(self.productions):
            if prod.index != i:
                raise GrammarError(f"production {prod!r} has inconsistent index")
            for sym in prod.rhs:
                if not sym.is_terminal and sym.name not in self.nonterminals:
                    raise GrammarError(
                        f"production {prod.index}: undefined nonterminal {sym!r}"
                    )

    @property
    def symbols(self) -> frozenset[Symbol]:
        syms: set[Symbol] = {self.start}
        for prod in self.productions:
            syms.add(prod.lhs)
            syms.update(prod.rhs)
        return frozenset(syms)

    @property
    def source_hash(self) -> str:
        return hashlib.sha256(self.source_text.encode("utf-8")).hexdigest()

    def alternatives(self, nt: str) -> tuple[int, ...]:
        """Production indices for a nonterminal, in file order."""
        try:
            return self.productions_by_lhs[nt]
        except KeyError:
            raise GrammarError(f"unknown nonterminal <{nt}>") from None

    def production(self, index: int) -> Production:
        return self.productions[index]

    def __len__(self) -> int:
        return len(self.productions)


def _tokenize_rhs(text: str, line_no: int) -> list[tuple[str, str, int]]:
    """Split an rhs string into (kind, payload, column) tokens.

    Kinds: 'nt', 'term', 'pipe'.
    """
    tokens: list[tuple[str, str, int]] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        col = i + 1
        if ch == "|":
            tokens.append(("pipe", "|", col))
            i += 1
        elif ch == "<":
            end = text.find(">", i + 1)
            if end < 0:
                raise GrammarError("unterminated nonterminal reference", line_no, col)
            name = text[i + 1 : end].strip()
            if not name:
                raise GrammarError("empty nonterminal name", line_no, col)
            tokens.append(("nt", name, col))
            i = end + 1
        elif ch == "'":
            end = text.find("'", i + 1)
            if end < 0:
                raise GrammarError("unterminated terminal literal", line_no, col)
            lit = text[i + 1 : end]
            if not lit:
                raise GrammarError("empty terminal literal", line_no, col)
            tokens.append(("term", lit, col))
            i = end + 1
        else:
            raise GrammarError(f"unexpected character {ch!r}", line_no, col)
    return tokens


def load_grammar(text: str) -> Grammar:
    """Parse grammar-file text into a Grammar with deterministic indexing."""
    # Gather (lhs, rhs-token-list, line) blocks; continuation lines extend
    # the previous block's rhs.
    blocks: list[tuple[str, list[tuple[str, str, int]], int]] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "->" in line:
            lhs_text, rhs_text = line.split("->", 1)
            lhs_text = lhs_text.strip()
            if not (lhs_text.startswith("<") and lhs_text.endswith(">")):
                raise GrammarError(
                    f"left-hand side must be <nonterminal>, got {lhs_text!r}", line_no, 1
                )
            lhs_name = lhs_text[1:-1].strip()
            if not lhs_name:
                raise GrammarError("empty nonterminal name", line_no, 1)
            blocks.append((lhs_name, _tokenize_rhs(rhs_text, line_no), line_no))
        else:
            if not blocks:
                raise GrammarError("rule continuation before any rule", line_no, 1)
            blocks[-1][1].extend(_tokenize_rhs(line, line_no))

    if not blocks:
        raise GrammarError("grammar file defines no rules")

    seen_lhs: set[str] = set()
    productions: list[Production] = []
    start = nonterminal(blocks[0][0])
    for lhs_name, tokens, line_no in blocks:
        if lhs_name in seen_lhs:
            raise GrammarError(f"duplicate definition of <{lhs_name}>", line_no)
        seen_lhs.add(lhs_name)
        lhs = nonterminal(lhs_name)
        alt: list[Symbol] = []
        alts: list[list[Symbol]] = []
        for kind, payload, col in tokens + [("pipe", "|", -1)]:
            if kind == "pipe":
                if not alt:
                    raise GrammarError(
                        f"empty alternative in <{lhs_name}>", line_no, None if col < 0 else col
                    )
                alts.append(alt)
                alt = []
            elif kind == "nt":
                alt.append(nonterminal(payload))
            else:
                alt.append(terminal(payload))
        for rhs in alts:
            productions.append(Production(len(productions), lhs, tuple(rhs)))

    for prod in productions:
        for sym in prod.rhs:
            if not sym.is_terminal and sym.name not in seen_lhs:
                raise GrammarError(
                    f"production {prod.index}: <{sym.name}> is referenced but never defined"
                )

    return Grammar(productions=tuple(productions), start=start, source_text=text)


def min_completion_steps(grammar: Grammar) -> dict[str, int]:
    """Minimal number of rule applications to finish each nonterminal.

    Used for budget-aware masking: expanding a node consumes one step, so
    min_steps(nt) = min over alternatives of 1 + sum of child minima.
    """
    INF = float("inf")
    mins: dict[str, float] = {nt: INF for nt in grammar.nonterminals}
    changed = True
    while changed:
        changed = False
        for prod in grammar.productions:
            total = 1.0
            for sym in prod.rhs:
                if not sym.is_terminal:
                    total += mins[sym.name]
            if total < mins[prod.lhs.name]:
                mins[prod.lhs.name] = total
                changed = True
    unreachable = [nt for nt, v in mins.items() if v == INF]
    if unreachable:
        raise GrammarError(f"nonterminals cannot derive terminal strings: {unreachable}")
    return {nt: int(v) for nt, v in mins.items()}
