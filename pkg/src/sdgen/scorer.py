"""Pluggable conditional distributions over productions and lazy bits.

A scorer answers two questions during generation: how to weight the
alternatives of the nonterminal being expanded, and with what probability
a stochastic lazy bit comes up 1.  The interface is the seam where a
learned sequence model could plug in; this module ships a uniform scorer
and a count-based model with additive smoothing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable

from .attributes import AttributeDecl
from .grammar import Grammar

DEPTH_BUCKETS = 8  # depths clip to {0..7, 8+}
DEFAULT_ALPHA = 0.1


def depth_bucket(depth: int) -> int:
    return min(depth, DEPTH_BUCKETS)


@dataclass(frozen=True, slots=True)
class ScorerQuery:
    """Conditioning information for one expansion decision."""

    nonterminal: str
    context: Any
    depth: int
    parent_production: int | None

    def __post_init__(self) -> None:
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        if self.depth > 0 and self.parent_production is None:
            raise ValueError("parent production may be absent only at the root")


class UniformScorer:
    """All alternatives equally weighted; lazy bits are fair coins."""

    name = "uniform"

    def __init__(self, grammar: Grammar):
        self.grammar = grammar

    def init_context(self, context_seed: int = 0) -> Any:
        return None

    def transition(self, context: Any, event: tuple[str, Any]) -> Any:
        return None

    def rule_weights(self, query: ScorerQuery) -> list[float]:
        return [1.0] * len(self.grammar.alternatives(query.nonterminal))

    def lazy_bit_p(self, decl: AttributeDecl, query: ScorerQuery, bit: int) -> float:
        return 0.5


class CountScorer:
    """Additively smoothed count tables keyed on local tree context.

    The conditioning key is (nonterminal, parent production, depth bucket);
    smoothing keeps every weight strictly positive so masked
    renormalization never divides by zero.
    """

    name = "counts"
    FORMAT = "sdgen-count-scorer"
    VERSION = 1

    def __init__(self, grammar: Grammar, grammar_id: str, alpha: float = DEFAULT_ALPHA):
        if alpha <= 0:
            raise ValueError("smoothing constant must be positive")
        self.grammar = grammar
        self.grammar_id = grammar_id
        self.alpha = alpha
        # (nt, parent_prod, bucket) -> per-alternative counts
        self.rule_counts: dict[tuple[str, int, int], list[float]] = {}
        # (owner, attr, bit, parent_prod, bucket) -> [ones, zeros]
        self.lazy_counts: dict[tuple[str, str, int, int, int], list[float]] = {}

    @staticmethod
    def _key(query: ScorerQuery) -> tuple[str, int, int]:
        parent = -1 if query.parent_production is None else query.parent_production
        return (query.nonterminal, parent, depth_bucket(query.depth))

    def init_context(self, context_seed: int = 0) -> Any:
        return None

    def transition(self, context: Any, event: tuple[str, Any]) -> Any:
        return None

    def rule_weights(self, query: ScorerQuery) -> list[float]:
        n = len(self.grammar.alternatives(query.nonterminal))
        counts = self.rule_counts.get(self._key(query))
        if counts is None:
            return [self.alpha] * n
        return [c + self.alpha for c in counts]

    def lazy_bit_p(self, decl: AttributeDecl, query: ScorerQuery, bit: int) -> float:
        parent = -1 if query.parent_production is None else query.parent_production
        key = (decl.owner, decl.name, bit, parent, depth_bucket(query.depth))
        ones, zeros = self.lazy_counts.get(key, (0.0, 0.0))
        return (ones + self.alpha) / (ones + zeros + 2.0 * self.alpha)

    # -- training ----------------------------------------------------------

    def observe_rule(self, query: ScorerQuery, alt_pos: int) -> None:
        key = self._key(query)
        counts = self.rule_counts.get(key)
        if counts is None:
            n = len(self.grammar.alternatives(query.nonterminal))
            counts = self.rule_counts[key] = [0.0] * n
        counts[alt_pos] += 1.0

    def observe_lazy(self, decl: AttributeDecl, query: ScorerQuery, bits: tuple[int, ...]) -> None:
        parent = -1 if query.parent_production is None else query.parent_production
        for i, bit in enumerate(bits):
            key = (decl.owner, decl.name, i, parent, depth_bucket(query.depth))
            pair = self.lazy_counts.setdefault(key, [0.0, 0.0])
            pair[0 if bit else 1] += 1.0

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": self.FORMAT,
            "version": self.VERSION,
            "grammar_id": self.grammar_id,
            "grammar_hash": self.grammar.source_hash,
            "alpha": self.alpha,
            "rule_counts": [
                {"nt": nt, "parent": parent, "bucket": bucket, "counts": counts}
                for (nt, parent, bucket), counts in sorted(self.rule_counts.items())
            ],
            "lazy_counts": [
                {
                    "owner": owner,
                    "attr": attr,
                    "bit": bit,
                    "parent": parent,
                    "bucket": bucket,
                    "ones": pair[0],
                    "zeros": pair[1],
                }
                for (owner, attr, bit, parent, bucket), pair in sorted(self.lazy_counts.items())
            ],
        }

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path: str, grammar: Grammar, grammar_id: str) -> "CountScorer":
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("format") != cls.FORMAT:
            raise ValueError(f"{path}: not a {cls.FORMAT} file")
        if payload.get("grammar_hash") != grammar.source_hash:
            raise ValueError(
                f"{path}: model was trained against a different grammar "
                f"(hash {payload.get('grammar_hash', '?')[:12]}..., "
                f"expected {grammar.source_hash[:12]}...)"
            )
        model = cls(grammar, grammar_id, alpha=float(payload["alpha"]))
        for entry in payload["rule_counts"]:
            key = (entry["nt"], int(entry["parent"]), int(entry["bucket"]))
            model.rule_counts[key] = [float(c) for c in entry["counts"]]
        for entry in payload["lazy_counts"]:
            key = (
                entry["owner"],
                entry["attr"],
                int(entry["bit"]),
                int(entry["parent"]),
                int(entry["bucket"]),
            )
            model.lazy_counts[key] = [float(entry["ones"]), float(entry["zeros"])]
        return model


def train_counts(model: CountScorer, semantics_factory: Any, trees: Iterable[Any]) -> CountScorer:
    """Accumulate rule and lazy-bit counts over teacher-forced corpus paths.

    Counting commutes, so the result is independent of corpus order.
    """
    from .decoder import iter_decisions

    for tree in trees:
        for decision in iter_decisions(model.grammar, semantics_factory, tree):
            if decision.kind == "rule":
                model.observe_rule(decision.query, decision.alt_pos)
            else:
                model.observe_lazy(decision.decl, decision.query, decision.bits)
    return model


def make_scorer(spec: str, grammar: Grammar, grammar_id: str) -> Any:
    """Build a scorer from a CLI-style spec: 'uniform' or a model path."""
    if spec == "uniform":
        return UniformScorer(grammar)
    return CountScorer.load(spec, grammar, grammar_id)
