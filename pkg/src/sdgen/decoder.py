"""Top-down constrained generation and teacher-forced likelihood.

Generation expands the leftmost frontier nonterminal at every step (the
same pre-order the rule-sequence encoder walks), draws any stochastic lazy
attributes introduced on the node, masks the nonterminal's alternatives
with the grammar's semantic constraints, renormalizes the scorer's weights
over the surviving alternatives, and samples.  Likelihood computation
replays a fixed tree through the identical machinery, so a sampled trace's
summed log-probabilities and the teacher-forced score agree exactly.

Two budget modes are provided: `strict-budget` folds the remaining step
budget into the mask (generation always completes within the step limit),
while `paper-truncate` cuts generation off at the limit and reports the
partial result as incomplete.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator

from .attributes import (
    AttributeDecl,
    AttributeSchema,
    force_lazy,
    sample_lazy,
)
from .grammar import Grammar, min_completion_steps
from .scorer import ScorerQuery
from .tree import DerivationTree, TreeNode, rule_sequence_to_tree, tree_to_rule_sequence


class DecodeError(RuntimeError):
    """Scorer returned a non-finite/non-positive distribution, or a mask
    zeroed out every alternative.  Distinct from running out of steps."""


class BudgetMode(enum.Enum):
    STRICT = "strict-budget"
    TRUNCATE = "paper-truncate"


@dataclass(slots=True)
class RuleMask:
    nonterminal: str
    allowed: list[bool]

    @property
    def allowed_positions(self) -> list[int]:
        return [i for i, ok in enumerate(self.allowed) if ok]


@dataclass(slots=True)
class TraceStep:
    kind: str  # "rule" or "lazy"
    node_id: int
    symbol: str
    logp: float
    prod_index: int | None = None
    alt_pos: int | None = None
    allowed: tuple[int, ...] = ()
    attr: str | None = None
    bits: tuple[int, ...] = ()

    def to_json(self) -> str:
        record: dict[str, Any] = {
            "kind": self.kind,
            "node": self.node_id,
            "symbol": self.symbol,
            "logp": self.logp,
        }
        if self.kind == "rule":
            record["rule"] = self.prod_index
            record["allowed"] = list(self.allowed)
        else:
            record["attr"] = self.attr
            record["bits"] = list(self.bits)
        return json.dumps(record)


@dataclass
class DecodeTrace:
    steps: list[TraceStep] = field(default_factory=list)
    total_logp: float = 0.0
    violation_step: int | None = None

    def append(self, step: TraceStep) -> None:
        self.steps.append(step)
        self.total_logp += step.logp

    def to_jsonl(self) -> str:
        return "\n".join(step.to_json() for step in self.steps)


@dataclass
class DecodeResult:
    tree: DerivationTree
    trace: DecodeTrace
    complete: bool
    rule_steps: int

    @property
    def logp(self) -> float:
        return self.trace.total_logp


@dataclass
class ValidityReport:
    n_total: int
    n_complete: int
    n_valid: int
    mean_steps: float

    @property
    def validity(self) -> float:
        return self.n_valid / self.n_total if self.n_total else 0.0

    @property
    def completion_rate(self) -> float:
        return self.n_complete / self.n_total if self.n_total else 0.0


# ---------------------------------------------------------------------------
# Decode-time semantics interface


class DecodeRun:
    """Per-generation mutable state for one grammar's semantics.

    The decoder calls `prepare` when a frontier node is about to be
    expanded (all yield-earlier subtrees are complete by then), `mask` for
    the allowed alternatives, `observe_expand` after a rule is applied,
    and `observe_complete` when a node's subtree finishes.
    """

    def __init__(self, semantics: "DecodeSemantics", tree: DerivationTree):
        self.semantics = semantics
        self.grammar = semantics.grammar
        self.tree = tree

    def prepare(self, node_id: int) -> None:
        pass

    def mask(self, node_id: int) -> list[bool]:
        node = self.tree.node(node_id)
        return [True] * len(self.grammar.alternatives(node.symbol.name))

    def observe_expand(self, node_id: int, prod_index: int) -> None:
        pass

    def observe_complete(self, node_id: int) -> None:
        pass

    def lazy_decls(self, node_id: int) -> list[AttributeDecl]:
        return []

    def forced_lazy_bits(self, node_id: int, decl: AttributeDecl) -> tuple[int, ...]:
        raise NotImplementedError

    def observe_lazy(self, node_id: int, decl: AttributeDecl, bits: tuple[int, ...]) -> None:
        pass

    # Budget hooks: minimal completion cost (in rule steps) of a frontier
    # node, of the children a rule would create, and the state surcharge
    # (e.g. pending ring-closure obligations) after applying a rule.

    def node_min(self, node_id: int) -> int:
        return self.semantics.min_table[self.tree.node(node_id).symbol.name]

    def rule_min(self, node_id: int, prod_index: int) -> int:
        table = self.semantics.min_table
        return sum(
            table[sym.name]
            for sym in self.grammar.production(prod_index).rhs
            if not sym.is_terminal
        )

    def extra_min(self) -> int:
        return 0

    def rule_extra_min(self, node_id: int, prod_index: int) -> int:
        return self.extra_min()


class DecodeSemantics:
    """Factory for DecodeRun instances, bound to one grammar and schema."""

    run_class = DecodeRun

    def __init__(self, grammar: Grammar, schema: AttributeSchema | None = None):
        self.grammar = grammar
        self.schema = schema
        self.min_table = min_completion_steps(grammar)

    def begin(self, tree: DerivationTree, replay: bool = False) -> DecodeRun:
        run = self.run_class(self, tree)
        run.replay = replay
        return run


class _LazyHead:
    """Adapter giving sample_lazy the scorer's Bernoulli head for one query."""

    def __init__(self, scorer: Any, query: ScorerQuery):
        self.scorer = scorer
        self.query = query

    def lazy_bit_p(self, decl: AttributeDecl, node: TreeNode, bit: int) -> float:
        return self.scorer.lazy_bit_p(decl, self.query, bit)


# ---------------------------------------------------------------------------
# The shared drive


@dataclass(slots=True)
class Decision:
    kind: str
    node_id: int
    query: ScorerQuery
    alt_pos: int = -1
    prod_index: int = -1
    decl: AttributeDecl | None = None
    bits: tuple[int, ...] = ()


class _Frame:
    __slots__ = ("node_id", "depth", "parent_prod", "min_cost")

    def __init__(self, node_id: int, depth: int, parent_prod: int | None, min_cost: int):
        self.node_id = node_id
        self.depth = depth
        self.parent_prod = parent_prod
        self.min_cost = min_cost


def _combined_mask(
    run: DecodeRun,
    node_id: int,
    alts: tuple[int, ...],
    budget_mode: BudgetMode,
    remaining: int,
    stack_min_rest: int,
) -> RuleMask:
    node = run.tree.node(node_id)
    allowed = run.mask(node_id)
    if len(allowed) != len(alts):
        raise DecodeError(
            f"semantic mask for <{node.symbol.name}> has wrong arity: "
            f"{len(allowed)} != {len(alts)}"
        )
    if budget_mode is BudgetMode.STRICT:
        for pos, prod_index in enumerate(alts):
            if not allowed[pos]:
                continue
            need = (
                1
                + stack_min_rest
                + run.rule_min(node_id, prod_index)
                + run.rule_extra_min(node_id, prod_index)
            )
            if need > remaining:
                allowed[pos] = False
    return RuleMask(node.symbol.name, allowed)


def _drive(
    grammar: Grammar,
    semantics: DecodeSemantics,
    tree: DerivationTree,
    max_steps: int,
    budget_mode: BudgetMode,
    choose_rule: Callable[[int, ScorerQuery, RuleMask], tuple[int, float]],
    choose_lazy: Callable[[int, AttributeDecl, ScorerQuery], tuple[tuple[int, ...], float]],
    replay: bool,
    trace: DecodeTrace,
) -> DecodeResult:
    """Run generation or replay with a common stack discipline.

    `choose_rule` returns (alt position, logp) and may signal a masked-out
    replay rule by raising _MaskViolation.  In replay mode the tree is
    already complete and `tree.apply` is skipped.
    """
    run = semantics.begin(tree, replay=replay)
    root = tree.root
    stack: list[_Frame] = [_Frame(root, 0, None, run.node_min(root))]
    stack_min = stack[0].min_cost
    pending_nt_children: dict[int, int] = {}
    used = 0

    while stack:
        if used >= max_steps:
            return DecodeResult(tree, trace, complete=False, rule_steps=used)
        frame = stack.pop()
        stack_min -= frame.min_cost
        node_id = frame.node_id
        node = tree.node(node_id)
        run.prepare(node_id)
        query = ScorerQuery(node.symbol.name, None, frame.depth, frame.parent_prod)

        for decl in run.lazy_decls(node_id):
            bits, logp = choose_lazy(node_id, decl, query)
            run.observe_lazy(node_id, decl, bits)
            trace.append(
                TraceStep(
                    kind="lazy",
                    node_id=node_id,
                    symbol=node.symbol.name,
                    logp=logp,
                    attr=decl.name,
                    bits=bits,
                )
            )

        alts = grammar.alternatives(node.symbol.name)
        mask = _combined_mask(
            run, node_id, alts, budget_mode, max_steps - used, stack_min
        )
        try:
            alt_pos, logp = choose_rule(node_id, query, mask)
        except _MaskViolation:
            trace.violation_step = len(trace.steps)
            trace.total_logp = float("-inf")
            return DecodeResult(tree, trace, complete=False, rule_steps=used)
        prod_index = alts[alt_pos]
        trace.append(
            TraceStep(
                kind="rule",
                node_id=node_id,
                symbol=node.symbol.name,
                logp=logp,
                prod_index=prod_index,
                alt_pos=alt_pos,
                allowed=tuple(mask.allowed_positions),
            )
        )
        if replay:
            children = node.children
        else:
            children = tree.apply(node_id, prod_index)
        used += 1
        run.observe_expand(node_id, prod_index)

        nt_children = [cid for cid in children if not tree.node(cid).is_terminal]
        if nt_children:
            pending_nt_children[node_id] = len(nt_children)
            for cid in reversed(nt_children):
                cost = run.node_min(cid)
                stack.append(_Frame(cid, frame.depth + 1, prod_index, cost))
                stack_min += cost
        else:
            _bubble_completion(run, tree, node_id, pending_nt_children)

    return DecodeResult(tree, trace, complete=True, rule_steps=used)


def _bubble_completion(
    run: DecodeRun,
    tree: DerivationTree,
    node_id: int,
    pending: dict[int, int],
) -> None:
    current: int | None = node_id
    while current is not None:
        run.observe_complete(current)
        parent = tree.node(current).parent
        if parent is None:
            return
        pending[parent] -= 1
        if pending[parent] > 0:
            return
        del pending[parent]
        current = parent


class _MaskViolation(Exception):
    pass


# ---------------------------------------------------------------------------
# Public operations


def _sample_choosers(scorer: Any, rng: Any, tree: DerivationTree):
    def choose_rule(node_id: int, query: ScorerQuery, mask: RuleMask) -> tuple[int, float]:
        weights = scorer.rule_weights(query)
        if len(weights) != len(mask.allowed):
            raise DecodeError(
                f"scorer returned {len(weights)} weights for <{query.nonterminal}>, "
                f"expected {len(mask.allowed)}"
            )
        positions = mask.allowed_positions
        if not positions:
            raise DecodeError(
                f"all alternatives of <{query.nonterminal}> are masked out"
            )
        kept = [weights[i] for i in positions]
        if any(not math.isfinite(w) or w <= 0.0 for w in kept):
            raise DecodeError(
                f"scorer produced non-finite or non-positive weights for "
                f"<{query.nonterminal}>: {kept}"
            )
        total = sum(kept)
        target = rng.random() * total
        acc = 0.0
        pick = len(kept) - 1
        for i, w in enumerate(kept):
            acc += w
            if target < acc:
                pick = i
                break
        return positions[pick], math.log(kept[pick] / total)

    def choose_lazy(
        node_id: int, decl: AttributeDecl, query: ScorerQuery
    ) -> tuple[tuple[int, ...], float]:
        value, logp = sample_lazy(
            decl, tree.node(node_id), tree, _LazyHead(scorer, query), rng
        )
        return value.value, logp

    return choose_rule, choose_lazy


def gen_tree(
    grammar: Grammar,
    semantics: DecodeSemantics,
    scorer: Any,
    rng: Any,
    max_steps: int,
    budget_mode: BudgetMode = BudgetMode.STRICT,
) -> DecodeResult:
    """Sample a derivation tree under the grammar's semantic masks.

    Returns a complete tree with its trace, or an incomplete result when
    the step budget runs out in truncate mode.
    """
    tree = DerivationTree(grammar)
    choose_rule, choose_lazy = _sample_choosers(scorer, rng, tree)
    return _drive(
        grammar,
        semantics,
        tree,
        max_steps,
        budget_mode,
        choose_rule,
        choose_lazy,
        replay=False,
        trace=DecodeTrace(),
    )


def _replay_choosers(grammar: Grammar, tree: DerivationTree, scorer: Any):
    def choose_rule(node_id: int, query: ScorerQuery, mask: RuleMask) -> tuple[int, float]:
        prod_index = tree.node(node_id).prod_index
        alts = grammar.alternatives(query.nonterminal)
        alt_pos = alts.index(prod_index)
        if not mask.allowed[alt_pos]:
            raise _MaskViolation()
        weights = scorer.rule_weights(query)
        positions = mask.allowed_positions
        kept = [weights[i] for i in positions]
        if any(not math.isfinite(w) or w <= 0.0 for w in kept):
            raise DecodeError(
                f"scorer produced non-finite or non-positive weights for "
                f"<{query.nonterminal}>: {kept}"
            )
        total = sum(kept)
        return alt_pos, math.log(weights[alt_pos] / total)

    def choose_lazy(
        node_id: int, decl: AttributeDecl, query: ScorerQuery
    ) -> tuple[tuple[int, ...], float]:
        raise NotImplementedError  # replaced below

    return choose_rule, choose_lazy


def log_likelihood(
    grammar: Grammar,
    semantics: DecodeSemantics,
    scorer: Any,
    tree: DerivationTree,
    max_steps: int | None = None,
    budget_mode: BudgetMode = BudgetMode.TRUNCATE,
) -> tuple[float, DecodeTrace]:
    """Teacher-forced log-likelihood of a complete tree.

    Replays the tree's pre-order decisions through the same masks and
    renormalization as generation.  A tree applying a masked-out rule gets
    -inf, with the violating step index recorded on the trace.
    """
    seq = tree_to_rule_sequence(tree)
    fresh = rule_sequence_to_tree(grammar, seq)
    if max_steps is None:
        max_steps = len(seq)
    if len(seq) > max_steps:
        trace = DecodeTrace()
        trace.total_logp = float("-inf")
        trace.violation_step = max_steps
        return float("-inf"), trace

    run_holder: dict[str, DecodeRun] = {}
    choose_rule, _ = _replay_choosers(grammar, fresh, scorer)

    def choose_lazy(
        node_id: int, decl: AttributeDecl, query: ScorerQuery
    ) -> tuple[tuple[int, ...], float]:
        run = run_holder["run"]
        bits = run.forced_lazy_bits(node_id, decl)
        logp = force_lazy(decl, fresh.node(node_id), bits, _LazyHead(scorer, query))
        return bits, logp

    trace = DecodeTrace()
    result = _drive(
        grammar,
        _capture_semantics(semantics, run_holder),
        fresh,
        max_steps,
        budget_mode,
        choose_rule,
        choose_lazy,
        replay=True,
        trace=trace,
    )
    if trace.violation_step is not None:
        return float("-inf"), trace
    if not result.complete:
        trace.total_logp = float("-inf")
        return float("-inf"), trace
    return trace.total_logp, trace


def iter_decisions(
    grammar: Grammar, semantics: DecodeSemantics, tree: DerivationTree
) -> Iterator[Decision]:
    """Teacher-forced decision records of a complete tree (for training)."""
    seq = tree_to_rule_sequence(tree)
    fresh = rule_sequence_to_tree(grammar, seq)
    decisions: list[Decision] = []
    run_holder: dict[str, DecodeRun] = {}

    def choose_rule(node_id: int, query: ScorerQuery, mask: RuleMask) -> tuple[int, float]:
        prod_index = fresh.node(node_id).prod_index
        alt_pos = grammar.alternatives(query.nonterminal).index(prod_index)
        decisions.append(
            Decision("rule", node_id, query, alt_pos=alt_pos, prod_index=prod_index)
        )
        return alt_pos, 0.0

    def choose_lazy(
        node_id: int, decl: AttributeDecl, query: ScorerQuery
    ) -> tuple[tuple[int, ...], float]:
        run = run_holder["run"]
        bits = run.forced_lazy_bits(node_id, decl)
        force_lazy(decl, fresh.node(node_id), bits, _ConstantHead())
        decisions.append(Decision("lazy", node_id, query, decl=decl, bits=bits))
        return bits, 0.0

    result = _drive(
        grammar,
        _capture_semantics(semantics, run_holder),
        fresh,
        len(seq),
        BudgetMode.TRUNCATE,
        choose_rule,
        choose_lazy,
        replay=True,
        trace=DecodeTrace(),
    )
    if not result.complete:
        raise DecodeError("teacher-forced walk did not cover the whole tree")
    yield from decisions


class _ConstantHead:
    """Bernoulli head for count collection, where only bits matter."""

    def lazy_bit_p(self, decl: AttributeDecl, node: TreeNode, bit: int) -> float:
        return 0.5


def _capture_semantics(
    inner: DecodeSemantics, run_holder: dict[str, DecodeRun]
) -> DecodeSemantics:
    """Wrap a semantics factory so callers can reach the run it creates."""

    class _Capture(DecodeSemantics):
        def __init__(self) -> None:
            self.grammar = inner.grammar
            self.schema = inner.schema
            self.min_table = inner.min_table

        def begin(self, t: DerivationTree, replay: bool = False) -> DecodeRun:
            run = inner.begin(t, replay=replay)
            run_holder["run"] = run
            return run

    return _Capture()


def compute_mask(
    grammar: Grammar,
    semantics: DecodeSemantics,
    tree: DerivationTree,
    node_id: int,
    max_steps: int | None = None,
    budget_mode: BudgetMode = BudgetMode.TRUNCATE,
) -> RuleMask:
    """Mask for a frontier node of a partial tree.

    Replays the tree's expansions in generation order up to the node, so
    inherited constraints are in the same state generation would see.
    Errors if the node is not on the frontier or if yield-earlier subtrees
    are incomplete (its required attributes would be missing).
    """
    target = tree.node(node_id)
    if target.is_terminal or target.expanded:
        raise DecodeError(f"node {node_id} is not on the frontier")

    run = semantics.begin(tree, replay=True)
    stack: list[_Frame] = [_Frame(tree.root, 0, None, run.node_min(tree.root))]
    stack_min = stack[0].min_cost
    pending: dict[int, int] = {}
    used = 0
    while stack:
        frame = stack.pop()
        stack_min -= frame.min_cost
        node = tree.node(frame.node_id)
        run.prepare(frame.node_id)
        if frame.node_id == node_id:
            limit = max_steps if max_steps is not None else used + stack_min + 10**9
            return _combined_mask(
                run,
                node_id,
                grammar.alternatives(node.symbol.name),
                budget_mode,
                limit - used,
                stack_min,
            )
        if not node.expanded:
            raise DecodeError(
                f"cannot compute mask for node {node_id}: node {frame.node_id} "
                "earlier in generation order is unexpanded, so required "
                "attributes are missing"
            )
        for decl in run.lazy_decls(frame.node_id):
            slot = node.attrs.get(decl.name)
            if slot is None:
                bits = run.forced_lazy_bits(frame.node_id, decl)
            else:
                bits = slot.value
            run.observe_lazy(frame.node_id, decl, bits)
        run.observe_expand(frame.node_id, node.prod_index)
        used += 1
        nt_children = [
            cid for cid in node.children if not tree.node(cid).is_terminal
        ]
        if nt_children:
            pending[frame.node_id] = len(nt_children)
            for cid in reversed(nt_children):
                cost = run.node_min(cid)
                stack.append(_Frame(cid, frame.depth + 1, node.prod_index, cost))
                stack_min += cost
        else:
            _bubble_completion(run, tree, frame.node_id, pending)
    raise DecodeError(f"node {node_id} not reached in generation order")


def estimate_validity(
    grammar: Grammar,
    semantics: DecodeSemantics,
    scorer: Any,
    checker: Callable[[DerivationTree], Any],
    n_contexts: int,
    n_decodes: int,
    seed: int,
    max_steps: int,
    budget_mode: BudgetMode = BudgetMode.STRICT,
    rng_factory: Callable[[int], Any] | None = None,
) -> ValidityReport:
    """Monte Carlo validity of the sampler: fraction of decodes that
    complete within the step budget and pass the offline checker.

    Contexts stand in for latent draws: each of the n_contexts seeds an
    independent run of n_decodes decodes (per-item RNG stream is
    seed XOR item index).
    """
    import random as _random

    if n_contexts < 1 or n_decodes < 1:
        raise ValueError("n_contexts and n_decodes must be >= 1")
    make_rng = rng_factory or (lambda s: _random.Random(s))
    n_total = n_contexts * n_decodes
    n_complete = 0
    n_valid = 0
    steps_sum = 0
    for item in range(n_total):
        rng = make_rng(seed ^ item)
        result = gen_tree(grammar, semantics, scorer, rng, max_steps, budget_mode)
        steps_sum += result.rule_steps
        if result.complete:
            n_complete += 1
            report = checker(result.tree)
            if getattr(report, "valid", bool(report)):
                n_valid += 1
    return ValidityReport(
        n_total=n_total,
        n_complete=n_complete,
        n_valid=n_valid,
        mean_steps=steps_sum / n_total,
    )
