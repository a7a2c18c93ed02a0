"""Attribute declarations, semantic rules, and their evaluation over trees.

Attributes attach to nonterminals and come in three kinds: inherited
(computed from parent/siblings), synthesized (computed from children), and
stochastic lazy (sampled up front as a constraint during generation, bound
to the real synthesized value once the children exist).

Semantic rules draw their compute step from a closed registry of named
pure functions, so every schema stays auditable: rules can union/intersect
sets, concatenate tokens, bump counters, or run an equality check whose
outcome is data rather than an exception.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from .tree import DerivationTree, TreeNode


class SchemaError(ValueError):
    """Raised for ill-formed attribute schemas."""


class LazyStateError(RuntimeError):
    """Raised when a lazy slot is sampled or linked in the wrong state."""


class LazyLinkError(RuntimeError):
    """Synthesized value contradicts its sampled predetermination.

    Reaching this during generation means a decoder mask allowed a choice
    it should have forbidden.
    """


class AttrKind(enum.Enum):
    INHERITED = "inherited"
    SYNTHESIZED = "synthesized"
    STOCHASTIC_LAZY = "stochastic_lazy"


class ValueDomain(enum.Enum):
    BIT_SET = "bit_set"
    INT_COUNTER = "int_counter"
    SYMBOL_SET = "symbol_set"
    TOKEN = "token"


class ValueState(enum.Enum):
    UNSET = "unset"
    PENDING_LAZY = "pending_lazy"
    SET = "set"


@dataclass(slots=True)
class AttributeValue:
    state: ValueState
    value: Any = None

    @classmethod
    def pending(cls, bits: tuple[int, ...]) -> "AttributeValue":
        return cls(ValueState.PENDING_LAZY, bits)


@dataclass(frozen=True, slots=True)
class AttributeDecl:
    owner: str  # nonterminal name
    name: str
    kind: AttrKind
    domain: ValueDomain
    cap: int | None = None  # bit-vector length for stochastic lazy attrs

    def __post_init__(self) -> None:
        if self.kind is AttrKind.STOCHASTIC_LAZY and (self.cap is None or self.cap < 1):
            raise SchemaError(f"{self.owner}.{self.name}: stochastic lazy needs cap >= 1")


@dataclass(frozen=True, slots=True)
class SemanticRule:
    """One attribute computation attached to a production.

    Positions index the production: 0 is the lhs, 1..n the rhs symbols.
    """

    production: int
    target: tuple[int, str]
    dependencies: tuple[tuple[int, str], ...]
    compute: str
    args: tuple[Any, ...] = ()


# ---------------------------------------------------------------------------
# Rule-function vocabulary: a closed registry of pure functions.

RULE_FUNCTIONS: dict[str, Callable[..., Any]] = {}


def register_rule_function(name: str, fn: Callable[..., Any]) -> None:
    if name in RULE_FUNCTIONS and RULE_FUNCTIONS[name] is not fn:
        raise SchemaError(f"rule function {name!r} already registered")
    RULE_FUNCTIONS[name] = fn


def _all_equal(*values: Any) -> bool:
    return all(v == values[0] for v in values[1:])


register_rule_function("const", lambda *deps, args: args[0])
register_rule_function("copy", lambda x, args: x)
register_rule_function("concat", lambda *deps, args: "".join(deps))
register_rule_function("as_set", lambda x, args: frozenset((x,)))
register_rule_function("union", lambda *deps, args: frozenset().union(*deps))
register_rule_function(
    "intersect", lambda first, *rest, args: frozenset(first).intersection(*rest)
)
register_rule_function("difference", lambda a, b, args: frozenset(a) - frozenset(b))
register_rule_function("equals", lambda *deps, args: _all_equal(*deps))
register_rule_function("add", lambda *deps, args: sum(deps) + sum(args))
register_rule_function(
    "size_flags", lambda s, args: tuple(1 if len(s) > i else 0 for i in range(args[0]))
)


def bits_match_size(bits: tuple[int, ...], value: Any) -> bool:
    """Default lazy-link consistency: bit i says the value has size > i."""
    try:
        size = len(value)
    except TypeError:
        size = 1 if value else 0
    return all(bool(b) == (size > i) for i, b in enumerate(bits))


# ---------------------------------------------------------------------------
# Schema


class AttributeSchema:
    """Declarations plus per-production semantic rules for one grammar."""

    def __init__(
        self,
        grammar_id: str,
        decls: Iterable[AttributeDecl],
        rules: Iterable[SemanticRule],
    ):
        self.grammar_id = grammar_id
        self.decls: dict[tuple[str, str], AttributeDecl] = {}
        for decl in decls:
            key = (decl.owner, decl.name)
            if key in self.decls:
                raise SchemaError(f"duplicate declaration {decl.owner}.{decl.name}")
            self.decls[key] = decl
        self.rules_by_production: dict[int, list[SemanticRule]] = {}
        for rule in rules:
            self.rules_by_production.setdefault(rule.production, []).append(rule)
        self._targets_seen: set[tuple[int, int, str]] = set()
        for prod, prod_rules in self.rules_by_production.items():
            seen: set[tuple[int, str]] = set()
            for rule in prod_rules:
                if rule.compute not in RULE_FUNCTIONS:
                    raise SchemaError(f"unknown rule function {rule.compute!r}")
                if rule.target in seen:
                    raise SchemaError(
                        f"production {prod}: duplicate rule for target {rule.target}"
                    )
                seen.add(rule.target)

    def decl(self, owner: str, name: str) -> AttributeDecl:
        try:
            return self.decls[(owner, name)]
        except KeyError:
            raise SchemaError(f"attribute {owner}.{name} not declared") from None

    def declared_for(self, owner: str) -> list[AttributeDecl]:
        return [d for (o, _), d in self.decls.items() if o == owner]

    def rules_for(self, prod_index: int) -> list[SemanticRule]:
        return self.rules_by_production.get(prod_index, [])


# ---------------------------------------------------------------------------
# Dependency graphs (attribute instances on a tree)


@dataclass
class DependencyGraph:
    """Directed graph over attribute instances; edges point dep -> user."""

    vertices: list[tuple[int, str]]
    edges: list[tuple[tuple[int, str], tuple[int, str]]]

    def merged(self) -> tuple[list[int], list[tuple[int, int]]]:
        """Node-merged projection: attributes of one tree node collapse.

        Edges between different attributes of the same node disappear in
        the projection; a true self-dependency (an attribute needing
        itself) survives as a self-loop.
        """
        nodes = sorted({v[0] for v in self.vertices})
        merged_edges: set[tuple[int, int]] = set()
        for (src_node, src_attr), (dst_node, dst_attr) in self.edges:
            if src_node == dst_node and src_attr != dst_attr:
                continue
            merged_edges.add((src_node, dst_node))
        return nodes, sorted(merged_edges)


def _resolve_position(tree: DerivationTree, node: TreeNode, pos: int) -> TreeNode:
    if pos == 0:
        return node
    child_id = node.children[pos - 1]
    return tree.node(child_id)


def build_dependency_graph(schema: AttributeSchema, tree: DerivationTree) -> DependencyGraph:
    """Instantiate the schema's rules over a tree's applied productions."""
    vertices: list[tuple[int, str]] = []
    edges: list[tuple[tuple[int, str], tuple[int, str]]] = []
    for node in tree.internal_nodes():
        for rule in schema.rules_for(node.prod_index):
            target_node = _resolve_position(tree, node, rule.target[0])
            if target_node.is_terminal:
                raise SchemaError(
                    f"production {node.prod_index}: rule targets terminal position"
                )
            schema.decl(target_node.symbol.name, rule.target[1])
            target = (target_node.node_id, rule.target[1])
            vertices.append(target)
            for dep_pos, dep_name in rule.dependencies:
                dep_node = _resolve_position(tree, node, dep_pos)
                schema.decl(dep_node.symbol.name, dep_name)
                edges.append(((dep_node.node_id, dep_name), target))
    return DependencyGraph(vertices=vertices, edges=edges)


def check_noncircular(graph: DependencyGraph) -> bool:
    """True iff the node-merged projection has no directed cycle."""
    nodes, edges = graph.merged()
    succ: dict[int, list[int]] = {n: [] for n in nodes}
    indeg: dict[int, int] = {n: 0 for n in nodes}
    for src, dst in edges:
        if src == dst:
            return False
        succ[src].append(dst)
        indeg[dst] += 1
    ready = [n for n in nodes if indeg[n] == 0]
    seen = 0
    while ready:
        n = ready.pop()
        seen += 1
        for m in succ[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
    return seen == len(nodes)


# ---------------------------------------------------------------------------
# Offline evaluation


def evaluate_offline(
    schema: AttributeSchema,
    tree: DerivationTree,
    order_rng: Any | None = None,
) -> dict[tuple[int, str], Any]:
    """Evaluate all attribute instances of a complete tree bottom-up.

    Stochastic lazy attributes are bypassed offline: their synthesized
    defining rule computes the value directly.  Returns the full instance
    mapping and fills any still-unset slots on the tree.  `order_rng`
    shuffles topological ties, for order-independence checks.
    """
    if not tree.is_complete:
        raise SchemaError("offline evaluation requires a complete tree")

    instances: dict[tuple[int, str], tuple[TreeNode, SemanticRule]] = {}
    deps_of: dict[tuple[int, str], list[tuple[int, str]]] = {}
    for node in tree.internal_nodes():
        for rule in schema.rules_for(node.prod_index):
            target_node = _resolve_position(tree, node, rule.target[0])
            target = (target_node.node_id, rule.target[1])
            if target in instances:
                raise SchemaError(f"attribute instance {target} defined twice")
            instances[target] = (node, rule)
            deps_of[target] = [
                (_resolve_position(tree, node, pos).node_id, name)
                for pos, name in rule.dependencies
            ]

    for target, deps in deps_of.items():
        for dep in deps:
            if dep not in instances and dep != target:
                raise SchemaError(f"{target} depends on {dep}, which no rule defines")

    # Kahn's algorithm over attribute instances, with deterministic or
    # shuffled tie-breaking.
    indeg = {t: 0 for t in instances}
    users: dict[tuple[int, str], list[tuple[int, str]]] = {t: [] for t in instances}
    for target, deps in deps_of.items():
        for dep in deps:
            users[dep].append(target)
            indeg[target] += 1
    ready = sorted(t for t, d in indeg.items() if d == 0)
    values: dict[tuple[int, str], Any] = {}
    while ready:
        if order_rng is not None:
            idx = order_rng.randrange(len(ready))
            target = ready.pop(idx)
        else:
            target = ready.pop()
        node, rule = instances[target]
        dep_values = [values[d] for d in deps_of[target]]
        values[target] = RULE_FUNCTIONS[rule.compute](*dep_values, args=rule.args)
        for user in users[target]:
            indeg[user] -= 1
            if indeg[user] == 0:
                ready.append(user)
    if len(values) < len(instances):
        stuck = sorted(set(instances) - set(values))[:5]
        raise SchemaError(f"cyclic attribute dependencies; unresolved: {stuck}")

    for (node_id, name), value in values.items():
        slot = tree.node(node_id).attrs.get(name)
        if slot is None or slot.state is ValueState.UNSET:
            tree.node(node_id).attrs[name] = AttributeValue(ValueState.SET, value)
    return values


# ---------------------------------------------------------------------------
# Stochastic lazy sampling and linking


def sample_lazy(
    decl: AttributeDecl,
    node: TreeNode,
    tree: DerivationTree,
    scorer_ctx: Any,
    rng: Any,
) -> tuple[AttributeValue, float]:
    """Draw a lazy attribute's bit vector from the scorer's Bernoulli head.

    Records the draw as a pending predetermination on the node and returns
    it with the log-probability of the realized bits.
    """
    import math

    if decl.kind is not AttrKind.STOCHASTIC_LAZY:
        raise SchemaError(f"{decl.owner}.{decl.name} is not stochastic lazy")
    if node.symbol.name != decl.owner:
        raise SchemaError(f"node {node.node_id} does not own {decl.owner}.{decl.name}")
    slot = node.attrs.get(decl.name)
    if slot is not None and slot.state is not ValueState.UNSET:
        raise LazyStateError(
            f"{decl.owner}.{decl.name} on node {node.node_id} already {slot.state.value}"
        )
    bits: list[int] = []
    logp = 0.0
    for i in range(decl.cap or 1):
        p = scorer_ctx.lazy_bit_p(decl, node, i)
        if not 0.0 < p < 1.0:
            raise ValueError(f"Bernoulli head returned p={p}, need 0 < p < 1")
        bit = 1 if rng.random() < p else 0
        bits.append(bit)
        logp += math.log(p if bit else 1.0 - p)
    value = AttributeValue.pending(tuple(bits))
    node.attrs[decl.name] = value
    return value, logp


def force_lazy(
    decl: AttributeDecl, node: TreeNode, bits: tuple[int, ...], scorer_ctx: Any
) -> float:
    """Teacher-forcing twin of sample_lazy: record given bits, return logp."""
    import math

    slot = node.attrs.get(decl.name)
    if slot is not None and slot.state is not ValueState.UNSET:
        raise LazyStateError(
            f"{decl.owner}.{decl.name} on node {node.node_id} already {slot.state.value}"
        )
    logp = 0.0
    for i, bit in enumerate(bits):
        p = scorer_ctx.lazy_bit_p(decl, node, i)
        logp += math.log(p if bit else 1.0 - p)
    node.attrs[decl.name] = AttributeValue.pending(tuple(bits))
    return logp


def lazy_link(
    node: TreeNode,
    attr_name: str,
    value: Any,
    consistency: Callable[[tuple[int, ...], Any], bool] = bits_match_size,
) -> None:
    """Promote a pending lazy attribute to its concrete synthesized value."""
    slot = node.attrs.get(attr_name)
    if slot is None or slot.state is not ValueState.PENDING_LAZY:
        state = "unset" if slot is None else slot.state.value
        raise LazyStateError(
            f"{attr_name} on node {node.node_id} is {state}, expected pending_lazy"
        )
    if not consistency(slot.value, value):
        raise LazyLinkError(
            f"lazy link of {attr_name} on node {node.node_id}: value {value!r} "
            f"contradicts predetermination {slot.value!r}"
        )
    node.attrs[attr_name] = AttributeValue(ValueState.SET, value)
