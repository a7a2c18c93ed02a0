"""Semantics for the three-carbon toy grammar.

The toy language is either a chain (CCC) or a cycle whose two outer atoms
carry a matching ring bond (e.g. C-1CC-1).  Whether a ring appears is
predetermined by a one-bit stochastic lazy attribute on the root: the bit
is sampled when the root expands, flows down as an inherited constraint on
both atoms, and is lazily bound to the concrete ring-bond pair once the
first atom's subtree is complete.  The second atom's bond and digit are
then forced to match.
"""

from __future__ import annotations

from .attributes import (
    AttrKind,
    AttributeDecl,
    AttributeSchema,
    SemanticRule,
    ValueDomain,
    ValueState,
    lazy_link,
)
from .decoder import DecodeRun, DecodeSemantics
from .grammar import Grammar
from .report import CheckReport
from .tree import DerivationTree

SA = "sa"


def _alt_by_rhs_len(grammar: Grammar, nt: str, length: int) -> int:
    for idx in grammar.alternatives(nt):
        if len(grammar.production(idx).rhs) == length:
            return idx
    raise ValueError(f"<{nt}> has no alternative of arity {length}")


def build_toy_schema(grammar: Grammar) -> AttributeSchema:
    s_prod = grammar.alternatives("s")[0]
    atom_plain = _alt_by_rhs_len(grammar, "atom", 1)
    atom_ring = _alt_by_rhs_len(grammar, "atom", 3)

    decls = [
        AttributeDecl("s", "matched", AttrKind.SYNTHESIZED, ValueDomain.SYMBOL_SET),
        AttributeDecl("s", "ok", AttrKind.SYNTHESIZED, ValueDomain.INT_COUNTER),
        AttributeDecl("s", SA, AttrKind.STOCHASTIC_LAZY, ValueDomain.BIT_SET, cap=1),
        AttributeDecl("atom", "set", AttrKind.SYNTHESIZED, ValueDomain.SYMBOL_SET),
        AttributeDecl("atom", "pair", AttrKind.SYNTHESIZED, ValueDomain.TOKEN),
        AttributeDecl("bond", "val", AttrKind.SYNTHESIZED, ValueDomain.TOKEN),
        AttributeDecl("digit", "val", AttrKind.SYNTHESIZED, ValueDomain.TOKEN),
    ]

    rules = [
        SemanticRule(s_prod, (0, "matched"), ((1, "set"), (3, "set")), "intersect"),
        SemanticRule(s_prod, (0, "ok"), ((1, "set"), (0, "matched"), (3, "set")), "equals"),
        # Offline bypass for the lazy bit: one ring bond iff matched is nonempty.
        SemanticRule(s_prod, (0, SA), ((0, "matched"),), "size_flags", (1,)),
        SemanticRule(atom_plain, (0, "set"), (), "const", (frozenset(),)),
        SemanticRule(atom_plain, (0, "pair"), (), "const", ("",)),
        SemanticRule(atom_ring, (0, "pair"), ((2, "val"), (3, "val")), "concat"),
        SemanticRule(atom_ring, (0, "set"), ((0, "pair"),), "as_set"),
    ]
    for nt in ("bond", "digit"):
        for idx in grammar.alternatives(nt):
            tok = grammar.production(idx).rhs[0].name
            rules.append(SemanticRule(idx, (0, "val"), (), "const", (tok,)))
    return AttributeSchema("toy", decls, rules)


class ToyRun(DecodeRun):
    def __init__(self, semantics: "ToySemantics", tree: DerivationTree):
        super().__init__(semantics, tree)
        self.atom_ids: list[int] = []
        self.ring_required: bool | None = None
        self.matched: frozenset | None = None

    # -- helpers ------------------------------------------------------------

    def _tree_has_ring(self) -> bool:
        from .decoder import DecodeError

        root = self.tree.node(self.tree.root)
        first_atom = self.tree.node(root.children[0])
        if not first_atom.expanded:
            raise DecodeError(
                "root lazy attribute undetermined: first atom is unexpanded"
            )
        return first_atom.prod_index == self.semantics.atom_ring

    def _owning_atom(self, node_id: int) -> int | None:
        parent = self.tree.node(node_id).parent
        while parent is not None:
            if self.tree.node(parent).symbol.name == "atom":
                return parent
            parent = self.tree.node(parent).parent
        return None

    # -- decode hooks --------------------------------------------------------

    def lazy_decls(self, node_id: int) -> list[AttributeDecl]:
        if node_id == self.tree.root:
            return [self.semantics.sa_decl]
        return []

    def forced_lazy_bits(self, node_id: int, decl: AttributeDecl) -> tuple[int, ...]:
        return (1,) if self._tree_has_ring() else (0,)

    def observe_lazy(self, node_id: int, decl: AttributeDecl, bits: tuple[int, ...]) -> None:
        self.ring_required = bool(bits[0])

    def observe_expand(self, node_id: int, prod_index: int) -> None:
        if node_id == self.tree.root:
            children = self.tree.node(node_id).children
            self.atom_ids = [children[0], children[2]]

    def observe_complete(self, node_id: int) -> None:
        if self.atom_ids and node_id == self.atom_ids[0]:
            atom = self.tree.node(node_id)
            if atom.prod_index == self.semantics.atom_ring:
                value = frozenset(("".join(self.tree.subtree_terminals(node_id)[1:]),))
            else:
                value = frozenset()
            root = self.tree.node(self.tree.root)
            if root.attrs.get(SA, None) is not None and (
                root.attrs[SA].state is ValueState.PENDING_LAZY
            ):
                lazy_link(root, SA, value)
            self.matched = value

    def mask(self, node_id: int) -> list[bool]:
        node = self.tree.node(node_id)
        name = node.symbol.name
        grammar = self.grammar
        if name == "atom":
            if self.ring_required is None:
                return [True, True]
            plain = grammar.alternatives("atom").index(self.semantics.atom_plain)
            ring = grammar.alternatives("atom").index(self.semantics.atom_ring)
            out = [False, False]
            out[ring if self.ring_required else plain] = True
            return out
        if name in ("bond", "digit"):
            owner = self._owning_atom(node_id)
            if (
                owner == (self.atom_ids[1] if len(self.atom_ids) > 1 else None)
                and self.matched
            ):
                pair = next(iter(self.matched))
                want = pair[0] if name == "bond" else pair[1]
                return [
                    grammar.production(idx).rhs[0].name == want
                    for idx in grammar.alternatives(name)
                ]
            return [True] * len(grammar.alternatives(name))
        return [True] * len(grammar.alternatives(name))


class ToySemantics(DecodeSemantics):
    run_class = ToyRun

    def __init__(self, grammar: Grammar, schema: AttributeSchema):
        super().__init__(grammar, schema)
        self.atom_plain = _alt_by_rhs_len(grammar, "atom", 1)
        self.atom_ring = _alt_by_rhs_len(grammar, "atom", 3)
        self.sa_decl = schema.decl("s", SA)


def check_toy(schema: AttributeSchema, tree: DerivationTree) -> CheckReport:
    """Offline semantic check: the matched sets of both atoms must agree."""
    from .attributes import evaluate_offline

    values = evaluate_offline(schema, tree)
    report = CheckReport()
    if not values[(tree.root, "ok")]:
        report.add("ringbond-mismatch", tree.root, "atom ring-bond sets differ")
    return report
