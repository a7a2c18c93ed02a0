"""Derivation trees stored in an index-addressed arena.

Nodes are referenced by integer ids so that replaying a generation or
serializing a tree is deterministic.  A node acquires children exactly when
a production is applied to it; the frontier is the set of nonterminal
leaves still awaiting expansion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterator

import numpy as np

from .grammar import Grammar, Symbol


class TreeError(ValueError):
    """Raised for operations on trees that violate arena invariants."""


@dataclass(slots=True)
class TreeNode:
    node_id: int
    symbol: Symbol
    parent: int | None = None
    prod_index: int | None = None
    children: list[int] = field(default_factory=list)
    # Declared attribute slots (name -> AttributeValue), managed by the
    # attribute engine.
    attrs: dict[str, Any] = field(default_factory=dict)
    # Decode-context scratch (inherited constraints etc.), not part of the
    # declared attribute schema.
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def is_terminal(self) -> bool:
        return self.symbol.is_terminal

    @property
    def expanded(self) -> bool:
        return self.prod_index is not None


class DerivationTree:
    """A partially or fully expanded derivation tree under one grammar."""

    def __init__(self, grammar: Grammar, root_symbol: Symbol | None = None):
        self.grammar = grammar
        self.nodes: list[TreeNode] = []
        root_sym = root_symbol if root_symbol is not None else grammar.start
        self.root = self._new_node(root_sym, None).node_id

    def _new_node(self, symbol: Symbol, parent: int | None) -> TreeNode:
        node = TreeNode(node_id=len(self.nodes), symbol=symbol, parent=parent)
        self.nodes.append(node)
        return node

    def node(self, node_id: int) -> TreeNode:
        return self.nodes[node_id]

    def apply(self, node_id: int, prod_index: int) -> list[int]:
        """Expand a frontier node with a production; returns child ids."""
        node = self.nodes[node_id]
        if node.is_terminal:
            raise TreeError(f"node {node_id} is a terminal leaf")
        if node.expanded:
            raise TreeError(f"node {node_id} already expanded")
        prod = self.grammar.production(prod_index)
        if prod.lhs.name != node.symbol.name:
            raise TreeError(
                f"production {prod!r} does not expand {node.symbol!r} at node {node_id}"
            )
        node.prod_index = prod_index
        node.children = [self._new_node(sym, node_id).node_id for sym in prod.rhs]
        return node.children

    def frontier(self) -> list[int]:
        """Ids of unexpanded nonterminal leaves, in left-to-right order."""
        out: list[int] = []
        stack = [self.root]
        while stack:
            node = self.nodes[stack.pop()]
            if node.is_terminal:
                continue
            if not node.expanded:
                out.append(node.node_id)
            else:
                stack.extend(reversed(node.children))
        return out

    @property
    def is_complete(self) -> bool:
        return not self.frontier()

    def pre_order(self) -> Iterator[TreeNode]:
        """All nodes, depth first, children left to right."""
        stack = [self.root]
        while stack:
            node = self.nodes[stack.pop()]
            yield node
            if node.expanded:
                stack.extend(reversed(node.children))

    def internal_nodes(self) -> Iterator[TreeNode]:
        for node in self.pre_order():
            if node.expanded:
                yield node

    def depth(self, node_id: int) -> int:
        d = 0
        parent = self.nodes[node_id].parent
        while parent is not None:
            d += 1
            parent = self.nodes[parent].parent
        return d

    def subtree_terminals(self, node_id: int) -> list[str]:
        """Terminal texts under a node, left to right."""
        out: list[str] = []
        stack = [node_id]
        while stack:
            node = self.nodes[stack.pop()]
            if node.is_terminal:
                out.append(node.symbol.name)
            elif node.expanded:
                stack.extend(reversed(node.children))
        return out


def yield_string(tree: DerivationTree) -> str:
    """Concatenate terminal leaves of a complete tree, left to right."""
    frontier = tree.frontier()
    if frontier:
        syms = [repr(tree.node(i).symbol) for i in frontier[:5]]
        raise TreeError(f"tree is incomplete; frontier starts with {syms}")
    return "".join(tree.subtree_terminals(tree.root))


def tree_to_rule_sequence(tree: DerivationTree) -> list[int]:
    """Applied production indices in pre-order (the encoder's traversal)."""
    if not tree.is_complete:
        raise TreeError("cannot encode an incomplete tree")
    return [node.prod_index for node in tree.internal_nodes()]


def rule_sequence_to_tree(grammar: Grammar, seq: list[int]) -> DerivationTree:
    """Rebuild the unique tree whose pre-order rule sequence is `seq`."""
    tree = DerivationTree(grammar)
    stack = [tree.root]
    for pos, prod_index in enumerate(seq):
        if not 0 <= prod_index < len(grammar):
            raise TreeError(f"rule {pos}: production index {prod_index} out of range")
        if not stack:
            raise TreeError(f"rule {pos}: tree already complete, trailing rules remain")
        node_id = stack.pop()
        node = tree.node(node_id)
        prod = grammar.production(prod_index)
        if prod.lhs.name != node.symbol.name:
            raise TreeError(
                f"rule {pos}: production {prod!r} cannot expand {node.symbol!r}"
            )
        children = tree.apply(node_id, prod_index)
        stack.extend(
            cid for cid in reversed(children) if not tree.node(cid).is_terminal
        )
    if stack:
        missing = [repr(tree.node(i).symbol) for i in reversed(stack)][:5]
        raise TreeError(f"rule sequence exhausted with open frontier {missing}")
    return tree


def one_hot_encode(grammar: Grammar, seq: list[int], max_steps: int) -> np.ndarray:
    """Encode a rule sequence as a max_steps x n_productions 0/1 matrix.

    Rows past the end of the sequence are zero padding.
    """
    if len(seq) > max_steps:
        raise TreeError(
            f"sequence of length {len(seq)} exceeds max_steps={max_steps}"
        )
    out = np.zeros((max_steps, len(grammar)), dtype=np.uint8)
    for t, prod_index in enumerate(seq):
        if not 0 <= prod_index < len(grammar):
            raise TreeError(f"rule {t}: production index {prod_index} out of range")
        out[t, prod_index] = 1
    return out
