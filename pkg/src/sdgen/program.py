"""Frontend for the straight-line program language.

Covers parsing program text into derivation trees, the offline semantic
checker (definition before use, a single final return, statement budget),
an interpreter treating programs as univariate functions, the output-MSE
distance between two programs, decode-time masks for generation, and the
random corpus generator.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterator, Union

import numpy as np

from .attributes import (
    AttrKind,
    AttributeDecl,
    AttributeSchema,
    SemanticRule,
    ValueDomain,
    evaluate_offline,
)
from .decoder import BudgetMode, DecodeRun, DecodeSemantics, gen_tree
from .grammar import Grammar
from .lexing import LexicalError, Token, tokenize
from .report import CheckReport
from .tree import DerivationTree, yield_string

INPUT_VAR = "v0"
MAX_TOTAL_STATEMENTS = 10  # statement count must stay below 10, plus the return
DISTANCE_GRID = (-5.0, 5.0, 1000)
NONFINITE_SENTINEL = 1e10


class ProgramParseError(ValueError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} at position {pos}")
        self.pos = pos


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True, slots=True)
class VarRef:
    name: str

    def to_text(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True)
class Number:
    text: str

    @property
    def value(self) -> float:
        return float(self.text)

    def to_text(self) -> str:
        return self.text


Operand = Union[VarRef, Number]


@dataclass(frozen=True, slots=True)
class UnaryOp:
    op: str
    operand: Operand

    def to_text(self) -> str:
        return f"{self.op}{self.operand.to_text()}"


@dataclass(frozen=True, slots=True)
class FuncCall:
    fn: str
    operand: Operand

    def to_text(self) -> str:
        return f"{self.fn}({self.operand.to_text()})"


@dataclass(frozen=True, slots=True)
class BinOp:
    left: Operand
    op: str
    right: Operand

    def to_text(self) -> str:
        return f"{self.left.to_text()}{self.op}{self.right.to_text()}"


Expr = Union[UnaryOp, FuncCall, BinOp]


@dataclass(frozen=True, slots=True)
class Assign:
    target: str
    expr: Expr

    def to_text(self) -> str:
        return f"{self.target}={self.expr.to_text()}"


@dataclass(frozen=True, slots=True)
class Return:
    var: str

    def to_text(self) -> str:
        return f"return:{self.var}"


Statement = Union[Assign, Return]


@dataclass(frozen=True)
class ProgramAst:
    statements: tuple[Statement, ...]

    def to_text(self) -> str:
        return ";".join(s.to_text() for s in self.statements)


# ---------------------------------------------------------------------------
# Production bookkeeping


class _Prods:
    """Named production indices resolved from the grammar's structure."""

    def __init__(self, g: Grammar):
        self.program = g.alternatives("program")[0]
        statlist = g.alternatives("stat list")
        self.statlist_rec = next(i for i in statlist if len(g.production(i).rhs) == 3)
        self.statlist_base = next(i for i in statlist if len(g.production(i).rhs) == 1)
        self.statlist_rec_pos = statlist.index(self.statlist_rec)
        self.statlist_base_pos = statlist.index(self.statlist_base)
        stat = g.alternatives("stat")
        self.stat_assign = next(
            i for i in stat if g.production(i).rhs[0].name == "assign"
        )
        self.stat_return = next(
            i for i in stat if g.production(i).rhs[0].name == "return"
        )
        self.stat_assign_pos = stat.index(self.stat_assign)
        self.stat_return_pos = stat.index(self.stat_return)
        self.assign = g.alternatives("assign")[0]
        self.ret = g.alternatives("return")[0]
        self.lhs = g.alternatives("lhs")[0]
        self.var = g.alternatives("var")[0]
        self.rhs = g.alternatives("rhs")[0]
        expr = g.alternatives("expr")
        self.expr_unary = next(
            i for i in expr if g.production(i).rhs[0].name == "unary expr"
        )
        self.expr_binary = next(
            i for i in expr if g.production(i).rhs[0].name == "binary expr"
        )
        unary = g.alternatives("unary expr")
        self.unary_op_expr = next(
            i for i in unary if g.production(i).rhs[0].name == "unary op"
        )
        self.unary_func_expr = next(
            i for i in unary if g.production(i).rhs[0].name == "unary func"
        )
        self.binary = g.alternatives("binary expr")[0]
        operand = g.alternatives("operand")
        self.operand_var = next(
            i for i in operand if g.production(i).rhs[0].name == "var"
        )
        self.operand_imm = next(
            i for i in operand if g.production(i).rhs[0].name == "immediate number"
        )
        imm = g.alternatives("immediate number")
        self.imm_frac = next(i for i in imm if len(g.production(i).rhs) == 3)
        self.imm_int = next(i for i in imm if len(g.production(i).rhs) == 1)
        self.var_id = {
            g.production(i).rhs[0].name: i for i in g.alternatives("var id")
        }
        self.digit = {g.production(i).rhs[0].name: i for i in g.alternatives("digit")}
        self.unary_ops = {
            g.production(i).rhs[0].name: i for i in g.alternatives("unary op")
        }
        self.unary_funcs = {
            g.production(i).rhs[0].name: i for i in g.alternatives("unary func")
        }
        self.binary_ops = {
            g.production(i).rhs[0].name: i for i in g.alternatives("binary op")
        }


# ---------------------------------------------------------------------------
# Parser


class _Parser:
    def __init__(self, lang: "ProgramLanguage", text: str):
        self.lang = lang
        self.text = text
        try:
            self.tokens = tokenize(text, lang.grammar.terminals)
        except LexicalError as err:
            raise ProgramParseError(str(err).rsplit(" at position", 1)[0], err.pos) from None
        self.pos = 0

    def peek(self, ahead: int = 0) -> str | None:
        i = self.pos + ahead
        return self.tokens[i].text if i < len(self.tokens) else None

    def here(self) -> int:
        if self.pos < len(self.tokens):
            return self.tokens[self.pos].pos
        return len(self.text)

    def expect(self, text: str) -> Token:
        tok = self.tokens[self.pos] if self.pos < len(self.tokens) else None
        if tok is None or tok.text != text:
            got = tok.text if tok else "end of input"
            raise ProgramParseError(f"expected {text!r}, got {got!r}", self.here())
        self.pos += 1
        return tok

    def parse(self) -> DerivationTree:
        tree = DerivationTree(self.lang.grammar)
        p = self.lang.prods
        (statlist,) = tree.apply(tree.root, p.program)
        self._statlist(tree, statlist)
        if self.pos != len(self.tokens):
            raise ProgramParseError(
                f"trailing input {self.peek()!r}", self.here()
            )
        return tree

    def _statlist(self, tree: DerivationTree, node: int) -> None:
        p = self.lang.prods
        if any(t.text == ";" for t in self.tokens[self.pos :]):
            stat, _semi, rest = tree.apply(node, p.statlist_rec)
            self._stat(tree, stat)
            self.expect(";")
            self._statlist(tree, rest)
        else:
            (stat,) = tree.apply(node, p.statlist_base)
            self._stat(tree, stat)

    def _stat(self, tree: DerivationTree, node: int) -> None:
        p = self.lang.prods
        if self.peek() == "return:":
            (ret,) = tree.apply(node, p.stat_return)
            tree.apply(ret, p.ret)
            self.expect("return:")
            self._lhs(tree, tree.node(ret).children[1])
        else:
            (assign,) = tree.apply(node, p.stat_assign)
            tree.apply(assign, p.assign)
            lhs, _eq, rhs = tree.node(assign).children
            self._lhs(tree, lhs)
            self.expect("=")
            self._rhs(tree, rhs)

    def _lhs(self, tree: DerivationTree, node: int) -> None:
        (var,) = tree.apply(node, self.lang.prods.lhs)
        self._var(tree, var)

    def _var(self, tree: DerivationTree, node: int) -> None:
        p = self.lang.prods
        tree.apply(node, p.var)
        self.expect("v")
        digit = self.peek()
        if digit not in p.var_id:
            raise ProgramParseError(f"expected variable id digit, got {digit!r}", self.here())
        var_id = tree.node(node).children[1]
        tree.apply(var_id, p.var_id[digit])
        self.pos += 1

    def _rhs(self, tree: DerivationTree, node: int) -> None:
        p = self.lang.prods
        (expr,) = tree.apply(node, p.rhs)
        tok = self.peek()
        if tok in ("+", "-", "sin", "cos", "exp"):
            (unary,) = tree.apply(expr, p.expr_unary)
            if tok in p.unary_ops:
                op, operand = tree.apply(unary, p.unary_op_expr)
                tree.apply(op, p.unary_ops[tok])
                self.pos += 1
                self._operand(tree, operand)
            else:
                func, _lp, operand, _rp = tree.apply(unary, p.unary_func_expr)
                tree.apply(func, p.unary_funcs[tok])
                self.pos += 1
                self.expect("(")
                self._operand(tree, operand)
                self.expect(")")
        elif tok == "v" or (tok is not None and tok in p.digit):
            (binary,) = tree.apply(expr, p.expr_binary)
            left, op, right = tree.apply(binary, p.binary)
            self._operand(tree, left)
            op_tok = self.peek()
            if op_tok not in p.binary_ops:
                raise ProgramParseError(
                    f"expected binary operator, got {op_tok!r}", self.here()
                )
            tree.apply(op, p.binary_ops[op_tok])
            self.pos += 1
            self._operand(tree, right)
        else:
            raise ProgramParseError(f"expected expression, got {tok!r}", self.here())

    def _operand(self, tree: DerivationTree, node: int) -> None:
        p = self.lang.prods
        tok = self.peek()
        if tok == "v":
            (var,) = tree.apply(node, p.operand_var)
            self._var(tree, var)
        elif tok is not None and tok in p.digit:
            (imm,) = tree.apply(node, p.operand_imm)
            if self.peek(1) == ".":
                d1, _dot, d2 = tree.apply(imm, p.imm_frac)
                tree.apply(d1, p.digit[tok])
                self.pos += 1
                self.expect(".")
                frac = self.peek()
                if frac not in p.digit:
                    raise ProgramParseError(f"expected digit, got {frac!r}", self.here())
                tree.apply(d2, p.digit[frac])
                self.pos += 1
            else:
                (d1,) = tree.apply(imm, p.imm_int)
                tree.apply(d1, p.digit[tok])
                self.pos += 1
        else:
            raise ProgramParseError(f"expected operand, got {tok!r}", self.here())


# ---------------------------------------------------------------------------
# Offline attribute schema


def build_program_schema(grammar: Grammar) -> AttributeSchema:
    p = _Prods(grammar)
    fs = frozenset
    S, I, T = ValueDomain.SYMBOL_SET, ValueDomain.INT_COUNTER, ValueDomain.TOKEN
    syn = AttrKind.SYNTHESIZED

    decls = [
        AttributeDecl("var id", "val", syn, T),
        AttributeDecl("var", "name", syn, T),
        AttributeDecl("lhs", "name", syn, T),
        AttributeDecl("operand", "uses", syn, S),
        AttributeDecl("unary expr", "uses", syn, S),
        AttributeDecl("binary expr", "uses", syn, S),
        AttributeDecl("expr", "uses", syn, S),
        AttributeDecl("rhs", "uses", syn, S),
        AttributeDecl("assign", "uses", syn, S),
        AttributeDecl("assign", "defines", syn, S),
        AttributeDecl("return", "uses", syn, S),
        AttributeDecl("return", "defines", syn, S),
        AttributeDecl("stat", "uses", syn, S),
        AttributeDecl("stat", "defines", syn, S),
        AttributeDecl("stat", "is_ret", syn, I),
        AttributeDecl("stat list", "free", syn, S),
        AttributeDecl("stat list", "carry", syn, S),
        AttributeDecl("stat list", "count", syn, I),
        AttributeDecl("stat list", "last_ret", syn, I),
        AttributeDecl("stat list", "mid_rets", syn, I),
        AttributeDecl("program", "inputs", syn, S),
        AttributeDecl("program", "undefined", syn, S),
        AttributeDecl("program", "count", syn, I),
        AttributeDecl("program", "last_ret", syn, I),
        AttributeDecl("program", "mid_rets", syn, I),
    ]

    rules = [
        SemanticRule(p.program, (0, "inputs"), (), "const", (fs((INPUT_VAR,)),)),
        SemanticRule(p.program, (0, "undefined"), ((1, "free"), (0, "inputs")), "difference"),
        SemanticRule(p.program, (0, "count"), ((1, "count"),), "copy"),
        SemanticRule(p.program, (0, "last_ret"), ((1, "last_ret"),), "copy"),
        SemanticRule(p.program, (0, "mid_rets"), ((1, "mid_rets"),), "copy"),
        # stat ';' stat list
        SemanticRule(p.statlist_rec, (0, "carry"), ((3, "free"), (1, "defines")), "difference"),
        SemanticRule(p.statlist_rec, (0, "free"), ((1, "uses"), (0, "carry")), "union"),
        SemanticRule(p.statlist_rec, (0, "count"), ((3, "count"),), "add", (1,)),
        SemanticRule(p.statlist_rec, (0, "last_ret"), ((3, "last_ret"),), "copy"),
        SemanticRule(p.statlist_rec, (0, "mid_rets"), ((1, "is_ret"), (3, "mid_rets")), "add"),
        # stat
        SemanticRule(p.statlist_base, (0, "carry"), (), "const", (fs(),)),
        SemanticRule(p.statlist_base, (0, "free"), ((1, "uses"),), "copy"),
        SemanticRule(p.statlist_base, (0, "count"), (), "const", (1,)),
        SemanticRule(p.statlist_base, (0, "last_ret"), ((1, "is_ret"),), "copy"),
        SemanticRule(p.statlist_base, (0, "mid_rets"), (), "const", (0,)),
        SemanticRule(p.stat_assign, (0, "uses"), ((1, "uses"),), "copy"),
        SemanticRule(p.stat_assign, (0, "defines"), ((1, "defines"),), "copy"),
        SemanticRule(p.stat_assign, (0, "is_ret"), (), "const", (0,)),
        SemanticRule(p.stat_return, (0, "uses"), ((1, "uses"),), "copy"),
        SemanticRule(p.stat_return, (0, "defines"), ((1, "defines"),), "copy"),
        SemanticRule(p.stat_return, (0, "is_ret"), (), "const", (1,)),
        SemanticRule(p.assign, (0, "defines"), ((1, "name"),), "as_set"),
        SemanticRule(p.assign, (0, "uses"), ((3, "uses"),), "copy"),
        SemanticRule(p.ret, (0, "uses"), ((2, "name"),), "as_set"),
        SemanticRule(p.ret, (0, "defines"), (), "const", (fs(),)),
        SemanticRule(p.lhs, (0, "name"), ((1, "name"),), "copy"),
        SemanticRule(p.var, (0, "name"), ((2, "val"),), "concat", ("v",)),
        SemanticRule(p.rhs, (0, "uses"), ((1, "uses"),), "copy"),
        SemanticRule(p.expr_unary, (0, "uses"), ((1, "uses"),), "copy"),
        SemanticRule(p.expr_binary, (0, "uses"), ((1, "uses"),), "copy"),
        SemanticRule(p.unary_op_expr, (0, "uses"), ((2, "uses"),), "copy"),
        SemanticRule(p.unary_func_expr, (0, "uses"), ((3, "uses"),), "copy"),
        SemanticRule(p.binary, (0, "uses"), ((1, "uses"), (3, "uses")), "union"),
        SemanticRule(p.operand_var, (0, "uses"), ((1, "name"),), "as_set"),
        SemanticRule(p.operand_imm, (0, "uses"), (), "const", (fs(),)),
    ]
    for tok, idx in p.var_id.items():
        rules.append(SemanticRule(idx, (0, "val"), (), "const", (tok,)))
    return AttributeSchema("program", decls, rules)


# ---------------------------------------------------------------------------
# Checker


def _stat_nodes(tree: DerivationTree) -> list[int]:
    """Statement nodes in program order, walking the stat-list spine."""
    program = tree.node(tree.root)
    node = tree.node(program.children[0])
    out: list[int] = []
    while True:
        out.append(node.children[0])
        if len(node.children) == 1:
            return out
        node = tree.node(node.children[2])


class ProgramLanguage:
    """Parser, checker, interpreter and decode semantics for one grammar."""

    def __init__(self, grammar: Grammar):
        self.grammar = grammar
        self.prods = _Prods(grammar)
        self.schema = build_program_schema(grammar)

    # -- parsing ------------------------------------------------------------

    def parse(self, text: str) -> DerivationTree:
        return _Parser(self, text).parse()

    def ast(self, tree: DerivationTree) -> ProgramAst:
        statements = tuple(self._stat_ast(tree, sid) for sid in _stat_nodes(tree))
        return ProgramAst(statements)

    def _stat_ast(self, tree: DerivationTree, stat_id: int) -> Statement:
        stat = tree.node(stat_id)
        inner = tree.node(stat.children[0])
        if inner.symbol.name == "return":
            return Return("".join(tree.subtree_terminals(inner.children[1])))
        lhs, _eq, rhs = inner.children
        target = "".join(tree.subtree_terminals(lhs))
        expr_node = tree.node(tree.node(rhs).children[0])
        return Assign(target, self._expr_ast(tree, expr_node.children[0]))

    def _expr_ast(self, tree: DerivationTree, node_id: int) -> Expr:
        node = tree.node(node_id)
        if node.symbol.name == "binary expr":
            left, op, right = node.children
            return BinOp(
                self._operand_ast(tree, left),
                tree.subtree_terminals(op)[0],
                self._operand_ast(tree, right),
            )
        if node.prod_index == self.prods.unary_op_expr:
            op, operand = node.children
            return UnaryOp(
                tree.subtree_terminals(op)[0], self._operand_ast(tree, operand)
            )
        func = tree.subtree_terminals(node.children[0])[0]
        return FuncCall(func, self._operand_ast(tree, node.children[2]))

    def _operand_ast(self, tree: DerivationTree, node_id: int) -> Operand:
        node = tree.node(node_id)
        child = tree.node(node.children[0])
        text = "".join(tree.subtree_terminals(node_id))
        if child.symbol.name == "var":
            return VarRef(text)
        return Number(text)

    # -- checking -----------------------------------------------------------

    def check(self, tree: DerivationTree, single_assignment: bool = False) -> CheckReport:
        values = evaluate_offline(self.schema, tree)
        report = CheckReport()
        stats = _stat_nodes(tree)
        last = len(stats) - 1
        defined = {INPUT_VAR}
        assigned: set[str] = set()
        for i, stat_id in enumerate(stats):
            uses = values[(stat_id, "uses")]
            defines = values[(stat_id, "defines")]
            is_ret = values[(stat_id, "is_ret")]
            for name in sorted(uses - defined):
                report.add("undefined-use", i, f"{name} used before definition")
            if is_ret and i != last:
                report.add("missing-return", i, "return before the final statement")
            if not is_ret and i == last:
                report.add("missing-return", i, "final statement is not a return")
            if single_assignment:
                for name in sorted(defines & assigned):
                    report.add("reassignment", i, f"{name} assigned more than once")
            assigned |= defines
            defined |= defines
        if len(stats) > MAX_TOTAL_STATEMENTS:
            report.add(
                "statement-budget",
                len(stats),
                f"{len(stats)} statements exceed the budget of {MAX_TOTAL_STATEMENTS}",
            )
        return report

    # -- decode semantics ----------------------------------------------------

    def semantics(self, min_assigns: int = 0, max_assigns: int = 9) -> "ProgramSemantics":
        return ProgramSemantics(self, min_assigns, max_assigns)


# ---------------------------------------------------------------------------
# Interpreter and distance


class InterpreterError(RuntimeError):
    pass


def _eval_operand(env: dict, operand: Operand):
    if isinstance(operand, VarRef):
        try:
            return env[operand.name]
        except KeyError:
            raise InterpreterError(f"{operand.name} evaluated before definition") from None
    return np.float64(operand.value)


def interpret(ast: ProgramAst, v0):
    """Evaluate a program at input value(s) v0 with IEEE float semantics.

    Accepts a scalar or an ndarray; non-finite intermediates propagate.
    """
    x = np.asarray(v0, dtype=np.float64)
    env: dict = {INPUT_VAR: x}
    unary = {"+": lambda a: +a, "-": lambda a: -a}
    funcs = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
    binary = {
        "+": lambda a, b: a + b,
        "-": lambda a, b: a - b,
        "*": lambda a, b: a * b,
        "/": lambda a, b: a / b,
    }
    with np.errstate(all="ignore"):
        for stmt in ast.statements:
            if isinstance(stmt, Return):
                try:
                    result = env[stmt.var]
                except KeyError:
                    raise InterpreterError(f"{stmt.var} returned before definition") from None
                return np.broadcast_to(result, x.shape).copy() if x.shape else result
            expr = stmt.expr
            if isinstance(expr, UnaryOp):
                value = unary[expr.op](_eval_operand(env, expr.operand))
            elif isinstance(expr, FuncCall):
                value = funcs[expr.fn](_eval_operand(env, expr.operand))
            else:
                value = binary[expr.op](
                    _eval_operand(env, expr.left), _eval_operand(env, expr.right)
                )
            env[stmt.target] = value
    raise InterpreterError("program has no return statement")


def program_distance(candidate: ProgramAst, target: ProgramAst) -> float:
    """log(1 + MSE) of program outputs over 1000 evenly spaced inputs.

    The grid spans [-5, 5] inclusive; non-finite outputs are clamped to a
    large sentinel before squaring so the metric stays total.
    """
    lo, hi, n = DISTANCE_GRID
    xs = np.linspace(lo, hi, n)
    outs = []
    for ast in (candidate, target):
        with np.errstate(all="ignore"):
            out = np.asarray(interpret(ast, xs), dtype=np.float64)
        out = np.where(np.isfinite(out), out, NONFINITE_SENTINEL)
        outs.append(out)
    mse = float(np.mean((outs[0] - outs[1]) ** 2))
    return float(np.log1p(mse))


# ---------------------------------------------------------------------------
# Decode-time semantics


class ProgramRun(DecodeRun):
    def __init__(self, semantics: "ProgramSemantics", tree: DerivationTree):
        super().__init__(semantics, tree)
        self.defined = {INPUT_VAR}

    # -- structure bookkeeping ----------------------------------------------

    def observe_expand(self, node_id: int, prod_index: int) -> None:
        p = self.semantics.lang.prods
        tree = self.tree
        node = tree.node(node_id)
        name = node.symbol.name
        if name == "program":
            tree.node(node.children[0]).meta["index"] = 0
        elif name == "stat list":
            my_index = node.meta.get("index", 0)
            if prod_index == p.statlist_rec:
                stat, _semi, rest = node.children
                tree.node(stat).meta["is_last"] = False
                tree.node(rest).meta["index"] = my_index + 1
            else:
                tree.node(node.children[0]).meta["is_last"] = True
        elif name == "var":
            role = self._var_role(node_id)
            tree.node(node.children[1]).meta["role"] = role

    def _var_role(self, var_id: int) -> str:
        parent = self.tree.node(self.tree.node(var_id).parent)
        if parent.symbol.name == "operand":
            return "use"
        grand = self.tree.node(parent.parent)
        return "def" if grand.symbol.name == "assign" else "ret"

    def observe_complete(self, node_id: int) -> None:
        node = self.tree.node(node_id)
        if node.symbol.name == "stat":
            inner = self.tree.node(node.children[0])
            if inner.symbol.name == "assign":
                target = "".join(self.tree.subtree_terminals(inner.children[0]))
                self.defined.add(target)

    # -- masks ----------------------------------------------------------------

    def mask(self, node_id: int) -> list[bool]:
        node = self.tree.node(node_id)
        name = node.symbol.name
        sem = self.semantics
        p = sem.lang.prods
        if name == "stat list":
            index = node.meta.get("index", 0)
            out = [False, False]
            out[p.statlist_rec_pos] = index + 1 <= sem.max_assigns
            out[p.statlist_base_pos] = index >= sem.min_assigns
            return out
        if name == "stat":
            out = [False, False]
            if node.meta.get("is_last", True):
                out[p.stat_return_pos] = True
            else:
                out[p.stat_assign_pos] = True
            return out
        if name == "var id":
            if node.meta.get("role", "use") == "def":
                return [True] * len(self.grammar.alternatives(name))
            return [
                f"v{self.grammar.production(i).rhs[0].name}" in self.defined
                for i in self.grammar.alternatives(name)
            ]
        return [True] * len(self.grammar.alternatives(name))

    # -- budget ---------------------------------------------------------------

    def node_min(self, node_id: int) -> int:
        node = self.tree.node(node_id)
        name = node.symbol.name
        sem = self.semantics
        if name == "stat list":
            return sem.statlist_min(node.meta.get("index", 0))
        if name == "stat":
            if node.meta.get("is_last", True):
                return sem.stat_return_min
            return sem.stat_assign_min
        return sem.min_table[name]

    def rule_min(self, node_id: int, prod_index: int) -> int:
        sem = self.semantics
        p = sem.lang.prods
        node = self.tree.node(node_id)
        if node.symbol.name == "stat list":
            index = node.meta.get("index", 0)
            if prod_index == p.statlist_rec:
                return sem.stat_assign_min + sem.statlist_min(index + 1)
            return sem.stat_return_min
        return super().rule_min(node_id, prod_index)


class ProgramSemantics(DecodeSemantics):
    run_class = ProgramRun

    def __init__(self, lang: ProgramLanguage, min_assigns: int = 0, max_assigns: int = 9):
        super().__init__(lang.grammar, lang.schema)
        if not 0 <= min_assigns <= max_assigns:
            raise ValueError("need 0 <= min_assigns <= max_assigns")
        self.lang = lang
        self.min_assigns = min_assigns
        self.max_assigns = max_assigns
        table = self.min_table
        self.stat_assign_min = 1 + table["assign"]
        self.stat_return_min = 1 + table["return"]
        self._statlist_min_memo: dict[int, int] = {}

    def statlist_min(self, index: int) -> int:
        memo = self._statlist_min_memo
        if index not in memo:
            if index >= self.min_assigns:
                memo[index] = 1 + self.stat_return_min
            else:
                memo[index] = 1 + self.stat_assign_min + self.statlist_min(index + 1)
        return memo[index]


# ---------------------------------------------------------------------------
# Corpus generation


def generate_corpus(
    lang: ProgramLanguage,
    n: int,
    max_statements: int = 5,
    seed: int = 0,
    max_steps: int = 80,
    scorer=None,
) -> Iterator[str]:
    """Random checker-valid programs with 1..max_statements assignments."""
    from .scorer import UniformScorer

    scorer = scorer or UniformScorer(lang.grammar)
    semantics_cache = {
        t: lang.semantics(min_assigns=t, max_assigns=t)
        for t in range(1, max_statements + 1)
    }
    for item in range(n):
        rng = random.Random(seed ^ item)
        target = rng.randint(1, max_statements)
        result = gen_tree(
            lang.grammar,
            semantics_cache[target],
            scorer,
            rng,
            max_steps,
            BudgetMode.STRICT,
        )
        if not result.complete:
            raise RuntimeError("strict-budget generation returned incomplete tree")
        yield yield_string(result.tree)
