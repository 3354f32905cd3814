"""Abstract-syntax grammar: compile, action sequences and replay.

The grammar is authored in a small plain-text format:

    root query
    query    = Query(sel_item* sels, table* tabs, where_opt where)
    sel_item = SelCol(column col) | SelAgg(agg_op op, column col)
    column   = $COLUMN
    table    = $TABLE

Each type owns alternative productions; fields are ``type name`` with a
``*`` suffix for sequences. Sequence fields are desugared into generated
cons-list types so decoding is pure rule application. ``$COLUMN`` and
``$TABLE`` declare pointer terminals filled by schema selection actions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

TERMINAL_COLUMN = "$COLUMN"
TERMINAL_TABLE = "$TABLE"


class GrammarError(ValueError):
    """Malformed grammar text or unsatisfiable structure."""


class IllegalActionError(ValueError):
    """An action that the frontier cannot accept at this step."""


@dataclass(frozen=True)
class FieldSpec:
    type_name: str
    name: str


@dataclass
class Production:
    prod_id: int
    name: str
    type_name: str
    fields: list[FieldSpec]

    @property
    def arity(self) -> int:
        return len(self.fields)


@dataclass(frozen=True)
class ApplyRule:
    production_id: int


@dataclass(frozen=True)
class SelectTable:
    index: int


@dataclass(frozen=True)
class SelectColumn:
    index: int


Action = ApplyRule | SelectTable | SelectColumn


class Grammar:
    def __init__(self, root: str, productions: list[Production], terminals: dict[str, str]):
        self.root = root
        self.productions = productions
        self.terminals = terminals  # type name -> "column" | "table"
        self.by_name = {p.name: p for p in productions}
        self.by_type: dict[str, list[Production]] = {}
        for p in productions:
            self.by_type.setdefault(p.type_name, []).append(p)
        self._validate()

    def _validate(self) -> None:
        if len(self.by_name) != len(self.productions):
            raise GrammarError("duplicate production names")
        defined = set(self.by_type) | set(self.terminals)
        if self.root not in defined:
            raise GrammarError(f"root type {self.root!r} is not defined")
        for p in self.productions:
            for f in p.fields:
                if f.type_name not in defined:
                    raise GrammarError(
                        f"production {p.name!r} references undefined type {f.type_name!r}")
        reachable: set[str] = set()
        frontier = [self.root]
        while frontier:
            t = frontier.pop()
            if t in reachable:
                continue
            reachable.add(t)
            for p in self.by_type.get(t, []):
                frontier.extend(f.type_name for f in p.fields)
        unreachable = [p.name for p in self.productions if p.type_name not in reachable]
        if unreachable:
            raise GrammarError(f"productions unreachable from root: {unreachable}")

    def is_column_type(self, type_name: str) -> bool:
        return self.terminals.get(type_name) == "column"

    def is_table_type(self, type_name: str) -> bool:
        return self.terminals.get(type_name) == "table"

    def legal_production_ids(self, type_name: str) -> list[int]:
        return [p.prod_id for p in self.by_type.get(type_name, [])]

    def list_type(self, elem_type: str) -> str:
        return f"{elem_type}_list"

    def __len__(self) -> int:
        return len(self.productions)


_TYPE_LINE = re.compile(r"^(\w+)\s*=\s*(.+)$")
_ALT = re.compile(r"^(\w+)\s*(?:\(([^)]*)\))?$")


def compile_grammar(text: str) -> Grammar:
    """Parse and validate the grammar text; desugars sequence fields."""
    root: str | None = None
    raw_types: dict[str, list[tuple[str, list[tuple[str, str, bool]]]]] = {}
    terminals: dict[str, str] = {}
    order: list[str] = []

    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("root "):
            root = line.split()[1]
            continue
        m = _TYPE_LINE.match(line)
        if not m:
            raise GrammarError(f"line {lineno}: cannot parse {line!r}")
        type_name, rhs = m.group(1), m.group(2).strip()
        if type_name in raw_types or type_name in terminals:
            raise GrammarError(f"line {lineno}: type {type_name!r} defined twice")
        if rhs == TERMINAL_COLUMN:
            terminals[type_name] = "column"
            continue
        if rhs == TERMINAL_TABLE:
            terminals[type_name] = "table"
            continue
        alts = []
        for alt in rhs.split("|"):
            alt = alt.strip()
            am = _ALT.match(alt)
            if not am:
                raise GrammarError(f"line {lineno}: bad production {alt!r}")
            pname, fields_src = am.group(1), am.group(2)
            fields = []
            if fields_src and fields_src.strip():
                for fs in fields_src.split(","):
                    parts = fs.split()
                    if len(parts) != 2:
                        raise GrammarError(f"line {lineno}: bad field {fs.strip()!r}")
                    ftype, fname = parts
                    seq = ftype.endswith("*")
                    fields.append((ftype.rstrip("*"), fname, seq))
            alts.append((pname, fields))
        raw_types[type_name] = alts
        order.append(type_name)

    if not order and not terminals:
        raise GrammarError("empty grammar")
    root = root or order[0]

    # desugar sequence fields into generated cons-list types
    list_types_needed: list[str] = []
    seen_lists: set[str] = set()
    for alts in raw_types.values():
        for _, fl in alts:
            for ftype, _, seq in fl:
                if seq and ftype not in seen_lists:
                    seen_lists.add(ftype)
                    list_types_needed.append(ftype)

    productions: list[Production] = []

    def add_production(name: str, type_name: str, fields: list[FieldSpec]) -> None:
        productions.append(Production(len(productions), name, type_name, fields))

    for type_name in order:
        for pname, fl in raw_types[type_name]:
            fields = [FieldSpec(f"{ft}_list" if seq else ft, fn) for ft, fn, seq in fl]
            add_production(pname, type_name, fields)
    for elem in list_types_needed:
        lt = f"{elem}_list"
        add_production(f"{elem}_list_last", lt, [FieldSpec(elem, "head")])
        add_production(f"{elem}_list_cons", lt, [FieldSpec(elem, "head"), FieldSpec(lt, "tail")])

    return Grammar(root=root, productions=productions, terminals=terminals)


# ---------------------------------------------------------------------------
# AST nodes and action sequences
# ---------------------------------------------------------------------------

@dataclass
class Node:
    """AST node; children align with the production's fields and are either
    nested nodes or integer schema indices for pointer terminals."""

    production: Production
    children: list

    def field(self, name: str):
        for f, c in zip(self.production.fields, self.children):
            if f.name == name:
                return c
        raise KeyError(name)


def make_list(grammar: Grammar, elem_type: str, items: list[Node | int]) -> Node:
    """Build the cons-list node chain for a non-empty sequence."""
    if not items:
        raise GrammarError(f"empty {elem_type} sequence cannot be represented")
    last = grammar.by_name[f"{elem_type}_list_last"]
    cons = grammar.by_name[f"{elem_type}_list_cons"]
    node = Node(last, [items[-1]])
    for item in reversed(items[:-1]):
        node = Node(cons, [item, node])
    return node


def list_items(node: Node) -> list:
    """Flatten a cons-list node chain back into the item list."""
    items = []
    while True:
        items.append(node.children[0])
        if node.production.name.endswith("_last"):
            return items
        node = node.children[1]


def ast_to_actions(grammar: Grammar, node: Node) -> list[Action]:
    """Depth-first pre-order action sequence for a complete AST."""
    actions: list[Action] = [ApplyRule(node.production.prod_id)]
    for f, child in zip(node.production.fields, node.children):
        if grammar.is_column_type(f.type_name):
            actions.append(SelectColumn(child))
        elif grammar.is_table_type(f.type_name):
            actions.append(SelectTable(child))
        else:
            actions.extend(ast_to_actions(grammar, child))
    return actions


def actions_to_ast(grammar: Grammar, actions: list[Action]) -> Node:
    """Replay an action sequence, enforcing frontier legality at every step."""
    if not actions:
        raise IllegalActionError("empty action sequence")
    pos = 0

    def expand(type_name: str):
        nonlocal pos
        if pos >= len(actions):
            raise IllegalActionError(f"actions exhausted while expanding {type_name!r}")
        action = actions[pos]
        pos += 1
        if grammar.is_column_type(type_name):
            if not isinstance(action, SelectColumn):
                raise IllegalActionError(f"step {pos - 1}: expected SelectColumn, got {action}")
            return action.index
        if grammar.is_table_type(type_name):
            if not isinstance(action, SelectTable):
                raise IllegalActionError(f"step {pos - 1}: expected SelectTable, got {action}")
            return action.index
        if not isinstance(action, ApplyRule):
            raise IllegalActionError(f"step {pos - 1}: expected ApplyRule({type_name}), got {action}")
        prod = grammar.productions[action.production_id]
        if prod.type_name != type_name:
            raise IllegalActionError(
                f"step {pos - 1}: rule {prod.name!r} does not produce {type_name!r}")
        return Node(prod, [expand(f.type_name) for f in prod.fields])

    root = expand(grammar.root)
    if pos != len(actions):
        raise IllegalActionError(f"{len(actions) - pos} trailing actions after the root completed")
    return root


# ---------------------------------------------------------------------------
# the bundled mini-SQL grammar
# ---------------------------------------------------------------------------

MINI_SQL_GRAMMAR = """\
# mini-SQL abstract grammar: single select core with optional clauses,
# one nesting level through in-subqueries and compound operators
root query

query        = Query(sel_item* sels, table* tabs, where_opt where, group_opt group, order_opt order, limit_opt limit, compound_opt compound)
sel_item     = SelCol(column col) | SelAgg(agg_op op, column col)
agg_op       = AggMin | AggMax | AggCount | AggSum | AggAvg
where_opt    = NoWhere | Where(cond c)
cond         = And(cond a, cond b) | Or(cond a, cond b) | Cmp(column col, cmp_op op, value v) | InSub(column col, subquery q)
cmp_op       = Eq | Ne | Gt | Lt | Ge | Le | Like
value        = Val
group_opt    = NoGroup | GroupBy(column col, having_opt having)
having_opt   = NoHaving | Having(agg_op op, column col, cmp_op cmp, value v)
order_opt    = NoOrder | OrderBy(order_key key, direction dir)
order_key    = OrderCol(column col) | OrderAgg(agg_op op, column col)
direction    = Asc | Desc
limit_opt    = NoLimit | Limit
compound_opt = NoCompound | Union(subquery q) | Except(subquery q) | Intersect(subquery q)
subquery     = SubQuery(sel_item* sels, table* tabs, swhere_opt where)
swhere_opt   = SNoWhere | SWhere(scond c)
scond        = SAnd(scond a, scond b) | SOr(scond a, scond b) | SCmp(column col, cmp_op op, value v)
column       = $COLUMN
table        = $TABLE
"""


def mini_sql_grammar() -> Grammar:
    return compile_grammar(MINI_SQL_GRAMMAR)
