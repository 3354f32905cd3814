"""Mini-SQL text: parsing into grammar ASTs, rendering, canonical comparison.

The reader accepts the subset the bundled grammar generates: a single select
core with optional where / group-having / order / limit clauses, one
in-subquery nesting level and union/except/intersect compounds. Literals
(numbers, quoted strings, ``?``) all collapse to the value placeholder.

Exact-match comparison canonicalizes clause components: the select list and
from list become order-free collections, and/or trees flatten and sort, and
literal values are ignored.
"""

from __future__ import annotations

import re

from .grammar import Action, Grammar, Node, ast_to_actions, list_items, make_list
from .schema import SchemaDef


class SqlParseError(ValueError):
    """Input text is outside the mini-SQL subset."""


class ResolutionError(ValueError):
    """A table/column name did not resolve to exactly one schema entity."""

    def __init__(self, name: str, candidates: list[str]):
        self.name = name
        self.candidates = candidates
        super().__init__(f"cannot resolve {name!r}; candidates: {candidates}")


AGG_PRODUCTIONS = {"min": "AggMin", "max": "AggMax", "count": "AggCount",
                   "sum": "AggSum", "avg": "AggAvg"}
AGG_NAMES = {v: k for k, v in AGG_PRODUCTIONS.items()}
CMP_PRODUCTIONS = {"=": "Eq", "!=": "Ne", "<>": "Ne", ">": "Gt", "<": "Lt",
                   ">=": "Ge", "<=": "Le", "like": "Like"}
CMP_SYMBOLS = {"Eq": "=", "Ne": "!=", "Gt": ">", "Lt": "<", "Ge": ">=",
               "Le": "<=", "Like": "like"}
COMPOUND_PRODUCTIONS = {"union": "Union", "except": "Except", "intersect": "Intersect"}

_TOKEN_RE = re.compile(
    r"\s*(?:(>=|<=|!=|<>|=|>|<|\(|\)|,|\*|\?)"
    r"|'([^']*)'"
    r"|(\d+(?:\.\d+)?)"
    r"|([A-Za-z_][A-Za-z0-9_.]*))")


def tokenize_sql(text: str) -> list[str]:
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            raise SqlParseError(f"cannot tokenize at position {pos}: {text[pos:pos + 20]!r}")
        op, string, number, ident = m.groups()
        if op is not None:
            tokens.append(op)
        elif string is not None:
            tokens.append("?")       # literal value placeholder
        elif number is not None:
            tokens.append("?")
        else:
            tokens.append(ident.lower())
        pos = m.end()
    return tokens


def resolve_table(schema: SchemaDef, name: str) -> int:
    name = name.lower()
    hits = [t for t in range(schema.n_tables) if schema.table_name(t) == name]
    if len(hits) != 1:
        raise ResolutionError(name, [schema.table_name(t) for t in range(schema.n_tables)])
    return hits[0]


def resolve_column(schema: SchemaDef, name: str) -> int:
    name = name.lower()
    if name == "*":
        hits = [i for i, c in enumerate(schema.columns) if c.is_wildcard]
        if len(hits) != 1:
            raise ResolutionError("*", [])
        return hits[0]
    if "." in name:
        tab_name, col_name = name.split(".", 1)
        ti = resolve_table(schema, tab_name)
        hits = [i for i, c in enumerate(schema.columns)
                if c.table_index == ti and "_".join(c.name_tokens) == col_name]
    else:
        hits = [i for i, c in enumerate(schema.columns)
                if not c.is_wildcard and "_".join(c.name_tokens) == name]
    if len(hits) != 1:
        candidates = [schema.column_name(i) for i, c in enumerate(schema.columns)
                      if not c.is_wildcard and "_".join(c.name_tokens) == name.split(".")[-1]]
        raise ResolutionError(name, candidates)
    return hits[0]


class _Parser:
    def __init__(self, grammar: Grammar, schema: SchemaDef, tokens: list[str]):
        self.g = grammar
        self.schema = schema
        self.toks = tokens
        self.pos = 0

    def peek(self) -> str | None:
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def next(self) -> str:
        if self.pos >= len(self.toks):
            raise SqlParseError("unexpected end of query")
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def expect(self, tok: str) -> None:
        got = self.next()
        if got != tok:
            raise SqlParseError(f"expected {tok!r}, got {got!r} at token {self.pos - 1}")

    def accept(self, tok: str) -> bool:
        if self.peek() == tok:
            self.pos += 1
            return True
        return False

    def node(self, name: str, *children) -> Node:
        return Node(self.g.by_name[name], list(children))

    # --- leaf helpers ---

    def column(self) -> int:
        return resolve_column(self.schema, self.next())

    def value(self) -> Node:
        tok = self.next()
        if tok != "?":
            raise SqlParseError(f"expected a literal value, got {tok!r}")
        return self.node("Val")

    def agg(self, tok: str) -> Node:
        return self.node(AGG_PRODUCTIONS[tok])

    # --- clauses ---

    def sel_items(self) -> list[Node]:
        items = [self.sel_item()]
        while self.accept(","):
            items.append(self.sel_item())
        return items

    def sel_item(self) -> Node:
        tok = self.peek()
        if tok in AGG_PRODUCTIONS:
            self.next()
            self.expect("(")
            col = self.column()
            self.expect(")")
            return self.node("SelAgg", self.agg(tok), col)
        return self.node("SelCol", self.column())

    def tables(self) -> list[int]:
        tabs = [resolve_table(self.schema, self.next())]
        while True:
            if self.accept(","):
                tabs.append(resolve_table(self.schema, self.next()))
            elif self.accept("join"):
                tabs.append(resolve_table(self.schema, self.next()))
            else:
                return tabs

    def condition(self, sub: bool) -> Node:
        left = self.and_chain(sub)
        while self.accept("or"):
            right = self.and_chain(sub)
            left = self.node("SOr" if sub else "Or", left, right)
        return left

    def and_chain(self, sub: bool) -> Node:
        left = self.cond_atom(sub)
        while self.accept("and"):
            right = self.cond_atom(sub)
            left = self.node("SAnd" if sub else "And", left, right)
        return left

    def cond_atom(self, sub: bool) -> Node:
        if self.accept("("):
            inner = self.condition(sub)
            self.expect(")")
            return inner
        col = self.column()
        op = self.next()
        if op == "in":
            if sub:
                raise SqlParseError("in-subqueries cannot nest")
            self.expect("(")
            inner = self.subquery()
            self.expect(")")
            return self.node("InSub", col, inner)
        if op not in CMP_PRODUCTIONS:
            raise SqlParseError(f"unknown comparison operator {op!r}")
        return self.node("SCmp" if sub else "Cmp", col, self.node(CMP_PRODUCTIONS[op]),
                         self.value())

    def group(self) -> Node:
        self.expect("by")
        col = self.column()
        having = self.node("NoHaving")
        if self.accept("having"):
            agg_tok = self.next()
            if agg_tok not in AGG_PRODUCTIONS:
                raise SqlParseError(f"having expects an aggregate, got {agg_tok!r}")
            self.expect("(")
            hcol = self.column()
            self.expect(")")
            cmp_tok = self.next()
            if cmp_tok not in CMP_PRODUCTIONS:
                raise SqlParseError(f"unknown comparison operator {cmp_tok!r}")
            having = self.node("Having", self.agg(agg_tok), hcol,
                               self.node(CMP_PRODUCTIONS[cmp_tok]), self.value())
        return self.node("GroupBy", col, having)

    def order(self) -> Node:
        self.expect("by")
        tok = self.peek()
        if tok in AGG_PRODUCTIONS:
            self.next()
            self.expect("(")
            col = self.column()
            self.expect(")")
            key = self.node("OrderAgg", self.agg(tok), col)
        else:
            key = self.node("OrderCol", self.column())
        direction = self.node("Desc") if self.accept("desc") else (
            self.node("Asc") if self.accept("asc") else self.node("Asc"))
        return self.node("OrderBy", key, direction)

    def subquery(self) -> Node:
        self.expect("select")
        sels = self.sel_items()
        self.expect("from")
        tabs = self.tables()
        where = self.node("SNoWhere")
        if self.accept("where"):
            where = self.node("SWhere", self.condition(sub=True))
        return self.node("SubQuery",
                         make_list(self.g, "sel_item", sels),
                         make_list(self.g, "table", tabs),
                         where)

    def query(self) -> Node:
        self.expect("select")
        sels = self.sel_items()
        self.expect("from")
        tabs = self.tables()
        where = self.node("NoWhere")
        if self.accept("where"):
            where = self.node("Where", self.condition(sub=False))
        group = self.node("NoGroup")
        if self.accept("group"):
            group = self.group()
        order = self.node("NoOrder")
        if self.accept("order"):
            order = self.order()
        limit = self.node("NoLimit")
        if self.accept("limit"):
            self.next()  # the count literal is not modeled
            limit = self.node("Limit")
        compound = self.node("NoCompound")
        tok = self.peek()
        if tok in COMPOUND_PRODUCTIONS:
            self.next()
            compound = self.node(COMPOUND_PRODUCTIONS[tok], self.subquery())
        if self.pos != len(self.toks):
            raise SqlParseError(f"trailing tokens at {self.pos}: {self.toks[self.pos:]}")
        return self.node("Query",
                         make_list(self.g, "sel_item", sels),
                         make_list(self.g, "table", tabs),
                         where, group, order, limit, compound)


def parse_sql(sql: str, grammar: Grammar, schema: SchemaDef) -> Node:
    return _Parser(grammar, schema, tokenize_sql(sql)).query()


def sql_to_actions(sql: str, grammar: Grammar, schema: SchemaDef) -> list[Action]:
    """Deterministic depth-first action sequence for a query text."""
    return ast_to_actions(grammar, parse_sql(sql, grammar, schema))


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

def _col_str(schema: SchemaDef, idx: int) -> str:
    return schema.column_name(idx)


def _sel_item_str(schema: SchemaDef, item: Node) -> str:
    if item.production.name == "SelCol":
        return _col_str(schema, item.children[0])
    agg, col = item.children
    return f"{AGG_NAMES[agg.production.name]}({_col_str(schema, col)})"


def _cond_str(schema: SchemaDef, node: Node) -> str:
    name = node.production.name
    if name in ("And", "SAnd"):
        return f"({_cond_str(schema, node.children[0])} and {_cond_str(schema, node.children[1])})"
    if name in ("Or", "SOr"):
        return f"({_cond_str(schema, node.children[0])} or {_cond_str(schema, node.children[1])})"
    if name in ("Cmp", "SCmp"):
        col, op, _ = node.children
        return f"{_col_str(schema, col)} {CMP_SYMBOLS[op.production.name]} ?"
    if name == "InSub":
        col, sub = node.children
        return f"{_col_str(schema, col)} in ({_core_str(schema, sub)})"
    raise ValueError(f"not a condition node: {name}")


def _core_str(schema: SchemaDef, node: Node) -> str:
    sels = ", ".join(_sel_item_str(schema, i) for i in list_items(node.children[0]))
    tabs = ", ".join(schema.table_name(t) for t in list_items(node.children[1]))
    out = f"select {sels} from {tabs}"
    where = node.field("where")
    if where.production.name in ("Where", "SWhere"):
        out += f" where {_cond_str(schema, where.children[0])}"
    return out


def ast_to_sql(grammar: Grammar, node: Node, schema: SchemaDef) -> str:
    """Normalized lowercase text with explicit parentheses in conditions."""
    out = _core_str(schema, node)
    group = node.field("group")
    if group.production.name == "GroupBy":
        out += f" group by {_col_str(schema, group.children[0])}"
        having = group.children[1]
        if having.production.name == "Having":
            agg, col, cmp, _ = having.children
            out += (f" having {AGG_NAMES[agg.production.name]}({_col_str(schema, col)}) "
                    f"{CMP_SYMBOLS[cmp.production.name]} ?")
    order = node.field("order")
    if order.production.name == "OrderBy":
        key, direction = order.children
        if key.production.name == "OrderCol":
            key_str = _col_str(schema, key.children[0])
        else:
            agg, col = key.children
            key_str = f"{AGG_NAMES[agg.production.name]}({_col_str(schema, col)})"
        out += f" order by {key_str} {'desc' if direction.production.name == 'Desc' else 'asc'}"
    if node.field("limit").production.name == "Limit":
        out += " limit ?"
    compound = node.field("compound")
    if compound.production.name != "NoCompound":
        out += f" {compound.production.name.lower()} {_core_str(schema, compound.children[0])}"
    return out


def actions_to_sql(grammar: Grammar, actions: list[Action], schema: SchemaDef) -> str:
    from .grammar import actions_to_ast
    return ast_to_sql(grammar, actions_to_ast(grammar, actions), schema)


# ---------------------------------------------------------------------------
# canonical comparison (exact match)
# ---------------------------------------------------------------------------

def _canon_sel(item: Node):
    if item.production.name == "SelCol":
        return ("col", item.children[0])
    agg, col = item.children
    return ("agg", AGG_NAMES[agg.production.name], col)


def _canon_cond(node: Node):
    name = node.production.name
    if name in ("And", "SAnd", "Or", "SOr"):
        op = "and" if name in ("And", "SAnd") else "or"
        parts = []

        def flatten(n):
            n_name = n.production.name
            if n_name in ("And", "SAnd") and op == "and":
                flatten(n.children[0])
                flatten(n.children[1])
            elif n_name in ("Or", "SOr") and op == "or":
                flatten(n.children[0])
                flatten(n.children[1])
            else:
                parts.append(_canon_cond(n))

        flatten(node)
        return (op, tuple(sorted(parts, key=repr)))
    if name in ("Cmp", "SCmp"):
        col, cmp_op, _ = node.children
        return ("cmp", col, cmp_op.production.name)
    if name == "InSub":
        col, sub = node.children
        return ("in", col, canonical(sub))
    raise ValueError(f"not a condition node: {name}")


def canonical(node: Node):
    """Order-free clause structure with literal values erased."""
    sels = tuple(sorted((_canon_sel(i) for i in list_items(node.children[0])), key=repr))
    tabs = frozenset(list_items(node.children[1]))
    where = node.field("where")
    where_key = (_canon_cond(where.children[0])
                 if where.production.name in ("Where", "SWhere") else None)
    group_key = order_key = limit_key = compound_key = None
    if node.production.name == "Query":
        group = node.field("group")
        if group.production.name == "GroupBy":
            having = group.children[1]
            having_key = None
            if having.production.name == "Having":
                agg, col, cmp, _ = having.children
                having_key = (AGG_NAMES[agg.production.name], col, cmp.production.name)
            group_key = (group.children[0], having_key)
        order = node.field("order")
        if order.production.name == "OrderBy":
            key, direction = order.children
            if key.production.name == "OrderCol":
                order_key = ("col", key.children[0], direction.production.name)
            else:
                agg, col = key.children
                order_key = ("agg", AGG_NAMES[agg.production.name], col,
                             direction.production.name)
        limit_key = node.field("limit").production.name == "Limit"
        compound = node.field("compound")
        if compound.production.name != "NoCompound":
            compound_key = (compound.production.name.lower(),
                            canonical(compound.children[0]))
    return ("query", sels, tabs, where_key, group_key, order_key, limit_key, compound_key)


def exact_match(a: Node, b: Node) -> bool:
    """Canonicalized component-set equality, ignoring literal values."""
    return canonical(a) == canonical(b)
