"""Question tokens and database schema definitions.

Schemas follow the Spider tables.json layout: table/column name lists,
column types, primary keys and foreign keys. Cell values arrive through an
optional sidecar mapping column index -> list of values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

COLUMN_TYPES = ("text", "number", "time", "boolean", "others")


class SchemaError(ValueError):
    """Schema violates its structural invariants."""


@dataclass(frozen=True)
class Token:
    """One question word; lemma is lowercase (may equal the surface form)."""

    surface: str
    lemma: str
    position: int

    def __post_init__(self):
        if not self.surface:
            raise SchemaError(f"empty token surface at position {self.position}")


def tokens_from_strings(words: list[str], lemmas: list[str] | None = None) -> list[Token]:
    lemmas = lemmas or [w.lower() for w in words]
    return [Token(surface=w, lemma=l.lower(), position=i)
            for i, (w, l) in enumerate(zip(words, lemmas))]


@dataclass
class ColumnDef:
    table_index: int | None          # None for the wildcard column "*"
    name_tokens: list[str]
    col_type: str = "text"
    cell_values: list[str] = field(default_factory=list)

    @property
    def is_wildcard(self) -> bool:
        return self.table_index is None


@dataclass
class TableDef:
    name_tokens: list[str]


@dataclass
class SchemaDef:
    db_id: str
    tables: list[TableDef]
    columns: list[ColumnDef]
    primary_keys: list[int] = field(default_factory=list)
    foreign_keys: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        ncol = len(self.columns)
        ntab = len(self.tables)
        for c in self.columns:
            if c.table_index is not None and not (0 <= c.table_index < ntab):
                raise SchemaError(f"{self.db_id}: column {c.name_tokens} has bad table index")
            if c.col_type not in COLUMN_TYPES:
                raise SchemaError(f"{self.db_id}: unknown column type {c.col_type!r}")
        for pk in self.primary_keys:
            if not (0 <= pk < ncol) or self.columns[pk].table_index is None:
                raise SchemaError(f"{self.db_id}: primary key {pk} is not a table column")
        for fk, ref in self.foreign_keys:
            if not (0 <= fk < ncol and 0 <= ref < ncol):
                raise SchemaError(f"{self.db_id}: dangling foreign key ({fk},{ref})")
            ta, tb = self.columns[fk].table_index, self.columns[ref].table_index
            if ta is None or tb is None or ta == tb:
                raise SchemaError(f"{self.db_id}: foreign key ({fk},{ref}) must join distinct tables")

    @property
    def n_tables(self) -> int:
        return len(self.tables)

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    @property
    def n_nodes(self) -> int:
        """Schema-graph node count: tables first, then columns."""
        return self.n_tables + self.n_columns

    def table_node(self, table_index: int) -> int:
        return table_index

    def column_node(self, column_index: int) -> int:
        return self.n_tables + column_index

    def columns_of(self, table_index: int) -> list[int]:
        return [i for i, c in enumerate(self.columns) if c.table_index == table_index]

    def table_name(self, table_index: int) -> str:
        return "_".join(self.tables[table_index].name_tokens)

    def column_name(self, column_index: int) -> str:
        col = self.columns[column_index]
        base = "_".join(col.name_tokens)
        if col.table_index is None:
            return base
        return f"{self.table_name(col.table_index)}.{base}"

    def node_labels(self) -> list[str]:
        return ([self.table_name(t) for t in range(self.n_tables)]
                + [self.column_name(c) for c in range(self.n_columns)])


def split_name(name: str) -> list[str]:
    """Lowercase a schema name and split it on underscores and spaces."""
    parts = name.lower().replace("_", " ").split()
    return parts if parts else [name.lower()]


def schema_from_spider(entry: dict, cell_values: dict | None = None) -> SchemaDef:
    """Build a SchemaDef from one Spider tables.json entry.

    ``cell_values`` maps column index (int or str) to a list of values.
    """
    tables = [TableDef(name_tokens=split_name(n)) for n in entry["table_names_original"]]
    columns = []
    for idx, (tab_idx, name) in enumerate(entry["column_names_original"]):
        values = []
        if cell_values:
            raw = cell_values.get(idx, cell_values.get(str(idx), []))
            values = [str(v).lower() for v in raw]
        col_type = entry.get("column_types", ["text"] * (idx + 1))[idx]
        if col_type not in COLUMN_TYPES:
            col_type = "others"
        columns.append(ColumnDef(
            table_index=None if tab_idx < 0 else tab_idx,
            name_tokens=split_name(name) if name != "*" else ["*"],
            col_type=col_type,
            cell_values=values,
        ))
    fks = [(int(a), int(b)) for a, b in entry.get("foreign_keys", [])]
    return SchemaDef(
        db_id=entry["db_id"],
        tables=tables,
        columns=columns,
        primary_keys=[int(k) for k in entry.get("primary_keys", [])],
        foreign_keys=fks,
    )


def schema_to_spider(schema: SchemaDef) -> dict:
    """Inverse of :func:`schema_from_spider` (used when writing corpora)."""
    return {
        "db_id": schema.db_id,
        "table_names_original": ["_".join(t.name_tokens) for t in schema.tables],
        "column_names_original": [
            [-1 if c.table_index is None else c.table_index,
             "*" if c.is_wildcard else "_".join(c.name_tokens)]
            for c in schema.columns
        ],
        "column_types": [c.col_type for c in schema.columns],
        "primary_keys": list(schema.primary_keys),
        "foreign_keys": [list(fk) for fk in schema.foreign_keys],
    }
