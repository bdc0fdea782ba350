"""Columnar in-memory relations and data ingestion.

A relation stores one Python list per attribute.  Cell values are either
64-bit-range ints or strings; a column never mixes the two.  Relations are
immutable after construction (by convention: nothing in the engine mutates
them) and may carry a ``sorted_by`` declaration asserting that rows are
lexicographically non-decreasing over the named attributes.  The declaration
is verified, not trusted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import LoadError, SchemaError, SortednessError

INT = "int"
STR = "str"
KINDS = (INT, STR)


def kind_of(value) -> str:
    """Classify a cell value, rejecting anything but int and str."""
    # bool is an int subclass; it is not a legal cell value.
    if value.__class__ is int:
        return INT
    if value.__class__ is str:
        return STR
    raise SchemaError(f"unsupported value {value!r} of type {type(value).__name__}")


@dataclass
class Relation:
    """Named columnar table.

    ``columns`` maps each attribute in ``attrs`` to a list of equal length.
    Duplicate rows are meaningful: the engine uses bag semantics throughout.
    """

    name: str
    attrs: tuple[str, ...]
    columns: dict[str, list] = field(repr=False)
    sorted_by: tuple[str, ...] | None = None

    def __post_init__(self):
        if len(set(self.attrs)) != len(self.attrs):
            raise SchemaError(f"relation {self.name}: duplicate attribute names {self.attrs}")
        if set(self.columns) != set(self.attrs):
            raise SchemaError(f"relation {self.name}: columns do not match attrs")
        sizes = {len(col) for col in self.columns.values()}
        if len(sizes) > 1:
            raise SchemaError(f"relation {self.name}: ragged columns {sizes}")
        for attr in self.attrs:
            col = self.columns[attr]
            if col:
                k = kind_of(col[0])
                for i, v in enumerate(col):
                    if kind_of(v) != k:
                        raise SchemaError(
                            f"relation {self.name}: column {attr} mixes kinds at row {i}"
                        )
        if self.sorted_by is not None:
            self.sorted_by = tuple(self.sorted_by)
            unknown = set(self.sorted_by) - set(self.attrs)
            if unknown:
                raise SchemaError(f"relation {self.name}: sorted_by names unknown attrs {unknown}")
            _check_sorted(self, self.sorted_by)

    @property
    def size(self) -> int:
        if not self.attrs:
            return 0
        return len(self.columns[self.attrs[0]])

    def kind(self, attr: str) -> str | None:
        """Kind of a column, or None when the relation is empty."""
        col = self.columns[attr]
        return kind_of(col[0]) if col else None

    def row(self, offset: int) -> tuple:
        return tuple(self.columns[a][offset] for a in self.attrs)

    def rows(self):
        cols = [self.columns[a] for a in self.attrs]
        return list(zip(*cols)) if cols else []

    @classmethod
    def from_rows(cls, name, attrs, rows, sorted_by=None) -> "Relation":
        attrs = tuple(attrs)
        columns = {a: [] for a in attrs}
        for r in rows:
            if len(r) != len(attrs):
                raise SchemaError(f"relation {name}: row {r!r} has arity {len(r)}, expected {len(attrs)}")
            for a, v in zip(attrs, r):
                columns[a].append(v)
        return cls(name, attrs, columns, sorted_by)

    def sorted_copy(self, order: tuple[str, ...], name: str | None = None) -> "Relation":
        """Rows re-sorted lexicographically by ``order`` then the remaining attrs."""
        full_order = tuple(order) + tuple(a for a in self.attrs if a not in order)
        idx = [self.attrs.index(a) for a in full_order]
        rows = sorted(self.rows(), key=lambda r: tuple(r[i] for i in idx))
        return Relation.from_rows(name or self.name, self.attrs, rows, sorted_by=full_order)


def _check_sorted(rel: Relation, attrs: tuple[str, ...]) -> None:
    cols = [rel.columns[a] for a in attrs]
    prev = None
    for i in range(rel.size):
        key = tuple(c[i] for c in cols)
        if prev is not None and key < prev:
            raise SortednessError(
                f"relation {rel.name}: sortedness over {attrs} violated at row {i}"
            )
        prev = key


def load_csv(path, name, schema, sorted_by=None) -> Relation:
    """Load a comma-separated file with a declared schema.

    ``schema`` is a list of (attr, kind) pairs with kind in {"int", "str"}.
    No header row, no quoting, UTF-8.  Parse failures report row and column.
    """
    attrs = tuple(a for a, _ in schema)
    kinds = [k for _, k in schema]
    for k in kinds:
        if k not in KINDS:
            raise SchemaError(f"unknown kind {k!r} in schema for {name}")
    if len(set(attrs)) != len(attrs):
        raise SchemaError(f"relation {name}: duplicate attribute names in schema")
    columns: dict[str, list] = {a: [] for a in attrs}
    cols = [columns[a] for a in attrs]
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != len(attrs):
                raise LoadError(
                    f"{path}:{lineno}: expected {len(attrs)} fields, got {len(fields)}"
                )
            for ci, (text, k) in enumerate(zip(fields, kinds)):
                if k == INT:
                    try:
                        cols[ci].append(int(text))
                    except ValueError:
                        raise LoadError(
                            f"{path}:{lineno}: column {ci + 1} ({attrs[ci]}): "
                            f"{text!r} is not an integer"
                        ) from None
                else:
                    cols[ci].append(text)
    return Relation(name, attrs, columns, sorted_by=tuple(sorted_by) if sorted_by else None)


_OPS = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def select(rel: Relation, attr: str, op: str, value) -> Relation:
    """Filter rows by a comparison against a constant, preserving row order.

    Filtering keeps any declared sort order valid, so ``sorted_by`` carries
    over to the result.
    """
    if attr not in rel.attrs:
        raise SchemaError(f"relation {rel.name}: unknown attribute {attr!r}")
    if op not in _OPS:
        raise SchemaError(f"unknown comparison operator {op!r}")
    col_kind = rel.kind(attr)
    if col_kind is not None and kind_of(value) != col_kind:
        raise SchemaError(
            f"relation {rel.name}.{attr}: cannot compare {col_kind} column with {value!r}"
        )
    pred = _OPS[op]
    col = rel.columns[attr]
    keep = [i for i in range(rel.size) if pred(col[i], value)]
    columns = {a: [rel.columns[a][i] for i in keep] for a in rel.attrs}
    return Relation(rel.name, rel.attrs, columns, sorted_by=rel.sorted_by)


def gen_adversarial_triangle(n: int):
    """Triangle-query instance family separating binary joins from Generic Join.

    Returns relations R(a,b), S(b,c), T(c,a), each with exactly ``n`` rows,
    sorted and declared ``sorted_by`` so every dictionary policy is legal.
    Half of each relation is a hub fan that makes the first binary join
    R join S on b produce a quadratic intermediate; the intersection step of
    a worst-case optimal plan discards the fan early because its a-values
    never appear in T.  The other half is a matching of genuine triangles,
    so the output stays linear in n.
    """
    if n < 2 or n % 2:
        raise SchemaError(f"gen_adversarial_triangle: n must be even and >= 2, got {n}")
    m = n // 2
    hub_b, hub_c = 0, 1
    dead = [2 * n + i for i in range(1, m + 1)]  # a-values absent from T
    u = [3 * n + j for j in range(1, m + 1)]
    v = [4 * n + j for j in range(1, m + 1)]
    w = [5 * n + j for j in range(1, m + 1)]
    filler = [6 * n + i for i in range(1, m + 1)]  # a-values absent from R

    r_rows = [(dead[i], hub_b) for i in range(m)] + [(u[j], v[j]) for j in range(m)]
    s_rows = [(hub_b, hub_c)] * m + [(v[j], w[j]) for j in range(m)]
    t_rows = [(hub_c, filler[i]) for i in range(m)] + [(w[j], u[j]) for j in range(m)]

    def build(name, attrs, rows):
        rows = sorted(rows)
        return Relation.from_rows(name, attrs, rows, sorted_by=attrs)

    return (
        build("R", ("a", "b"), r_rows),
        build("S", ("b", "c"), s_rows),
        build("T", ("c", "a"), t_rows),
    )
