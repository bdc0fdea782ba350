"""Trie levels and leaves: hash and sorted dictionaries, four leaf shapes.

A trie indexes a relation by an ordered list of key attributes.  Internal
levels are dictionaries from attribute value to child; the leaf under a full
key path holds the row offsets sharing that path, in one of several
representations:

* ``hashmap`` -- dict offset -> 1, the naive baseline (optimizations off)
* ``vec``     -- plain list of offsets
* ``smallvec``-- inline-capacity vector; singleton groups are stored as the
  bare offset in the parent slot and promoted to a SmallVec container on the
  second insertion (group-of-one keys are the common case for key joins)
* ``range``   -- (left, right) inclusive bounds, legal only when equal keys
  occupy a contiguous ascending run, i.e. the relation is sorted by the keys
* ``count``   -- just the group multiplicity, for join-only relations

Dictionaries come in two kinds: ``hash`` (a plain dict) and ``sorted``
(append-only association lists looked up by binary search).  Built tries are
immutable; builders are single-writer.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ExecutionError, SortednessError
from .storage import Relation

HASH = "hash"
SORTED = "sorted"

LEAF_HASHMAP = "hashmap"
LEAF_VEC = "vec"
LEAF_SMALLVEC = "smallvec"
LEAF_RANGE = "range"
LEAF_COUNT = "count"


@dataclass(frozen=True)
class LeafSpec:
    kind: str
    capacity: int = 4  # inline capacity, smallvec only

    def __post_init__(self):
        if self.kind == LEAF_SMALLVEC and self.capacity < 1:
            raise ExecutionError("smallvec inline capacity must be >= 1")


class SmallVec:
    """Vector with a fixed inline buffer that spills to a heap list.

    The first ``capacity`` insertions land in the inline buffer; the next
    insertion copies everything to an ordinary list and appends there from
    then on.  Iteration order and contents always match a plain list under
    the same insertion sequence.
    """

    __slots__ = ("stack", "n", "heap")

    def __init__(self, capacity: int = 4):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.stack = [None] * capacity
        self.n = 0
        self.heap = None

    @property
    def capacity(self) -> int:
        return len(self.stack)

    @property
    def spilled(self) -> bool:
        return self.heap is not None

    def append(self, value) -> None:
        heap = self.heap
        if heap is not None:
            heap.append(value)
            return
        stack = self.stack
        n = self.n
        if n < len(stack):
            stack[n] = value
            self.n = n + 1
        else:
            self.heap = heap = stack[:n]
            heap.append(value)

    def __len__(self) -> int:
        heap = self.heap
        return len(heap) if heap is not None else self.n

    def __iter__(self):
        heap = self.heap
        if heap is not None:
            return iter(heap)
        return iter(self.stack[: self.n])


class Range:
    """Inclusive offset bounds for a contiguous ascending run."""

    __slots__ = ("left", "right")

    def __init__(self, offset: int):
        self.left = offset
        self.right = offset

    def extend(self, offset: int) -> None:
        if offset != self.right + 1:
            raise SortednessError(
                f"range leaf: offset {offset} does not extend run ..{self.right}"
            )
        self.right = offset

    def __len__(self) -> int:
        return self.right - self.left + 1

    def __iter__(self):
        return iter(range(self.left, self.right + 1))


_MISSING = object()


class SortedDict:
    """Association list with keys in non-decreasing insertion order.

    Insertions may only touch the largest key (append a new one or revisit
    the last); lookups binary-search the key list.  ``find`` returns the
    value together with the number of key comparisons spent, so callers can
    account for sorted-lookup cost.
    """

    __slots__ = ("keys", "values")

    def __init__(self):
        self.keys = []
        self.values = []

    def __len__(self) -> int:
        return len(self.keys)

    def last_key(self, default=_MISSING):
        return self.keys[-1] if self.keys else default

    def append(self, key, value) -> None:
        keys = self.keys
        if keys and key < keys[-1]:
            raise SortednessError(
                f"sorted dictionary: key {key!r} inserted after {keys[-1]!r}"
            )
        keys.append(key)
        self.values.append(value)

    def set_last(self, value) -> None:
        self.values[-1] = value

    def find(self, key):
        """Return (value_or_MISSING, comparisons)."""
        keys = self.keys
        lo, hi = 0, len(keys) - 1
        comps = 0
        while lo <= hi:
            mid = (lo + hi) // 2
            k = keys[mid]
            comps += 1
            if k == key:
                return self.values[mid], comps
            if k < key:
                lo = mid + 1
            else:
                hi = mid - 1
        return _MISSING, comps

    def items(self):
        return zip(self.keys, self.values)


@dataclass
class Trie:
    """Built index over a relation.

    ``levels`` pairs each key attribute with its dictionary kind.  ``root``
    is the top-level dictionary, or directly a leaf when there are no key
    attributes.  ``insertions`` counts the per-row leaf insertions performed
    during the build.
    """

    relation: Relation
    levels: tuple[tuple[str, str], ...]
    leaf: LeafSpec
    root: object
    insertions: int

    def paths(self) -> dict[tuple, object]:
        """Map each root-to-leaf key path to its leaf."""
        out = {}

        def walk(node, depth, prefix):
            if depth == len(self.levels):
                out[prefix] = node
                return
            kind = self.levels[depth][1]
            entries = node.items() if kind == SORTED else node.items()
            for key, child in entries:
                walk(child, depth + 1, prefix + (key,))

        walk(self.root, 0, ())
        return out

    def lookup_path(self, keys):
        """Descend the full key path; returns the leaf or None."""
        node = self.root
        for (attr, kind), key in zip(self.levels, keys):
            if kind == SORTED:
                node, _ = node.find(key)
                if node is _MISSING:
                    return None
            else:
                node = node.get(key, _MISSING)
                if node is _MISSING:
                    return None
        return node

    def dump(self) -> str:
        """One line per root-to-leaf path, keys in iteration order."""
        lines = []
        for path, leaf in self.paths().items():
            key = "/".join(str(k) for k in path)
            if self.leaf.kind == LEAF_COUNT:
                lines.append(f"{key} -> count:{leaf}")
            else:
                lines.append(f"{key} -> {list(leaf_offsets(leaf, self.leaf))}")
        return "\n".join(lines)


def leaf_offsets(leaf, spec: LeafSpec):
    """Iterate a non-count leaf's offsets in insertion order."""
    if spec.kind == LEAF_SMALLVEC and leaf.__class__ is int:
        return (leaf,)
    if spec.kind == LEAF_HASHMAP:
        return leaf.keys()
    return leaf


def leaf_size(leaf, spec: LeafSpec) -> int:
    """Group multiplicity of any leaf."""
    kind = spec.kind
    if kind == LEAF_COUNT:
        return leaf
    if kind == LEAF_SMALLVEC and leaf.__class__ is int:
        return 1
    return len(leaf)


def _new_dict(kind: str):
    return SortedDict() if kind == SORTED else {}


def build_trie(rel: Relation, key_attrs, dict_kind: str, leaf: LeafSpec) -> Trie:
    """Build a trie with one level per key attribute, one insertion per row.

    A sorted dictionary requires the relation to be sorted with the key
    attributes as a prefix of its declared order; a range leaf additionally
    requires sorted dictionaries (contiguity comes from the sort).
    """
    key_attrs = tuple(key_attrs)
    for a in key_attrs:
        if a not in rel.attrs:
            raise ExecutionError(f"build_trie: {rel.name} has no attribute {a!r}")
    if dict_kind == SORTED:
        declared = rel.sorted_by or ()
        if declared[: len(key_attrs)] != key_attrs:
            raise SortednessError(
                f"build_trie: sorted dictionaries over {key_attrs} require "
                f"{rel.name} sorted by that prefix (declared: {declared})"
            )
    elif dict_kind != HASH:
        raise ExecutionError(f"unknown dictionary kind {dict_kind!r}")
    if leaf.kind == LEAF_RANGE and dict_kind != SORTED:
        raise ExecutionError("range leaves require sorted dictionaries")
    if leaf.kind not in (LEAF_HASHMAP, LEAF_VEC, LEAF_SMALLVEC, LEAF_RANGE, LEAF_COUNT):
        raise ExecutionError(f"unknown leaf kind {leaf.kind!r}")

    size = rel.size
    nlevels = len(key_attrs)
    if nlevels == 0:
        return Trie(rel, (), leaf, _zero_level_leaf(leaf, size), size)
    if dict_kind == HASH and nlevels == 1:
        root = _build_hash1(rel.columns[key_attrs[0]], leaf)
    else:
        root = _build_generic(rel, key_attrs, dict_kind, leaf)
    return Trie(rel, tuple((a, dict_kind) for a in key_attrs), leaf, root, size)


def _zero_level_leaf(leaf: LeafSpec, size: int):
    kind = leaf.kind
    if kind == LEAF_COUNT:
        return size
    if kind == LEAF_HASHMAP:
        return {i: 1 for i in range(size)}
    if kind == LEAF_RANGE:
        if size == 0:
            raise ExecutionError("range leaf cannot represent an empty group")
        r = Range(0)
        for i in range(1, size):
            r.extend(i)
        return r
    if kind == LEAF_SMALLVEC:
        if size == 1:
            return 0
        sv = SmallVec(leaf.capacity)
        for i in range(size):
            sv.append(i)
        return sv
    return list(range(size))


def _build_hash1(col, leaf: LeafSpec):
    """Specialized single-level hash build; the hot path for trie creation."""
    root: dict = {}
    get = root.get
    kind = leaf.kind
    if kind == LEAF_VEC:
        for off, k in enumerate(col):
            group = get(k)
            if group is None:
                root[k] = [off]
            else:
                group.append(off)
    elif kind == LEAF_SMALLVEC:
        cap = leaf.capacity
        new = object.__new__
        sv_cls = SmallVec
        for off, k in enumerate(col):
            group = get(k, _MISSING)
            if group is _MISSING:
                root[k] = off  # singleton stored inline
            elif group.__class__ is int:
                sv = new(sv_cls)
                stack = [None] * cap
                stack[0] = group
                sv.stack = stack
                sv.n = 1
                sv.heap = None
                sv.append(off)
                root[k] = sv
            else:
                group.append(off)
    elif kind == LEAF_COUNT:
        for k in col:
            root[k] = get(k, 0) + 1
    elif kind == LEAF_HASHMAP:
        for off, k in enumerate(col):
            group = get(k)
            if group is None:
                root[k] = {off: 1}
            else:
                group[off] = group.get(off, 0) + 1
    else:
        raise ExecutionError(f"leaf kind {kind!r} illegal for hash dictionaries")
    return root


def _build_generic(rel: Relation, key_attrs, dict_kind: str, leaf: LeafSpec):
    root = _new_dict(dict_kind)
    cols = [rel.columns[a] for a in key_attrs]
    last = len(cols) - 1
    kind = leaf.kind
    for off in range(rel.size):
        node = root
        for depth, col in enumerate(cols):
            key = col[off]
            is_last = depth == last
            if dict_kind == SORTED:
                if node.last_key() == key:
                    child = node.values[-1]
                else:
                    child = _MISSING
                if child is _MISSING:
                    child = _fresh_leaf(kind, leaf, off) if is_last else _new_dict(dict_kind)
                    node.append(key, child)
                    if is_last:
                        break
                elif is_last:
                    node.set_last(_leaf_insert(child, kind, leaf, off, node))
                    break
                node = child
            else:
                child = node.get(key, _MISSING)
                if child is _MISSING:
                    child = _fresh_leaf(kind, leaf, off) if is_last else _new_dict(dict_kind)
                    node[key] = child
                    if is_last:
                        break
                elif is_last:
                    node[key] = _leaf_insert(child, kind, leaf, off, node)
                    break
                node = child
    return root


def _fresh_leaf(kind: str, spec: LeafSpec, off: int):
    if kind == LEAF_COUNT:
        return 1
    if kind == LEAF_VEC:
        return [off]
    if kind == LEAF_SMALLVEC:
        return off  # singleton inline
    if kind == LEAF_RANGE:
        return Range(off)
    return {off: 1}


def _leaf_insert(leaf, kind: str, spec: LeafSpec, off: int, _node):
    """Insert into an existing leaf; returns the (possibly replaced) leaf."""
    if kind == LEAF_COUNT:
        return leaf + 1
    if kind == LEAF_VEC:
        leaf.append(off)
        return leaf
    if kind == LEAF_SMALLVEC:
        if leaf.__class__ is int:
            sv = SmallVec(spec.capacity)
            sv.append(leaf)
            sv.append(off)
            return sv
        leaf.append(off)
        return leaf
    if kind == LEAF_RANGE:
        leaf.extend(off)
        return leaf
    leaf[off] = leaf.get(off, 0) + 1
    return leaf
