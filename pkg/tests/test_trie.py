"""Trie building, the four leaf shapes, and the two dictionary kinds.

The core guarantee is observational equivalence: whatever leaf shape or
dictionary kind a trie uses, the multiset of (key path, offset group) it
represents is the same.
"""

import math
import random

import pytest

from unijoin.errors import ExecutionError, SortednessError
from unijoin.storage import Relation
from unijoin.trie import (
    HASH,
    LEAF_COUNT,
    LEAF_HASHMAP,
    LEAF_RANGE,
    LEAF_SMALLVEC,
    LEAF_VEC,
    SORTED,
    LeafSpec,
    Range,
    SmallVec,
    SortedDict,
    build_trie,
    leaf_offsets,
    leaf_size,
)


def rand_sorted_relation(rng, n, domain, arity=2):
    attrs = tuple("abcd"[:arity])
    rows = sorted(tuple(rng.randrange(domain) for _ in attrs) for _ in range(n))
    return Relation.from_rows("R", attrs, rows, sorted_by=attrs)


def trie_contents(trie):
    """Canonical view: {key path: sorted offsets} (counts for count leaves)."""
    out = {}
    for path, leaf in trie.paths().items():
        if trie.leaf.kind == LEAF_COUNT:
            out[path] = leaf
        else:
            out[path] = sorted(leaf_offsets(leaf, trie.leaf))
    return out


ALL_OFFSET_LEAVES = (LEAF_HASHMAP, LEAF_VEC, LEAF_SMALLVEC)


class TestSmallVec:
    def test_matches_list_across_boundary(self):
        for cap in (1, 2, 4, 7):
            for n in (cap - 1, cap, cap + 1, cap + 5):
                sv = SmallVec(cap)
                ref = []
                for i in range(max(n, 0)):
                    sv.append(i * 3)
                    ref.append(i * 3)
                assert list(sv) == ref
                assert len(sv) == len(ref)
                assert sv.spilled == (len(ref) > cap)

    def test_zero_capacity_rejected(self):
        with pytest.raises(ValueError):
            SmallVec(0)


class TestRange:
    def test_contiguous(self):
        r = Range(3)
        r.extend(4)
        r.extend(5)
        assert list(r) == [3, 4, 5]
        assert len(r) == 3

    def test_gap_rejected(self):
        r = Range(3)
        with pytest.raises(SortednessError):
            r.extend(5)

    def test_reconstructs_whole_relation(self):
        """Union of range leaves over a sorted relation is exactly 0..size-1."""
        rng = random.Random(11)
        for _ in range(50):
            rel = rand_sorted_relation(rng, rng.randrange(1, 40), 5)
            trie = build_trie(rel, ("a",), SORTED, LeafSpec(LEAF_RANGE))
            seen = []
            for leaf in trie.paths().values():
                seen.extend(leaf)
            assert sorted(seen) == list(range(rel.size))


class TestSortedDict:
    def test_append_monotone(self):
        d = SortedDict()
        d.append(1, "a")
        d.append(1, "b")  # equal keys allowed (revisit last)
        with pytest.raises(SortednessError):
            d.append(0, "c")

    def test_find_hit_and_miss(self):
        d = SortedDict()
        for k in range(0, 100, 2):
            d.append(k, k * 10)
        val, _ = d.find(42)
        assert val == 420
        from unijoin.trie import _MISSING

        val, _ = d.find(43)
        assert val is _MISSING

    def test_comparison_bound(self):
        """Every lookup spends at most ceil(log2 k) + 1 comparisons."""
        rng = random.Random(5)
        for k in (1, 2, 3, 10, 1000):
            d = SortedDict()
            keys = sorted(rng.sample(range(10 * k), k))
            for key in keys:
                d.append(key, key)
            bound = math.ceil(math.log2(k)) + 1 if k > 1 else 1
            for _ in range(200):
                _, comps = d.find(rng.randrange(10 * k))
                assert comps <= bound


class TestBuildTrie:
    def test_offset_leaves_equivalent(self):
        rng = random.Random(1)
        for _ in range(100):
            rel = rand_sorted_relation(rng, rng.randrange(0, 50), 6)
            views = []
            for kind in ALL_OFFSET_LEAVES:
                spec = LeafSpec(kind, capacity=rng.choice((1, 2, 4)))
                views.append(trie_contents(build_trie(rel, ("a",), HASH, spec)))
            assert views[0] == views[1] == views[2]

    def test_sorted_matches_hash(self):
        rng = random.Random(2)
        for _ in range(100):
            rel = rand_sorted_relation(rng, rng.randrange(0, 50), 6)
            h = trie_contents(build_trie(rel, ("a", "b"), HASH, LeafSpec(LEAF_VEC)))
            s = trie_contents(build_trie(rel, ("a", "b"), SORTED, LeafSpec(LEAF_RANGE)))
            assert h == s

    def test_count_leaves_match_group_sizes(self):
        rng = random.Random(3)
        for _ in range(50):
            rel = rand_sorted_relation(rng, rng.randrange(0, 50), 4)
            vec = build_trie(rel, ("a",), HASH, LeafSpec(LEAF_VEC))
            cnt = build_trie(rel, ("a",), HASH, LeafSpec(LEAF_COUNT))
            sizes = {p: len(offs) for p, offs in trie_contents(vec).items()}
            assert trie_contents(cnt) == sizes

    def test_insertions_counted(self):
        rel = rand_sorted_relation(random.Random(4), 25, 5)
        trie = build_trie(rel, ("a",), HASH, LeafSpec(LEAF_VEC))
        assert trie.insertions == 25

    def test_multi_level(self):
        rel = Relation.from_rows(
            "R", ("a", "b"), [(1, 1), (1, 2), (2, 1)], sorted_by=("a", "b")
        )
        trie = build_trie(rel, ("a", "b"), HASH, LeafSpec(LEAF_VEC))
        assert trie_contents(trie) == {(1, 1): [0], (1, 2): [1], (2, 1): [2]}

    def test_zero_levels(self):
        rel = rand_sorted_relation(random.Random(6), 7, 5)
        trie = build_trie(rel, (), HASH, LeafSpec(LEAF_COUNT))
        assert trie.root == 7

    def test_sorted_requires_declared_prefix(self):
        rel = Relation.from_rows("R", ("a", "b"), [(1, 2)], sorted_by=("b", "a"))
        with pytest.raises(SortednessError):
            build_trie(rel, ("a",), SORTED, LeafSpec(LEAF_RANGE))

    def test_range_requires_sorted_dicts(self):
        rel = Relation.from_rows("R", ("a",), [(1,)], sorted_by=("a",))
        with pytest.raises(ExecutionError):
            build_trie(rel, ("a",), HASH, LeafSpec(LEAF_RANGE))

    def test_unknown_attr(self):
        rel = Relation.from_rows("R", ("a",), [(1,)])
        with pytest.raises(ExecutionError):
            build_trie(rel, ("z",), HASH, LeafSpec(LEAF_VEC))

    def test_lookup_path(self):
        rel = Relation.from_rows(
            "R", ("a", "b"), [(1, 1), (1, 2)], sorted_by=("a", "b")
        )
        trie = build_trie(rel, ("a", "b"), SORTED, LeafSpec(LEAF_RANGE))
        leaf = trie.lookup_path((1, 2))
        assert list(leaf) == [1]
        assert trie.lookup_path((1, 9)) is None

    def test_leaf_size_helpers(self):
        assert leaf_size(5, LeafSpec(LEAF_COUNT)) == 5
        assert leaf_size(7, LeafSpec(LEAF_SMALLVEC)) == 1  # inline singleton
        assert list(leaf_offsets(7, LeafSpec(LEAF_SMALLVEC))) == [7]
        assert leaf_size({3: 1, 4: 1}, LeafSpec(LEAF_HASHMAP)) == 2
