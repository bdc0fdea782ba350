"""Shared corpus of queries and randomized instance generators.

Each corpus entry pairs a query text with a generator that produces small
random instances (bounded rows per relation, small domains so joins
actually match).  All generated relations are sorted and declare their
order, so every dictionary policy is applicable.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

import pytest

from unijoin.query import parse_query
from unijoin.storage import Relation


def rand_relation(rng, name, attrs, max_rows=30, domain=6, allow_empty=True):
    lo = 0 if allow_empty else 1
    n = rng.randrange(lo, max_rows + 1)
    rows = sorted(tuple(rng.randrange(domain) for _ in attrs) for _ in range(n))
    return Relation.from_rows(name, attrs, rows, sorted_by=tuple(attrs))


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    query_text: str
    schemas: tuple  # (relation, attrs) pairs

    def instance(self, rng, max_rows=30, domain=6):
        return {
            name: rand_relation(rng, name, attrs, max_rows, domain)
            for name, attrs in self.schemas
        }


_CLOVER = (("R", ("x", "a")), ("S", ("x", "b")), ("T", ("x",)))
_TRIANGLE = (("R", ("a", "b")), ("S", ("b", "c")), ("T", ("c", "a")))
_CHAIN4 = (
    ("R1", ("a", "b")),
    ("R2", ("b", "c")),
    ("R3", ("c", "d")),
    ("R4", ("d", "e")),
)
_STAR = (("S0", ("x",)), ("S1", ("x", "a")), ("S2", ("x", "b")), ("S3", ("x", "c")))
_CYCLE4 = (
    ("R", ("a", "b")),
    ("S", ("b", "c")),
    ("T", ("c", "d")),
    ("U", ("d", "a")),
)

CORPUS = (
    CorpusEntry("clover_full", "Q(x,a,b) :- R(x,a), S(x,b), T(x)", _CLOVER),
    CorpusEntry("clover_count", "Q(COUNT) :- R(x,a), S(x,b), T(x)", _CLOVER),
    CorpusEntry("clover_min", "Q(MIN(a,b)) :- R(x,a), S(x,b), T(x)", _CLOVER),
    CorpusEntry("triangle_full", "Q(a,b,c) :- R(a,b), S(b,c), T(c,a)", _TRIANGLE),
    CorpusEntry("triangle_count", "Q(COUNT) :- R(a,b), S(b,c), T(c,a)", _TRIANGLE),
    CorpusEntry("triangle_proj", "Q(b) :- R(a,b), S(b,c), T(c,a)", _TRIANGLE),
    CorpusEntry(
        "chain4_full",
        "Q(a,b,c,d,e) :- R1(a,b), R2(b,c), R3(c,d), R4(d,e)",
        _CHAIN4,
    ),
    CorpusEntry(
        "chain4_proj", "Q(a,e) :- R1(a,b), R2(b,c), R3(c,d), R4(d,e)", _CHAIN4
    ),
    CorpusEntry(
        "chain4_min", "Q(MIN(b,d)) :- R1(a,b), R2(b,c), R3(c,d), R4(d,e)", _CHAIN4
    ),
    CorpusEntry("star_full", "Q(x,a,b,c) :- S0(x), S1(x,a), S2(x,b), S3(x,c)", _STAR),
    CorpusEntry("star_min", "Q(MIN(a,c)) :- S0(x), S1(x,a), S2(x,b), S3(x,c)", _STAR),
    CorpusEntry("cycle4_full", "Q(a,b,c,d) :- R(a,b), S(b,c), T(c,d), U(d,a)", _CYCLE4),
    CorpusEntry("cycle4_count", "Q(COUNT) :- R(a,b), S(b,c), T(c,d), U(d,a)", _CYCLE4),
)


@pytest.fixture(scope="session")
def corpus():
    return CORPUS


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)


def parsed(entry: CorpusEntry):
    return parse_query(entry.query_text)
