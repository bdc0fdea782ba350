"""Command-line driver.

Subcommands:

* ``run``   -- load a catalog, execute one query under one strategy, print
  the result summary and counters, optionally verify against the
  brute-force evaluator.
* ``bench`` -- execute one query under a matrix of strategies, repeating
  each cell and reporting mean timings plus counters, as a table and as
  JSON.
* ``gen-triangle`` -- write the adversarial triangle instance family to
  CSV files plus a ready-made catalog.

Exit codes: 0 success, 1 load/execution error, 2 parse/validation error,
3 verification failure.

Catalog file format, one relation per line (``#`` comments allowed)::

    name path attr:kind,attr:kind [sorted_by=a,b]

with kind ``int`` or ``str``; paths are resolved relative to the catalog
file.  Query files hold one query, e.g. ``Q(x,a) :- R(x,a), S(x)``; plan
files hold one plan node per line, subatoms comma-separated.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path

from .errors import (
    EngineError,
    PlanError,
    QueryError,
    SchemaError,
    SortednessError,
)
from .executor import (
    OptConfig,
    StructurePolicy,
    check_against_oracle,
    execute,
)
from .oracle import nested_loop
from .query import (
    AGG_COUNT,
    AGG_FULL,
    AGG_MIN,
    AggregationSpec,
    convert_left_deep,
    MODE_FREEJOIN,
    MODE_GENERIC_JOIN,
    optimize_plan,
    parse_plan,
    parse_query,
)
from .storage import gen_adversarial_triangle, load_csv

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VALIDATION = 2
EXIT_CHECK_FAIL = 3

_VALIDATION_ERRORS = (QueryError, PlanError, SchemaError, SortednessError)


def load_catalog(path: str):
    """Parse a catalog file into {name: Relation}."""
    base = Path(path).parent
    relations = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) not in (3, 4):
                raise SchemaError(f"{path}:{lineno}: expected 3 or 4 fields, got {len(fields)}")
            name, rel_path, schema_text = fields[:3]
            if name in relations:
                raise SchemaError(f"{path}:{lineno}: duplicate relation name {name!r}")
            schema = []
            for col in schema_text.split(","):
                if ":" not in col:
                    raise SchemaError(f"{path}:{lineno}: bad column spec {col!r}")
                attr, kind = col.split(":", 1)
                schema.append((attr, kind))
            sorted_by = None
            if len(fields) == 4:
                if not fields[3].startswith("sorted_by="):
                    raise SchemaError(f"{path}:{lineno}: expected sorted_by=..., got {fields[3]!r}")
                sorted_by = tuple(fields[3][len("sorted_by="):].split(","))
            relations[name] = load_csv(base / rel_path, name, schema, sorted_by)
    return relations


def _read_text(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _resolve_plan(q, plan_flag: str):
    base = convert_left_deep(q, [a.relation for a in q.atoms])
    if plan_flag == "binary":
        return base
    if plan_flag == "gj":
        return optimize_plan(q, base, MODE_GENERIC_JOIN)
    if plan_flag == "fj":
        return optimize_plan(q, base, MODE_FREEJOIN)
    if plan_flag.startswith("file:"):
        return parse_plan(_read_text(plan_flag[len("file:"):]))
    raise PlanError(f"unknown plan source {plan_flag!r}")


def _resolve_agg(q, default_agg, agg_flag: str | None):
    if agg_flag is None:
        return default_agg
    if agg_flag == "full":
        return AggregationSpec(AGG_FULL, tuple(q.head))
    if agg_flag == "count":
        return AggregationSpec(AGG_COUNT, ())
    if agg_flag.startswith("min:"):
        vars_ = tuple(v for v in agg_flag[4:].split(",") if v)
        if not vars_:
            raise QueryError("--agg min: needs at least one variable")
        body = q.variables()
        for v in vars_:
            if v not in body:
                raise QueryError(f"--agg min: variable {v!r} not in the query body")
        return AggregationSpec(AGG_MIN, vars_)
    raise QueryError(f"unknown aggregate {agg_flag!r}")


def _apply_leaf_flag(opts: OptConfig, leaf_flag: str) -> OptConfig:
    """Force a leaf family by adjusting the relevant toggles."""
    if leaf_flag == "auto":
        return opts
    kw = dict(o3=opts.o3, o5=opts.o5, smallvec_capacity=opts.smallvec_capacity)
    if leaf_flag == "vec":
        return OptConfig(o1=True, o2=False, o4=opts.o4, **kw)
    if leaf_flag.startswith("smallvec"):
        cap = 4
        if ":" in leaf_flag:
            cap = int(leaf_flag.split(":", 1)[1])
        kw["smallvec_capacity"] = cap
        return OptConfig(o1=True, o2=True, o4=opts.o4, **kw)
    if leaf_flag == "count":
        return OptConfig(o1=opts.o1, o2=opts.o2, o4=True, **kw)
    if leaf_flag == "hashmap":
        return OptConfig(o1=False, o2=False, o4=False, **kw)
    raise PlanError(f"unknown leaf choice {leaf_flag!r}")


def _result_summary(result, limit: int) -> list[str]:
    lines = []
    if result.kind == AGG_COUNT:
        lines.append(f"result kind=count value={result.count}")
    elif result.kind == AGG_MIN:
        if result.minima is None:
            lines.append("result kind=min empty=true (no satisfying assignment)")
        else:
            pairs = ", ".join(f"{v}={m}" for v, m in zip(result.vars, result.minima))
            lines.append(f"result kind=min {pairs}")
    else:
        rows = result.sorted_rows()
        total = sum(m for _, m in rows)
        lines.append(
            f"result kind=full cardinality={len(rows)} total_multiplicity={total}"
        )
        for key, mult in rows[:limit]:
            suffix = f" x{mult}" if mult != 1 else ""
            lines.append("  (" + ", ".join(repr(v) for v in key) + ")" + suffix)
        if len(rows) > limit:
            lines.append(f"  ... {len(rows) - limit} more")
    return lines


def _first_difference(result, reference):
    """First differing tuple between a full ResultBag and the reference bag."""
    keys = sorted(set(result.tuples) | set(reference))
    for k in keys:
        a = result.tuples.get(k, 0)
        b = reference.get(k, 0)
        if a != b:
            return k, a, b
    return None


def cmd_run(args) -> int:
    relations = load_catalog(args.catalog)
    q, default_agg = parse_query(_read_text(args.query).strip())
    agg = _resolve_agg(q, default_agg, args.agg)
    plan = _resolve_plan(q, args.plan)
    opts = _apply_leaf_flag(OptConfig.from_text(args.opts), args.leaf)
    policy = StructurePolicy(args.dicts)
    result, stats = execute(q, plan, relations, agg, policy, opts)
    for line in _result_summary(result, args.limit):
        print(line)
    if args.stats != "none":
        print("stats:")
        print(stats.to_json() if args.stats == "json" else stats.to_text())
    if args.check:
        ok, reference = check_against_oracle(q, relations, agg, result)
        if ok:
            print("check: PASS")
        else:
            print("check: FAIL")
            if result.kind == AGG_FULL:
                diff = _first_difference(result, reference)
                if diff is not None:
                    k, a, b = diff
                    print(f"  first difference at {k}: got multiplicity {a}, expected {b}")
            else:
                print(f"  got {result.count if result.kind == AGG_COUNT else result.minima},"
                      f" expected {reference}")
            return EXIT_CHECK_FAIL
    return EXIT_OK


def cmd_bench(args) -> int:
    relations = load_catalog(args.catalog)
    q, default_agg = parse_query(_read_text(args.query).strip())
    agg = _resolve_agg(q, default_agg, args.agg)
    plans = [p for p in args.plans.split(",") if p]
    dicts = [d for d in args.dicts.split(",") if d]
    opt_texts = [o for o in args.opts_list.split(";") if o]
    if not plans or not dicts or not opt_texts:
        raise PlanError("empty strategy matrix: nothing to benchmark")
    if args.repeat < 1:
        raise PlanError("--repeat must be positive")
    reference = nested_loop(q, relations, agg) if args.check else None

    cells = []
    for plan_flag in plans:
        plan = _resolve_plan(q, plan_flag)
        for dict_flag in dicts:
            for opt_text in opt_texts:
                opts = _apply_leaf_flag(OptConfig.from_text(opt_text), args.leaf)
                policy = StructurePolicy(dict_flag)
                build_ms = []
                exec_ms = []
                result = stats = None
                for _ in range(args.repeat):
                    result, stats = execute(q, plan, relations, agg, policy, opts)
                    build_ms.append(stats.build_ms)
                    exec_ms.append(stats.exec_ms)
                verdict = None
                if reference is not None:
                    verdict = "PASS" if result.matches_reference(reference) else "FAIL"
                cell = {
                    "plan": plan_flag,
                    "dicts": dict_flag,
                    "opts": opts.label(),
                    "repeat": args.repeat,
                    "mean_build_ms": round(sum(build_ms) / len(build_ms), 3),
                    "mean_exec_ms": round(sum(exec_ms) / len(exec_ms), 3),
                    "stats": stats.to_dict(),
                }
                if verdict is not None:
                    cell["check"] = verdict
                cells.append(cell)

    header = f"{'plan':8} {'dicts':8} {'opts':18} {'build_ms':>9} {'exec_ms':>9} " \
             f"{'probes':>9} {'inter':>9} {'out':>9}"
    print(header)
    print("-" * len(header))
    failed = False
    for c in cells:
        s = c["stats"]
        line = (
            f"{c['plan']:8} {c['dicts']:8} {c['opts']:18} "
            f"{c['mean_build_ms']:>9.3f} {c['mean_exec_ms']:>9.3f} "
            f"{s['probes']:>9} {s['intermediate_tuples']:>9} {s['output_tuples']:>9}"
        )
        if "check" in c:
            line += f"  {c['check']}"
            failed = failed or c["check"] == "FAIL"
        print(line)
    doc = json.dumps({"query": str(q), "cells": cells}, indent=2)
    if args.json:
        Path(args.json).write_text(doc + "\n", encoding="utf-8")
    else:
        print(doc)
    return EXIT_CHECK_FAIL if failed else EXIT_OK


def cmd_gen_triangle(args) -> int:
    rels = gen_adversarial_triangle(args.n)
    if args.seed is not None:
        rels = _relabel(rels, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    catalog_lines = []
    for rel in rels:
        csv_path = out / f"{rel.name}.csv"
        with open(csv_path, "w", encoding="utf-8") as fh:
            for row in rel.rows():
                fh.write(",".join(str(v) for v in row) + "\n")
        schema = ",".join(f"{a}:int" for a in rel.attrs)
        catalog_lines.append(
            f"{rel.name} {rel.name}.csv {schema} sorted_by={','.join(rel.sorted_by)}"
        )
    (out / "catalog.txt").write_text("\n".join(catalog_lines) + "\n", encoding="utf-8")
    (out / "query.txt").write_text("Q(a,b,c) :- R(a,b), S(b,c), T(c,a)\n", encoding="utf-8")
    print(f"wrote {args.n}-row triangle instance to {out}")
    return EXIT_OK


def _relabel(rels, seed: int):
    """Apply one order-preserving random relabeling of the values shared by
    all relations, so the instance varies with the seed while the join
    structure and every sortedness declaration hold."""
    from .storage import Relation

    values = sorted({v for rel in rels for a in rel.attrs for v in rel.columns[a]})
    rng = random.Random(seed)
    mapping = {}
    nxt = 0
    for v in values:
        nxt += rng.randrange(1, 4)
        mapping[v] = nxt
    out = []
    for rel in rels:
        columns = {a: [mapping[v] for v in rel.columns[a]] for a in rel.attrs}
        out.append(Relation(rel.name, rel.attrs, columns, sorted_by=rel.sorted_by))
    return tuple(out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unijoin",
        description="In-memory conjunctive-query join engine spanning binary "
        "and worst-case optimal plans.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--catalog", required=True, help="catalog file")
        p.add_argument("--query", required=True, help="query file")
        p.add_argument("--leaf", default="auto",
                       help="auto | vec | smallvec[:N] | count | hashmap")
        p.add_argument("--agg", default=None, help="full | count | min:v1,v2")
        p.add_argument("--seed", type=int, default=None, help="seed for generators")

    p_run = sub.add_parser("run", help="execute one query under one strategy")
    common(p_run)
    p_run.add_argument("--plan", default="binary", help="binary | gj | fj | file:PATH")
    p_run.add_argument("--dicts", default="hybrid", help="hash | sorted | hybrid")
    p_run.add_argument("--opts", default="all", help="comma list of O1..O5, all, or none")
    p_run.add_argument("--check", action="store_true",
                       help="verify against the brute-force evaluator")
    p_run.add_argument("--stats", default="text", choices=("text", "json", "none"))
    p_run.add_argument("--limit", type=int, default=20, help="max tuples to print")
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("bench", help="run a strategy matrix with repeats")
    common(p_bench)
    p_bench.add_argument("--plans", default="binary,gj,fj")
    p_bench.add_argument("--dicts", default="hash,sorted,hybrid")
    p_bench.add_argument("--opts-list", default="all", dest="opts_list",
                         help="semicolon-separated opt configurations")
    p_bench.add_argument("--repeat", type=int, default=5)
    p_bench.add_argument("--check", action="store_true")
    p_bench.add_argument("--json", default=None, help="write the JSON report here")
    p_bench.set_defaults(func=cmd_bench)

    p_gen = sub.add_parser("gen-triangle",
                           help="write the adversarial triangle family to CSV")
    p_gen.add_argument("--n", type=int, required=True, help="rows per relation (even)")
    p_gen.add_argument("--out", required=True, help="output directory")
    p_gen.add_argument("--seed", type=int, default=None,
                       help="order-preserving value relabeling seed")
    p_gen.set_defaults(func=cmd_gen_triangle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (EngineError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
