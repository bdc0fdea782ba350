"""Brute-force reference evaluator.

Enumerates the full cross product of the body atoms with early pruning on
variable equality, producing a multiset of satisfying assignments.  Slow by
design; it exists so every other evaluation path has something independent
to be checked against.
"""

from __future__ import annotations

from .errors import BudgetExceededError, ExecutionError
from .query import AGG_COUNT, AGG_FULL, AGG_MIN, AggregationSpec, ConjunctiveQuery
from .storage import Relation

DEFAULT_BUDGET = 100_000_000


def nested_loop(
    q: ConjunctiveQuery,
    relations: dict[str, Relation],
    agg: AggregationSpec | None = None,
    budget: int = DEFAULT_BUDGET,
):
    """Evaluate a query by nested loops over its atoms.

    Returns a result matching the aggregate kind:
      * full  -> dict mapping projected tuples (over ``agg.vars`` or the
        head) to multiplicities,
      * count -> the total number of satisfying assignments (an int),
      * min   -> tuple of per-variable minima over ``agg.vars``, or None
        when no assignment satisfies the body.

    Raises BudgetExceededError when the cross-product size exceeds
    ``budget``; the bound is on potential work, checked up front, so the
    oracle never silently runs for hours.
    """
    if agg is None:
        agg = AggregationSpec(AGG_FULL, q.head)
    for atom in q.atoms:
        if atom.relation not in relations:
            raise ExecutionError(f"oracle: relation {atom.relation!r} not provided")
        rel = relations[atom.relation]
        if len(atom.vars) != len(rel.attrs):
            raise ExecutionError(
                f"oracle: atom {atom} arity {len(atom.vars)} != relation arity {len(rel.attrs)}"
            )

    product = 1
    for atom in q.atoms:
        product *= max(relations[atom.relation].size, 1)
        if product > budget:
            raise BudgetExceededError(
                f"oracle: cross product exceeds budget of {budget} rows"
            )

    proj = agg.vars if agg.kind != AGG_FULL else (agg.vars or q.head)

    bag: dict[tuple, int] = {}
    count = 0
    minima: list | None = None

    atoms = list(q.atoms)
    n_atoms = len(atoms)
    rels = [relations[a.relation] for a in atoms]
    atom_cols = [[r.columns[attr] for attr in r.attrs] for r in rels]

    def recur(i: int, binding: dict):
        nonlocal count, minima
        if i == n_atoms:
            if agg.kind == AGG_COUNT:
                count += 1
            elif agg.kind == AGG_MIN:
                vals = [binding[v] for v in agg.vars]
                if minima is None:
                    minima = vals
                else:
                    minima = [min(m, x) for m, x in zip(minima, vals)]
            else:
                key = tuple(binding[v] for v in proj)
                bag[key] = bag.get(key, 0) + 1
            return
        cols = atom_cols[i]
        vars_ = atoms[i].vars
        for off in range(rels[i].size):
            local = dict(binding)
            ok = True
            for vi, v in enumerate(vars_):
                val = cols[vi][off]
                if v in local:
                    if local[v] != val:
                        ok = False
                        break
                else:
                    local[v] = val
            if ok:
                recur(i + 1, local)

    recur(0, {})
    if agg.kind == AGG_COUNT:
        return count
    if agg.kind == AGG_MIN:
        return tuple(minima) if minima is not None else None
    return bag
