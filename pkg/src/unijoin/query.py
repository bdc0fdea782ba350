"""Conjunctive queries, join plans, and plan transformations.

A query is a head plus a list of atoms binding relation columns to shared
variables.  A join plan is an ordered list of nodes, each node an ordered
list of subatoms; per relation, the subatoms across all nodes must partition
that relation's variables.  The first subatom of a node is iterated, the
rest are probed, which is why a single plan shape covers left-deep binary
joins, per-variable worst-case optimal joins, and everything in between.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import PlanError, QueryError

AGG_FULL = "full"
AGG_COUNT = "count"
AGG_MIN = "min"


@dataclass(frozen=True)
class Atom:
    relation: str
    vars: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.vars)) != len(self.vars):
            raise QueryError(f"atom {self.relation}: repeated variable in {self.vars}")

    def __str__(self):
        return f"{self.relation}({','.join(self.vars)})"


@dataclass(frozen=True)
class Subatom:
    relation: str
    vars: tuple[str, ...]

    def __str__(self):
        return f"{self.relation}({','.join(self.vars)})"


@dataclass(frozen=True)
class AggregationSpec:
    """What to do with satisfying assignments: keep them, count them, or
    track per-column minima."""

    kind: str = AGG_FULL
    vars: tuple[str, ...] = ()


@dataclass(frozen=True)
class ConjunctiveQuery:
    head: tuple[str, ...]
    atoms: tuple[Atom, ...]

    def __post_init__(self):
        names = [a.relation for a in self.atoms]
        if len(set(names)) != len(names):
            raise QueryError(
                "duplicate relation name in query body; register the relation "
                "under a second catalog name for self-joins"
            )
        body = self.variables()
        for v in self.head:
            if v not in body:
                raise QueryError(f"head variable {v!r} does not appear in the body")
        if len(set(self.head)) != len(self.head):
            raise QueryError("repeated variable in query head")

    def variables(self) -> set[str]:
        return {v for a in self.atoms for v in a.vars}

    def atom(self, relation: str) -> Atom:
        for a in self.atoms:
            if a.relation == relation:
                return a
        raise QueryError(f"no atom over relation {relation!r}")

    @property
    def full(self) -> bool:
        return set(self.head) == self.variables()

    def __str__(self):
        return f"Q({','.join(self.head)}) :- " + ", ".join(str(a) for a in self.atoms)


@dataclass(frozen=True)
class FreeJoinPlan:
    nodes: tuple[tuple[Subatom, ...], ...]

    def __str__(self):
        return "\n".join(", ".join(str(s) for s in node) for node in self.nodes)

    def subatoms_of(self, relation: str):
        """(node_index, position, subatom) for one relation, in plan order."""
        out = []
        for ni, node in enumerate(self.nodes):
            for pi, sub in enumerate(node):
                if sub.relation == relation:
                    out.append((ni, pi, sub))
        return out


# A left-deep plan is just an atom ordering; join attributes are implicit in
# the shared variables with the prefix.
LeftDeepPlan = tuple


@dataclass(frozen=True)
class BushyPlan:
    """Binary join tree: leaves are atoms, internal nodes join two subtrees."""

    left: "BushyPlan | Atom"
    right: "BushyPlan | Atom"

    def leaves(self) -> list[Atom]:
        out = []
        for side in (self.left, self.right):
            if isinstance(side, BushyPlan):
                out.extend(side.leaves())
            else:
                out.append(side)
        return out

    def variables(self) -> set[str]:
        return {v for a in self.leaves() for v in a.vars}


_ATOM_RE = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_]*)\s*\(([^()]*)\)\s*")


def _parse_atom_text(text: str, what: str):
    m = _ATOM_RE.fullmatch(text)
    if m is None:
        raise QueryError(f"cannot parse {what}: {text!r}")
    name = m.group(1)
    args = [v.strip() for v in m.group(2).split(",")] if m.group(2).strip() else []
    for v in args:
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", v):
            raise QueryError(f"bad variable name {v!r} in {what}: {text!r}")
    return name, tuple(args)


def _split_atoms(body: str):
    """Split on commas that are not inside parentheses."""
    parts, depth, cur = [], 0, []
    for ch in body:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if cur:
        parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def parse_query(text: str):
    """Parse ``Head(v1,...) :- R(u,...), S(u,...)`` into a query + aggregate.

    The head argument list may instead be ``COUNT`` or ``MIN(v1,...,vk)``.
    A plain head that omits some body variables is treated as a bag
    projection (full-tuple aggregation over the listed variables).
    """
    if ":-" not in text:
        raise QueryError(f"query must contain ':-' at position {len(text)}: {text!r}")
    head_text, body_text = text.split(":-", 1)
    head_text = head_text.strip()
    m = re.fullmatch(r"([A-Za-z_][A-Za-z0-9_]*)\s*\((.*)\)", head_text)
    if m is None:
        raise QueryError(f"cannot parse query head: {head_text!r}")
    head_args = m.group(2).strip()

    atoms = []
    for atom_text in _split_atoms(body_text):
        name, vars_ = _parse_atom_text(atom_text, "atom")
        atoms.append(Atom(name, vars_))
    if not atoms:
        raise QueryError("query body is empty")

    body_vars_order = []
    for a in atoms:
        for v in a.vars:
            if v not in body_vars_order:
                body_vars_order.append(v)

    if head_args.upper() == "COUNT" and "," not in head_args:
        agg = AggregationSpec(AGG_COUNT, ())
        head = tuple(body_vars_order)
    elif head_args.upper().startswith("MIN(") or head_args.upper().startswith("MIN ("):
        inner = head_args[head_args.index("(") + 1 : head_args.rindex(")")]
        vars_ = tuple(v.strip() for v in inner.split(","))
        agg = AggregationSpec(AGG_MIN, vars_)
        head = tuple(body_vars_order)
        for v in vars_:
            if v not in head:
                raise QueryError(f"aggregate variable {v!r} does not appear in the body")
    else:
        head = tuple(v.strip() for v in head_args.split(",")) if head_args else ()
        cq = ConjunctiveQuery(head, tuple(atoms))
        if cq.full:
            return cq, AggregationSpec(AGG_FULL, head)
        # non-full plain head: bag projection onto the listed variables
        return cq, AggregationSpec(AGG_FULL, head)
    return ConjunctiveQuery(head, tuple(atoms)), agg


def format_plan(plan: FreeJoinPlan) -> str:
    return str(plan) + "\n"


def parse_plan(text: str) -> FreeJoinPlan:
    """One node per line, subatoms comma-separated: ``R(x,a), S(x)``."""
    nodes = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        subs = []
        for sub_text in _split_atoms(line):
            name, vars_ = _parse_atom_text(sub_text, "subatom")
            subs.append(Subatom(name, vars_))
        if subs:
            nodes.append(tuple(subs))
    return FreeJoinPlan(tuple(nodes))


def plan_violation(q: ConjunctiveQuery, plan: FreeJoinPlan) -> str | None:
    """First violated plan invariant as a message, or None when valid."""
    atom_vars = {a.relation: a.vars for a in q.atoms}
    if not plan.nodes:
        return "plan has no nodes"
    for node in plan.nodes:
        if not node:
            return "plan contains an empty node"
        for sub in node:
            if sub.relation not in atom_vars:
                return f"subatom {sub}: relation not in query"
            extra = set(sub.vars) - set(atom_vars[sub.relation])
            if extra:
                return f"subatom {sub}: variables {sorted(extra)} not bound by the atom"

    # Partition property per atom, and at most one subatom per atom per node.
    for rel, vars_ in atom_vars.items():
        parts = plan.subatoms_of(rel)
        if not parts:
            return f"atom {rel}: no subatoms in plan"
        seen_nodes = [ni for ni, _, _ in parts]
        if len(set(seen_nodes)) != len(seen_nodes):
            return f"atom {rel}: two subatoms share a node"
        covered: set[str] = set()
        for _, _, sub in parts:
            overlap = covered & set(sub.vars)
            if overlap:
                return f"atom {rel}: subatom variables {sorted(overlap)} not disjoint"
            covered |= set(sub.vars)
        if covered != set(vars_):
            missing = set(vars_) - covered
            return f"atom {rel}: variables {sorted(missing)} not covered by any subatom"

    # Binding order: a node's first subatom introduces its variables; every
    # other subatom must be fully bound when probed.
    bound: set[str] = set()
    for ni, node in enumerate(plan.nodes):
        first = node[0]
        if first.vars and set(first.vars) <= bound:
            return f"node {ni}: first subatom {first} introduces no new variables"
        bound |= set(first.vars)
        for sub in node[1:]:
            unbound = set(sub.vars) - bound
            if unbound:
                return f"node {ni}: probe {sub} uses unbound variables {sorted(unbound)}"
    return None


def validate_plan(q: ConjunctiveQuery, plan: FreeJoinPlan) -> None:
    msg = plan_violation(q, plan)
    if msg is not None:
        raise PlanError(msg)


def convert_left_deep(q: ConjunctiveQuery, order) -> FreeJoinPlan:
    """Straightforward conversion of a left-deep binary order into a plan.

    Node k iterates the variables of relation k not already bound by the
    prefix and probes relation k+1 on its variables shared with the prefix.
    A relation fully covered by the prefix contributes no iteration node;
    its probe simply stays in the previous node.
    """
    atoms = [a if isinstance(a, Atom) else q.atom(a) for a in order]
    if {a.relation for a in atoms} != {a.relation for a in q.atoms}:
        raise PlanError("left-deep order must cover exactly the query's atoms")
    nodes: list[list[Subatom]] = []
    bound: set[str] = set()
    for k, atom in enumerate(atoms):
        carry = tuple(v for v in atom.vars if v not in bound)
        if k == 0:
            nodes.append([Subatom(atom.relation, atom.vars)])
        elif carry:
            nodes.append([Subatom(atom.relation, carry)])
        bound |= set(atom.vars)
        if k + 1 < len(atoms):
            nxt = atoms[k + 1]
            shared = tuple(v for v in nxt.vars if v in bound)
            if not shared:
                raise PlanError(
                    f"cartesian product: {nxt.relation} shares no variable with the prefix"
                )
            nodes[-1].append(Subatom(nxt.relation, shared))
    plan = FreeJoinPlan(tuple(tuple(n) for n in nodes))
    validate_plan(q, plan)
    return plan


def _introduction_order(plan: FreeJoinPlan) -> list[str]:
    order = []
    for node in plan.nodes:
        for sub in node:
            for v in sub.vars:
                if v not in order:
                    order.append(v)
    return order


def _first_touch_order(plan: FreeJoinPlan) -> list[str]:
    order = []
    for node in plan.nodes:
        for sub in node:
            if sub.relation not in order:
                order.append(sub.relation)
    return order


MODE_GENERIC_JOIN = "generic-join"
MODE_FREEJOIN = "freejoin"


def optimize_plan(q: ConjunctiveQuery, plan: FreeJoinPlan, mode: str) -> FreeJoinPlan:
    """Rewrite a valid plan toward one end of the plan spectrum.

    ``generic-join`` splits the plan into one node per variable, each node
    listing every atom containing that variable (relations in first-touch
    order), which turns every join into an intersection step.  ``freejoin``
    hoists each probe into the earliest node where all its variables are
    already available, shrinking the number of nodes.
    """
    validate_plan(q, plan)
    if mode == MODE_GENERIC_JOIN:
        rel_order = _first_touch_order(plan)
        atom_by_rel = {a.relation: a for a in q.atoms}
        nodes = []
        for v in _introduction_order(plan):
            node = tuple(
                Subatom(rel, (v,))
                for rel in rel_order
                if v in atom_by_rel[rel].vars
            )
            nodes.append(node)
        out = FreeJoinPlan(tuple(nodes))
    elif mode == MODE_FREEJOIN:
        out = _hoist_probes(plan)
    else:
        raise PlanError(f"unknown optimization mode {mode!r}")
    validate_plan(q, out)
    return out


def _hoist_probes(plan: FreeJoinPlan) -> FreeJoinPlan:
    # Variables available after each node's first subatom has run.
    available: list[set[str]] = []
    bound: set[str] = set()
    for node in plan.nodes:
        bound |= set(node[0].vars)
        available.append(set(bound))

    # Earliest node of the preceding subatom of the same atom, to keep the
    # per-atom descent order intact.
    prev_part_node: dict[tuple[str, int], int] = {}
    new_nodes: list[list[Subatom]] = [[node[0]] for node in plan.nodes]
    part_index: dict[str, int] = {}
    placed_at: dict[tuple[str, int], int] = {}
    for ni, node in enumerate(plan.nodes):
        for pi, sub in enumerate(node):
            idx = part_index.get(sub.relation, 0)
            part_index[sub.relation] = idx + 1
            if pi == 0:
                placed_at[(sub.relation, idx)] = ni
                continue
            lo = 0
            if idx > 0:
                lo = placed_at[(sub.relation, idx - 1)] + 1
            target = ni
            for cand in range(lo, ni + 1):
                if set(sub.vars) <= available[cand]:
                    target = cand
                    break
            new_nodes[target].append(sub)
            placed_at[(sub.relation, idx)] = target
    return FreeJoinPlan(tuple(tuple(n) for n in new_nodes))


@dataclass(frozen=True)
class PlanStage:
    """One left-deep plan of a decomposed bushy tree.

    ``target`` is None for the root stage; otherwise the stage materializes
    an intermediate relation with attributes ``out_vars``.
    """

    target: str | None
    order: tuple[Atom, ...]
    out_vars: tuple[str, ...]


def decompose_bushy(q: ConjunctiveQuery, tree: "BushyPlan | Atom", agg_vars=()) -> list[PlanStage]:
    """Post-order decomposition of a bushy tree into left-deep stages.

    Every non-leaf right subtree becomes its own stage materializing an
    intermediate whose attributes are exactly its variables still needed
    above it (head, aggregate, or joins outside the subtree).  Intermediates
    carry no sort order.
    """
    needed_always = set(q.head) | set(agg_vars)
    stages: list[PlanStage] = []
    counter = [0]

    def linearize(node) -> list[Atom]:
        if isinstance(node, Atom):
            return [node]
        seq = linearize(node.left)
        if isinstance(node.right, Atom):
            seq.append(node.right)
            return seq
        sub_seq = linearize(node.right)
        sub_vars = {v for a in sub_seq for v in a.vars}
        outside = {
            v
            for a in q.atoms
            if a.relation not in {s.relation for s in sub_seq}
            for v in a.vars
        }
        live = sub_vars & (outside | needed_always)
        order = []
        for a in sub_seq:
            for v in a.vars:
                if v in live and v not in order:
                    order.append(v)
        counter[0] += 1
        name = f"_I{counter[0]}"
        stages.append(PlanStage(name, tuple(sub_seq), tuple(order)))
        seq.append(Atom(name, tuple(order)))
        return seq

    if isinstance(tree, Atom):
        root_seq = [tree]
    else:
        root_seq = linearize(tree)
    stages.append(PlanStage(None, tuple(root_seq), tuple(q.head)))
    return stages


def parse_bushy(text: str) -> "BushyPlan | Atom":
    """Parse a parenthesized join tree: ``((R(a,b) S(b,c)) (T(c,d) U(d,a)))``."""
    tokens = re.findall(r"\(|\)|[A-Za-z_][A-Za-z0-9_]*\([^()]*\)", text)
    pos = [0]

    def parse() -> "BushyPlan | Atom":
        if pos[0] >= len(tokens):
            raise PlanError("unexpected end of bushy plan")
        tok = tokens[pos[0]]
        if tok == "(":
            pos[0] += 1
            left = parse()
            right = parse()
            if pos[0] >= len(tokens) or tokens[pos[0]] != ")":
                raise PlanError("expected ')' in bushy plan")
            pos[0] += 1
            return BushyPlan(left, right)
        pos[0] += 1
        name, vars_ = _parse_atom_text(tok, "bushy leaf")
        return Atom(name, vars_)

    tree = parse()
    if pos[0] != len(tokens):
        raise PlanError("trailing tokens in bushy plan")
    return tree


@dataclass
class LivenessInfo:
    """Column liveness and offset requirements for one plan."""

    live_per_subatom: dict[tuple[int, int], tuple[str, ...]]
    needs_offsets: dict[str, bool]
    pruned_plan: FreeJoinPlan
    dead_vars: frozenset[str]
    dropped_atoms: tuple[str, ...] = ()


def liveness(q: ConjunctiveQuery, plan: FreeJoinPlan, agg: AggregationSpec) -> LivenessInfo:
    """Classify variables as live or dead and prune dead ones from the plan.

    A variable is live when it reaches the output (head or aggregate) or
    joins two atoms.  Dead variables are dropped from their subatoms; a
    subatom left empty disappears, and if it was a node's iteration source
    the node's probes move back to the previous node.  A relation needs
    offsets only when some node iterates its leaf groups to read columns.
    """
    out_vars = set(agg.vars) if agg.kind != AGG_FULL else set(agg.vars or q.head)
    if agg.kind == AGG_FULL and not agg.vars:
        out_vars = set(q.head)
    var_atoms: dict[str, int] = {}
    for a in q.atoms:
        for v in a.vars:
            var_atoms[v] = var_atoms.get(v, 0) + 1
    live = {v for v, n in var_atoms.items() if n > 1} | out_vars
    dead = frozenset(v for v in var_atoms if v not in live)

    live_map: dict[tuple[int, int], tuple[str, ...]] = {}
    new_nodes: list[list[Subatom]] = []
    dropped: list[str] = []
    for ni, node in enumerate(plan.nodes):
        cur: list[Subatom] = []
        for pi, sub in enumerate(node):
            kept = tuple(v for v in sub.vars if v in live)
            live_map[(ni, pi)] = kept
            if kept or not sub.vars:
                cur.append(Subatom(sub.relation, kept))
            elif pi == 0:
                # Iteration source vanished: node collapses into the
                # previous node's probe list.
                pass
            else:
                dropped.append(sub.relation)
        if not cur:
            continue
        if node and live_map[(ni, 0)] == () and node[0].vars:
            # first subatom was pruned away; remaining probes attach earlier
            if new_nodes:
                new_nodes[-1].extend(cur)
            else:
                new_nodes.append(cur)
        else:
            new_nodes.append(cur)
    pruned = FreeJoinPlan(tuple(tuple(n) for n in new_nodes))

    # Atoms whose every subatom was pruned act as pure multiplicity factors;
    # record them so the executor can account for their cardinality.
    remaining = {s.relation for node in pruned.nodes for s in node}
    fully_dropped = tuple(a.relation for a in q.atoms if a.relation not in remaining)

    needs = {a.relation: _needs_offsets(pruned, a.relation) for a in q.atoms}
    return LivenessInfo(live_map, needs, pruned, dead, fully_dropped)


def _needs_offsets(plan: FreeJoinPlan, relation: str) -> bool:
    """True when the plan iterates this relation's stored row offsets.

    Scanned relations (a single subatom that opens a node) stream their rows
    and store nothing; probe-only relations never leave their key levels.
    """
    parts = plan.subatoms_of(relation)
    if not parts:
        return False
    if len(parts) == 1 and parts[0][1] == 0:
        return False  # direct scan
    last_ni, last_pi, _ = parts[-1]
    return last_pi == 0
