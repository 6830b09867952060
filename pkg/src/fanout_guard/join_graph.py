"""Declared join graphs: relations as nodes, equi-join edges with
cardinality labels, and the planning utilities built on them.

Graphs are restricted to trees (acyclic, connected); cyclic declarations
are rejected outright because the consistency argument is recursive over
a tree. All planning functions are pure and deterministic: depth-first
order with lexicographic tie-breaks among children.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence

from .errors import (
    BadJoinAttr,
    CardinalityMismatch,
    CycleDetected,
    Disconnected,
    UnknownRelation,
)
from .relation import Database


class Cardinality(Enum):
    ONE_TO_ONE = "one_to_one"
    ONE_TO_MANY = "one_to_many"
    MANY_TO_ONE = "many_to_one"
    MANY_TO_MANY = "many_to_many"

    @property
    def left_many(self) -> bool:
        return self in (Cardinality.MANY_TO_ONE, Cardinality.MANY_TO_MANY)

    @property
    def right_many(self) -> bool:
        return self in (Cardinality.ONE_TO_MANY, Cardinality.MANY_TO_MANY)

    @staticmethod
    def from_sides(left_many: bool, right_many: bool) -> "Cardinality":
        if left_many and right_many:
            return Cardinality.MANY_TO_MANY
        if left_many:
            return Cardinality.MANY_TO_ONE
        if right_many:
            return Cardinality.ONE_TO_MANY
        return Cardinality.ONE_TO_ONE


@dataclass(frozen=True)
class JoinEdge:
    left: str
    right: str
    on: tuple  # of (left_attr, right_attr)
    cardinality: Optional[Cardinality] = None

    def attrs_of(self, side: str) -> list:
        if side == self.left:
            return [l for l, _ in self.on]
        if side == self.right:
            return [r for _, r in self.on]
        raise UnknownRelation(f"{side} is not a side of edge {self.left}-{self.right}")

    def other(self, side: str) -> str:
        return self.right if side == self.left else self.left

    def many_on(self, side: str) -> bool:
        """Is `side` the 'many' end of this edge?"""
        if self.cardinality is None:
            raise CardinalityMismatch(
                f"edge {self.left}-{self.right} has no cardinality; "
                f"call resolve_cardinalities first",
                left=self.left,
                right=self.right,
            )
        return self.cardinality.left_many if side == self.left else self.cardinality.right_many


@dataclass
class JoinGraph:
    nodes: list  # relation names, stable order
    edges: list  # of JoinEdge
    fact_tables: list

    def adjacency(self) -> dict:
        adj: dict = {n: [] for n in self.nodes}
        for e in self.edges:
            adj[e.left].append((e.right, e))
            adj[e.right].append((e.left, e))
        return adj

    def edge_between(self, a: str, b: str) -> JoinEdge:
        for e in self.edges:
            if {e.left, e.right} == {a, b}:
                return e
        raise UnknownRelation(f"no edge between {a} and {b}")


@dataclass(frozen=True)
class TreeStep:
    """One depth-first traversal step: `child` is entered from `parent`
    across `edge`."""

    edge: JoinEdge
    parent: str
    child: str

    @property
    def parent_attrs(self) -> list:
        return self.edge.attrs_of(self.parent)

    @property
    def child_attrs(self) -> list:
        return self.edge.attrs_of(self.child)


@dataclass(frozen=True)
class WeighTarget:
    relation: str
    join_key: tuple  # the relation's own attributes on its entering edge

    def key(self) -> str:
        return self.relation


def validate(graph: JoinGraph, db: Database) -> None:
    """Connected, acyclic, attributes resolve, paired join types match."""
    for n in graph.nodes:
        if n not in db:
            raise UnknownRelation(f"graph node {n!r} not in database", relation=n)
    for e in graph.edges:
        for side in (e.left, e.right):
            if side not in graph.nodes:
                raise UnknownRelation(
                    f"edge {e.left}-{e.right} references unknown relation {side!r}",
                    relation=side,
                )
        for l_attr, r_attr in e.on:
            for rel_name, attr in ((e.left, l_attr), (e.right, r_attr)):
                if not db[rel_name].schema.has(attr):
                    raise BadJoinAttr(
                        f"edge {e.left}-{e.right}: {rel_name} has no attribute {attr!r}",
                        relation=rel_name,
                        attribute=attr,
                    )
            lt = db[e.left].schema.type_of(l_attr)
            rt = db[e.right].schema.type_of(r_attr)
            if lt is not rt:
                raise BadJoinAttr(
                    f"edge {e.left}-{e.right}: join attribute types differ "
                    f"({e.left}.{l_attr}: {lt.value} vs {e.right}.{r_attr}: {rt.value})",
                    left=f"{e.left}.{l_attr}",
                    right=f"{e.right}.{r_attr}",
                )
    # union-find cycle check, then connectivity
    parent = {n: n for n in graph.nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in graph.edges:
        ra, rb = find(e.left), find(e.right)
        if ra == rb:
            cycle = _find_cycle(graph)
            raise CycleDetected(
                f"join graph contains a cycle: {sorted(cycle)}", cycle=sorted(cycle)
            )
        parent[ra] = rb
    components: dict = {}
    for n in graph.nodes:
        components.setdefault(find(n), []).append(n)
    if len(components) > 1:
        comps = sorted(sorted(c) for c in components.values())
        raise Disconnected(
            f"join graph is not connected: components {comps}", components=comps
        )


def _find_cycle(graph: JoinGraph) -> set:
    """DFS cycle extraction for the error message."""
    adj = graph.adjacency()
    seen: dict = {}
    for start in graph.nodes:
        if start in seen:
            continue
        stack = [(start, None, [start])]
        while stack:
            node, via, path = stack.pop()
            if node in seen:
                continue
            seen[node] = True
            for nxt, e in adj[node]:
                if e is via:
                    continue
                if nxt in path:
                    return set(path[path.index(nxt):] + [node])
                stack.append((nxt, e, path + [nxt]))
    return set(graph.nodes)


def _side_is_unique(db: Database, rel: str, attrs: Sequence[str]) -> bool:
    """A side is 'one' iff its non-NULL join-key projection is duplicate-free."""
    relation = db[rel]
    idxs = [relation.schema.index(a) for a in attrs]
    seen = set()
    for row in relation.rows:
        k = tuple(row.values[i] for i in idxs)
        if any(v is None for v in k):
            continue
        if k in seen:
            return False
        seen.add(k)
    return True


def infer_cardinality(edge: JoinEdge, db: Database) -> Cardinality:
    """Observe the data; error if a declared 'one' side shows duplicates.

    A declared 'many' side with currently-unique keys is not a
    contradiction (many permits duplicates, it does not require them).
    """
    left_many = not _side_is_unique(db, edge.left, [l for l, _ in edge.on])
    right_many = not _side_is_unique(db, edge.right, [r for _, r in edge.on])
    observed = Cardinality.from_sides(left_many, right_many)
    if edge.cardinality is not None:
        declared = edge.cardinality
        if (left_many and not declared.left_many) or (right_many and not declared.right_many):
            raise CardinalityMismatch(
                f"edge {edge.left}-{edge.right}: declared {declared.value} but "
                f"observed {observed.value}",
                left=edge.left,
                right=edge.right,
                declared=declared.value,
                observed=observed.value,
            )
    return observed


def resolve_cardinalities(graph: JoinGraph, db: Database) -> JoinGraph:
    """Fill in missing edge cardinalities from data and verify declared ones."""
    edges = []
    for e in graph.edges:
        observed = infer_cardinality(e, db)
        edges.append(e if e.cardinality is not None else replace(e, cardinality=observed))
    return JoinGraph(nodes=list(graph.nodes), edges=edges, fact_tables=list(graph.fact_tables))


def steiner_subtree(
    graph: JoinGraph, required: set, roots: Optional[set] = None
) -> list:
    """Minimal connected subtree covering `required`, as ordered TreeSteps.

    On a tree the minimal connected subtree over a node set is unique; we
    compute it by pruning non-required leaves. Ordering is depth-first from
    the lexicographically smallest root (roots default to the required set),
    root-internal edges first, children visited lexicographically.
    """
    for n in required:
        if n not in graph.nodes:
            raise UnknownRelation(f"unknown relation {n!r}", relation=n)
    if not required:
        return []
    roots = set(roots) if roots else set(required)
    adj = graph.adjacency()

    # prune leaves that are not required until fixpoint
    keep = set(graph.nodes)
    degree = {n: len(adj[n]) for n in graph.nodes}
    fringe = [n for n in graph.nodes if degree[n] <= 1 and n not in required]
    removed_edges: set = set()
    while fringe:
        n = fringe.pop()
        if n not in keep or n in required:
            continue
        live = [(m, e) for m, e in adj[n] if m in keep and id(e) not in removed_edges]
        if len(live) > 1:
            continue
        keep.discard(n)
        for m, e in live:
            removed_edges.add(id(e))
            degree[m] -= 1
            if degree[m] <= 1 and m not in required:
                fringe.append(m)

    sub_adj: dict = {n: [] for n in keep}
    for e in graph.edges:
        if e.left in keep and e.right in keep and id(e) not in removed_edges:
            sub_adj[e.left].append((e.right, e))
            sub_adj[e.right].append((e.left, e))

    root_nodes = sorted(roots & keep) or sorted(keep)
    steps: list = []
    visited = {root_nodes[0]}
    root_order = [root_nodes[0]]

    def walk_roots(n: str) -> None:
        for m, e in sorted(sub_adj[n]):
            if m in roots and m not in visited:
                visited.add(m)
                steps.append(TreeStep(edge=e, parent=n, child=m))
                root_order.append(m)
                walk_roots(m)

    walk_roots(root_nodes[0])

    def expand(n: str) -> None:
        for m, e in sorted(sub_adj[n]):
            if m not in visited:
                visited.add(m)
                steps.append(TreeStep(edge=e, parent=n, child=m))
                expand(m)

    for r in root_order:
        expand(r)
    return steps


def weighing_targets(graph: JoinGraph, base: set, subtree: list) -> list:
    """Relations that must be weighed: non-base relations entered via a
    'many' side of their entering edge, in traversal order. Relations
    entered via a 'one' side carry exactly one row per join key and are
    implicitly weighed 1."""
    targets = []
    for step in subtree:
        if step.child in base:
            continue
        if step.edge.many_on(step.child):
            targets.append(
                WeighTarget(relation=step.child, join_key=tuple(step.child_attrs))
            )
    return targets


# JSON wire format ------------------------------------------------------------

def edge_to_json(e: JoinEdge) -> dict:
    return {
        "left": e.left,
        "right": e.right,
        "on": [[l, r] for l, r in e.on],
        "cardinality": e.cardinality.value if e.cardinality else None,
    }


def graph_from_json(doc: dict) -> JoinGraph:
    nodes = []
    for entry in doc["relations"]:
        nodes.append(entry["name"] if isinstance(entry, dict) else entry)
    edges = []
    for e in doc.get("edges", []):
        card = e.get("cardinality")
        edges.append(
            JoinEdge(
                left=e["left"],
                right=e["right"],
                on=tuple((l, r) for l, r in e["on"]),
                cardinality=Cardinality(card) if card else None,
            )
        )
    return JoinGraph(nodes=nodes, edges=edges, fact_tables=list(doc.get("fact_tables", [])))
