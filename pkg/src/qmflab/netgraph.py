"""Graphs of tensor networks with open edges: validation, min-cut analysis, surgeries.

A network graph consists of vertices carrying numbered index slots and edges of
four kinds: ``closed`` edges join two (vertex, slot) endpoints, ``input`` /
``output`` edges join one endpoint to a free end on the input / output side,
and ``identity`` edges run straight from the input side to the output side
without touching any vertex.  Every slot of every vertex is used by exactly
one edge endpoint, so the edge list fully determines the local index ordering.

Open ends on the input side are collectively the set S, those on the output
side the set T; a cut is a partition of the vertices that separates S from T,
and the min cut (unit capacities, identity edges always crossing) controls the
rank scaling of the contracted operator.
"""

from __future__ import annotations

import json
import random
from collections import deque
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, NamedTuple

from .errors import NotConnectedError, ValidationError

CLOSED = "closed"
INPUT = "input"
OUTPUT = "output"
IDENTITY = "identity"

_KINDS = (CLOSED, INPUT, OUTPUT, IDENTITY)


@dataclass(frozen=True)
class Edge:
    """One edge; ``ends`` holds (vertex, slot) endpoints: 2, 1, 1, 0 by kind."""

    kind: str
    ends: tuple[tuple[str, int], ...] = ()

    def touches(self, vertex: str) -> bool:
        return any(v == vertex for v, _ in self.ends)


@dataclass(frozen=True)
class TensorNetworkGraph:
    """Immutable tensor-network graph.  Edge ids are positions in ``edges``."""

    name: str
    degrees: dict[str, int]
    edges: tuple[Edge, ...]

    @property
    def vertices(self) -> tuple[str, ...]:
        return tuple(sorted(self.degrees))

    @property
    def num_vertices(self) -> int:
        return len(self.degrees)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def edge_ids(self, *kinds: str) -> tuple[int, ...]:
        return tuple(i for i, e in enumerate(self.edges) if e.kind in kinds)

    @property
    def input_ids(self) -> tuple[int, ...]:
        """Edges with a free end in S (inputs and identity edges), by edge id."""
        return self.edge_ids(INPUT, IDENTITY)

    @property
    def output_ids(self) -> tuple[int, ...]:
        """Edges with a free end in T (outputs and identity edges), by edge id."""
        return self.edge_ids(OUTPUT, IDENTITY)

    @property
    def num_inputs(self) -> int:
        return len(self.input_ids)

    @property
    def num_outputs(self) -> int:
        return len(self.output_ids)

    @property
    def is_degree_uniform(self) -> bool:
        return len(set(self.degrees.values())) <= 1

    def uniform_degree(self) -> int:
        if not self.is_degree_uniform or not self.degrees:
            raise ValidationError(f"{self.name!r}: vertices do not share one degree")
        return next(iter(self.degrees.values()))

    def validate(self) -> "TensorNetworkGraph":
        seen: dict[str, set[int]] = {v: set() for v in self.degrees}
        for i, e in enumerate(self.edges):
            if e.kind not in _KINDS:
                raise ValidationError(f"edge {i}: unknown kind {e.kind!r}")
            want = {CLOSED: 2, INPUT: 1, OUTPUT: 1, IDENTITY: 0}[e.kind]
            if len(e.ends) != want:
                raise ValidationError(
                    f"edge {i} ({e.kind}): expected {want} endpoints, got {len(e.ends)}"
                )
            for v, s in e.ends:
                if v not in self.degrees:
                    raise ValidationError(f"edge {i}: unknown vertex {v!r}")
                if not 1 <= s <= self.degrees[v]:
                    raise ValidationError(
                        f"edge {i}: slot {s} out of range 1..{self.degrees[v]} at {v!r}"
                    )
                if s in seen[v]:
                    raise ValidationError(f"vertex {v!r}: slot {s} used twice")
                seen[v].add(s)
        for v, d in self.degrees.items():
            if d < 0:
                raise ValidationError(f"vertex {v!r}: negative degree")
            if len(seen[v]) != d:
                missing = sorted(set(range(1, d + 1)) - seen[v])
                raise ValidationError(f"vertex {v!r}: unused slots {missing}")
        return self

    def endpoint_map(self) -> dict[tuple[str, int], int]:
        """(vertex, slot) -> edge id."""
        out = {}
        for i, e in enumerate(self.edges):
            for end in e.ends:
                out[end] = i
        return out

    def to_json(self) -> str:
        doc = {
            "name": self.name,
            "vertices": [{"id": v, "degree": self.degrees[v]} for v in self.vertices],
            "edges": [_edge_to_obj(e) for e in self.edges],
        }
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def _edge_to_obj(e: Edge) -> dict:
    if e.kind == CLOSED:
        return {
            "kind": CLOSED,
            "ends": [{"vertex": v, "slot": s} for v, s in e.ends],
        }
    if e.kind in (INPUT, OUTPUT):
        (v, s), = e.ends
        return {"kind": e.kind, "end": {"vertex": v, "slot": s}}
    return {"kind": IDENTITY}


def _parse_end(obj, where: str) -> tuple[str, int]:
    if not isinstance(obj, dict) or "vertex" not in obj or "slot" not in obj:
        raise ValidationError(f"{where}: endpoint must be {{'vertex','slot'}}")
    v, s = obj["vertex"], obj["slot"]
    if not isinstance(v, str) or not isinstance(s, int):
        raise ValidationError(f"{where}: vertex must be str, slot int")
    return (v, s)


def load_network(text: str) -> TensorNetworkGraph:
    """Parse a JSON network file and return the validated graph."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(
            f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(doc, dict):
        raise ValidationError("top level must be a JSON object")
    for key in ("name", "vertices", "edges"):
        if key not in doc:
            raise ValidationError(f"missing field {key!r}")
    degrees: dict[str, int] = {}
    for i, v in enumerate(doc["vertices"]):
        if not isinstance(v, dict) or "id" not in v or "degree" not in v:
            raise ValidationError(f"vertices[{i}]: need {{'id','degree'}}")
        if v["id"] in degrees:
            raise ValidationError(f"vertices[{i}]: duplicate id {v['id']!r}")
        degrees[v["id"]] = v["degree"]
    edges = []
    for i, e in enumerate(doc["edges"]):
        where = f"edges[{i}]"
        if not isinstance(e, dict) or "kind" not in e:
            raise ValidationError(f"{where}: need a 'kind' field")
        kind = e["kind"]
        if kind == CLOSED:
            ends = e.get("ends")
            if not isinstance(ends, list) or len(ends) != 2:
                raise ValidationError(f"{where}: closed edge needs 2 'ends'")
            edges.append(Edge(CLOSED, tuple(_parse_end(x, where) for x in ends)))
        elif kind in (INPUT, OUTPUT):
            if "end" not in e:
                raise ValidationError(f"{where}: {kind} edge needs an 'end'")
            edges.append(Edge(kind, (_parse_end(e["end"], where),)))
        elif kind == IDENTITY:
            edges.append(Edge(IDENTITY))
        else:
            raise ValidationError(f"{where}: unknown kind {kind!r}")
    return TensorNetworkGraph(str(doc["name"]), degrees, tuple(edges)).validate()


def load_network_file(path) -> TensorNetworkGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return load_network(fh.read())


def is_connected_network(g: TensorNetworkGraph) -> bool:
    """True iff every vertex reaches some open edge (identity edges touch none)."""
    attached = {v for e in g.edges if e.kind in (INPUT, OUTPUT) for v, _ in e.ends}
    if not g.degrees:
        return True
    neighbours: dict[str, set[str]] = {v: set() for v in g.degrees}
    for e in g.edges:
        if e.kind == CLOSED:
            (a, _), (b, _) = e.ends
            neighbours[a].add(b)
            neighbours[b].add(a)
    seen = set(attached)
    queue = deque(attached)
    while queue:
        v = queue.popleft()
        for w in neighbours[v]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return seen == set(g.degrees)


class Cut(NamedTuple):
    """Vertex partition separating S from T, with the crossing edge ids."""

    sbar: frozenset[str]
    tbar: frozenset[str]
    cut_set: tuple[int, ...]


class FlowPath(NamedTuple):
    edges: tuple[int, ...]
    vertices: tuple[str, ...]


class FlowPaths(NamedTuple):
    paths: tuple[FlowPath, ...]


class MinCutResult(NamedTuple):
    mc: int
    cut: Cut
    paths: FlowPaths


def crossing_edges(g: TensorNetworkGraph, sbar: Iterable[str]) -> tuple[int, ...]:
    """Edge ids crossing the partition (sbar-side vertices given).

    Open ends are fixed: S ends sit on the sbar side, T ends on the tbar side,
    so an input edge crosses when its vertex is not in sbar, an output edge
    when its vertex is, and an identity edge always crosses.
    """
    sbar = set(sbar)
    out = []
    for i, e in enumerate(g.edges):
        if e.kind == CLOSED:
            (a, _), (b, _) = e.ends
            if (a in sbar) != (b in sbar):
                out.append(i)
        elif e.kind == INPUT:
            if e.ends[0][0] not in sbar:
                out.append(i)
        elif e.kind == OUTPUT:
            if e.ends[0][0] in sbar:
                out.append(i)
        else:
            out.append(i)
    return tuple(out)


def make_cut(g: TensorNetworkGraph, sbar_vertices: Iterable[str]) -> Cut:
    sbar = frozenset(sbar_vertices)
    unknown = sbar - set(g.degrees)
    if unknown:
        raise ValidationError(f"cut names unknown vertices {sorted(unknown)}")
    tbar = frozenset(g.degrees) - sbar
    return Cut(sbar, tbar, crossing_edges(g, sbar))


_SOURCE = 0
_SINK = 1


def _flow_arcs(g: TensorNetworkGraph, index: dict[str, int]):
    """Unit-capacity arc list; closed edges get one arc pair per direction."""
    arcs: list[list[int]] = []      # [head, residual capacity]
    arc_edge: list[int] = []        # graph edge id per arc pair
    adj: list[list[int]] = [[] for _ in range(len(index) + 2)]

    def add(tail: int, head: int, eid: int) -> None:
        adj[tail].append(len(arcs))
        arcs.append([head, 1])
        adj[head].append(len(arcs))
        arcs.append([tail, 0])
        arc_edge.extend((eid, eid))

    for i, e in enumerate(g.edges):
        if e.kind == CLOSED:
            a, b = index[e.ends[0][0]], index[e.ends[1][0]]
            add(a, b, i)
            add(b, a, i)
        elif e.kind == INPUT:
            add(_SOURCE, index[e.ends[0][0]], i)
        elif e.kind == OUTPUT:
            add(index[e.ends[0][0]], _SINK, i)
        else:
            add(_SOURCE, _SINK, i)
    return arcs, arc_edge, adj


def min_cut(g: TensorNetworkGraph) -> MinCutResult:
    """Min cut / max flow with unit edge capacities (BFS augmenting paths).

    Returns the cut value, the canonical witness whose sbar is the set of
    vertices reachable from the source in the final residual graph, and a
    decomposition of the flow into that many edge-disjoint S-to-T paths.
    """
    if not is_connected_network(g):
        raise NotConnectedError(f"{g.name!r}: min cut requires a connected network")
    verts = g.vertices
    index = {v: i + 2 for i, v in enumerate(verts)}
    arcs, arc_edge, adj = _flow_arcs(g, index)
    n = len(verts) + 2

    flow = 0
    while True:
        prev = [-1] * n
        prev[_SOURCE] = -2
        queue = deque([_SOURCE])
        while queue and prev[_SINK] == -1:
            u = queue.popleft()
            for ai in adj[u]:
                head, cap = arcs[ai]
                if cap > 0 and prev[head] == -1:
                    prev[head] = ai
                    queue.append(head)
        if prev[_SINK] == -1:
            break
        node = _SINK
        while node != _SOURCE:
            ai = prev[node]
            arcs[ai][1] -= 1
            arcs[ai ^ 1][1] += 1
            node = arcs[ai ^ 1][0]
        flow += 1

    reachable = {_SOURCE}
    queue = deque([_SOURCE])
    while queue:
        u = queue.popleft()
        for ai in adj[u]:
            head, cap = arcs[ai]
            if cap > 0 and head not in reachable:
                reachable.add(head)
                queue.append(head)
    sbar = frozenset(v for v in verts if index[v] in reachable)
    witness = make_cut(g, sbar)
    if len(witness.cut_set) != flow:
        raise LookupError(
            f"flow/cut mismatch on {g.name!r}: flow={flow}, cut={len(witness.cut_set)}"
        )
    paths = _decompose_paths(g, index, arcs, arc_edge, adj, flow)
    return MinCutResult(flow, witness, FlowPaths(tuple(paths)))


def _decompose_paths(g, index, arcs, arc_edge, adj, flow):
    # Net out antiparallel unit flows on the same closed edge, then walk the
    # remaining flow units from the source; unit capacities make the walks
    # edge-disjoint.
    used: dict[int, int] = {}       # arc index (forward arcs only) -> flow
    for ai in range(0, len(arcs), 2):
        used[ai] = 1 - arcs[ai][1]
    by_edge: dict[int, list[int]] = {}
    for ai, f in used.items():
        if f:
            by_edge.setdefault(arc_edge[ai], []).append(ai)
    for eid, lst in by_edge.items():
        if len(lst) == 2:           # closed edge carrying flow both ways
            used[lst[0]] = used[lst[1]] = 0

    outgoing: dict[int, list[int]] = {}
    for ai, f in used.items():
        if f:
            tail = arcs[ai ^ 1][0]
            outgoing.setdefault(tail, []).append(ai)
    for lst in outgoing.values():
        lst.sort()

    names = {i: v for v, i in index.items()}
    paths = []
    for _ in range(flow):
        node = _SOURCE
        edges: list[int] = []
        vertices: list[str] = []
        while node != _SINK:
            ai = outgoing[node].pop(0)
            edges.append(arc_edge[ai])
            node = arcs[ai][0]
            if node != _SINK:
                vertices.append(names[node])
        paths.append(FlowPath(tuple(edges), tuple(vertices)))
    return paths


SPLITTABLE = "splittable"
CASE_I = "case_i"
CASE_II = "case_ii"
CASE_III = "case_iii"
CASE_NONE = "none"

_SUBSET_LIMIT = 16


def classify_case(g: TensorNetworkGraph) -> str:
    """Classify against the three no-nontrivial-min-cut cases.

    Returns ``splittable`` when some min cut leaves at least one vertex on
    each side; otherwise compares |S|, |T| with the min cut value.
    """
    mc = min_cut(g).mc
    verts = g.vertices
    if len(verts) > _SUBSET_LIMIT:
        raise ValidationError(f"{g.name!r}: too many vertices to enumerate cuts")
    for r in range(1, len(verts)):
        for sub in combinations(verts, r):
            if len(crossing_edges(g, sub)) == mc:
                return SPLITTABLE
    ni, no = g.num_inputs, g.num_outputs
    if ni == mc and no == mc:
        return CASE_III
    if ni == mc and no > mc:
        return CASE_I
    if no == mc and ni > mc:
        return CASE_II
    return CASE_NONE


def split_at_cut(
    g: TensorNetworkGraph, cut: Cut
) -> tuple[TensorNetworkGraph, TensorNetworkGraph]:
    """Cut the network into an S-side half (outputs on the cut) and a T-side
    half (inputs on the cut).  Crossing edges appear in both halves and become
    open or identity edges, so |E1| + |E2| = |E| + |cut_set|.
    """
    if cut.sbar | cut.tbar != set(g.degrees) or cut.sbar & cut.tbar:
        raise ValidationError("invalid cut: sbar/tbar is not a vertex partition")
    if tuple(cut.cut_set) != crossing_edges(g, cut.sbar):
        raise ValidationError("invalid cut: cut_set does not match the partition")
    sbar = cut.sbar
    e1: list[Edge] = []
    e2: list[Edge] = []
    for i, e in enumerate(g.edges):
        crossing = i in cut.cut_set
        if e.kind == CLOSED:
            (a, sa), (b, sb) = e.ends
            if not crossing:
                (e1 if a in sbar else e2).append(e)
            else:
                if a in sbar:
                    (va, ssa), (vb, ssb) = (a, sa), (b, sb)
                else:
                    (va, ssa), (vb, ssb) = (b, sb), (a, sa)
                e1.append(Edge(OUTPUT, ((va, ssa),)))
                e2.append(Edge(INPUT, ((vb, ssb),)))
        elif e.kind == INPUT:
            if not crossing:
                e1.append(e)
            else:
                e1.append(Edge(IDENTITY))
                e2.append(e)
        elif e.kind == OUTPUT:
            if not crossing:
                e2.append(e)
            else:
                e1.append(e)
                e2.append(Edge(IDENTITY))
        else:
            e1.append(e)
            e2.append(e)
    d1 = {v: g.degrees[v] for v in sorted(sbar)}
    d2 = {v: g.degrees[v] for v in sorted(cut.tbar)}
    g1 = TensorNetworkGraph(f"{g.name}:S-side", d1, tuple(e1)).validate()
    g2 = TensorNetworkGraph(f"{g.name}:T-side", d2, tuple(e2)).validate()
    return g1, g2


def remove_vertex(g: TensorNetworkGraph, vertex: str, side: str) -> TensorNetworkGraph:
    """Remove a vertex as input (side='input') or as output (side='output').

    Input-side removal deletes the vertex and its input edges; its closed
    edges become input edges at their far endpoint and its output edges become
    identity edges.  Output-side removal mirrors input and output roles.
    """
    if vertex not in g.degrees:
        raise ValidationError(f"unknown vertex {vertex!r}")
    if side not in (INPUT, OUTPUT):
        raise ValidationError(f"side must be 'input' or 'output', got {side!r}")
    drop_kind = INPUT if side == INPUT else OUTPUT
    other_kind = OUTPUT if side == INPUT else INPUT
    new_edges: list[Edge] = []
    for e in g.edges:
        if not e.touches(vertex):
            new_edges.append(e)
            continue
        if e.kind == CLOSED:
            far = [end for end in e.ends if end[0] != vertex]
            if not far:
                raise ValidationError(
                    f"cannot remove {vertex!r}: self-loop edges are not supported"
                )
            new_edges.append(Edge(drop_kind, (far[0],)))
        elif e.kind == drop_kind:
            continue
        elif e.kind == other_kind:
            new_edges.append(Edge(IDENTITY))
    degrees = {v: d for v, d in g.degrees.items() if v != vertex}
    name = f"{g.name}-{vertex}/{side}"
    return TensorNetworkGraph(name, degrees, tuple(new_edges)).validate()


def product_network(
    g1: TensorNetworkGraph, g2: TensorNetworkGraph
) -> TensorNetworkGraph:
    """Disjoint union; vertex ids are namespaced to keep the factors apart."""
    if not g2.degrees and not g2.edges:
        return g1
    if not g1.degrees and not g1.edges:
        return g2

    def rename(g: TensorNetworkGraph, tag: str):
        degs = {f"{tag}:{v}": d for v, d in g.degrees.items()}
        edges = tuple(
            Edge(e.kind, tuple((f"{tag}:{v}", s) for v, s in e.ends)) for e in g.edges
        )
        return degs, edges

    d1, e1 = rename(g1, "1")
    d2, e2 = rename(g2, "2")
    name = f"{g1.name}*{g2.name}"
    return TensorNetworkGraph(name, {**d1, **d2}, e1 + e2).validate()


def random_connected_network(
    num_vertices: int,
    degree: int,
    num_inputs: int,
    num_outputs: int,
    rng: random.Random,
    max_tries: int = 1000,
) -> TensorNetworkGraph:
    """Random connected degree-uniform multigraph with the given open counts.

    Slots are shuffled uniformly, open edges claim the first slots, and the
    remainder is paired into closed edges; draws failing the connectivity
    test are rejected.
    """
    total = num_vertices * degree
    n_open = num_inputs + num_outputs
    if n_open > total or (total - n_open) % 2:
        raise ValidationError("slot count cannot realize the requested open edges")
    for _ in range(max_tries):
        pool = [(f"v{i}", s) for i in range(num_vertices) for s in range(1, degree + 1)]
        rng.shuffle(pool)
        edges = [Edge(INPUT, (pool[i],)) for i in range(num_inputs)]
        edges += [
            Edge(OUTPUT, (pool[num_inputs + i],)) for i in range(num_outputs)
        ]
        rest = pool[n_open:]
        for a, b in zip(rest[0::2], rest[1::2]):
            if a[0] == b[0]:
                break  # no self-loops; redraw
            edges.append(Edge(CLOSED, (a, b)))
        else:
            degrees = {f"v{i}": degree for i in range(num_vertices)}
            g = TensorNetworkGraph("random", degrees, tuple(edges)).validate()
            if is_connected_network(g):
                return g
    raise ValidationError("failed to draw a connected network within max_tries")
