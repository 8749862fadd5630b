"""Exact expectation values of closed tensor networks by pairing enumeration.

A closed network carries two classes of nodes, plain and conjugated.  A
pairing is a perfect matching of plain nodes with conjugated nodes; gluing
the equal-slot edge ends of matched nodes decomposes the network into closed
loops, and each pairing contributes the bond dimension raised to its loop
count.  Summing over all admissible pairings gives the exact expectation of
the network's contraction as an integer-coefficient polynomial in the bond
dimension.

Two ensembles are supported: ``identical`` (one random tensor shared by every
vertex; every class-respecting matching is admissible) and ``independent``
(fresh tensor per vertex; matches must stay on the same base vertex).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from functools import cached_property
from math import factorial

from .errors import BudgetExceeded, LemmaViolation, NotConnectedError, ValidationError
from . import netgraph
from .netgraph import Cut, TensorNetworkGraph, is_connected_network, min_cut

IDENTICAL = "identical"
INDEPENDENT = "independent"

DEFAULT_BUDGET_PAIRS = 3_628_800  # all pairings of ten node pairs
_BUDGET_ENV = "QMFLAB_BUDGET_PAIRS"


def budget_pairs(override: int | None = None) -> int:
    if override is not None:
        return override
    return int(os.environ.get(_BUDGET_ENV, DEFAULT_BUDGET_PAIRS))


@dataclass(frozen=True)
class Node:
    """One tensor copy: base vertex, copy index within its trace, conjugation."""

    base: str
    sigma: int
    conjugate: bool
    part: int = 0


@dataclass(frozen=True)
class ClosedNetwork:
    """Closed (no open edges) network over slot-matched node endpoints.

    ``edges`` entries are (node_a, slot_a, node_b, slot_b) with node indices
    into ``nodes``.  ``free_loops`` counts loops present in every pairing;
    identity edges of the source graph contribute one such loop each.
    """

    nodes: tuple[Node, ...]
    degrees: tuple[int, ...]
    edges: tuple[tuple[int, int, int, int], ...]
    free_loops: int
    origin: str

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def plain_nodes(self) -> tuple[int, ...]:
        return tuple(i for i, nd in enumerate(self.nodes) if not nd.conjugate)

    @cached_property
    def conjugated_nodes(self) -> tuple[int, ...]:
        return tuple(i for i, nd in enumerate(self.nodes) if nd.conjugate)

    @cached_property
    def end_map(self) -> dict[tuple[int, int], tuple[int, int]]:
        """(node, slot) -> (edge id, end index)."""
        out: dict[tuple[int, int], tuple[int, int]] = {}
        for eid, (na, sa, nb, sb) in enumerate(self.edges):
            for end, (node, slot) in enumerate(((na, sa), (nb, sb))):
                if (node, slot) in out:
                    raise ValidationError(
                        f"closed network {self.origin!r}: slot {slot} of node "
                        f"{node} used twice"
                    )
                out[(node, slot)] = (eid, end)
        for i, d in enumerate(self.degrees):
            for s in range(1, d + 1):
                if (i, s) not in out:
                    raise ValidationError(
                        f"closed network {self.origin!r}: node {i} slot {s} open"
                    )
        return out

    def validate(self) -> "ClosedNetwork":
        self.end_map
        return self


@dataclass(frozen=True)
class Pairing:
    """Perfect matching of plain nodes to conjugated nodes."""

    matches: tuple[tuple[int, int], ...]
    loop_count: int | None = None

    def as_dict(self) -> dict[int, int]:
        return dict(self.matches)


@dataclass(frozen=True)
class PartialPairing:
    """Matches applied so far during a direct reduction, with loops created."""

    matches: tuple[tuple[int, int], ...]
    created_loops: int


@dataclass(frozen=True)
class MomentPolynomial:
    """Exact expectation as {loop-count exponent: number of pairings}."""

    coefficients: dict[int, int]
    ensemble: str
    k: int = 0
    network: str = ""

    @property
    def c_max(self) -> int:
        if not self.coefficients:
            raise ValueError("empty polynomial has no leading exponent")
        return max(self.coefficients)

    @property
    def n_max(self) -> int:
        return self.coefficients[self.c_max]

    @property
    def num_pairings(self) -> int:
        return sum(self.coefficients.values())

    def evaluate(self, bond_dim: int) -> int:
        return sum(c * bond_dim**e for e, c in self.coefficients.items())

    def shifted(self, delta: int) -> "MomentPolynomial":
        return replace(
            self, coefficients={e + delta: c for e, c in self.coefficients.items()}
        )

    def to_jsonable(self) -> dict:
        return {
            "network": self.network,
            "k": self.k,
            "ensemble": self.ensemble,
            "coefficients": {str(e): c for e, c in sorted(self.coefficients.items())},
            "c_max": self.c_max,
            "n_max": self.n_max,
            "num_pairings": self.num_pairings,
        }


def build_closed_network(g: TensorNetworkGraph, k: int) -> ClosedNetwork:
    """Closed network whose contraction is tr((L^dag L)^k) for the graph's L.

    Each vertex v becomes 2k copies (v; sigma), conjugated for even sigma.
    Closed edges are replicated once per sigma; an input edge joins copies
    (sigma, sigma+1) for odd sigma and an output edge for even sigma, with
    sigma periodic mod 2k.  Slots carry over unchanged.  Identity edges never
    touch a vertex; their k wires chain into exactly one loop, recorded in
    ``free_loops``.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if not is_connected_network(g):
        raise NotConnectedError(f"{g.name!r}: moments require a connected network")
    verts = g.vertices
    vidx = {v: i for i, v in enumerate(verts)}

    def node(v: str, sigma: int) -> int:
        return vidx[v] * 2 * k + (sigma - 1)

    nodes = tuple(
        Node(v, sigma, conjugate=(sigma % 2 == 0))
        for v in verts
        for sigma in range(1, 2 * k + 1)
    )
    degrees = tuple(g.degrees[nd.base] for nd in nodes)
    edges: list[tuple[int, int, int, int]] = []
    free = 0
    for e in g.edges:
        if e.kind == netgraph.CLOSED:
            (a, sa), (b, sb) = e.ends
            for sigma in range(1, 2 * k + 1):
                edges.append((node(a, sigma), sa, node(b, sigma), sb))
        elif e.kind in (netgraph.INPUT, netgraph.OUTPUT):
            (v, s), = e.ends
            start = 1 if e.kind == netgraph.INPUT else 2
            for sigma in range(start, 2 * k + 1, 2):
                nxt = sigma + 1 if sigma < 2 * k else 1
                edges.append((node(v, sigma), s, node(v, nxt), s))
        else:
            free += 1
    origin = f"tr((L^dag L)^{k}) of {g.name}"
    return ClosedNetwork(nodes, degrees, tuple(edges), free, origin).validate()


def build_product_closed_network(parts: list[ClosedNetwork]) -> ClosedNetwork:
    """Disjoint union of closed networks of one underlying graph.

    Nodes keep their base vertex ids and gain a distinguishing part index, so
    identical-ensemble pairings may cross factors while independent-ensemble
    pairings still match on the base vertex.
    """
    if not parts:
        raise ValidationError("product of zero closed networks")
    nodes: list[Node] = []
    degrees: list[int] = []
    edges: list[tuple[int, int, int, int]] = []
    free = 0
    part_offset = 0
    for net in parts:
        node_offset = len(nodes)
        nodes.extend(replace(nd, part=part_offset + nd.part) for nd in net.nodes)
        degrees.extend(net.degrees)
        edges.extend(
            (na + node_offset, sa, nb + node_offset, sb)
            for na, sa, nb, sb in net.edges
        )
        free += net.free_loops
        part_offset += max((nd.part for nd in net.nodes), default=0) + 1
    origin = " * ".join(net.origin for net in parts)
    return ClosedNetwork(
        tuple(nodes), tuple(degrees), tuple(edges), free, origin
    ).validate()


def _involution(n: ClosedNetwork, p: Pairing) -> dict[int, int]:
    q: dict[int, int] = {}
    for a, b in p.matches:
        if n.nodes[a].conjugate or not n.nodes[b].conjugate:
            raise ValidationError("pairing must match plain nodes to conjugated ones")
        if a in q or b in q:
            raise ValidationError("pairing repeats a node")
        q[a] = b
        q[b] = a
    if len(q) != n.num_nodes:
        raise ValidationError("pairing is not a perfect matching")
    return q


def count_loops(n: ClosedNetwork, p: Pairing) -> int:
    """Closed loops of a pairing: walk edges, hopping between matched nodes at
    equal slots; every edge lies on exactly one loop.  Includes free loops.
    """
    q = _involution(n, p)
    end_map = n.end_map
    edges = n.edges
    visited = [False] * len(edges)
    loops = 0
    for start in range(len(edges)):
        if visited[start]:
            continue
        loops += 1
        eid, end = start, 1
        while True:
            visited[eid] = True
            na, sa, nb, sb = edges[eid]
            node, slot = (nb, sb) if end else (na, sa)
            eid, other = end_map[(q[node], slot)]
            end = 1 - other
            if eid == start and end == 1:
                break
    return loops + n.free_loops


class _Glue:
    """Union-find over edge ends with rollback; a gluing that joins two ends
    already connected closes one loop."""

    def __init__(self, n: ClosedNetwork):
        self.end_map = n.end_map
        size = 2 * len(n.edges)
        self.parent = list(range(size))
        self.size = [1] * size
        self.closed = 0
        for eid in range(len(n.edges)):
            self._union(2 * eid, 2 * eid + 1, None)

    def _find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            x = parent[x]
        return x

    def _union(self, a: int, b: int, trail: list | None) -> None:
        ra, rb = self._find(a), self._find(b)
        if ra == rb:
            self.closed += 1
            if trail is not None:
                trail.append((-1, -1))
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        if trail is not None:
            trail.append((ra, rb))

    def glue_pair(self, node_a: int, node_b: int, degree: int) -> list:
        trail: list = []
        for s in range(1, degree + 1):
            ea, ia = self.end_map[(node_a, s)]
            eb, ib = self.end_map[(node_b, s)]
            self._union(2 * ea + ia, 2 * eb + ib, trail)
        return trail

    def undo(self, trail: list) -> None:
        for ra, rb in reversed(trail):
            if ra < 0:
                self.closed -= 1
            else:
                self.parent[rb] = rb
                self.size[ra] -= self.size[rb]


def _partners(n: ClosedNetwork, ensemble: str) -> tuple[tuple[int, ...], list[tuple[int, ...]]]:
    plain = n.plain_nodes
    conj = n.conjugated_nodes
    if len(plain) != len(conj):
        raise ValidationError(
            f"{n.origin!r}: {len(plain)} plain vs {len(conj)} conjugated nodes; "
            "expectation vanishes"
        )
    if ensemble == IDENTICAL:
        adm = [
            tuple(c for c in conj if n.degrees[c] == n.degrees[t]) for t in plain
        ]
    elif ensemble == INDEPENDENT:
        adm = [
            tuple(c for c in conj if n.nodes[c].base == n.nodes[t].base)
            for t in plain
        ]
    else:
        raise ValidationError(f"unknown ensemble {ensemble!r}")
    return plain, adm


def count_admissible(n: ClosedNetwork, ensemble: str) -> int:
    plain, adm = _partners(n, ensemble)
    if ensemble == IDENTICAL:
        return factorial(len(plain))
    total = 1
    groups: dict[str, list[int]] = {}
    for t in plain:
        groups.setdefault(n.nodes[t].base, []).append(t)
    conj_counts: dict[str, int] = {}
    for c in n.conjugated_nodes:
        base = n.nodes[c].base
        conj_counts[base] = conj_counts.get(base, 0) + 1
    for base, ts in groups.items():
        if conj_counts.get(base, 0) != len(ts):
            return 0
        total *= factorial(len(ts))
    return total


def _check_budget(n: ClosedNetwork, ensemble: str, budget: int | None) -> None:
    cap = budget_pairs(budget)
    count = count_admissible(n, ensemble)
    if count > cap:
        raise BudgetExceeded(
            f"{n.origin!r}: {count} admissible pairings exceed the budget of "
            f"{cap} (set {_BUDGET_ENV} to raise it, or estimate the moment by "
            "Monte Carlo with 'qmflab moments-mc')"
        )


def enumerate_closed(
    n: ClosedNetwork,
    ensemble: str,
    *,
    budget: int | None = None,
    first_match: tuple[int, int] | None = None,
) -> dict[int, int]:
    """Loop-count histogram over all admissible pairings of a closed network.

    ``first_match`` restricts enumeration to the partition of pairing space
    fixing that match of the first plain node; partitions merge by adding
    coefficient maps.
    """
    _check_budget(n, ensemble, budget)
    plain, adm = _partners(n, ensemble)
    if not plain:
        return {n.free_loops: 1}
    coeffs: dict[int, int] = {}
    glue = _Glue(n)
    used = [False] * n.num_nodes
    free = n.free_loops
    degrees = n.degrees
    order = sorted(range(len(plain)), key=lambda i: len(adm[i]))
    if first_match is not None:
        t0, c0 = first_match
        i0 = plain.index(t0)
        order.remove(i0)
        order.insert(0, i0)

    def recurse(depth: int) -> None:
        if depth == len(plain):
            c = glue.closed + free
            coeffs[c] = coeffs.get(c, 0) + 1
            return
        i = order[depth]
        t = plain[i]
        choices = adm[i]
        if depth == 0 and first_match is not None:
            choices = (first_match[1],)
        for c in choices:
            if used[c]:
                continue
            used[c] = True
            trail = glue.glue_pair(t, c, degrees[t])
            recurse(depth + 1)
            glue.undo(trail)
            used[c] = False

    recurse(0)
    return coeffs


def _merge(maps) -> dict[int, int]:
    out: dict[int, int] = {}
    for m in maps:
        for e, c in m.items():
            out[e] = out.get(e, 0) + c
    return out


def _partition_worker(args):
    n, ensemble, first = args
    return enumerate_closed(n, ensemble, first_match=first)


def enumerate_moment(
    g: TensorNetworkGraph,
    k: int,
    ensemble: str,
    *,
    budget: int | None = None,
    jobs: int = 1,
) -> MomentPolynomial:
    """Exact moment polynomial for tr((L^dag L)^k) in the chosen ensemble."""
    if ensemble == IDENTICAL and g.degrees and not g.is_degree_uniform:
        raise ValidationError(
            f"{g.name!r}: the identical ensemble needs one shared degree"
        )
    n = build_closed_network(g, k)
    coeffs = enumerate_polynomial(n, ensemble, budget=budget, jobs=jobs)
    return MomentPolynomial(coeffs, ensemble, k, g.name)


def enumerate_polynomial(
    n: ClosedNetwork, ensemble: str, *, budget: int | None = None, jobs: int = 1
) -> dict[int, int]:
    if jobs <= 1:
        return enumerate_closed(n, ensemble, budget=budget)
    _check_budget(n, ensemble, budget)
    plain, adm = _partners(n, ensemble)
    if not plain:
        return {n.free_loops: 1}
    t0 = plain[0]
    firsts = adm[0]
    tasks = [(n, ensemble, (t0, c)) for c in firsts]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return _merge(pool.map(_partition_worker, tasks))


@dataclass(frozen=True)
class ExtremeReport:
    """Leading behaviour of a closed network's pairing sum."""

    c_max: int
    n_max: int
    maximal: tuple[Pairing, ...]


def find_extremes(
    n: ClosedNetwork, ensemble: str, *, budget: int | None = None
) -> ExtremeReport:
    """Maximal loop count, its multiplicity, and all pairings achieving it.

    Branch-and-bound over matchings: every future gluing can close at most
    one further loop, so a branch dies when loops-so-far plus remaining
    gluings cannot reach the best complete pairing seen.
    """
    _check_budget(n, ensemble, budget)
    plain, adm = _partners(n, ensemble)
    if not plain:
        return ExtremeReport(n.free_loops, 1, (Pairing((), n.free_loops),))
    glue = _Glue(n)
    used = [False] * n.num_nodes
    degrees = n.degrees
    free = n.free_loops
    order = sorted(range(len(plain)), key=lambda i: len(adm[i]))
    remaining = [0] * (len(plain) + 1)
    for d in range(len(plain) - 1, -1, -1):
        remaining[d] = remaining[d + 1] + degrees[plain[order[d]]]
    best = -1
    argmax: list[tuple[tuple[int, int], ...]] = []
    current: list[tuple[int, int]] = []

    def recurse(depth: int) -> None:
        nonlocal best
        if glue.closed + free + remaining[depth] < best:
            return
        if depth == len(plain):
            c = glue.closed + free
            if c > best:
                best = c
                argmax.clear()
            if c == best:
                argmax.append(tuple(sorted(current)))
            return
        i = order[depth]
        t = plain[i]
        for c in adm[i]:
            if used[c]:
                continue
            used[c] = True
            current.append((t, c))
            trail = glue.glue_pair(t, c, degrees[t])
            recurse(depth + 1)
            glue.undo(trail)
            current.pop()
            used[c] = False

    recurse(0)
    maximal = tuple(Pairing(m, best) for m in argmax)
    return ExtremeReport(best, len(maximal), maximal)


def build_cut_pairing(g: TensorNetworkGraph, cut: Cut, k: int) -> Pairing:
    """The explicit maximal pairing attached to a minimum cut.

    Vertices on the input side of the cut pair (v; sigma) with (v; sigma+1)
    for odd sigma, vertices on the output side for even sigma (periodic mod
    2k).  Non-crossing edges then contribute k loops each and crossing edges
    one loop each, for k|E| - (k-1) MC(G) loops in total.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    result = min_cut(g)
    if len(cut.cut_set) != result.mc:
        raise ValidationError(
            f"cut of size {len(cut.cut_set)} is not minimal for {g.name!r} "
            f"(mc={result.mc}); its pairing would fall short of the maximum"
        )
    n = build_closed_network(g, k)
    verts = g.vertices
    vidx = {v: i for i, v in enumerate(verts)}

    def node(v: str, sigma: int) -> int:
        return vidx[v] * 2 * k + (sigma - 1)

    matches = []
    for v in verts:
        start = 1 if v in cut.sbar else 2
        for sigma in range(start, 2 * k + 1, 2):
            nxt = sigma + 1 if sigma < 2 * k else 1
            pair = (node(v, sigma), node(v, nxt))
            plain = pair[0] if not n.nodes[pair[0]].conjugate else pair[1]
            conj = pair[1] if plain == pair[0] else pair[0]
            matches.append((plain, conj))
    pairing = Pairing(tuple(sorted(matches)))
    loops = count_loops(n, pairing)
    expected = k * g.num_edges - (k - 1) * result.mc
    if loops != expected:
        raise LemmaViolation(
            f"cut pairing of {g.name!r} (k={k}) gives {loops} loops, "
            f"expected {expected}"
        )
    return Pairing(pairing.matches, loops)


def _wire_like(edge: tuple[int, int, int, int], pair: set[int]) -> bool:
    na, _, nb, _ = edge
    return na in pair and nb in pair


def reduce_one_step(
    n: ClosedNetwork, v: int, w: int
) -> tuple[ClosedNetwork, int]:
    """Contract the matched nodes v (plain) and w (conjugated) out of the
    network, gluing slot s of v to slot s of w for every s.

    Edges running between v and w become wires: cycles formed purely of wires
    are the created loops, while chains through wires splice the outer edge
    pairs into single edges with their far endpoints and slots kept.
    Requires at least one v-w edge whose two slots agree.
    """
    if v == w or not (0 <= v < n.num_nodes and 0 <= w < n.num_nodes):
        raise ValidationError(f"bad node indices ({v}, {w})")
    if n.nodes[v].conjugate or not n.nodes[w].conjugate:
        raise ValidationError("reduce needs a plain node and a conjugated node")
    if n.degrees[v] != n.degrees[w]:
        raise ValidationError("matched nodes must have equal degree")
    pair = {v, w}
    admissible = any(
        _wire_like(e, pair) and e[1] == e[3] and e[0] != e[2] for e in n.edges
    )
    if not admissible:
        raise ValidationError(
            f"no slot-matched edge between nodes {v} and {w}; reduction not allowed"
        )
    end_map = n.end_map
    edges = n.edges
    wires = {eid for eid, e in enumerate(edges) if _wire_like(e, pair)}

    def glue(port: tuple[int, int]) -> tuple[int, int]:
        node, slot = port
        return (w if node == v else v, slot)

    def chase(port: tuple[int, int], consumed: set[int]):
        """Follow gluings/wires from an inner port to the next outer edge end,
        or return None if the walk closes among wires."""
        cur = glue(port)
        while True:
            eid, end = end_map[cur]
            if eid not in wires:
                return (eid, end)
            if eid in consumed:
                return None
            consumed.add(eid)
            e = edges[eid]
            other = (e[2], e[3]) if end == 0 else (e[0], e[1])
            cur = glue(other)

    keep = [i for i in range(n.num_nodes) if i not in pair]
    remap = {old: new for new, old in enumerate(keep)}
    new_edges: list[tuple[int, int, int, int]] = []
    consumed: set[int] = set()
    handled_ends: set[tuple[int, int]] = set()
    for eid, e in enumerate(edges):
        if eid in wires:
            continue
        inner = [
            (endi, (node, slot))
            for endi, (node, slot) in enumerate(((e[0], e[1]), (e[2], e[3])))
            if node in pair
        ]
        if not inner:
            na, sa, nb, sb = e
            new_edges.append((remap[na], sa, remap[nb], sb))
            continue
        for endi, port in inner:
            if (eid, endi) in handled_ends:
                continue
            outer_here = (e[2], e[3]) if endi == 0 else (e[0], e[1])
            tail = chase(port, consumed)
            if tail is None:
                raise LemmaViolation("wire chain from an outer edge cannot close")
            far_eid, far_end = tail
            fe = edges[far_eid]
            outer_there = (fe[2], fe[3]) if far_end == 0 else (fe[0], fe[1])
            handled_ends.add((eid, endi))
            handled_ends.add((far_eid, far_end))
            new_edges.append(
                (
                    remap[outer_here[0]],
                    outer_here[1],
                    remap[outer_there[0]],
                    outer_there[1],
                )
            )

    created = 0
    for eid in wires:
        if eid in consumed:
            continue
        consumed.add(eid)
        e = edges[eid]
        cur = glue((e[2], e[3]))
        while True:
            eid2, end2 = end_map[cur]
            if eid2 == eid:
                created += 1
                break
            if eid2 not in wires:
                raise LemmaViolation("wire cycle leaked into a kept edge")
            consumed.add(eid2)
            e2 = edges[eid2]
            other = (e2[2], e2[3]) if end2 == 0 else (e2[0], e2[1])
            cur = glue(other)

    nodes = tuple(n.nodes[i] for i in keep)
    degrees = tuple(n.degrees[i] for i in keep)
    origin = f"{n.origin} / reduced({v},{w})"
    reduced = ClosedNetwork(nodes, degrees, tuple(new_edges), n.free_loops, origin)
    return reduced.validate(), created


def _is_reducible(n: ClosedNetwork, v: int, w: int) -> bool:
    pair = {v, w}
    return any(
        _wire_like(e, pair) and e[1] == e[3] and e[0] != e[2] for e in n.edges
    )


def direct_reduction(
    n: ClosedNetwork, p: Pairing
) -> tuple[ClosedNetwork, PartialPairing]:
    """Greedily apply the matches of ``p`` as reductions for as long as some
    match has a slot-matched edge; returns the stuck (possibly empty) network
    and the partial pairing applied so far with its created-loop total.
    """
    _involution(n, p)
    current = n
    index_of = {i: i for i in range(n.num_nodes)}
    pending = list(p.matches)
    applied: list[tuple[int, int]] = []
    created_total = 0
    progress = True
    while pending and progress:
        progress = False
        for pos, (t, c) in enumerate(pending):
            tv, cv = index_of[t], index_of[c]
            if not _is_reducible(current, tv, cv):
                continue
            keep = [
                i for i in range(current.num_nodes) if i not in (tv, cv)
            ]
            remap = {old: new for new, old in enumerate(keep)}
            current, created = reduce_one_step(current, tv, cv)
            created_total += created
            index_of = {
                orig: remap[cur]
                for orig, cur in index_of.items()
                if cur in remap
            }
            applied.append((t, c))
            pending.pop(pos)
            progress = True
            break
    return current, PartialPairing(tuple(applied), created_total)


def is_direct_pairing(n: ClosedNetwork, p: Pairing) -> bool:
    """True iff ``p`` is reachable by iterated one-step reductions along its
    own matches.  Greedy order is sound: reductions forced by a fixed matching
    commute, so reaching the empty network certifies directness and a stuck
    state refutes it.
    """
    stuck, _ = direct_reduction(n, p)
    return stuck.num_nodes == 0


@dataclass(frozen=True)
class CmaxRow:
    k: int
    c_max: int
    n_max: int
    expected: int
    all_maximal_direct: bool


@dataclass(frozen=True)
class CmaxReport:
    network: str
    mc: int
    num_edges: int
    rows: tuple[CmaxRow, ...]
    envelope_ok: bool

    def n_max_by_k(self) -> dict[int, int]:
        return {r.k: r.n_max for r in self.rows}


def verify_cmax_formula(
    g: TensorNetworkGraph, k: int, *, budget: int | None = None
) -> CmaxReport:
    """Check the leading-order law over powers 1..k.

    For each power the enumerated maximal loop count must equal
    k|E| - (k-1) MC(G) and every maximal pairing must be direct; failures
    raise with the offending pairing.  The report also says whether the
    maximal-pairing multiplicities stay inside a fixed exponential envelope
    across the tested powers.
    """
    mc = min_cut(g).mc
    rows = []
    for kk in range(1, k + 1):
        n = build_closed_network(g, kk)
        rep = find_extremes(n, IDENTICAL, budget=budget)
        expected = kk * g.num_edges - (kk - 1) * mc
        if rep.c_max != expected:
            raise LemmaViolation(
                f"{g.name!r} k={kk}: C_max={rep.c_max} != {expected}; "
                f"witness {rep.maximal[0].matches}"
            )
        bad = [p for p in rep.maximal if not is_direct_pairing(n, p)]
        if bad:
            raise LemmaViolation(
                f"{g.name!r} k={kk}: maximal pairing is not direct: "
                f"{bad[0].matches}"
            )
        rows.append(CmaxRow(kk, rep.c_max, rep.n_max, expected, not bad))
    envelope = all(
        row.n_max <= 4 ** (row.k * max(1, g.num_vertices) * max(1, mc))
        for row in rows
    )
    return CmaxReport(g.name, mc, g.num_edges, tuple(rows), envelope)


def coefficient_c(g: TensorNetworkGraph, k: int, *, budget: int | None = None) -> int:
    """Leading coefficient of the k-th moment; the two ensembles must agree on
    both the leading exponent and this coefficient, and a mismatch is fatal.
    """
    n = build_closed_network(g, k)
    ident = find_extremes(n, IDENTICAL, budget=budget)
    indep = find_extremes(n, INDEPENDENT, budget=budget)
    if (ident.c_max, ident.n_max) != (indep.c_max, indep.n_max):
        raise LemmaViolation(
            f"{g.name!r} k={k}: ensembles disagree on the leading term: "
            f"identical (C_max={ident.c_max}, n_max={ident.n_max}) vs "
            f"independent (C_max={indep.c_max}, n_max={indep.n_max})"
        )
    return ident.n_max
