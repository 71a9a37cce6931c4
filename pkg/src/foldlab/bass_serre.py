"""Finite pieces of the Bass-Serre tree of a splitting.

Cells are keyed by ``(orbit id, canonical coset representative)``: the vertex
``(v, g)`` is ``g . v^`` with ``g`` shortlex-least in ``g G_v``; the edge
``(e, g)`` is ``g . e^`` likewise.
"""
from __future__ import annotations

import os
from collections import deque
from dataclasses import dataclass, field

import networkx as nx

from .splittings import Splitting
from .words import (
    IDENTITY,
    LocalCoordinates,
    SubgroupRep,
    conjugate,
    coset_rep,
    double_cosets,
    enumerate_words,
    intersect,
    subgroup_automaton,
    trivial_subgroup,
)


def max_depth():
    return int(os.environ.get("FOLDLAB_MAX_DEPTH", "10000"))


# ---------------------------------------------------------------------------
# links


def link_cosets(s: Splitting, end, bound=None):
    """Representatives of the cosets sigma E (E the end group) inside G_v.

    Returns (reps, complete).  With infinite index the enumeration stops at
    representatives longer than ``bound``.
    """
    cache = s.__dict__.setdefault("_cache", {})
    key = ("_link", end, bound)
    if key in cache:
        return cache[key]
    p = s.pres
    v = s.vertex_at(end)
    G = s.vgroups[v]
    E = s.end_group(end)
    moves = []
    for h in G.gens:
        moves.append(h)
        moves.append(p.inv(h))
    moves = sorted(set(moves), key=p.shortlex_key)
    start = coset_rep(E, IDENTITY)
    seen = {start}
    order = [start]
    q = deque([start])
    complete = True
    cap = max_depth()
    while q:
        sig = q.popleft()
        for h in moves:
            nxt = coset_rep(E, p.mul(h, sig))
            if nxt in seen:
                continue
            if bound is not None and p.length(nxt) > bound:
                complete = False
                continue
            if len(seen) >= cap:
                complete = False
                continue
            seen.add(nxt)
            order.append(nxt)
            q.append(nxt)
    res = (sorted(order, key=p.shortlex_key), complete)
    cache[key] = res
    return res


# ---------------------------------------------------------------------------
# balls


@dataclass
class Ball:
    splitting: Splitting
    base: str
    radius: int
    vertices: dict            # (v, g) -> distance from base
    edges: dict               # (e, g) -> (tail cell, head cell)
    incidence: dict           # vertex cell -> list of edge cells
    truncated: set = field(default_factory=set)
    word_bound: int | None = None

    @property
    def complete(self):
        return not self.truncated

    def graph(self):
        g = nx.Graph()
        g.add_nodes_from(self.vertices)
        for ec, (a, b) in self.edges.items():
            g.add_edge(a, b, cell=ec)
        return g

    def other_end(self, ecell, vcell):
        a, b = self.edges[ecell]
        return b if a == vcell else a

    def summary(self):
        return {
            "radius": self.radius,
            "vertices": len(self.vertices),
            "edges": len(self.edges),
            "truncated": len(self.truncated),
        }


def vertex_cell(s: Splitting, v, g):
    return (v, coset_rep(s.vgroups[v], g))


def edge_cell(s: Splitting, e, g):
    return (e, coset_rep(s.edges[e].group, g))


def edge_ends(s: Splitting, ecell):
    """Vertex cells at the tail and head of an edge cell."""
    p = s.pres
    eid, g = ecell
    e = s.edges[eid]
    return (
        vertex_cell(s, e.tail, p.mul(g, p.inv(e.wt))),
        vertex_cell(s, e.head, p.mul(g, p.inv(e.wh))),
    )


def expand_ball(s: Splitting, base=None, radius=1, word_bound=None, link_bound=None):
    """Ball of the given radius around the lift of ``base``.

    ``link_bound`` caps coset representatives in infinite links and
    ``word_bound`` caps the representatives of cells; vertices whose link was
    cut are listed in ``truncated``.
    """
    p = s.pres
    base = base if base is not None else s.vertices[0]
    if link_bound is None:
        link_bound = word_bound if word_bound is not None else 6
    start = (base, IDENTITY)
    verts = {start: 0}
    edges = {}
    inc = {start: []}
    truncated = set()
    q = deque([start])
    cap = max_depth()
    while q:
        cell = q.popleft()
        d = verts[cell]
        if d >= radius:
            continue
        x, g = cell
        for end in s.ends_at(x):
            reps, complete = link_cosets(s, end, link_bound)
            if not complete:
                truncated.add(cell)
            w = s.attach(end)
            t = s.shift(end)
            y = s.far(end)
            for sig in reps:
                ec = edge_cell(s, end[0], p.mul(g, sig, w))
                if ec in edges:
                    continue
                far = vertex_cell(s, y, p.mul(g, sig, t))
                if word_bound is not None and (p.length(ec[1]) > word_bound or p.length(far[1]) > word_bound):
                    truncated.add(cell)
                    continue
                if len(verts) >= cap:
                    truncated.add(cell)
                    continue
                if far in verts:  # pragma: no cover - would mean a cycle
                    raise RuntimeError("ball expansion found a cycle")
                tail, head = (cell, far) if end[1] == "t" else (far, cell)
                edges[ec] = (tail, head)
                verts[far] = d + 1
                inc.setdefault(cell, []).append(ec)
                inc.setdefault(far, []).append(ec)
                q.append(far)
    return Ball(s, base, radius, verts, edges, inc, truncated, word_bound)


def stabilizer(b: Ball, cell):
    cache = b.__dict__.setdefault("_stab", {})
    if cell not in cache:
        s = b.splitting
        oid, g = cell
        if oid in s.vgroups and (cell in b.vertices):
            cache[cell] = conjugate(s.vgroups[oid], g)
        else:
            cache[cell] = conjugate(s.edges[oid].group, g)
    return cache[cell]


def is_reduced_path(b: Ball, path):
    """Edge cells forming a path without backtracking."""
    if not path:
        return True
    if len(set(path)) != len(path):
        return False
    for a, c in zip(path, path[1:]):
        if not set(b.edges[a]) & set(b.edges[c]):
            return False
    if len(path) > 2:
        for a, c, d in zip(path, path[1:], path[2:]):
            shared1 = set(b.edges[a]) & set(b.edges[c])
            shared2 = set(b.edges[c]) & set(b.edges[d])
            if shared1 == shared2:
                return False
    return True


def path_stabilizer(b: Ball, path):
    if not is_reduced_path(b, path):
        raise ValueError("path is not reduced")
    K = stabilizer(b, path[0])
    for ec in path[1:]:
        K = intersect(K, stabilizer(b, ec))
    return K


@dataclass
class FixedSet:
    vertices: set
    edges: set
    components: list       # list of (vertex set, diameter)

    @property
    def diameter(self):
        return max((d for _, d in self.components), default=-1)


def _diameters(verts, edge_pairs):
    g = nx.Graph()
    g.add_nodes_from(verts)
    g.add_edges_from(edge_pairs)
    comps = []
    for comp in sorted(nx.connected_components(g), key=lambda c: sorted(map(repr, c))):
        sub = g.subgraph(comp)
        comps.append((set(comp), nx.diameter(sub) if len(comp) > 1 else 0))
    return comps


def fixed_set(b: Ball, g):
    s = b.splitting
    p = s.pres
    vs = {c for c in b.vertices if s.vgroups[c[0]].contains(p.mul(p.inv(c[1]), g, c[1]))}
    es = {c for c in b.edges if s.edges[c[0]].group.contains(p.mul(p.inv(c[1]), g, c[1]))}
    return FixedSet(vs, es, _diameters(vs, [b.edges[e] for e in es]))


# ---------------------------------------------------------------------------
# classes of subgroups


def in_class(Q, K: SubgroupRep):
    """Membership of K in an upward closed class descriptor."""
    if Q in ("all-nontrivial", "nontrivial"):
        return not K.is_trivial()
    if Q == "non-cyclic":
        return not K.is_cyclic()
    if Q == "infinite":
        return not K.is_finite()
    if hasattr(Q, "larger"):
        return Q.larger(K)
    raise ValueError(f"unknown class {Q!r}")


def class_name(Q):
    return Q if isinstance(Q, str) else f"larger-than:{getattr(Q, 'name', Q)}"


@dataclass
class AcylindricityVerdict:
    k: int
    class_tested: str
    status: str               # pass | fail | inconclusive
    witness: list | None = None
    witness_stabilizer: SubgroupRep | None = None
    coverage: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.status == "pass"

    def format(self, p=None):
        lines = [f"k: {self.k}", f"class: {self.class_tested}", f"status: {self.status}"]
        for key in sorted(self.coverage):
            lines.append(f"{key}: {self.coverage[key]}")
        if self.witness is not None:
            pr = p or (self.witness_stabilizer.pres if self.witness_stabilizer else None)
            cells = " ".join(f"{e}@{pr.fmt(g)}" for e, g in self.witness)
            lines.append(f"witness: {cells}")
            if self.witness_stabilizer is not None:
                gens = ", ".join(pr.fmt(w) for w in self.witness_stabilizer.gens)
                lines.append(f"witness stabilizer: <{gens}>")
        return "\n".join(lines) + "\n"


def local_frame(s: Splitting, v):
    cache = s.__dict__.setdefault("_cache", {})
    key = ("_local", v)
    if key not in cache:
        cache[key] = LocalCoordinates(s.vgroups[v])
    return cache[key]


def _orbit_paths(s: Splitting, k, Q, limit):
    """Search the quotient for a reduced path of k+1 edges fixed by a Q subgroup.

    Each state keeps the pointwise stabilizer of the path so far, written in
    the intrinsic coordinates of the vertex group at the current end.
    """
    p = s.pres
    dc_cache = {}

    def dc(v, K, E):
        key = (v, K, E)
        if key not in dc_cache:
            dc_cache[key] = double_cosets(K, E)
        return dc_cache[key]

    count = 0
    for eid in s.edge_ids:
        for side in ("t", "h"):
            start = (eid, side)
            x = s.vertex_at(start)
            lx = local_frame(s, x)
            if lx.pres is None:
                continue
            K0 = lx.local(s.end_group(start))
            if not in_class(Q, K0):
                continue
            w = s.attach(start)
            path0 = [(eid, coset_rep(s.edges[eid].group, w))]
            stack = [(x, start, K0, IDENTITY, path0)]
            while stack:
                x, inc, K, g, path = stack.pop()
                lx = local_frame(s, x)
                if len(path) == k + 1:
                    return path, conjugate(lx.globalize(K), g)
                for end in s.ends_at(x):
                    E = lx.local(s.end_group(end))
                    y = s.far(end)
                    ly = local_frame(s, y)
                    for sig_l in dc(x, K, E):
                        if end == inc and E.contains(sig_l):
                            continue
                        count += 1
                        if count > limit:
                            raise OverflowError
                        K2 = intersect(K, conjugate(E, sig_l))
                        if not in_class(Q, K2):
                            continue
                        sig = lx.evaluate(sig_l)
                        st = p.mul(sig, s.shift(end))
                        sti = p.inv(st)
                        K3 = subgroup_automaton(
                            [ly.rewrite(p.conj(sti, lx.evaluate(h))) for h in K2.gens], ly.pres)
                        ec = (end[0], coset_rep(s.edges[end[0]].group, p.mul(g, sig, s.attach(end))))
                        stack.append((y, s.other(end), K3, p.mul(g, st), path + [ec]))
    return None


def _ball_paths(b: Ball, k, Q):
    for v0 in sorted(b.vertices, key=lambda c: (b.vertices[c], repr(c))):
        stack = [(v0, [], None)]
        while stack:
            v, path, K = stack.pop()
            if len(path) == k + 1:
                return path, K
            for ec in sorted(b.incidence.get(v, []), key=repr):
                if path and ec == path[-1]:
                    continue
                S = stabilizer(b, ec)
                K2 = S if K is None else intersect(K, S)
                if not in_class(Q, K2):
                    continue
                stack.append((b.other_end(ec, v), path + [ec], K2))
    return None


def check_acylindricity(b, k, Q="all-nontrivial", method="orbit"):
    """Decide whether reduced paths of k+1 edges have stabilizers outside Q.

    ``method="orbit"`` searches double cosets in the quotient and is exact for
    the whole tree (and hence for any ball); ``method="ball"`` walks the
    paths of the given ball only.
    """
    if isinstance(b, Splitting):
        s, ball = b, None
    else:
        s, ball = b.splitting, b
    cov = {"method": method}
    if ball is not None:
        cov.update(radius=ball.radius, word_bound=ball.word_bound, truncated_cells=len(ball.truncated))
    if method == "orbit":
        try:
            found = _orbit_paths(s, k, Q, max_depth() * 10)
        except OverflowError:
            return AcylindricityVerdict(k, class_name(Q), "inconclusive", coverage=cov)
        cov["scope"] = "whole tree"
    elif method == "ball":
        if ball is None:
            raise ValueError("ball method needs a ball")
        found = _ball_paths(ball, k, Q)
        cov["scope"] = "ball"
        if found is None and ball.radius < k + 2:
            return AcylindricityVerdict(k, class_name(Q), "inconclusive", coverage=cov)
    else:
        raise ValueError(f"unknown method {method}")
    if found is None:
        return AcylindricityVerdict(k, class_name(Q), "pass", coverage=cov)
    path, K = found
    return AcylindricityVerdict(k, class_name(Q), "fail", path, K, cov)


# ---------------------------------------------------------------------------
# exact fixed subtrees


def fixed_subtree(s: Splitting, K: SubgroupRep, limit=None):
    """Cells of the tree fixed by K; K must be elliptic.

    Returns (vertex cells, edge cells) or None when K fixes no vertex.
    """
    p = s.pres
    limit = limit or max_depth()
    start = None
    for v in s.vertices:
        # K fixes g v^ iff g^-1 K g <= G_v; try conjugators from double cosets
        G = s.vgroups[v]
        if K.le(G):
            start = (v, IDENTITY)
            break
    if start is None:
        start = _find_fixed_vertex(s, K)
        if start is None:
            return None
    verts = {vertex_cell(s, *start)}
    edges = set()
    q = deque([start])
    while q:
        x, g = q.popleft()
        Kx = conjugate(K, p.inv(g))
        for end in s.ends_at(x):
            E = s.end_group(end)
            for sig in double_cosets(Kx, E):
                if not s.vgroups[x].contains(sig):
                    continue
                if not Kx.le(conjugate(E, sig)):
                    continue
                ec = edge_cell(s, end[0], p.mul(g, sig, s.attach(end)))
                if ec in edges:
                    continue
                edges.add(ec)
                far = (s.far(end), p.mul(g, sig, s.shift(end)))
                fc = vertex_cell(s, *far)
                if fc not in verts:
                    verts.add(fc)
                    q.append(far)
                if len(edges) > limit:
                    raise OverflowError("fixed subtree exceeds the search cap")
    return verts, edges


def _find_fixed_vertex(s: Splitting, K: SubgroupRep):
    """A vertex (v, g) fixed by K, searching conjugators through double cosets."""
    p = s.pres
    if K.is_trivial():
        return (s.vertices[0], IDENTITY)
    for v in s.vertices:
        G = s.vgroups[v]
        for sig in double_cosets(K, G):
            if conjugate(K, p.inv(sig)).le(G):
                return (v, sig)
    return None


def fixed_subtree_diameter(s: Splitting, K: SubgroupRep):
    res = fixed_subtree(s, K)
    if res is None:
        return -1
    verts, edges = res
    pairs = [edge_ends(s, e) for e in edges]
    comps = _diameters(verts, pairs)
    return max(d for _, d in comps)


# ---------------------------------------------------------------------------
# brute force oracle


def short_stabilizer_elements(b: Ball, cell, max_len):
    """Elements of length <= max_len fixing a cell, by testing every word."""
    s = b.splitting
    p = s.pres
    key = ("_words", max_len)
    if key not in b.__dict__:
        b.__dict__[key] = enumerate_words(p, max_len)
    oid, h = cell
    G = s.vgroups[oid] if (oid in s.vgroups and cell in b.vertices) else s.edges[oid].group
    hi = p.inv(h)
    # g fixes h.x iff h^-1 g h lies in the stabilizer of x
    return {g for g in b.__dict__[key] if G.contains(p.mul(hi, g, h))}


def oracle_path_elements(b: Ball, path, max_len, cache=None):
    cache = {} if cache is None else cache
    out = None
    for ec in path:
        if ec not in cache:
            cache[ec] = short_stabilizer_elements(b, ec, max_len)
        out = set(cache[ec]) if out is None else out & cache[ec]
    return out


def oracle_acylindricity(b: Ball, k, Q, max_len):
    """Brute-force verdict: group generated by the short elements fixing each path."""
    p = b.splitting.pres
    cache = {}
    for v0 in sorted(b.vertices, key=lambda c: (b.vertices[c], repr(c))):
        stack = [(v0, [])]
        while stack:
            v, path = stack.pop()
            if len(path) == k + 1:
                els = oracle_path_elements(b, path, max_len, cache)
                K = subgroup_automaton(sorted(els), p) if els else trivial_subgroup(p)
                if in_class(Q, K):
                    return path, K
                continue
            for ec in b.incidence.get(v, []):
                if path and ec == path[-1]:
                    continue
                nxt = path + [ec]
                els = oracle_path_elements(b, nxt, max_len, cache)
                if not els - {IDENTITY} and Q != "never":
                    continue
                stack.append((b.other_end(ec, v), nxt))
    return None


# ---------------------------------------------------------------------------
# output


def ball_to_dot(b: Ball, name="ball"):
    s = b.splitting
    p = s.pres
    from .splittings import group_label

    def vid(c):
        return f"{c[0]}@{p.fmt(c[1])}"

    lines = [f"graph {name} {{"]
    for c in sorted(b.vertices, key=lambda c: (b.vertices[c], c[0], p.shortlex_key(c[1]))):
        lab = group_label(p, stabilizer(b, c))
        lines.append(f'  "{vid(c)}" [label="{vid(c)}\\n{lab}"];')
    for ec in sorted(b.edges, key=lambda c: (c[0], p.shortlex_key(c[1]))):
        a, h = b.edges[ec]
        lab = group_label(p, stabilizer(b, ec))
        lines.append(f'  "{vid(a)}" -- "{vid(h)}" [label="{ec[0]}: {lab}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
