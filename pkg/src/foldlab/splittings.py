"""Graphs of groups over a free product of cyclic groups.

Every vertex ``v`` has a chosen lift ``v^`` in the Bass-Serre tree whose
stabilizer is the vertex group.  An edge ``e`` from ``x`` to ``y`` has a lift
``e^`` with stabilizer the edge group and attachments ``(wt, wh)``: the lift
joins ``wt^-1 . x^`` and ``wh^-1 . y^``.  So ``wt E wt^-1 <= G_x`` and
``wh E wh^-1 <= G_y``.  Spanning-tree edges have trivial attachments, so the
lifted tree is a fundamental domain.

An *end* is ``(edge id, side)`` with side ``"t"`` or ``"h"``.  The standard
lift of an end at its vertex ``v`` is ``w . e^`` where ``w`` is the attachment
on that side; it starts at ``v^`` and ends at ``t . u^`` (``u`` the other
vertex, ``t = w w_other^-1``).
"""
from __future__ import annotations

import re
from collections import Counter, deque
from dataclasses import dataclass, field

from .words import (
    IDENTITY,
    Presentation,
    SubgroupRep,
    conjugate,
    join,
    subgroup_automaton,
    whole_group,
)


class SplittingError(ValueError):
    pass


def natural_key(s):
    return tuple(int(t) if t.isdigit() else t for t in re.split(r"(\d+)", s))


@dataclass(frozen=True)
class Edge:
    tail: str
    head: str
    group: SubgroupRep
    wt: tuple = IDENTITY
    wh: tuple = IDENTITY

    def side_of(self, v):
        return [s for s, u in (("t", self.tail), ("h", self.head)) if u == v]


@dataclass
class Splitting:
    pres: Presentation
    vgroups: dict
    edges: dict
    tree: frozenset = field(default_factory=frozenset)

    # -- basic access ---------------------------------------------------
    @property
    def vertices(self):
        return sorted(self.vgroups, key=natural_key)

    @property
    def edge_ids(self):
        return sorted(self.edges, key=natural_key)

    def copy(self):
        return Splitting(self.pres, dict(self.vgroups), dict(self.edges), frozenset(self.tree))

    def vertex_at(self, end):
        e = self.edges[end[0]]
        return e.tail if end[1] == "t" else e.head

    def far(self, end):
        e = self.edges[end[0]]
        return e.head if end[1] == "t" else e.tail

    def attach(self, end):
        e = self.edges[end[0]]
        return e.wt if end[1] == "t" else e.wh

    def other(self, end):
        return (end[0], "h" if end[1] == "t" else "t")

    def shift(self, end):
        """t with the far vertex of the standard lift at t . far^."""
        p = self.pres
        return p.mul(self.attach(end), p.inv(self.attach(self.other(end))))

    def end_group(self, end):
        """Stabilizer of the standard lift, in the frame of its vertex."""
        key = ("_eg", end)
        cache = self.__dict__.setdefault("_cache", {})
        if key not in cache:
            e = self.edges[end[0]]
            cache[key] = conjugate(e.group, self.attach(end))
        return cache[key]

    def ends_at(self, v):
        res = []
        for eid in self.edge_ids:
            e = self.edges[eid]
            if e.tail == v:
                res.append((eid, "t"))
            if e.head == v:
                res.append((eid, "h"))
        return res

    def valence(self, v):
        return len(self.ends_at(v))

    def euler(self):
        return len(self.vgroups) - len(self.edges)

    def betti(self):
        return 1 - self.euler()

    def neighbours(self, v):
        return [self.far(end) for end in self.ends_at(v)]

    def stable_letter(self, eid):
        e = self.edges[eid]
        return self.pres.mul(e.wt, self.pres.inv(e.wh))

    def is_free(self):
        return all(g.is_trivial() for g in self.vgroups.values())

    def fresh(self, prefix, taken):
        n = 1
        taken = set(taken)
        while f"{prefix}{n}" in taken:
            n += 1
        return f"{prefix}{n}"


# ---------------------------------------------------------------------------
# validation and invariants


@dataclass
class GraphInvariants:
    euler_characteristic: int
    betti_1: int
    edge_count: int
    vertex_count: int
    valence_histogram: dict


def graph_invariants(s: Splitting):
    hist = Counter(s.valence(v) for v in s.vgroups)
    chi = s.euler()
    return GraphInvariants(chi, 1 - chi, len(s.edges), len(s.vgroups), dict(sorted(hist.items())))


def _connected(vertices, edges):
    vertices = list(vertices)
    if not vertices:
        return True
    adj = {v: [] for v in vertices}
    for e in edges:
        adj[e.tail].append(e.head)
        adj[e.head].append(e.tail)
    seen = {vertices[0]}
    q = [vertices[0]]
    while q:
        x = q.pop()
        for y in adj[x]:
            if y not in seen:
                seen.add(y)
                q.append(y)
    return len(seen) == len(vertices)


def validate(s: Splitting, check_generation=True):
    """List of violated invariants; empty means valid."""
    issues = []
    if not s.vgroups:
        return ["no vertices"]
    for eid, e in s.edges.items():
        if e.tail not in s.vgroups or e.head not in s.vgroups:
            issues.append(f"edge {eid}: unknown endpoint")
            continue
        for side in ("t", "h"):
            v = s.vertex_at((eid, side))
            if not s.end_group((eid, side)).le(s.vgroups[v]):
                issues.append(f"edge {eid}: group not contained in vertex {v} at side {side}")
    if issues:
        return issues
    if not _connected(s.vgroups, s.edges.values()):
        issues.append("graph not connected")
    for eid in s.tree:
        if eid not in s.edges:
            issues.append(f"tree edge {eid} missing")
            continue
        e = s.edges[eid]
        if e.wt or e.wh:
            issues.append(f"tree edge {eid}: nontrivial attachment")
    tedges = [s.edges[e] for e in s.tree if e in s.edges]
    if len(tedges) != len(s.vgroups) - 1 or not _connected(s.vgroups, tedges):
        issues.append("spanning tree is not a spanning tree")
    if check_generation and not issues:
        gens = [g for G in s.vgroups.values() for g in G.gens]
        gens += [s.stable_letter(eid) for eid in s.edges if eid not in s.tree]
        if subgroup_automaton(gens, s.pres) != whole_group(s.pres):
            issues.append("vertex groups and stable letters do not generate the group")
    return issues


# ---------------------------------------------------------------------------
# frames


def normalize_frames(s: Splitting, root=None):
    """Re-choose lifts so that tree edges have trivial attachments.

    Non-tree edges get a trivial tail attachment.  Returns (splitting, frames)
    where frames[v] = c means new v^ = c . old v^.
    """
    p = s.pres
    verts = s.vertices
    root = root if root is not None else verts[0]
    # keep old tree edges where possible
    parent = {v: v for v in verts}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    tree = set()
    for eid in sorted(s.tree, key=natural_key) + s.edge_ids:
        if eid not in s.edges or eid in tree:
            continue
        e = s.edges[eid]
        a, b = find(e.tail), find(e.head)
        if a != b:
            parent[a] = b
            tree.add(eid)
    adj = {v: [] for v in verts}
    for eid in sorted(tree, key=natural_key):
        e = s.edges[eid]
        adj[e.tail].append((eid, "t"))
        adj[e.head].append((eid, "h"))
    c = {root: IDENTITY}
    q = deque([root])
    while q:
        x = q.popleft()
        for eid, side in adj[x]:
            e = s.edges[eid]
            y = e.head if side == "t" else e.tail
            if y in c:
                continue
            w_here = e.wt if side == "t" else e.wh
            w_there = e.wh if side == "t" else e.wt
            d = p.mul(c[x], w_here)
            c[y] = p.mul(d, p.inv(w_there))
            q.append(y)
    if len(c) != len(verts):
        raise SplittingError("graph not connected")
    new_v = {v: conjugate(G, c[v]) for v, G in s.vgroups.items()}
    new_e = {}
    for eid, e in s.edges.items():
        if eid in tree:
            d = p.mul(c[e.tail], e.wt)
            new_e[eid] = Edge(e.tail, e.head, conjugate(e.group, d), IDENTITY, IDENTITY)
        else:
            d = p.mul(c[e.tail], e.wt)
            wh = p.mul(c[e.head], e.wh, p.inv(d))
            new_e[eid] = Edge(e.tail, e.head, conjugate(e.group, d), IDENTITY, wh)
    out = Splitting(p, new_v, new_e, frozenset(tree))
    return out, c


# ---------------------------------------------------------------------------
# points of the tree: (vertex id, g) stands for g . v^


def same_point(s: Splitting, a, b):
    return a[0] == b[0] and s.vgroups[a[0]].contains(s.pres.mul(s.pres.inv(a[1]), b[1]))


def adjacent_step(s: Splitting, x, y, m):
    """(end, sigma) with the edge sigma . c(end) joining x^ and m . y^, or None."""
    from .words import find_in_coset
    p = s.pres
    for end in s.ends_at(x):
        if s.far(end) != y:
            continue
        t = s.shift(end)
        K = conjugate(s.vgroups[y], t)
        sigma = find_in_coset(s.vgroups[x], K, p.mul(m, p.inv(t)))
        if sigma is not None:
            return end, sigma
    return None


def neighbour_point(s: Splitting, pt, end, sigma=IDENTITY):
    """Far endpoint of g sigma c(end) where pt = (v, g)."""
    p = s.pres
    return (s.far(end), p.mul(pt[1], sigma, s.shift(end)))


# ---------------------------------------------------------------------------
# construction helpers


def single_vertex(pres, group=None, vid="v0"):
    group = group if group is not None else whole_group(pres)
    return Splitting(pres, {vid: group}, {}, frozenset())


def make_splitting(pres, vgroups, edges, tree=None):
    """vgroups: id -> list of words; edges: id -> (tail, head, gens, wt, wh)."""
    vg = {v: subgroup_automaton(g, pres) if not isinstance(g, SubgroupRep) else g for v, g in vgroups.items()}
    es = {}
    for eid, (t, h, gens, wt, wh) in edges.items():
        grp = gens if isinstance(gens, SubgroupRep) else subgroup_automaton(gens, pres)
        es[eid] = Edge(t, h, grp, wt or IDENTITY, wh or IDENTITY)
    if tree is None:
        tree = [eid for eid, e in es.items() if not e.wt and not e.wh]
        # drop cycles
        parent = {v: v for v in vg}

        def find(x):
            while parent[x] != x:
                x = parent[x]
            return x
        keep = []
        for eid in sorted(tree, key=natural_key):
            e = es[eid]
            a, b = find(e.tail), find(e.head)
            if a != b:
                parent[a] = b
                keep.append(eid)
        tree = keep
    s = Splitting(pres, vg, es, frozenset(tree))
    s, _ = normalize_frames(s)
    return s


# ---------------------------------------------------------------------------
# subdivision and collapse


def subdivide(s: Splitting, eid, n, names=None):
    """Replace edge eid by a path of n edges.

    Returns (splitting, new edge ids in order from tail to head, new vertex ids).
    """
    out, eids, vids, _ = subdivide_with_record(s, eid, n, names)
    return out, eids, vids


def subdivide_with_record(s: Splitting, eid, n, names=None):
    """As subdivide, also returning the vertex record of the old vertices."""
    if n < 2:
        raise SplittingError("subdivision needs n >= 2")
    if eid not in s.edges:
        raise SplittingError(f"unknown edge {eid}")
    e = s.edges[eid]
    vg = dict(s.vgroups)
    es = dict(s.edges)
    del es[eid]
    if names is None:
        vids, eids = [], []
        taken_v, taken_e = set(vg), set(es)
        for _ in range(n - 1):
            v = s.fresh("v", taken_v)
            taken_v.add(v)
            vids.append(v)
        for _ in range(n):
            x = s.fresh("e", taken_e)
            taken_e.add(x)
            eids.append(x)
    else:
        vids, eids = names
    chain = [e.tail] + vids + [e.head]
    for v in vids:
        vg[v] = e.group
    for i, x in enumerate(eids):
        wt = e.wt if i == 0 else IDENTITY
        wh = e.wh if i == n - 1 else IDENTITY
        es[x] = Edge(chain[i], chain[i + 1], e.group, wt, wh)
    tree = set(s.tree) - {eid}
    if eid in s.tree:
        tree.update(eids)
    else:
        tree.update(eids[:-1])
    out = Splitting(s.pres, vg, es, frozenset(tree))
    out, frames = normalize_frames(out, root=s.vertices[0])
    rec = _frame_record(s, frames)
    return out, eids, vids, rec


@dataclass
class CollapseRecord:
    """old v^ = r . new (vmap[v])^ for every old vertex."""
    vmap: dict
    edges_removed: list


def _frame_record(s_old, frames, base=None):
    p = s_old.pres
    base = base or {v: (v, IDENTITY) for v in s_old.vgroups}
    out = {}
    for v, (nv, r) in base.items():
        out[v] = (nv, p.mul(r, p.inv(frames[nv])))
    return out


def collapse_edge(s: Splitting, eid):
    """Collapse one edge orbit.  Returns (splitting, record)."""
    p = s.pres
    e = s.edges[eid]
    vg = dict(s.vgroups)
    es = dict(s.edges)
    del es[eid]
    rec = {v: (v, IDENTITY) for v in s.vgroups}
    if e.tail == e.head:
        x = e.tail
        vg[x] = join([vg[x]], p, extra=[p.mul(e.wt, p.inv(e.wh))])
    else:
        gt, gh = s.end_group((eid, "t")), s.end_group((eid, "h"))
        keep, gone = e.tail, e.head
        if gt == vg[e.tail] and gh != vg[e.head]:
            keep, gone = e.head, e.tail
        w_keep = e.wt if keep == e.tail else e.wh
        w_gone = e.wh if keep == e.tail else e.wt
        r = p.mul(w_gone, p.inv(w_keep))  # old gone^ = r . keep^
        vg[keep] = join([vg[keep], conjugate(vg[gone], p.inv(r))], p)
        del vg[gone]
        rec[gone] = (keep, r)
        ri = p.inv(r)
        for fid, f in list(es.items()):
            if gone not in (f.tail, f.head):
                continue
            wt, wh, t, h = f.wt, f.wh, f.tail, f.head
            if t == gone:
                wt, t = p.mul(ri, wt), keep
            if h == gone:
                wh, h = p.mul(ri, wh), keep
            es[fid] = Edge(t, h, f.group, wt, wh)
    tree = frozenset(x for x in s.tree if x in es)
    out = Splitting(p, vg, es, tree)
    out, frames = normalize_frames(out)
    return out, CollapseRecord(_frame_record(s, frames, rec), [eid])


def compose_records(p, first, second):
    """Compose vertex records old->mid and mid->new."""
    out = {}
    for v, (m, r1) in first.items():
        n, r2 = second[m]
        out[v] = (n, p.mul(r1, r2))
    return out


def collapse(s: Splitting, orbit_edges):
    """Collapse a set of edges one at a time.  Returns (splitting, record)."""
    todo = [x for x in orbit_edges]
    for x in todo:
        if x not in s.edges:
            raise SplittingError(f"unknown edge {x}")
    rec = {v: (v, IDENTITY) for v in s.vgroups}
    removed = []
    cur = s
    for x in todo:
        cur, r = collapse_edge(cur, x)
        rec = compose_records(s.pres, rec, r.vmap)
        removed.append(x)
    return cur, CollapseRecord(rec, removed)


# ---------------------------------------------------------------------------
# reducedness


@dataclass
class ReducednessReport:
    minimal: bool
    reduced: bool
    partially_reduced: bool
    offenders: list


def check_reducedness(s: Splitting, P=None):
    """Minimality, reducedness and partial reducedness over the class P.

    P is any object with ``contained_in_member(K)``; None skips that test.
    """
    offenders = []
    minimal = True
    reduced = True
    partial = True
    circle = len(s.vgroups) == 1 and len(s.edges) == 1
    for v in s.vertices:
        ends = s.ends_at(v)
        val = len(ends)
        eq = [end for end in ends if s.end_group(end) == s.vgroups[v]]
        if val == 1 and eq:
            minimal = False
            offenders.append((v, "valence 1 with equal edge group"))
        if circle or not eq or val >= 3:
            continue
        reduced = False
        if P is not None and any(P.contained_in_member(s.end_group(end)) for end in eq):
            partial = False
            offenders.append((v, f"valence {val} with equal edge group inside the class"))
    if P is None:
        partial = reduced
    return ReducednessReport(minimal, reduced, partial, offenders)


# ---------------------------------------------------------------------------
# text format

def dumps(s: Splitting):
    p = s.pres
    lines = ["[presentation]", p.header()]
    for v in s.vertices:
        lines.append(f"[vertex {v}] gens: " + ", ".join(p.fmt(g) for g in s.vgroups[v].gens))
    for eid in s.edge_ids:
        e = s.edges[eid]
        lines.append(
            f"[edge {eid}] {e.tail}:{e.head} gens: " + ", ".join(p.fmt(g) for g in e.group.gens)
            + f" attach_head: {p.fmt(e.wh)} attach_tail: {p.fmt(e.wt)} tree: {'yes' if eid in s.tree else 'no'}"
        )
    return "\n".join(lines) + "\n"


_VLINE = re.compile(r"^\[vertex (\S+)\]\s*gens:(.*)$")
_ELINE = re.compile(
    r"^\[edge (\S+)\]\s*(\S+):(\S+)\s+gens:(.*?)\s+attach_head:(.*?)\s+attach_tail:(.*?)\s+tree:\s*(yes|no)\s*$"
)


def loads(text):
    sect = None
    header = []
    vg, es, tree = {}, {}, []
    pres = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == "[presentation]":
            sect = "p"
            continue
        if line.startswith("[vertex") or line.startswith("[edge"):
            if pres is None:
                pres = Presentation.from_header("\n".join(header))
            m = _VLINE.match(line)
            if m:
                gens = [pres.parse(w) for w in m.group(2).split(",") if w.strip()]
                vg[m.group(1)] = subgroup_automaton(gens, pres)
                continue
            m = _ELINE.match(line)
            if not m:
                raise SplittingError(f"cannot parse line: {line}")
            eid, t, h, gens, wh, wt, tr = m.groups()
            gens = [pres.parse(w) for w in gens.split(",") if w.strip()]
            es[eid] = Edge(t, h, subgroup_automaton(gens, pres), pres.parse(wt), pres.parse(wh))
            if tr == "yes":
                tree.append(eid)
            continue
        if sect == "p":
            header.append(line)
        else:
            raise SplittingError(f"unexpected line: {line}")
    if pres is None:
        raise SplittingError("missing presentation")
    return Splitting(pres, vg, es, frozenset(tree))


def group_label(p, G: SubgroupRep):
    if G.is_trivial():
        return "1"
    return "<" + ", ".join(p.fmt(g) for g in G.gens) + ">"


def to_dot(s: Splitting, name="splitting"):
    p = s.pres
    lines = [f"graph {name} {{"]
    for v in s.vertices:
        lines.append(f'  "{v}" [label="{v}\\n{group_label(p, s.vgroups[v])}"];')
    for eid in s.edge_ids:
        e = s.edges[eid]
        style = "" if eid in s.tree else ", style=dashed"
        lines.append(f'  "{e.tail}" -- "{e.head}" [label="{eid}: {group_label(p, e.group)}"{style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def canonical_form(s: Splitting):
    """Hashable description for equality up to relabeling-free comparison."""
    verts = tuple((v, s.vgroups[v].key) for v in s.vertices)
    edges = tuple((eid, e.tail, e.head, e.group.key, e.wt, e.wh) for eid, e in sorted(s.edges.items()))
    return (s.pres, verts, edges)


def isomorphic(a: Splitting, b: Splitting):
    """Graph isomorphism respecting vertex and edge groups up to conjugacy."""
    import networkx as nx
    from networkx.algorithms.isomorphism import GraphMatcher

    def g(s):
        G = nx.MultiGraph()
        for v in s.vertices:
            G.add_node(v, lab=s.vgroups[v].conj_key)
        for eid in s.edge_ids:
            e = s.edges[eid]
            G.add_edge(e.tail, e.head, lab=e.group.conj_key)
        return G

    ga, gb = g(a), g(b)
    gm = GraphMatcher(ga, gb, node_match=lambda x, y: x["lab"] == y["lab"],
                      edge_match=lambda x, y: sorted(d["lab"] for d in x.values()) == sorted(d["lab"] for d in y.values()))
    return gm.is_isomorphic()
