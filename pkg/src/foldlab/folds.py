"""Folds of graphs of groups.

A fold move at pivot ``x`` identifies the standard lift of ``end1`` with
``s . (standard lift of end2)`` where ``s`` lies in the vertex group of ``x``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

from .splittings import (
    Edge,
    Splitting,
    adjacent_step,
    collapse_edge,
    compose_records,
    normalize_frames,
    same_point,
    subdivide_with_record,
    _frame_record,
)
from .words import IDENTITY, conjugate, find_in_coset, intersect, join


class FoldError(ValueError):
    pass


@dataclass(frozen=True)
class FoldMove:
    pivot: str
    end1: tuple
    end2: tuple
    witness: tuple = IDENTITY
    fold_type: str | None = None

    def with_type(self, t):
        return FoldMove(self.pivot, self.end1, self.end2, self.witness, t)


def classify_fold(s: Splitting, m: FoldMove):
    x = m.pivot
    if x not in s.vgroups:
        raise FoldError(f"unknown pivot {x}")
    for end in (m.end1, m.end2):
        if end[0] not in s.edges or s.vertex_at(end) != x:
            raise FoldError(f"end {end} is not at the pivot {x}")
    if not s.vgroups[x].contains(m.witness):
        raise FoldError("witness does not fix the pivot")
    if m.end1 == m.end2:
        if s.end_group(m.end1).contains(m.witness):
            raise FoldError("the two edges coincide")
        y = s.far(m.end1)
        return "IIB" if y == x else "IIA"
    if m.end1[0] == m.end2[0]:
        raise FoldError("folding the two ends of one loop is not orientation preserving")
    y1, y2 = s.far(m.end1), s.far(m.end2)
    if y1 == y2:
        return "IIIB" if y1 == x else "IIIA"
    return "IB" if x in (y1, y2) else "IA"


@dataclass
class FoldResult:
    splitting: Splitting
    record: dict           # old v -> (new v, r) with old v^ = r . new v^
    move: FoldMove
    edge_map: dict = field(default_factory=dict)   # old edge -> new edge


def apply_fold(s: Splitting, m: FoldMove):
    t = classify_fold(s, m)
    if m.fold_type is not None and m.fold_type != t:
        raise FoldError(f"declared type {m.fold_type} but the move is {t}")
    p = s.pres
    x = m.pivot
    e1, e2, sw = m.end1, m.end2, m.witness
    if t[:-1] == "I" and s.far(e2) == x:
        e1, e2, sw = e2, e1, p.inv(sw)
    y1, y2 = s.far(e1), s.far(e2)
    t1, t2 = s.shift(e1), s.shift(e2)
    E1 = s.end_group(e1)
    vg = dict(s.vgroups)
    es = dict(s.edges)
    rec = {v: (v, IDENTITY) for v in s.vgroups}
    emap = {eid: eid for eid in s.edges}
    if t[:-1] == "II":
        G = join([E1], p, extra=[sw])
        vg[y1] = join([vg[y1]], p, extra=[p.conj(p.inv(t1), sw)])
    else:
        E2 = conjugate(s.end_group(e2), sw)
        G = join([E1, E2], p)
        del es[e2[0]]
        emap[e2[0]] = e1[0]
        if t[:-1] == "III":
            vg[y1] = join([vg[y1]], p, extra=[p.mul(p.inv(t1), sw, t2)])
        else:
            r = p.mul(p.inv(t2), p.inv(sw), t1)
            vg[y1] = join([vg[y1], conjugate(vg[y2], p.inv(r))], p)
            del vg[y2]
            rec[y2] = (y1, r)
            ri = p.inv(r)
            for fid, f in list(es.items()):
                if fid == e1[0] or y2 not in (f.tail, f.head):
                    continue
                wt, wh, ta, he = f.wt, f.wh, f.tail, f.head
                if ta == y2:
                    wt, ta = p.mul(ri, wt), y1
                if he == y2:
                    wh, he = p.mul(ri, wh), y1
                es[fid] = Edge(ta, he, f.group, wt, wh)
    if e1[1] == "t":
        es[e1[0]] = Edge(x, y1, G, IDENTITY, p.inv(t1))
    else:
        es[e1[0]] = Edge(y1, x, G, p.inv(t1), IDENTITY)
    tree = frozenset(z for z in s.tree if z in es)
    out = Splitting(p, vg, es, tree)
    out, frames = normalize_frames(out)
    return FoldResult(out, _frame_record(s, frames, rec), m.with_type(t), emap)


# ---------------------------------------------------------------------------
# logs

def _end_token(end):
    return f"{end[0]}@{end[1]}"


def _parse_end(tok):
    eid, _, side = tok.partition("@")
    if side not in ("t", "h"):
        raise FoldError(f"bad edge end {tok!r}")
    return (eid, side)


def format_move(p, m: FoldMove):
    t = m.fold_type or "?"
    parts = [t, m.pivot, _end_token(m.end1), _end_token(m.end2)]
    if m.witness:
        parts.append(p.fmt(m.witness))
    return " ".join(parts)


def parse_move(p, line):
    toks = line.split()
    if len(toks) < 4:
        raise FoldError(f"bad fold line {line!r}")
    t, pivot, a, b = toks[:4]
    w = p.parse(" ".join(toks[4:])) if len(toks) > 4 else IDENTITY
    return FoldMove(pivot, _parse_end(a), _parse_end(b), w, None if t == "?" else t)


@dataclass
class LogStep:
    kind: str          # fold | subdivide | collapse
    move: FoldMove | None = None
    edge: str | None = None
    count: int = 0
    edges: tuple = ()

    def format(self, p):
        if self.kind == "fold":
            return format_move(p, self.move)
        if self.kind == "subdivide":
            return f"subdivide {self.edge} {self.count}"
        return "collapse " + " ".join(self.edges)


def parse_log(p, text):
    steps = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        toks = line.split()
        if toks[0] == "subdivide":
            steps.append(LogStep("subdivide", edge=toks[1], count=int(toks[2])))
        elif toks[0] == "collapse":
            steps.append(LogStep("collapse", edges=tuple(toks[1:])))
        else:
            steps.append(LogStep("fold", move=parse_move(p, line)))
    return steps


def format_log(p, steps):
    return "\n".join(st.format(p) for st in steps) + ("\n" if steps else "")


@dataclass
class ReplayStep:
    step: LogStep
    before: Splitting
    after: Splitting
    record: dict
    fold_type: str | None = None

    @property
    def delta_chi(self):
        return self.after.euler() - self.before.euler()


def replay(s: Splitting, steps):
    """Apply a log; returns (final splitting, list of ReplayStep, composite record)."""
    p = s.pres
    trace = []
    rec = {v: (v, IDENTITY) for v in s.vgroups}
    cur = s
    for st in steps:
        if st.kind == "fold":
            res = apply_fold(cur, st.move)
            nxt, r, ft = res.splitting, res.record, res.move.fold_type
        elif st.kind == "subdivide":
            nxt, _, _, r = subdivide_with_record(cur, st.edge, st.count)
            ft = None
        else:
            nxt = cur
            r = {v: (v, IDENTITY) for v in cur.vgroups}
            for eid in st.edges:
                nxt, cr = collapse_edge(nxt, eid)
                r = compose_records(p, r, cr.vmap)
            ft = None
        trace.append(ReplayStep(st, cur, nxt, r, ft))
        rec = compose_records(p, rec, r)
        cur = nxt
    return cur, trace, rec


# ---------------------------------------------------------------------------
# equivariant maps


@dataclass
class EquivariantMap:
    """images[v] = (X, g): the lift v^ of the domain goes to g . X^."""
    domain: Splitting
    codomain: Splitting
    images: dict

    def image(self, pt):
        v, g = pt
        X, h = self.images[v]
        return (X, self.domain.pres.mul(g, h))

    def edge_image(self, end):
        """(codomain end, sigma) for the image of the standard lift of end, in the frame of its vertex's image."""
        D, C, p = self.domain, self.codomain, self.domain.pres
        x, y = D.vertex_at(end), D.far(end)
        X, gx = self.images[x]
        Y, gy = self.images[y]
        m = p.mul(p.inv(gx), D.shift(end), gy)
        return adjacent_step(C, X, Y, m)

    def collapsed_edges(self):
        D, p = self.domain, self.domain.pres
        out = []
        for eid in D.edge_ids:
            e = D.edges[eid]
            a = self.image((e.tail, p.inv(e.wt)))
            b = self.image((e.head, p.inv(e.wh)))
            if same_point(self.codomain, a, b):
                out.append(eid)
        return out

    def check(self):
        """Problems with the map, empty when it is a simplicial equivariant map."""
        D, C, p = self.domain, self.codomain, self.domain.pres
        issues = []
        for v, G in D.vgroups.items():
            X, g = self.images[v]
            if not conjugate(G, p.inv(g)).le(C.vgroups[X]):
                issues.append(f"vertex {v}: stabilizer not mapped into image stabilizer")
        flat = set(self.collapsed_edges())
        for eid in D.edge_ids:
            if eid not in flat and self.edge_image((eid, "t")) is None:
                issues.append(f"edge {eid}: image is not an edge")
        return issues

    def pull_back(self, new_domain, record):
        """Map on a domain obtained by folding/collapsing with the given record."""
        p = self.domain.pres
        imgs = {}
        for v, (nv, r) in record.items():
            X, g = self.images[v]
            cand = (X, p.mul(p.inv(r), g))
            if nv in imgs:
                if not same_point(self.codomain, imgs[nv], cand):
                    raise FoldError(f"inconsistent images for {nv}")
            else:
                imgs[nv] = cand
        return EquivariantMap(new_domain, self.codomain, imgs)


def local_fold(psi: EquivariantMap, vertices=None):
    """First fold witnessing local non-injectivity, or None."""
    D, C, p = psi.domain, psi.codomain, psi.domain.pres
    for x in (vertices or D.vertices):
        X, gx = psi.images[x]
        Dx = conjugate(D.vgroups[x], p.inv(gx))
        ends = D.ends_at(x)
        imgs = []
        for end in ends:
            im = psi.edge_image(end)
            if im is None:
                raise FoldError(f"edge end {end} does not map to an edge")
            imgs.append(im)
        for i, a in enumerate(ends):
            da, sa = imgs[i]
            Ea = C.end_group(da)
            # same end, distinct cosets
            inter = intersect(Dx, conjugate(Ea, sa))
            Ex = conjugate(D.end_group(a), p.inv(gx))
            for u in inter.gens:
                if not Ex.contains(u):
                    return FoldMove(x, a, a, p.conj(gx, u))
            for j in range(i + 1, len(ends)):
                b = ends[j]
                db, sb = imgs[j]
                if db != da:
                    continue
                if a[0] == b[0]:
                    continue
                K = conjugate(Ea, sb)
                u = find_in_coset(Dx, K, p.mul(sa, p.inv(sb)))
                if u is not None:
                    return FoldMove(x, a, b, p.conj(gx, u))
    return None


@dataclass
class Decomposition:
    moves: list
    final: EquivariantMap
    precollapsed: list
    injective: bool
    exhausted: bool
    steps: list = field(default_factory=list)

    def residual(self):
        if self.exhausted:
            return "budget exhausted before local injectivity"
        return "locally injective" if self.injective else "stopped"


def default_budget():
    return int(os.environ.get("FOLDLAB_MAX_DEPTH", "10000"))


def precollapse(psi: EquivariantMap):
    """Collapse domain edges mapping to points; returns (map, log steps)."""
    steps = []
    while True:
        bad = psi.collapsed_edges()
        if not bad:
            return psi, steps
        eid = bad[0]
        nd, cr = collapse_edge(psi.domain, eid)
        steps.append(LogStep("collapse", edges=(eid,)))
        psi = psi.pull_back(nd, cr.vmap)


def decompose_map(psi: EquivariantMap, budget=None):
    budget = default_budget() if budget is None else budget
    issues = psi.check()
    if issues:
        raise FoldError("; ".join(issues))
    psi, pre = precollapse(psi)
    moves = []
    steps = list(pre)
    while True:
        m = local_fold(psi)
        if m is None:
            return Decomposition(moves, psi, [s.edges for s in pre], True, False, steps)
        if len(moves) >= budget:
            return Decomposition(moves, psi, [s.edges for s in pre], False, True, steps)
        res = apply_fold(psi.domain, m)
        moves.append(res.move)
        steps.append(LogStep("fold", move=res.move))
        psi = psi.pull_back(res.splitting, res.record)


def identity_map(s: Splitting):
    return EquivariantMap(s, s, {v: (v, IDENTITY) for v in s.vgroups})
