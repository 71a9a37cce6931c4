"""Seed vertices, forests of influence, weights and the edge-count driver.

A seed set is a set of vertex ids of a splitting; each id stands for the
orbit of its lift.  A forest of influence is stored on the quotient: every
non-seed vertex ``v`` has a parent end at ``v`` whose edge group equals
``G_v``.  The tree-level forest is the union of the translates of the lifted
parent edges.
"""
from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field

import networkx as nx

from . import bass_serre as bs
from .folds import (
    EquivariantMap,
    FoldMove,
    apply_fold,
    classify_fold,
    default_budget,
    local_fold,
)
from .splittings import (
    Edge,
    Splitting,
    adjacent_step,
    check_reducedness,
    collapse,
    collapse_edge,
    compose_records,
    same_point,
    validate,
)
from .words import (
    IDENTITY,
    Presentation,
    SubgroupRep,
    conjugate,
    coset_rep,
    elements,
    root,
    subgroup_automaton,
    trivial_subgroup,
)

INF = math.inf


class SeedError(ValueError):
    pass


class ForestError(ValueError):
    pass


class RoutedError(ValueError):
    """A connecting group lies outside the class: collapse or pull first."""


class DriverError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# classes of subgroups


def omega(n):
    """Number of prime factors of n counted with multiplicity."""
    c, d = 0, 2
    while d * d <= n:
        while n % d == 0:
            n //= d
            c += 1
        d += 1
    return c + (1 if n > 1 else 0)


def _factor_order(K: SubgroupRep):
    """Order of the cyclic factor a finite nontrivial K is conjugate into."""
    p = K.pres
    g = K.gens[0]
    _, u, _ = root(p, g)
    return p.orders[u[0][0]]


class PClass:
    """A conjugation invariant class of subgroups with its weight function."""

    KINDS = ("trivial", "cyclic", "prime-factors", "maximal-cyclic")

    def __init__(self, kind, pres: Presentation, M=None):
        if kind not in self.KINDS:
            raise ValueError(f"unknown class {kind!r}")
        if kind == "prime-factors" and (M is None or M < 1):
            raise ValueError("prime-factors needs M >= 1")
        self.kind = kind
        self.pres = pres
        self.M = M
        finite = [n for n in pres.orders if n]
        self._max_omega = max((omega(n) for n in finite), default=0)
        self._torsion = bool(finite)

    @property
    def name(self):
        return f"prime-factors:{self.M}" if self.kind == "prime-factors" else self.kind

    @property
    def closed_under_subgroups(self):
        return self.kind != "maximal-cyclic"

    @property
    def height(self):
        w = self.weight(trivial_subgroup(self.pres))
        return None if w == INF else int(math.log2(w))

    @property
    def dagger_flags(self):
        fin = self.height is not None
        inter = not (self.kind == "maximal-cyclic" and self._torsion)
        return {"finite_height": fin, "elliptic_minimal_extensions": True, "intersection_closed": inter}

    def member(self, K: SubgroupRep):
        if self.kind == "trivial":
            return K.is_trivial()
        if self.kind == "cyclic":
            return K.is_cyclic()
        if self.kind == "prime-factors":
            o = K.order()
            return o is not None and omega(o) <= self.M - 1
        if K.is_trivial():
            return True
        if not K.is_cyclic():
            return False
        return self.minimal_extension(K) == K

    def contained_in_member(self, K: SubgroupRep):
        if self.kind == "maximal-cyclic":
            return K.is_cyclic()
        return self.member(K)

    def larger(self, K: SubgroupRep):
        return not self.contained_in_member(K)

    def minimal_extension(self, K: SubgroupRep):
        """The unique smallest member containing K, or None."""
        if not self.contained_in_member(K):
            return None
        if self.kind != "maximal-cyclic" or K.is_trivial():
            return K
        p = self.pres
        c, u, _ = root(p, K.gens[0])
        return subgroup_automaton([p.conj(c, u)], p)

    def is_closed(self, K: SubgroupRep, bound=4):
        """Whether minimal extensions of subgroups of K stay in K.

        Exact for the classes closed under subgroups; for maximal cyclic
        subgroups the roots of elements of K up to the word bound are tested.
        """
        if self.closed_under_subgroups:
            return True
        p = self.pres
        for w in list(K.gens) + list(elements(K, bound)):
            if not w:
                continue
            c, u, _ = root(p, w)
            if not K.contains(p.conj(c, u)):
                return False
        return True

    def weight(self, K: SubgroupRep):
        """2^n for the longest chain K <= H_1 < ... < H_n of members."""
        kind = self.kind
        if kind == "trivial":
            return 2 if K.is_trivial() else 1
        if kind == "maximal-cyclic":
            if K.is_trivial():
                return 4
            return 2 if K.is_cyclic() else 1
        if kind == "cyclic":
            if not K.is_cyclic():
                return 1
            if K.is_trivial():
                if self.pres.has_infinite_order():
                    return INF
                return 2 ** (self._max_omega + 1)
            o = K.order()
            if o is not None:
                return 2 ** (omega(_factor_order(K) // o) + 1)
            _, _, m = root(self.pres, K.gens[0])
            return 2 ** (omega(m) + 1)
        # prime-factors:M
        top = self.M - 1
        if K.is_trivial():
            if not self._torsion:
                return 2
            return 2 ** (1 + min(top, self._max_omega))
        o = K.order()
        if o is None or omega(o) > top:
            return 1
        return 2 ** (min(top, omega(_factor_order(K))) - omega(o) + 1)

    def __repr__(self):
        return f"PClass({self.name})"


def make_pclass(descriptor, pres: Presentation):
    if isinstance(descriptor, PClass):
        return descriptor
    if descriptor.startswith("prime-factors"):
        _, _, m = descriptor.partition(":")
        if not m.isdigit():
            raise ValueError("prime-factors needs a height, as in prime-factors:3")
        return PClass("prime-factors", pres, int(m))
    return PClass(descriptor, pres)


def p_weight(K: SubgroupRep, P: PClass):
    return P.weight(K)


# ---------------------------------------------------------------------------
# seed sets and forests


class SeedSet:
    """Vertex ids of a splitting, each standing for an orbit of seed vertices."""

    def __init__(self, splitting: Splitting, members):
        members = frozenset(members)
        unknown = [v for v in members if v not in splitting.vgroups]
        if unknown:
            raise SeedError(f"unknown vertices {sorted(unknown)}")
        if not members and not splitting.is_free():
            raise SeedError("the empty seed set is only allowed for free actions")
        self.splitting = splitting
        self.members = members

    def __iter__(self):
        return iter(sorted(self.members))

    def __len__(self):
        return len(self.members)

    def __repr__(self):
        return f"SeedSet({sorted(self.members)})"


def _members(seeds):
    return seeds.members if isinstance(seeds, SeedSet) else frozenset(seeds)


@dataclass
class Forest:
    splitting: Splitting
    seeds: frozenset
    parent: dict    # non-seed vertex -> end at it (its first branch edge)

    def edges(self):
        return {end[0] for end in self.parent.values()}

    def connecting(self):
        used = self.edges()
        return [eid for eid in self.splitting.edge_ids if eid not in used]

    def branch(self, v):
        out = []
        while v not in self.seeds:
            end = self.parent[v]
            out.append(end)
            v = self.splitting.far(end)
        return out

    def root(self, v):
        while v not in self.seeds:
            v = self.splitting.far(self.parent[v])
        return v

    def branch_points(self, pt):
        """Points from pt = (v, g) along its branch up to its seed."""
        s, p = self.splitting, self.splitting.pres
        pts = [pt]
        v, g = pt
        for end in self.branch(v):
            g = p.mul(g, s.shift(end))
            v = s.far(end)
            pts.append((v, g))
        return pts

    def point(self, v):
        """(seed, r) with the lift of v influenced by r . seed^, r canonical."""
        s = self.splitting
        u, g = self.branch_points((v, IDENTITY))[-1]
        return u, coset_rep(s.vgroups[u], g)

    def groups(self):
        s = self.splitting
        return [(eid, s.edges[eid].group) for eid in self.connecting()]


def _can_attach(s: Splitting, v, end):
    return s.far(end) != v and s.end_group(end) == s.vgroups[v]


def grow_forest(s: Splitting, seeds, forced=None, rng=None, strict=True):
    """Greedy growth of a forest of influence from the seeds.

    ``forced`` maps vertices to the parent end they must use.  With ``rng``
    the attachment order and choices are shuffled.  Raises SeedError naming
    an uncovered vertex (or returns None when ``strict`` is false).
    """
    seeds = _members(seeds)
    if not seeds:
        if strict:
            raise SeedError("cannot grow a forest from an empty seed set")
        return None
    forced = dict(forced or {})
    for v, end in forced.items():
        if v in seeds or s.vertex_at(end) != v or not _can_attach(s, v, end):
            if strict:
                raise ForestError(f"end {end} cannot be the parent of {v}")
            return None
    covered = set(seeds)
    parent = {}
    order = s.vertices
    changed = True
    while changed:
        changed = False
        todo = [v for v in order if v not in covered]
        if rng is not None:
            rng.shuffle(todo)
        for v in todo:
            if v in forced:
                if s.far(forced[v]) in covered:
                    parent[v] = forced[v]
                    covered.add(v)
                    changed = True
                continue
            cands = [end for end in s.ends_at(v) if s.far(end) in covered and _can_attach(s, v, end)]
            if cands:
                parent[v] = rng.choice(cands) if rng is not None else cands[0]
                covered.add(v)
                changed = True
    missing = [v for v in order if v not in covered]
    if missing:
        if strict:
            raise SeedError(f"vertex {missing[0]} is not dominated by the seeds")
        return None
    return Forest(s, frozenset(seeds), parent)


def is_seed_set(s: Splitting, seeds):
    seeds = _members(seeds)
    if not seeds:
        return s.is_free()
    return grow_forest(s, seeds, strict=False) is not None


def natural_seeds(s: Splitting):
    """Seeds chosen greedily: vertices that cannot hang off a neighbour first."""
    seeds = []
    while True:
        f = grow_forest(s, seeds, strict=False) if seeds else None
        if f is not None:
            return frozenset(seeds)
        covered = set(seeds)
        if seeds:
            partial = _partial_cover(s, seeds)
            covered |= partial
        todo = [v for v in s.vertices if v not in covered]
        stuck = [v for v in todo if not any(_can_attach(s, v, e) for e in s.ends_at(v))]
        seeds.append((stuck or todo)[0])


def _partial_cover(s, seeds):
    covered = set(seeds)
    changed = True
    while changed:
        changed = False
        for v in s.vertices:
            if v in covered:
                continue
            if any(s.far(e) in covered and _can_attach(s, v, e) for e in s.ends_at(v)):
                covered.add(v)
                changed = True
    return covered


def connecting_groups(F: Forest):
    """Counter of conjugacy keys of the connecting groups."""
    return Counter(G.conj_key for _, G in F.groups())


@dataclass
class WeightLedger:
    current_weight: float
    connecting_groups: list             # (edge id, conjugacy key, weight)
    collapses: list = field(default_factory=list)   # (edges collapsed, cap)

    def multiset(self):
        return Counter(key for _, key, _ in self.connecting_groups)


def seed_weight(s: Splitting, seeds, P: PClass, forest=None):
    seeds = _members(seeds)
    if not seeds:
        if not s.is_free():
            raise SeedError("empty seed set on a non-free action")
        b = s.betti() - 1
        w1 = P.weight(trivial_subgroup(s.pres))
        return WeightLedger(0 if b == 0 else b * w1, [])
    F = forest or grow_forest(s, seeds)
    rows = [(eid, G.conj_key, P.weight(G)) for eid, G in F.groups()]
    return WeightLedger(sum(w for _, _, w in rows), rows)


# ---------------------------------------------------------------------------
# elementary transformations


def elementary_transformation(F: Forest, v, end2):
    """Swap the first branch edge of v for the connecting edge at end2."""
    s = F.splitting
    if v in F.seeds:
        raise ForestError(f"{v} is a seed")
    if s.vertex_at(end2) != v:
        raise ForestError(f"end {end2} is not at {v}")
    if end2[0] in F.edges():
        raise ForestError(f"edge {end2[0]} is already in the forest")
    if s.far(end2) == v:
        raise ForestError("a loop cannot join the forest")
    G = s.vgroups[v]
    if s.end_group(end2) != G or s.end_group(F.parent[v]) != G:
        raise ForestError("stabilizers of the two edges and the vertex differ")
    w = s.far(end2)
    while w not in F.seeds:
        if w == v:
            raise ForestError("the swap would close a cycle in the quotient")
        w = s.far(F.parent[w])
    parent = dict(F.parent)
    parent[v] = end2
    return Forest(s, F.seeds, parent)


def forest_distance(F1: Forest, F2: Forest):
    """Number of vertex orbits whose trees of influence differ."""
    s = F1.splitting
    return sum(1 for v in s.vertices if F1.point(v) != F2.point(v))


def transform_chain(F1: Forest, F2: Forest):
    """Elementary transformations turning F1 into F2; each lowers the distance."""
    if F1.seeds != F2.seeds:
        raise ForestError("forests grown from different seeds")
    s = F1.splitting
    steps = []
    cur = F1
    d = forest_distance(cur, F2)
    while cur.parent != F2.parent:
        diff = [v for v in s.vertices if cur.point(v) != F2.point(v)]
        if not diff:
            raise ForestError("equal trees of influence with different parents")
        v = diff[0]
        branch = F2.branch(v)
        inside = cur.edges()
        j = max(i for i, end in enumerate(branch) if end[0] not in inside)
        end = branch[j]
        nxt = elementary_transformation(cur, s.vertex_at(end), end)
        nd = forest_distance(nxt, F2)
        if nd >= d:
            raise ForestError(f"distance did not drop ({d} -> {nd})")
        steps.append((s.vertex_at(end), end))
        cur, d = nxt, nd
    return steps


# ---------------------------------------------------------------------------
# seeds under folds


def _map_seeds(rec, seeds):
    return frozenset(rec[u][0] for u in seeds)


def _forest_with(s, seeds, eids):
    """A forest containing every edge orbit in eids, or None."""
    eids = list(dict.fromkeys(eids))
    options = []
    for eid in eids:
        e = s.edges[eid]
        options.append([(e.tail, (eid, "t")), (e.head, (eid, "h"))])
    for combo in itertools.product(*options):
        forced = {}
        ok = True
        for v, end in combo:
            if v in forced or v in seeds or not _can_attach(s, v, end):
                ok = False
                break
            forced[v] = end
        if not ok:
            continue
        f = grow_forest(s, seeds, forced=forced, strict=False)
        if f is not None:
            return f
    return None


@dataclass
class SeedUpdate:
    fold: object                # FoldResult
    seeds: frozenset
    weight_before: float
    weight_after: float
    label: str
    injective: bool
    forest: Forest | None = None

    @property
    def delta(self):
        if self.weight_before == INF and self.weight_after == INF:
            return 0
        return self.weight_after - self.weight_before


def _fold_sides(s, m, t):
    """Orient a move as the fold code does: (e1, e2, witness, y1, y2)."""
    p = s.pres
    e1, e2, w = m.end1, m.end2, m.witness
    if t[:-1] == "I" and s.far(e2) == m.pivot:
        e1, e2, w = e2, e1, p.inv(w)
    return e1, e2, w, s.far(e1), s.far(e2)


def update_seeds_after_fold(s: Splitting, seeds, m: FoldMove, P: PClass):
    """Apply the fold and return the seed set it induces with the weight change."""
    seeds = _members(seeds)
    p = s.pres
    t = classify_fold(s, m)
    res = apply_fold(s, m)
    new = res.splitting
    rec = res.record
    if not seeds:
        before = seed_weight(s, seeds, P).current_weight
        if new.is_free():
            tilde, label = frozenset(), "free"
            after = seed_weight(new, tilde, P).current_weight
            return SeedUpdate(res, tilde, before, after, label, True)
        tilde = frozenset(v for v in new.vertices if not new.vgroups[v].is_trivial())
        F2 = grow_forest(new, tilde)
        after = seed_weight(new, tilde, P, F2).current_weight
        return SeedUpdate(res, tilde, before, after, "free-to-elliptic", True, F2)
    F = grow_forest(s, seeds)
    bad = [eid for eid, G in F.groups() if not P.member(G)]
    if bad:
        raise RoutedError(f"connecting edge {bad[0]} has a group outside {P.name}")
    before = seed_weight(s, seeds, P, F).current_weight
    e1, e2, w, y1, y2 = _fold_sides(s, m, t)
    alpha = _map_seeds(rec, seeds)
    y_new = rec[y1][0]
    if _forest_with(s, seeds, [e1[0], e2[0]]) is not None:
        label, tilde = "1", alpha
    else:
        has1 = _forest_with(s, seeds, [e1[0]]) is not None
        has2 = _forest_with(s, seeds, [e2[0]]) is not None
        if not has1 and not has2:
            label, tilde = "2", alpha | {y_new}
        else:
            if not has1:
                e1, e2, y1, y2 = e2, e1, y2, y1
                w = p.inv(w)
            t1 = s.shift(e1)
            t2 = p.mul(w, s.shift(e2))
            a = _forest_with_parent(s, seeds, y1, s.other(e1)) is not None
            sub_i = conjugate(s.vgroups[y1], t1).le(conjugate(s.vgroups[y2], t2))
            label = "3" + ("a" if a else "b") + ("i" if sub_i else "ii")
            tilde = alpha if (t[:-1] == "I" and sub_i) else alpha | {y_new}
    F2 = grow_forest(new, tilde, strict=False)
    if F2 is None:
        raise SeedError(f"case {label}: induced seeds do not cover the folded splitting")
    after = seed_weight(new, tilde, P, F2).current_weight
    injective = not (y1 in seeds and y2 in seeds)
    return SeedUpdate(res, tilde, before, after, label, injective, F2)


def _forest_with_parent(s, seeds, v, end):
    if v in seeds or not _can_attach(s, v, end):
        return None
    return grow_forest(s, seeds, forced={v: end}, strict=False)


# ---------------------------------------------------------------------------
# maps: straightening paths and collapsing


def _transport_points(p, rec, pts):
    return [(rec[v][0], p.mul(g, rec[v][1])) for v, g in pts]


def _reduce_path(s, pts):
    out = []
    for pt in pts:
        if out and same_point(s, out[-1], pt):
            continue
        if len(out) >= 2 and same_point(s, out[-2], pt):
            out.pop()
            continue
        out.append(pt)
    return out


@dataclass
class Straightened:
    psi: EquivariantMap
    paths: list
    record: dict
    moves: list


def straighten(psi: EquivariantMap, paths, budget=None):
    """Fold along point paths until the map is locally injective on each."""
    budget = default_budget() if budget is None else budget
    p = psi.domain.pres
    rec = {v: (v, IDENTITY) for v in psi.domain.vgroups}
    moves = []
    paths = [list(x) for x in paths]
    for idx in range(len(paths)):
        while True:
            D, C = psi.domain, psi.codomain
            pts = _reduce_path(D, paths[idx])
            paths[idx] = pts
            hit = None
            for i in range(1, len(pts) - 1):
                if same_point(C, psi.image(pts[i - 1]), psi.image(pts[i + 1])):
                    hit = i
                    break
            if hit is None:
                break
            if len(moves) >= budget:
                raise DriverError("budget exhausted while straightening a path")
            v, g = pts[hit]
            st1 = adjacent_step(D, v, pts[hit - 1][0], p.mul(p.inv(g), pts[hit - 1][1]))
            st2 = adjacent_step(D, v, pts[hit + 1][0], p.mul(p.inv(g), pts[hit + 1][1]))
            (d1, s1), (d2, s2) = st1, st2
            res = apply_fold(D, FoldMove(v, d1, d2, p.mul(p.inv(s1), s2)))
            moves.append(res.move)
            psi = psi.pull_back(res.splitting, res.record)
            rec = compose_records(p, rec, res.record)
            paths = [_transport_points(p, res.record, x) for x in paths]
    return Straightened(psi, paths, rec, moves)


def image_edges(psi: EquivariantMap, pts):
    """Codomain edge orbits crossed by the images of consecutive points."""
    C, p = psi.codomain, psi.domain.pres
    out = []
    for a, b in zip(pts, pts[1:]):
        A, B = psi.image(a), psi.image(b)
        if same_point(C, A, B):
            continue
        st = adjacent_step(C, A[0], B[0], p.mul(p.inv(A[1]), B[1]))
        if st is None:
            raise DriverError("images of adjacent points are not adjacent")
        out.append(st[0][0])
    return out


def precollapse_with_record(psi: EquivariantMap):
    p = psi.domain.pres
    rec = {v: (v, IDENTITY) for v in psi.domain.vgroups}
    while True:
        bad = psi.collapsed_edges()
        if not bad:
            return psi, rec
        nd, cr = collapse_edge(psi.domain, bad[0])
        psi = psi.pull_back(nd, cr.vmap)
        rec = compose_records(p, rec, cr.vmap)


def collapse_codomain(psi: EquivariantMap, eids):
    """Collapse codomain edge orbits, then the domain edges they flatten."""
    p = psi.domain.pres
    eids = sorted(set(eids), key=lambda e: psi.codomain.edge_ids.index(e))
    if eids:
        C2, cr = collapse(psi.codomain, eids)
        imgs = {}
        for v, (X, g) in psi.images.items():
            nX, r = cr.vmap[X]
            imgs[v] = (nX, p.mul(g, r))
        psi = EquivariantMap(psi.domain, C2, imgs)
    return precollapse_with_record(psi)


@dataclass
class CollapseOutcome:
    psi: EquivariantMap
    seeds: frozenset
    weight_before: float
    weight_after: float
    edges_collapsed: int
    path_length: int
    cap: int
    moves: list
    refutation: dict | None = None
    label: str = "connector"


def collapse_large_connector(psi: EquivariantMap, seeds, P: PClass, k, forest=None):
    """Collapse the codomain image of a seed-to-seed path across a large connector."""
    seeds = _members(seeds)
    D, p = psi.domain, psi.domain.pres
    F = forest or grow_forest(D, seeds)
    before = seed_weight(D, seeds, P, F).current_weight
    large = [eid for eid, G in F.groups() if P.larger(G)]
    if not large:
        raise ValueError("no connecting group is larger than the class")
    eid = large[0]
    e = D.edges[eid]
    left = F.branch_points((e.tail, p.inv(e.wt)))
    right = F.branch_points((e.head, p.inv(e.wh)))
    path = list(reversed(left)) + right
    st = straighten(psi, [path])
    psi2 = st.psi
    pts = st.paths[0]
    orbits = image_edges(psi2, pts)
    length = len(orbits)
    seeds2 = _map_seeds(st.record, seeds)
    if length > k:
        ref = {"edge": eid, "path_length": length, "k": k, "path": pts}
        return CollapseOutcome(psi2, seeds2, before, before, 0, length, k, st.moves, ref)
    psi3, drec = collapse_codomain(psi2, orbits)
    seeds3 = _map_seeds(drec, seeds2)
    F3 = grow_forest(psi3.domain, seeds3, strict=False)
    if F3 is None:
        raise SeedError("image of the seeds is not a seed set after collapsing")
    after = seed_weight(psi3.domain, seeds3, P, F3).current_weight
    return CollapseOutcome(psi3, seeds3, before, after, len(set(orbits)), length, k, st.moves)


# ---------------------------------------------------------------------------
# the stage where a vertex first becomes non-cyclic


@dataclass
class StageOutcome:
    outcome: str                 # "1", "2" or "routed"
    psi: EquivariantMap
    seeds: frozenset
    weight_before: float
    weight_after: float
    edges_collapsed: int = 0
    cap: int = 0
    label: str = ""
    moves: list = field(default_factory=list)
    injective: bool = True


def cyclic_preconditions(D: Splitting, seeds, F=None):
    if not all(G.is_cyclic() for G in D.vgroups.values()):
        return False
    F = F or grow_forest(D, seeds, strict=False)
    return F is not None and all(G.is_trivial() for _, G in F.groups())


def _closest_with_stab(s, pts, target):
    for j, (v, g) in enumerate(pts):
        if conjugate(s.vgroups[v], g) == target:
            return j
    return len(pts) - 1


def cyclic_stage(psi: EquivariantMap, seeds, m: FoldMove, k, torsion_free=False):
    """One fold while every stabilizer is cyclic and every connector trivial."""
    seeds = _members(seeds)
    D, p = psi.domain, psi.domain.pres
    P = PClass("trivial", p)
    F = grow_forest(D, seeds, strict=False) if seeds else None
    if not seeds or not cyclic_preconditions(D, seeds, F):
        return StageOutcome("routed", psi, seeds, 0, 0)
    before = seed_weight(D, seeds, P, F).current_weight
    t = classify_fold(D, m)
    e1, e2, w, y1, y2 = _fold_sides(D, m, t)
    res = apply_fold(D, m)
    rec = res.record
    alpha = _map_seeds(rec, seeds)
    y_new = rec[y1][0]
    trivial_y = D.vgroups[y1].is_trivial() or D.vgroups[y2].is_trivial()

    def first_outcome(tilde, label):
        new = res.splitting
        F2 = grow_forest(new, tilde, strict=False)
        if F2 is None:
            return None
        after = seed_weight(new, tilde, P, F2).current_weight
        psi2 = psi.pull_back(new, rec)
        return StageOutcome("1", psi2, tilde, before, after, label=label, moves=[res.move],
                            injective=not (y1 in seeds and y2 in seeds))

    if _forest_with(D, seeds, [e1[0], e2[0]]) is not None:
        out = first_outcome(alpha, "forest")
    elif t[:-1] in ("I", "II") and trivial_y:
        out = first_outcome(alpha, "trivial-y")
    elif t[:-1] == "III" and trivial_y:
        out = first_outcome(alpha | {y_new}, "trivial-y")
    else:
        out = None
        if not trivial_y:
            return _second_outcome(psi, seeds, F, m, t, res, k, torsion_free, before)
    if out is None:
        upd = update_seeds_after_fold(D, seeds, m, P)
        psi2 = psi.pull_back(upd.fold.splitting, upd.fold.record)
        out = StageOutcome("1", psi2, upd.seeds, before, upd.weight_after, label="fallback-" + upd.label,
                           moves=[upd.fold.move], injective=upd.injective)
    return out


def _second_outcome(psi, seeds, F, m, t, res, k, torsion_free, before):
    D, p = psi.domain, psi.domain.pres
    P = PClass("trivial", p)
    e1, e2, w, y1, y2 = _fold_sides(D, m, t)
    x = m.pivot
    t1, t2 = D.shift(e1), p.mul(w, D.shift(e2))
    y1pt, y2pt = (y1, t1), (y2, t2)
    if t[:-1] == "III":
        paths = [F.branch_points(y1pt)]
        label = "III"
    elif t[:-1] == "I":
        paths = [F.branch_points(y1pt), F.branch_points(y2pt)]
        label = "I"
    else:
        paths = [[y1pt] + F.branch_points((x, IDENTITY)), F.branch_points(y2pt)]
        label = "II"
    seed_pts = [pts[-1] for pts in paths]
    psi1 = psi.pull_back(res.splitting, res.record)
    paths = [_transport_points(p, res.record, x_) for x_ in paths]
    st = straighten(psi1, paths)
    psi2 = st.psi
    D2 = psi2.domain
    moves = [res.move] + st.moves
    fold_rec = compose_records(p, res.record, st.record)
    orbits = []
    if t[:-1] == "III":
        orbits = image_edges(psi2, st.paths[0])
        removed = set()
        cap = k
    else:
        cut = []
        for pts in st.paths:
            target = conjugate(D2.vgroups[pts[-1][0]], pts[-1][1])
            j = _closest_with_stab(D2, pts, target)
            cut.append(pts[: j + 1])
        u1, u2 = seed_pts[0][0], seed_pts[1][0]
        if u1 != u2:
            orbits = image_edges(psi2, cut[0]) + image_edges(psi2, cut[1])
            removed = {u1, u2}
            label += "-inequivalent"
            cap = k
        else:
            # the path y'' -> u1 = h^-1 u2 -> h^-1 y''
            a, b = st.paths
            h = p.mul(b[-1][1], p.inv(a[-1][1]))
            back = [(v, p.mul(p.inv(h), g)) for v, g in reversed(b)]
            whole = _reduce_path(D2, a + back)
            orbits = image_edges(psi2, whole)
            removed = {u1}
            label += "-equivalent"
            cap = k if torsion_free else (3 * k) // 2
    psi3, drec = collapse_codomain(psi2, orbits)
    total = compose_records(p, fold_rec, drec)
    y_img = total[y1][0]
    keep = frozenset(total[u][0] for u in seeds if u not in removed)
    tilde = keep | {y_img}
    F3 = grow_forest(psi3.domain, tilde, strict=False)
    if F3 is None:
        tilde = _map_seeds(total, seeds) | {y_img}
        F3 = grow_forest(psi3.domain, tilde, strict=False)
        label += "-widened"
        if F3 is None:
            raise SeedError("no seed set found after the cyclic stage collapse")
    after = seed_weight(psi3.domain, tilde, P, F3).current_weight
    return StageOutcome("2", psi3, tilde, before, after, len(set(orbits)), cap, label, moves)


# ---------------------------------------------------------------------------
# the edge bound certificate


@dataclass
class BoundCertificate:
    p: int
    q: int
    chi_R: int
    valences: dict
    claimed_bound: float
    achieved_edges: int
    n: int
    k: int
    reduced: bool
    stages: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.failures and self.achieved_edges <= self.claimed_bound

    def format(self):
        lines = [
            f"connecting orbits n: {self.n}",
            f"k: {self.k}",
            f"reduced: {self.reduced}",
            f"p: {self.p}",
            f"q: {self.q}",
            f"chi(R/G): {self.chi_R}",
            "valences: " + ", ".join(f"{d}:{c}" for d, c in sorted(self.valences.items())),
            f"claimed bound: {self.claimed_bound}",
            f"achieved edges: {self.achieved_edges}",
        ]
        for st in self.stages:
            lines.append("stage " + " ".join(f"{a}={b}" for a, b in st.items()))
        for f in self.failures:
            lines.append(f"failure: {f}")
        lines.append(f"status: {'pass' if self.passed else 'fail'}")
        return "\n".join(lines) + "\n"


def _branch_edges(F, v):
    return [end[0] for end in F.branch(v)]


def certify_edge_bound(s: Splitting, seeds, P: PClass, k):
    """Recount the splitting along the reduced-tree argument and compare with (2k+1)n."""
    seeds = _members(seeds)
    failures = []
    rep = check_reducedness(s, P)
    if not rep.partially_reduced:
        failures.append(f"not partially reduced: {rep.offenders}")
    F = grow_forest(s, seeds)
    n = len(F.connecting())
    better = rep.reduced and k > 1
    claimed = (2 * k if better else 2 * k + 1) * n
    cert = BoundCertificate(0, 0, 0, {}, claimed, len(s.edges), n, k, rep.reduced, [], failures)
    cur, S = s, seeds
    first = True
    spent = 0
    # connectors whose group is larger than the class, with both branches
    while True:
        F = grow_forest(cur, S, strict=False)
        if F is None:
            failures.append("seed image stopped being a seed set")
            return cert
        large = [eid for eid, G in F.groups() if P.larger(G)]
        if not large:
            break
        eid = large[0]
        e = cur.edges[eid]
        path = [eid] + _branch_edges(F, e.tail) + _branch_edges(F, e.head)
        if len(path) > k:
            failures.append(f"large connector {eid}: fixed path of {len(path)} edges exceeds k")
        orbits = sorted(set(path), key=cur.edge_ids.index)
        cert.stages.append({"kind": "large", "edge": eid, "path": len(path), "collapsed": len(orbits), "cap": k})
        spent += len(orbits)
        cur, cr = collapse(cur, orbits)
        S = _map_seeds(cr.vmap, S)
    while cur.edges:
        F = grow_forest(cur, S, strict=False)
        if F is None:
            failures.append("seed image stopped being a seed set")
            break
        conn = F.connecting()
        if not conn:
            failures.append(f"{len(cur.edges)} edges remain without connecting edges")
            break
        small = [eid for eid in cur.edge_ids if P.contained_in_member(cur.edges[eid].group)]
        g = nx.MultiGraph()
        g.add_nodes_from(cur.vertices)
        for eid in small:
            e = cur.edges[eid]
            g.add_edge(e.tail, e.head, key=eid)
        comp = None
        for eid in conn:
            if eid in small:
                comp = nx.node_connected_component(g, cur.edges[eid].tail)
                break
        if comp is None:
            failures.append("no connecting edge inside a small-edge component")
            break
        R_edges = [eid for eid in small if cur.edges[eid].tail in comp]
        A = [v for v in sorted(comp) if v in S or P.larger(cur.vgroups[v])]
        p_, q_ = len(A), sum(1 for eid in conn if eid in R_edges)
        chi = len(comp) - len(R_edges)
        sub = g.subgraph(comp)
        val = Counter(d for _, d in sub.degree())
        if chi != p_ - q_:
            failures.append(f"chi(R/G) = {chi} but p - q = {p_ - q_}")
        n1, n2 = val.get(1, 0), val.get(2, 0)
        if n1 + n2 > p_:
            failures.append(f"valence one and two vertices ({n1 + n2}) exceed p = {p_}")
        if len(R_edges) > 2 * n1 + n2 - 3 * chi:
            failures.append("edges of R/G exceed 2 n1 + n2 - 3 chi")
        tilde = set(R_edges)
        for v in A:
            tilde.update(_branch_edges(F, v))
        if better:
            stage_cap = (k + 1) * q_ if chi <= 0 else (2 * k - 1) * q_
        else:
            stage_cap = (k + 2) * q_ if chi <= 0 else (2 * k + 1) * q_
        if len(tilde) > stage_cap:
            failures.append(f"stage collapses {len(tilde)} edges, more than {stage_cap}")
        if first:
            cert.p, cert.q, cert.chi_R, cert.valences = p_, q_, chi, dict(val)
            first = False
        cert.stages.append({"kind": "R", "p": p_, "q": q_, "chi": chi, "collapsed": len(tilde), "cap": stage_cap})
        spent += len(tilde)
        cur, cr = collapse(cur, sorted(tilde, key=cur.edge_ids.index))
        S = _map_seeds(cr.vmap, S)
    if spent != len(s.edges) and not failures:
        failures.append(f"stages account for {spent} of {len(s.edges)} edges")
    return cert


# ---------------------------------------------------------------------------
# the driver


@dataclass
class DriverTrace:
    k: int
    pclass: str
    mode: str
    initial_weight: float
    steps: list = field(default_factory=list)       # dicts, one per step
    collapses: list = field(default_factory=list)   # (label, edges, cap, W before, W after)
    violations: list = field(default_factory=list)
    exhausted: bool = False
    refutation: dict | None = None
    final_weight: float = 0
    final_edges: int = 0
    achieved_edges: int = 0
    certified_bound: float = 0
    weight_bound: float = 0
    final_certificate: BoundCertificate | None = None
    external_constant: object = None

    @property
    def weights(self):
        return [self.initial_weight] + [st["after"] for st in self.steps]

    @property
    def monotone(self):
        w = self.weights
        return all(b <= a for a, b in zip(w, w[1:]))

    @property
    def passed(self):
        return (not self.violations and not self.exhausted and self.refutation is None
                and self.achieved_edges <= self.certified_bound)

    def format(self, p=None):
        lines = [f"mode: {self.mode}", f"class: {self.pclass}", f"k: {self.k}",
                 f"initial weight: {_fmt(self.initial_weight)}"]
        if self.external_constant is not None:
            lines.append(f"external constant: {self.external_constant}")
        for i, st in enumerate(self.steps, 1):
            lines.append(f"step {i}: {st['kind']} {st.get('fold', '-')} case={st.get('case', '-')} "
                         f"weight {_fmt(st['before'])} -> {_fmt(st['after'])} collapsed={st.get('collapsed', 0)}")
        lines += [
            f"final weight: {_fmt(self.final_weight)}",
            f"collapsed edges: {sum(c[1] for c in self.collapses)}",
            f"final edges: {self.final_edges}",
            f"achieved edges: {self.achieved_edges}",
            f"certified bound: {_fmt(self.certified_bound)}",
            f"weight bound: {_fmt(self.weight_bound)}",
        ]
        if self.exhausted:
            lines.append("budget exhausted: partial trace")
        if self.refutation:
            lines.append(f"refutation: path of {self.refutation['path_length']} edges across {self.refutation['edge']}")
        for v in self.violations:
            lines.append(f"violation: {v}")
        lines.append(f"status: {'pass' if self.passed else 'fail'}")
        return "\n".join(lines) + "\n"


def _fmt(x):
    return "inf" if x == INF else str(x)


def _pull_element(psi, pts, h):
    """Type II folds making h fix every edge along a path of points starting at a point h fixes."""
    p = psi.domain.pres
    moves = []
    rec = {v: (v, IDENTITY) for v in psi.domain.vgroups}
    for i in range(len(pts) - 1):
        D = psi.domain
        (a, ga), (b, gb) = pts[i], pts[i + 1]
        if D.vgroups[b].contains(p.conj(p.inv(gb), h)):
            continue
        ha = p.conj(p.inv(ga), h)
        if not D.vgroups[a].contains(ha):
            raise DriverError("pulled element does not fix the path start")
        d, sig = adjacent_step(D, a, b, p.mul(p.inv(ga), gb))
        res = apply_fold(D, FoldMove(a, d, d, p.conj(p.inv(sig), ha)))
        moves.append(res.move)
        psi = psi.pull_back(res.splitting, res.record)
        rec = compose_records(p, rec, res.record)
        pts = _transport_points(p, res.record, pts)
    return psi, rec, moves


def _fixed_path(s, K, start, goal_cells):
    """Points of a path inside Fix(K) from start to the nearest goal vertex cell."""
    verts, edges = bs.fixed_subtree(s, K)
    g = nx.Graph()
    for ec in sorted(edges):
        a, b = bs.edge_ends(s, ec)
        g.add_edge(a, b)
    src = bs.vertex_cell(s, *start)
    g.add_node(src)
    best = None
    for goal in goal_cells:
        if goal in g and nx.has_path(g, src, goal):
            path = nx.shortest_path(g, src, goal)
            if best is None or len(path) < len(best):
                best = path
    if best is None:
        raise DriverError("no path inside the fixed subtree")
    return [tuple(c) for c in best]


def dagger_stage(psi: EquivariantMap, seeds, P: PClass, forest=None):
    """Pull the minimal extension of a non-member connecting group onto its region."""
    D, p = psi.domain, psi.domain.pres
    F = forest or grow_forest(D, seeds)
    bad = [(eid, G) for eid, G in F.groups() if not P.member(G)]
    if not bad:
        return None
    eid, K = bad[0]
    H = P.minimal_extension(K)
    start = bs._find_fixed_vertex(D, H)
    if start is None:
        raise DriverError(f"minimal extension of connecting group {eid} is not elliptic")
    e = D.edges[eid]
    ends = [bs.vertex_cell(D, e.tail, p.inv(e.wt)), bs.vertex_cell(D, e.head, p.inv(e.wh))]
    path = _fixed_path(D, K, start, ends)
    other = ends[1] if path[-1] == ends[0] else ends[0]
    path.append(other)
    branches = [F.branch_points(pt) for pt in path]
    h = H.gens[0]
    moves = []
    rec = {v: (v, IDENTITY) for v in D.vgroups}
    todo = [path] + branches
    for i in range(len(todo)):
        psi, r, mv = _pull_element(psi, todo[i], h)
        moves += mv
        rec = compose_records(p, rec, r)
        todo = [_transport_points(p, r, x) for x in todo]
    return psi, _map_seeds(rec, seeds), moves, eid


def relabel_domain(psi_dom: Splitting, images_words, target: Presentation):
    """Translate a splitting over a free group through generator images."""
    def tr(w):
        out = IDENTITY
        for g, e in w:
            out = target.mul(out, target.power(images_words[g], e))
        return out

    vg = {v: [tr(w) for w in G.gens] for v, G in psi_dom.vgroups.items()}
    edges = {}
    for eid, e in psi_dom.edges.items():
        edges[eid] = (e.tail, e.head, [tr(w) for w in e.group.gens], tr(e.wt), tr(e.wh))
    kernel = []
    for eid, e in psi_dom.edges.items():
        img = subgroup_automaton(edges[eid][2], target)
        if img.profile().free_rank != e.group.profile().free_rank or img.profile().finite_factors:
            kernel.append(eid)
    if kernel:
        raise DriverError(f"the quotient map is not injective on edge groups {kernel}")
    new = Splitting(target, {v: subgroup_automaton(g, target) for v, g in vg.items()},
                    {eid: Edge(t, h, subgroup_automaton(gs, target), wt, wh) for eid, (t, h, gs, wt, wh) in edges.items()},
                    psi_dom.tree)
    issues = validate(new)
    if issues:
        raise DriverError("relabelled domain is not a splitting: " + "; ".join(issues))
    if _euler_char(new) != _group_euler(target):
        raise DriverError("relabelled domain does not split the target group (Euler characteristic)")
    return new, tr


def _subgroup_euler(K):
    from fractions import Fraction
    pr = K.profile()
    return 1 - pr.free_rank - sum(1 - Fraction(1, m) for m in pr.finite_factors)


def _euler_char(s):
    return sum(_subgroup_euler(G) for G in s.vgroups.values()) - sum(_subgroup_euler(e.group) for e in s.edges.values())


def _group_euler(p):
    from fractions import Fraction
    return 1 - sum(1 - (Fraction(1, n) if n else 0) for n in p.orders)


def run_driver(psi: EquivariantMap, seeds, P: PClass, k, mode="simple", budget=None,
               phi=None, torsion_free=None, cyclic=None, constant=None):
    """Decompose psi into folds while maintaining a seed set and its weight.

    ``phi`` (fg-quotient mode) maps each generator of the domain presentation
    to a word in the codomain presentation.
    """
    budget = default_budget() if budget is None else budget
    seeds = _members(seeds)
    if mode not in ("simple", "dagger", "fg-quotient"):
        raise ValueError(f"unknown mode {mode}")
    if mode == "fg-quotient":
        if phi is None:
            raise DriverError("fg-quotient mode needs the quotient map")
        target = psi.codomain.pres
        dom, tr = relabel_domain(psi.domain, phi, target)
        psi = EquivariantMap(dom, psi.codomain, {v: (X, tr(g)) for v, (X, g) in psi.images.items()})
    P = make_pclass(P, psi.codomain.pres)
    if mode == "dagger":
        flags = P.dagger_flags
        if not all(flags.values()):
            raise DriverError(f"class {P.name} lacks condition flags {flags}")
        open_edges = [eid for eid, e in psi.codomain.edges.items() if not P.is_closed(e.group)]
        if open_edges:
            raise DriverError(f"codomain edge groups not closed under minimal extension: {open_edges}")
    issues = psi.check()
    if issues:
        raise DriverError("; ".join(issues))
    if torsion_free is None:
        torsion_free = not any(psi.codomain.pres.orders)
    if cyclic is None:
        cyclic = P.kind == "trivial"
    psi, rec = precollapse_with_record(psi)
    seeds = _map_seeds(rec, seeds)
    W = seed_weight(psi.domain, seeds, P).current_weight
    total_edges = len(psi.codomain.edges)
    trace = DriverTrace(k, P.name, mode, W, external_constant=constant)
    if mode == "fg-quotient":
        trace.steps.append({"kind": "relabel", "before": W, "after": W})
    caps = 0
    n_fold = 0
    while True:
        if W == 0:
            if psi.codomain.edges:
                trace.violations.append("weight zero but the codomain is not a point")
            break
        if n_fold >= budget:
            trace.exhausted = True
            break
        D = psi.domain
        F = grow_forest(D, seeds) if seeds else None
        if F is not None and any(P.larger(G) for _, G in F.groups()):
            out = collapse_large_connector(psi, seeds, P, k, forest=F)
            n_fold += len(out.moves)
            if out.refutation:
                trace.refutation = out.refutation
                break
            _record_collapse(trace, "connector", out.edges_collapsed, k, out.weight_before, out.weight_after)
            if not out.weight_after <= out.weight_before - 1:
                trace.violations.append(f"connector collapse did not lower the weight ({out.weight_before} -> {out.weight_after})")
            caps += k
            psi, seeds, W = out.psi, out.seeds, out.weight_after
            continue
        if mode == "dagger" and F is not None:
            st = dagger_stage(psi, seeds, P, F)
            if st is not None:
                psi, seeds, moves, eid = st
                n_fold += len(moves)
                if not moves:
                    raise DriverError(f"pull stage made no progress on connecting edge {eid}")
                newW = seed_weight(psi.domain, seeds, P).current_weight
                trace.steps.append({"kind": "pull", "fold": f"{len(moves)} folds", "case": eid, "before": W, "after": newW})
                _check_monotone(trace, W, newW)
                W = newW
                continue
        m = local_fold(psi)
        if m is None:
            break
        n_fold += 1
        if cyclic and seeds and cyclic_preconditions(D, seeds, F):
            out = cyclic_stage(psi, seeds, m, k, torsion_free)
            fold_txt = out.moves[0].fold_type if out.moves else "-"
            if out.outcome == "2":
                cyclic = False
                n_fold += len(out.moves) - 1
                _record_collapse(trace, "cyclic:" + out.label, out.edges_collapsed, out.cap, out.weight_before, out.weight_after)
                caps += out.cap
                if out.edges_collapsed > out.cap:
                    trace.violations.append(f"cyclic stage collapsed {out.edges_collapsed} edges, cap {out.cap}")
                if not out.weight_after <= out.weight_before - 2:
                    trace.violations.append(f"cyclic stage lowered the weight by less than two ({out.weight_before} -> {out.weight_after})")
                psi, seeds, W = out.psi, out.seeds, out.weight_after
                continue
            trace.steps.append({"kind": "fold", "fold": fold_txt, "case": "cyclic-" + out.label,
                                "before": out.weight_before, "after": out.weight_after})
            _check_step(trace, out.weight_before, out.weight_after, out.injective)
            psi, seeds, W = out.psi, out.seeds, out.weight_after
            continue
        try:
            upd = update_seeds_after_fold(D, seeds, m, P)
        except RoutedError as exc:
            trace.violations.append(f"routing failed: {exc}")
            break
        trace.steps.append({"kind": "fold", "fold": upd.fold.move.fold_type, "case": upd.label,
                            "before": upd.weight_before, "after": upd.weight_after})
        _check_step(trace, upd.weight_before, upd.weight_after, upd.injective)
        psi = psi.pull_back(upd.fold.splitting, upd.fold.record)
        seeds, W = upd.seeds, upd.weight_after
    trace.final_weight = W
    trace.final_edges = len(psi.codomain.edges)
    collapsed = sum(c[1] for c in trace.collapses)
    trace.achieved_edges = collapsed + trace.final_edges
    if trace.achieved_edges != total_edges:
        trace.violations.append("collapsed and remaining edges do not add up to the codomain")
    final = 0
    if psi.codomain.edges and seeds and not trace.exhausted and trace.refutation is None:
        cert = certify_edge_bound(psi.domain, seeds, P, k)
        trace.final_certificate = cert
        final = cert.claimed_bound
    elif psi.codomain.edges:
        final = INF
    trace.certified_bound = caps + final
    trace.weight_bound = INF if trace.initial_weight == INF else math.floor((2 * k + 1) * trace.initial_weight / 2)
    return trace


def _record_collapse(trace, label, edges, cap, before, after):
    trace.collapses.append((label, edges, cap, before, after))
    trace.steps.append({"kind": "collapse", "fold": label, "case": label, "before": before,
                        "after": after, "collapsed": edges})
    _check_monotone(trace, before, after)


def _check_monotone(trace, before, after):
    if after > before:
        trace.violations.append(f"weight increased ({before} -> {after})")


def _check_step(trace, before, after, injective):
    _check_monotone(trace, before, after)
    if after == before and before != INF and not injective:
        trace.violations.append("weight preserved but the seed map is not injective")
