"""Words in free products of cyclic groups and folded subgroup graphs.

A word is a tuple of syllables ``(gen, exp)``.  Generators are indices into a
Presentation; an order of 0 means infinite cyclic.  For a finite generator of
order n the exponent lies in 1..n-1.

Subgroups are stored as folded core graphs.  Edges carry single letters.  An
infinite generator may be read in both directions; a finite generator ``a`` of
order n is read forwards only and every node touched by ``a`` lies on an
``a``-cycle whose length divides n.
"""
from __future__ import annotations

import re
from collections import deque
from functools import cached_property

INF = 0
IDENTITY: tuple = ()

_TOKEN = re.compile(r"^([A-Za-z_][A-Za-z0-9_']*)(?:\^(-?\d+))?$")


class WordError(ValueError):
    pass


class Presentation:
    """Free product of cyclic groups, one factor per generator."""

    def __init__(self, gens, orders):
        gens = list(gens)
        orders = [int(o) for o in orders]
        if len(gens) != len(orders):
            raise WordError("generator/order length mismatch")
        if len(set(gens)) != len(gens):
            raise WordError("generator symbols must be distinct")
        for g, o in zip(gens, orders):
            if o != INF and o < 2:
                raise WordError(f"order of {g} must be 0 (infinite) or >= 2")
            if not _TOKEN.match(g) or "^" in g:
                raise WordError(f"bad generator symbol {g!r}")
        self.gens = tuple(gens)
        self.orders = tuple(orders)
        self.index = {g: i for i, g in enumerate(gens)}

    def __eq__(self, other):
        return isinstance(other, Presentation) and self.gens == other.gens and self.orders == other.orders

    def __hash__(self):
        return hash((self.gens, self.orders))

    def __repr__(self):
        return "Presentation(" + ", ".join(f"{g}:{o}" for g, o in zip(self.gens, self.orders)) + ")"

    @property
    def rank(self):
        return len(self.gens)

    def finite(self, i):
        return self.orders[i] != INF

    def has_infinite_order(self):
        return any(o == INF for o in self.orders) or len(self.gens) > 1

    # -- normal forms -------------------------------------------------
    def normalize(self, syllables):
        out = []
        for g, e in syllables:
            n = self.orders[g]
            if n:
                e %= n
            if e == 0:
                continue
            if out and out[-1][0] == g:
                e2 = out[-1][1] + e
                if n:
                    e2 %= n
                if e2 == 0:
                    out.pop()
                else:
                    out[-1] = (g, e2)
            else:
                out.append((g, e))
        return tuple(out)

    def mul(self, *words):
        if len(words) == 1:
            return words[0]
        return self.normalize([s for w in words for s in w])

    def inv(self, w):
        return self.normalize([(g, -e) for g, e in reversed(w)])

    def conj(self, c, w):
        """c w c^-1"""
        return self.mul(c, w, self.inv(c))

    def power(self, w, k):
        if k < 0:
            w, k = self.inv(w), -k
        return self.normalize([s for _ in range(k) for s in w])

    def length(self, w):
        return sum(1 if self.orders[g] else abs(e) for g, e in w)

    def gen(self, name, e=1):
        return self.normalize([(self.index[name], e)])

    # -- letters --------------------------------------------------------
    def steps(self, w):
        """Single letters: (g, +-1) for infinite g, (g, e) for finite g."""
        for g, e in w:
            if self.orders[g]:
                yield (g, e)
            else:
                d = 1 if e > 0 else -1
                for _ in range(abs(e)):
                    yield (g, d)

    def letter_key(self, step):
        g, d = step
        if self.orders[g]:
            return (g, d)
        return (g, 0 if d > 0 else 1)

    def shortlex_key(self, w):
        return (self.length(w), tuple(self.letter_key(s) for s in self.steps(w)))

    def all_steps(self):
        """Every single letter, in shortlex order."""
        out = []
        for g, n in enumerate(self.orders):
            if n:
                out.extend((g, j) for j in range(1, n))
            else:
                out.extend([(g, 1), (g, -1)])
        return out

    # -- text -----------------------------------------------------------
    def parse(self, text):
        text = text.strip()
        if text in ("", "1", "e"):
            return IDENTITY
        raw = []
        for tok in text.replace("*", " ").split():
            m = _TOKEN.match(tok)
            if not m or m.group(1) not in self.index:
                raise WordError(f"unknown symbol {tok!r}")
            raw.append((self.index[m.group(1)], int(m.group(2) or 1)))
        return self.normalize(raw)

    def fmt(self, w):
        if not w:
            return "1"
        return " ".join(self.gens[g] if e == 1 else f"{self.gens[g]}^{e}" for g, e in w)

    def header(self):
        return "\n".join(f"{g}:{o}" for g, o in zip(self.gens, self.orders))

    @classmethod
    def from_header(cls, text):
        gens, orders = [], []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            g, _, o = line.partition(":")
            gens.append(g.strip())
            orders.append(int(o))
        return cls(gens, orders)


def normalize(w, p: Presentation):
    """Normal form of a raw word: a string or a sequence of (symbol|index, exp)."""
    if isinstance(w, str):
        return p.parse(w)
    raw = []
    for g, e in w:
        if isinstance(g, str):
            if g not in p.index:
                raise WordError(f"unknown symbol {g!r}")
            g = p.index[g]
        raw.append((g, e))
    return p.normalize(raw)


def enumerate_words(p: Presentation, max_len):
    """All normal forms of length <= max_len (brute force, for oracles)."""
    out = [IDENTITY]
    frontier = [IDENTITY]
    for _ in range(max_len):
        nxt = []
        for w in frontier:
            for st in p.all_steps():
                g, d = st
                if w and w[-1][0] == g:
                    if p.orders[g] or (w[-1][1] > 0) != (d > 0):
                        continue
                nxt.append(p.mul(w, ((g, d),)))
        out.extend(nxt)
        frontier = nxt
    return out


# ---------------------------------------------------------------------------
# folding


class _Folder:
    """Union-find folding of labelled graphs, with torsion completion."""

    def __init__(self, pres):
        self.pres = pres
        self.parent = []
        self.out = []
        self.inn = []

    def node(self):
        self.parent.append(len(self.parent))
        self.out.append({})
        self.inn.append({})
        return len(self.parent) - 1

    def find(self, x):
        p = self.parent
        root = x
        while p[root] != root:
            root = p[root]
        while p[x] != root:
            p[x], x = root, p[x]
        return root

    def merge(self, a, b):
        stack = [(a, b)]
        while stack:
            a, b = stack.pop()
            a, b = self.find(a), self.find(b)
            if a == b:
                continue
            if b < a:
                a, b = b, a
            self.parent[b] = a
            for table in (self.out, self.inn):
                ta, tb = table[a], table[b]
                for g, t in tb.items():
                    if g in ta:
                        stack.append((ta[g], t))
                    else:
                        ta[g] = t
                table[b] = {}

    def edge(self, u, g, v):
        u, v = self.find(u), self.find(v)
        if g in self.out[u]:
            self.merge(self.out[u][g], v)
        else:
            self.out[u][g] = v
        u, v = self.find(u), self.find(v)
        if g in self.inn[v]:
            self.merge(self.inn[v][g], u)
        else:
            self.inn[v][g] = u

    def path(self, start, w, end=None):
        """Add a path reading w from start; returns the end node."""
        letters = []
        for g, d in self.pres.steps(w):
            if self.pres.orders[g]:
                letters.extend([(g, 1)] * d)
            else:
                letters.append((g, d))
        cur = start
        for i, (g, d) in enumerate(letters):
            nxt = end if (end is not None and i == len(letters) - 1) else self.node()
            if d > 0:
                self.edge(cur, g, nxt)
            else:
                self.edge(nxt, g, cur)
            cur = nxt
        if end is not None and not letters:
            self.merge(start, end)
            return self.find(end)
        return cur

    def load(self, sub):
        """Copy a finished graph in; returns the node offset."""
        off = len(self.parent)
        for _ in range(sub.size):
            self.node()
        for u, d in enumerate(sub.out):
            for g, v in d.items():
                self.edge(off + u, g, off + v)
        return off

    def _complete_once(self):
        pres = self.pres
        for g, n in enumerate(pres.orders):
            if not n:
                continue
            for x in range(len(self.parent)):
                if self.find(x) != x:
                    continue
                if g not in self.out[x] and g not in self.inn[x]:
                    continue
                seq = [x]
                cur = x
                closed = False
                for _ in range(n):
                    if g not in self.out[cur]:
                        break
                    cur = self.find(self.out[cur][g])
                    if cur == x:
                        closed = True
                        break
                    seq.append(cur)
                if closed:
                    L = len(seq)
                    if n % L:
                        self.merge(x, seq[n % L])
                        return True
                    continue
                if len(seq) > n:
                    self.merge(x, seq[n])
                    return True
                # open path: find its start
                start = x
                back = 0
                while g in self.inn[start]:
                    start = self.find(self.inn[start][g])
                    back += 1
                    if back >= n:
                        break
                if back >= n:
                    self.merge(x, start)
                    return True
                seq = [start]
                cur = start
                while g in self.out[cur]:
                    cur = self.find(self.out[cur][g])
                    seq.append(cur)
                    if len(seq) > n:
                        break
                if len(seq) > n:
                    self.merge(seq[0], seq[n])
                    return True
                m = len(seq) - 1
                prev = seq[-1]
                for _ in range(n - m - 1):
                    q = self.node()
                    self.edge(prev, g, q)
                    prev = q
                self.edge(prev, g, start)
                return True
        return False

    def complete(self):
        while self._complete_once():
            pass

    def export(self, base=0):
        """(out, inn, base) over compact ids of the component of base."""
        base = self.find(base)
        ids = {base: 0}
        order = [base]
        q = deque([base])
        while q:
            x = q.popleft()
            for table in (self.out, self.inn):
                for g, y in table[x].items():
                    y = self.find(y)
                    if y not in ids:
                        ids[y] = len(order)
                        order.append(y)
                        q.append(y)
        out = [{} for _ in order]
        inn = [{} for _ in order]
        for x in order:
            for g, y in self.out[x].items():
                out[ids[x]][g] = ids[self.find(y)]
                inn[ids[self.find(y)]][g] = ids[x]
        return out, inn, ids


def _pieces(pres, out, alive=None):
    """a-cycles for every finite generator: list of (gen, [nodes in cycle order])."""
    res = []
    for g, n in enumerate(pres.orders):
        if not n:
            continue
        seen = set()
        for x in range(len(out)):
            if alive is not None and x not in alive:
                continue
            if x in seen or g not in out[x]:
                continue
            cyc = [x]
            seen.add(x)
            y = out[x][g]
            while y != x:
                cyc.append(y)
                seen.add(y)
                y = out[y][g]
            res.append((g, cyc))
    return res


def _trim(pres, out, inn, base):
    """Core of a folded complete graph.  base=None trims without a basepoint."""
    N = len(out)
    alive = set(range(N))
    free = []
    for u in range(N):
        for g, v in out[u].items():
            if not pres.orders[g]:
                free.append((u, g, v))
    free_alive = set(range(len(free)))
    inc = [[] for _ in range(N)]
    deg = [0] * N
    for i, (u, g, v) in enumerate(free):
        inc[u].append(i)
        inc[v].append(i)
        deg[u] += 1
        deg[v] += 1
    pieces = _pieces(pres, out)
    piece_alive = set(range(len(pieces)))
    npc = [0] * N
    mem = [[] for _ in range(N)]
    for j, (g, cyc) in enumerate(pieces):
        for x in cyc:
            npc[x] += 1
            mem[x].append(j)

    changed = True
    while changed:
        changed = False
        for x in list(alive):
            if x == base or npc[x] or deg[x] > 1:
                continue
            for i in inc[x]:
                if i in free_alive:
                    free_alive.discard(i)
                    u, _, v = free[i]
                    deg[u] -= 1
                    deg[v] -= 1
            alive.discard(x)
            changed = True
        for j in list(piece_alive):
            g, cyc = pieces[j]
            if len(cyc) < pres.orders[g]:
                continue
            ext = [y for y in cyc if deg[y] > 0 or npc[y] > 1 or y == base]
            if len(ext) <= 1:
                piece_alive.discard(j)
                for y in cyc:
                    npc[y] -= 1
                changed = True
    nout = {}
    for x in alive:
        d = {}
        for g, y in out[x].items():
            if pres.orders[g]:
                if any(j in piece_alive for j in mem[x] if pieces[j][0] == g):
                    d[g] = y
            elif y in alive:
                d[g] = y
        nout[x] = d
    return alive, nout


def _canon(pres, nodes, out, base):
    """BFS renumbering from base; returns (out list, key)."""
    ids = {base: 0}
    order = [base]
    inn = {x: {} for x in nodes}
    for x in nodes:
        for g, y in out[x].items():
            inn[y][g] = x
    q = deque([base])
    while q:
        x = q.popleft()
        for g, n in enumerate(pres.orders):
            nbrs = [out[x].get(g)]
            if not n:
                nbrs.append(inn[x].get(g))
            for y in nbrs:
                if y is not None and y not in ids:
                    ids[y] = len(order)
                    order.append(y)
                    q.append(y)
    new = [dict() for _ in order]
    for x in order:
        for g, y in out[x].items():
            new[ids[x]][g] = ids[y]
    key = tuple(tuple(sorted(d.items())) for d in new)
    return new, key


class SubgroupRep:
    """Folded core graph of a finitely generated subgroup, based at node 0."""

    __slots__ = ("pres", "out", "inn", "key", "__dict__")

    def __init__(self, pres, out, key):
        self.pres = pres
        self.out = tuple(out)
        inn = [dict() for _ in out]
        for x, d in enumerate(out):
            for g, y in d.items():
                inn[y][g] = x
        self.inn = tuple(inn)
        self.key = key

    @classmethod
    def _from_graph(cls, pres, out, base=0):
        inn = [dict() for _ in out]
        for x, d in enumerate(out):
            for g, y in d.items():
                inn[y][g] = x
        alive, tout = _trim(pres, out, inn, base)
        new, key = _canon(pres, alive, tout, base)
        return cls(pres, new, key)

    @property
    def size(self):
        return len(self.out)

    def __eq__(self, other):
        return isinstance(other, SubgroupRep) and self.pres == other.pres and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return "<" + ", ".join(self.pres.fmt(g) for g in self.gens) + ">"

    def is_trivial(self):
        return len(self.out) == 1 and not self.out[0]

    # -- reading --------------------------------------------------------
    def step(self, x, st):
        g, d = st
        if self.pres.orders[g]:
            for _ in range(d):
                x = self.out[x].get(g)
                if x is None:
                    return None
            return x
        return (self.out if d > 0 else self.inn)[x].get(g)

    def read(self, w, x=0):
        for st in self.pres.steps(w):
            x = self.step(x, st)
            if x is None:
                return None
        return x

    def contains(self, w):
        return self.read(w) == 0

    def le(self, other):
        return all(other.contains(g) for g in self.gens)

    # -- structure ------------------------------------------------------
    @cached_property
    def _tree(self):
        """Star-model spanning tree: (path words, generators)."""
        pres = self.pres
        pieces = _pieces(pres, self.out)
        piece_of = {}
        for j, (g, cyc) in enumerate(pieces):
            for pos, x in enumerate(cyc):
                piece_of[(x, g)] = (j, pos)
        paths = {0: IDENTITY}
        gens = []
        seen_piece = set()
        q = deque([0])
        tree_free = set()
        while q:
            x = q.popleft()
            for g, n in enumerate(pres.orders):
                if n:
                    if (x, g) not in piece_of:
                        continue
                    j, pos = piece_of[(x, g)]
                    if j in seen_piece:
                        continue
                    seen_piece.add(j)
                    cyc = pieces[j][1]
                    L = len(cyc)
                    if L < n:
                        gens.append(pres.conj(paths[x], ((g, L),)))
                    for off in range(1, L):
                        y = cyc[(pos + off) % L]
                        w = pres.mul(paths[x], ((g, off),))
                        if y in paths:
                            gens.append(pres.mul(w, pres.inv(paths[y])))
                        else:
                            paths[y] = w
                            q.append(y)
                    continue
                y = self.out[x].get(g)
                if y is not None and y not in paths:
                    paths[y] = pres.mul(paths[x], ((g, 1),))
                    tree_free.add((x, g))
                    q.append(y)
                y = self.inn[x].get(g)
                if y is not None and y not in paths:
                    paths[y] = pres.mul(paths[x], ((g, -1),))
                    tree_free.add((y, g))
                    q.append(y)
        for x, d in enumerate(self.out):
            for g, y in d.items():
                if pres.orders[g] or (x, g) in tree_free:
                    continue
                gens.append(pres.mul(paths[x], ((g, 1),), pres.inv(paths[y])))
        gens = [g for g in gens if g]
        return paths, tuple(gens)

    @property
    def gens(self):
        return self._tree[1]

    def path_to(self, x):
        return self._tree[0][x]

    def profile(self):
        return kurosh_profile(self)

    def is_cyclic(self):
        p = kurosh_profile(self)
        return p.free_rank + len(p.finite_factors) <= 1

    def is_finite(self):
        return kurosh_profile(self).free_rank == 0 and len(kurosh_profile(self).finite_factors) <= 1

    def order(self):
        """Order of a finite subgroup, None if infinite."""
        p = kurosh_profile(self)
        if p.free_rank or len(p.finite_factors) > 1:
            return None
        return p.finite_factors[0] if p.finite_factors else 1

    @cached_property
    def conj_key(self):
        """Invariant of the conjugacy class (exact)."""
        return conjugacy_key(self)

    def dist(self):
        """BFS distance from base in the free-product word metric."""
        d = {0: 0}
        q = deque([0])
        steps = self.pres.all_steps()
        while q:
            x = q.popleft()
            for st in steps:
                y = self.step(x, st)
                if y is not None and y not in d:
                    d[y] = d[x] + 1
                    q.append(y)
        return d


class KuroshProfile:
    __slots__ = ("free_rank", "finite_factors")

    def __init__(self, free_rank, finite_factors):
        self.free_rank = free_rank
        self.finite_factors = tuple(sorted(finite_factors))

    def trivial(self):
        return self.free_rank == 0 and not self.finite_factors

    def __eq__(self, o):
        return isinstance(o, KuroshProfile) and (self.free_rank, self.finite_factors) == (o.free_rank, o.finite_factors)

    def __repr__(self):
        return f"KuroshProfile(free_rank={self.free_rank}, finite_factors={list(self.finite_factors)})"


def _star_betti(pres, out, nodes=None):
    nodes = range(len(out)) if nodes is None else nodes
    nodes = list(nodes)
    alive = set(nodes)
    pieces = _pieces(pres, out, alive)
    E = sum(1 for x in nodes for g in out[x] if not pres.orders[g])
    E += sum(len(c) for _, c in pieces)
    V = len(nodes) + len(pieces)
    fin = [pres.orders[g] // len(c) for g, c in pieces if len(c) < pres.orders[g]]
    return E - V + 1, fin


def kurosh_profile(s: SubgroupRep):
    b, fin = _star_betti(s.pres, s.out)
    return KuroshProfile(b, fin)


def subgroup_automaton(gens, p: Presentation):
    f = _Folder(p)
    base = f.node()
    for w in gens:
        if w:
            f.path(base, w, base)
    f.complete()
    out, inn, _ = f.export(base)
    return SubgroupRep._from_graph(p, out, 0)


def trivial_subgroup(p):
    return SubgroupRep(p, [{}], ((),))


def whole_group(p):
    return subgroup_automaton([((i, 1),) for i in range(p.rank)], p)


def contains(s: SubgroupRep, w):
    return s.contains(w)


def _product(a, b, start=(0, 0)):
    pres = a.pres
    ids = {start: 0}
    order = [start]
    q = deque([start])
    out = [{}]
    while q:
        x, y = q.popleft()
        i = ids[(x, y)]
        for g, n in enumerate(pres.orders):
            tabs = [(a.out, b.out, True)]
            if not n:
                tabs.append((a.inn, b.inn, False))
            for ta, tb, fwd in tabs:
                u, v = ta[x].get(g), tb[y].get(g)
                if u is None or v is None:
                    continue
                if (u, v) not in ids:
                    ids[(u, v)] = len(order)
                    order.append((u, v))
                    out.append({})
                    q.append((u, v))
                j = ids[(u, v)]
                if fwd:
                    out[i][g] = j
                else:
                    out[j][g] = i
    return out, ids, order


def intersect(s1: SubgroupRep, s2: SubgroupRep):
    out, _, _ = _product(s1, s2)
    return SubgroupRep._from_graph(s1.pres, out, 0)


def conjugate(s: SubgroupRep, c):
    """c s c^-1"""
    if not c:
        return s
    p = s.pres
    return subgroup_automaton([p.conj(c, g) for g in s.gens], p)


def join(subs, p=None, extra=()):
    p = p or subs[0].pres
    gens = [g for s in subs for g in s.gens] + [w for w in extra if w]
    return subgroup_automaton(gens, p)


def conjugacy_key(s: SubgroupRep):
    pres = s.pres
    inn = s.inn
    alive, tout = _trim(pres, list(s.out), list(inn), None)
    if not alive:
        return ("trivial",)
    best = None
    for b in alive:
        _, key = _canon(pres, alive, tout, b)
        if best is None or key < best:
            best = key
    return best


def is_conjugate(s1, s2):
    return s1.pres == s2.pres and s1.conj_key == s2.conj_key


def coset_rep(s: SubgroupRep, g):
    """Canonical representative of the left coset g s: shortest, then shortlex least."""
    pres = s.pres
    x = pres.inv(g)
    node = 0
    rest = []
    syl = list(x)
    i = 0
    while i < len(syl):
        gg, e = syl[i]
        if pres.orders[gg]:
            y = s.step(node, (gg, e))
            if y is None:
                break
            node = y
            i += 1
            continue
        d = 1 if e > 0 else -1
        k = 0
        while k < abs(e):
            y = s.step(node, (gg, d))
            if y is None:
                break
            node = y
            k += 1
        if k < abs(e):
            syl[i] = (gg, d * (abs(e) - k))
            break
        i += 1
    rest = tuple(syl[i:])
    dist = _dist_cached(s)
    walk = []
    cur = node
    steps = pres.all_steps()
    while cur != 0:
        for st in steps:
            y = s.step(cur, st)
            if y is not None and dist[y] == dist[cur] - 1:
                walk.append(st)
                cur = y
                break
        else:  # pragma: no cover
            raise RuntimeError("core graph not connected")
    return pres.mul(pres.inv(rest), pres.normalize(walk))


def _dist_cached(s):
    d = s.__dict__.get("_dist")
    if d is None:
        d = s.dist()
        s.__dict__["_dist"] = d
    return d


def same_coset(s: SubgroupRep, g1, g2):
    """g1 s == g2 s"""
    return s.contains(s.pres.mul(s.pres.inv(g1), g2))


def find_in_coset(h: SubgroupRep, k: SubgroupRep, m):
    """Some element of h lying in the left coset m k, or None."""
    pres = h.pres
    f = _Folder(pres)
    f.load(k)
    base = 0
    end = f.path(base, pres.inv(m))
    f.complete()
    base, end = f.find(base), f.find(end)
    out, inn, ids = f.export(base)
    start = ids[end]
    # BFS over (h node, k node) from (0, start) to (0, 0)
    prev = {(0, start): None}
    q = deque([(0, start)])
    target = (0, 0)
    while q:
        cur = q.popleft()
        if cur == target:
            break
        x, y = cur
        for g, n in enumerate(pres.orders):
            moves = [((g, 1), h.out[x].get(g), out[y].get(g))]
            if not n:
                moves.append(((g, -1), h.inn[x].get(g), inn[y].get(g)))
            for st, u, v in moves:
                if u is None or v is None or (u, v) in prev:
                    continue
                prev[(u, v)] = (cur, st)
                q.append((u, v))
    if target not in prev:
        return None
    letters = []
    cur = target
    while prev[cur] is not None:
        cur, st = prev[cur]
        letters.append(st)
    letters.reverse()
    return pres.normalize(letters)


def double_cosets(h: SubgroupRep, k: SubgroupRep):
    """Representatives sigma of double cosets h sigma k with h ∩ sigma k sigma^-1 nontrivial.

    Read off the components of the product of the two core graphs.
    """
    pres = h.pres
    n1, n2 = h.size, k.size
    parent = list(range(n1 * n2))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    edges = []
    for x in range(n1):
        for y in range(n2):
            for g in h.out[x]:
                if g in k.out[y]:
                    a, b = x * n2 + y, h.out[x][g] * n2 + k.out[y][g]
                    edges.append((a, g, b))
                    ra, rb = find(a), find(b)
                    if ra != rb:
                        parent[ra] = rb
    comps = {}
    for i in range(n1 * n2):
        comps.setdefault(find(i), []).append(i)
    cout = {}
    for a, g, b in edges:
        cout.setdefault(a, {})[g] = b
    res = []
    for root, members in sorted(comps.items(), key=lambda kv: min(kv[1])):
        if len(members) == 1 and members[0] not in cout:
            continue
        loc = {m: i for i, m in enumerate(members)}
        out = [{} for _ in members]
        for m in members:
            for g, b in cout.get(m, {}).items():
                out[loc[m]][g] = loc[b]
        b1, fin = _star_betti(pres, out)
        if b1 <= 0 and not fin:
            continue
        m0 = members[0]
        x, y = divmod(m0, n2)
        sigma = pres.mul(h.path_to(x), pres.inv(k.path_to(y)))
        res.append(sigma)
    return res


def elements(s: SubgroupRep, max_len):
    """Elements of s of length <= max_len, enumerated along the core graph."""
    pres = s.pres
    res = set()
    stack = [(0, (), None, 0)]
    while stack:
        x, letters, last, ln = stack.pop()
        if x == 0:
            res.add(pres.normalize(letters))
        if ln == max_len:
            continue
        for st in pres.all_steps():
            g, d = st
            if last is not None and last[0] == g:
                if pres.orders[g] or (last[1] > 0) != (d > 0):
                    continue
            y = s.step(x, st)
            if y is None:
                continue
            stack.append((y, letters + (st,), st, ln + 1))
    return sorted(res, key=pres.shortlex_key)


# -- cyclic roots -----------------------------------------------------------

def cyclic_reduce(p: Presentation, w):
    """(c, u) with w = c u c^-1 and u cyclically reduced."""
    c = IDENTITY
    while len(w) >= 2 and w[0][0] == w[-1][0]:
        first = (w[0],)
        c = p.mul(c, first)
        w = p.mul(p.inv(first), w, first)
    return c, w


def root(p: Presentation, w):
    """(c, u, m) with w = c u^m c^-1, u not a proper power; u=() if w trivial.

    For torsion elements u is a generator syllable of finite order and m is
    the exponent in 1..n-1.
    """
    if not w:
        return IDENTITY, IDENTITY, 0
    c, u = cyclic_reduce(p, w)
    if len(u) == 1:
        g, e = u[0]
        if p.orders[g]:
            return c, ((g, 1),), e
        return c, ((g, 1 if e > 0 else -1),), abs(e)
    L = len(u)
    for d in range(1, L + 1):
        if L % d:
            continue
        v = u[:d]
        if p.power(v, L // d) == u:
            return c, v, L // d
    return c, u, 1  # pragma: no cover


def element_order(p: Presentation, w):
    """Order of w, 0 when infinite."""
    if not w:
        return 1
    c, u, m = root(p, w)
    g = u[0][0]
    if len(u) == 1 and p.orders[g]:
        from math import gcd
        n = p.orders[g]
        return n // gcd(n, m)
    return 0


# -- intrinsic coordinates on a subgroup -------------------------------------

class LocalCoordinates:
    """A free-product basis of a subgroup and rewriting into it.

    The subgroup is itself a free product of cyclic groups; ``pres`` presents
    it on the basis ``basis`` (words of the ambient group).  Working in these
    coordinates keeps graphs small when the basis words are long.
    """

    def __init__(self, s: SubgroupRep):
        self.sub = s
        P = s.pres
        pieces = _pieces(P, s.out)
        self.piece_of = {}
        for j, (g, cyc) in enumerate(pieces):
            for pos, x in enumerate(cyc):
                self.piece_of[(x, g)] = (j, pos)
        # spanning tree of nodes plus one hub per piece
        paths = {0: IDENTITY}
        hub_entry = {}          # piece -> (entry offset)
        spoke = {}              # (piece, node) -> local word (tuple of (letter, exp))
        free_letter = {}        # (x, g) -> local letter index for non-tree free edges
        tree_free = set()
        names, orders, basis = [], [], []

        def new_letter(word, order):
            names.append(f"x{len(names)}")
            orders.append(order)
            basis.append(word)
            return len(names) - 1

        hub_letter = {}
        q = deque([0])
        while q:
            x = q.popleft()
            for g, n in enumerate(P.orders):
                if n:
                    if (x, g) not in self.piece_of:
                        continue
                    j, pos = self.piece_of[(x, g)]
                    if j in hub_entry:
                        continue
                    cyc = pieces[j][1]
                    L = len(cyc)
                    hub_entry[j] = pos
                    if L < n:
                        hub_letter[j] = new_letter(P.conj(paths[x], ((g, L),)), n // L)
                    for off in range(L):
                        y = cyc[(pos + off) % L]
                        w = P.mul(paths[x], ((g, off),))
                        if y in paths:
                            if off:
                                spoke[(j, y)] = new_letter(P.mul(w, P.inv(paths[y])), 0)
                        else:
                            paths[y] = w
                            q.append(y)
                    continue
                for d, tab in ((1, s.out), (-1, s.inn)):
                    y = tab[x].get(g)
                    if y is not None and y not in paths:
                        paths[y] = P.mul(paths[x], ((g, d),))
                        tree_free.add((x, g) if d > 0 else (y, g))
                        q.append(y)
        for x, dct in enumerate(s.out):
            for g, y in dct.items():
                if P.orders[g] or (x, g) in tree_free:
                    continue
                free_letter[(x, g)] = new_letter(P.mul(paths[x], ((g, 1),), P.inv(paths[y])), 0)
        self.paths = paths
        self.pieces = pieces
        self.hub_entry = hub_entry
        self.hub_letter = hub_letter
        self.spoke = spoke
        self.free_letter = free_letter
        self.basis = tuple(basis)
        self.pres = Presentation(names, orders) if names else None
        self._cache = {}

    @property
    def rank(self):
        return len(self.basis)

    def _offset(self, j, x):
        L = len(self.pieces[j][1])
        return (self.piece_of[(x, self.pieces[j][0])][1] - self.hub_entry[j]) % L

    def rewrite(self, w):
        """Local word for an element w of the subgroup."""
        if not w:
            return IDENTITY
        s, P = self.sub, self.sub.pres
        raw = []
        x = 0
        for g, d in P.steps(w):
            n = P.orders[g]
            if n:
                j, _ = self.piece_of[(x, g)]
                L = len(self.pieces[j][1])
                y = x
                for _ in range(d):
                    y = s.out[y][g]
                o1, o2 = self._offset(j, x), self._offset(j, y)
                if (j, x) in self.spoke:
                    raw.append((self.spoke[(j, x)], -1))
                tot = o1 + d - o2
                if tot and j in self.hub_letter:
                    raw.append((self.hub_letter[j], tot // L))
                if (j, y) in self.spoke:
                    raw.append((self.spoke[(j, y)], 1))
                x = y
            else:
                if d > 0:
                    y = s.out[x].get(g)
                    if y is None:
                        raise WordError("element not in the subgroup")
                    if (x, g) in self.free_letter:
                        raw.append((self.free_letter[(x, g)], 1))
                else:
                    y = s.inn[x].get(g)
                    if y is None:
                        raise WordError("element not in the subgroup")
                    if (y, g) in self.free_letter:
                        raw.append((self.free_letter[(y, g)], -1))
                x = y
        if x != 0:
            raise WordError("element not in the subgroup")
        return self.pres.normalize(raw)

    def evaluate(self, lw):
        P = self.sub.pres
        return P.mul(IDENTITY, *[P.power(self.basis[i], e) for i, e in lw]) if lw else IDENTITY

    def local(self, K: SubgroupRep):
        """A subgroup of ``sub`` in local coordinates."""
        if self.pres is None:
            return None
        key = K.key
        if key not in self._cache:
            self._cache[key] = subgroup_automaton([self.rewrite(g) for g in K.gens], self.pres)
        return self._cache[key]

    def globalize(self, K: SubgroupRep):
        return subgroup_automaton([self.evaluate(g) for g in K.gens], self.sub.pres)
