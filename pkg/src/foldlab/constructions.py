"""Explicit examples built by subdivisions and folds from simple splittings."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil

from . import bass_serre as bs
from .folds import EquivariantMap, FoldError, FoldMove, LogStep, apply_fold, classify_fold, format_log, replay
from .splittings import (
    Edge,
    Splitting,
    canonical_form,
    check_reducedness,
    collapse_edge,
    make_splitting,
    subdivide,
    subdivide_with_record,
)
from .words import IDENTITY, Presentation, elements, subgroup_automaton


class Builder:
    """Applies log steps while transporting tracked elements between frames."""

    def __init__(self, s: Splitting):
        self.start = s
        self.s = s
        self.steps = []
        self.tracked = {}   # name -> (vertex, element fixing that vertex's lift)

    @property
    def p(self):
        return self.s.pres

    def _transport(self, rec):
        p = self.p
        for name, (v, h) in list(self.tracked.items()):
            nv, r = rec[v]
            self.tracked[name] = (nv, p.conj(p.inv(r), h))

    def track(self, name, v, h):
        self.tracked[name] = (v, h)

    def subdivide(self, eid, n):
        if n < 2:
            return [eid], []
        self.s, eids, vids, rec = subdivide_with_record(self.s, eid, n)
        self._transport(rec)
        self.steps.append(LogStep("subdivide", edge=eid, count=n))
        return eids, vids

    def collapse(self, eid):
        self.s, cr = collapse_edge(self.s, eid)
        self._transport(cr.vmap)
        self.steps.append(LogStep("collapse", edges=(eid,)))

    def fold(self, move):
        res = apply_fold(self.s, move)
        self.s = res.splitting
        self._transport(res.record)
        self.steps.append(LogStep("fold", move=res.move))
        return res

    def pull(self, name, ends):
        """Pull a tracked element across a sequence of edge ends."""
        p = self.p
        for end in ends:
            v, h = self.tracked[name]
            if self.s.vertex_at(end) != v:
                raise ValueError(f"{name} sits at {v}, not at the end {end}")
            t = self.s.shift(end)
            far = self.s.far(end)
            self.tracked[name] = (far, p.conj(p.inv(t), h))
            self.fold(FoldMove(v, end, end, h))

    def log(self):
        return format_log(self.p, self.steps)


@dataclass
class Example:
    family: str
    params: dict
    splitting: Splitting
    start: Splitting
    steps: list
    expected_edges: int
    expected_acyl: tuple      # (k, class descriptor)
    notes: dict = field(default_factory=dict)
    domain_steps: int = 0     # leading subdivisions that build the driver domain

    @property
    def log(self):
        return format_log(self.splitting.pres, self.steps)


def example_map(ex: Example):
    """Map from the subdivided start onto the example, given by its folds."""
    n = ex.domain_steps
    domain = replay(ex.start, ex.steps[:n])[0]
    final, _, rec = replay(domain, ex.steps[n:])
    return EquivariantMap(domain, final, dict(rec))


# ---------------------------------------------------------------------------
# the F2 family


def f2_start(order=0):
    p = Presentation(["a", "b"], [order, 0])
    return make_splitting(p, {"A": [p.gen("a")], "B": [p.gen("b")]}, {"e": ("A", "B", [], None, None)})


def _chain_schedule(N, order):
    if N < 1:
        raise ValueError("N must be positive")
    bld = Builder(f2_start(order))
    p = bld.p
    eids, _ = bld.subdivide("e", N)
    n_sub = len(bld.steps)
    a = p.gen("a")
    b = p.gen("b")
    for i in range(1, N + 1):
        bld.track("x", bld.s.edges[eids[i - 1]].tail, p.power(a, 2 ** i))
        bld.pull("x", [(eids[i - 1], "t")])
    # b_i = b_{i-1} a^(2^(N+1-i)) b_{i-1}^2, pulled back along the chain from B
    prev = b
    for i in range(1, N):
        bi = p.mul(prev, p.power(a, 2 ** (N + 1 - i)), prev, prev)
        eid = eids[N - i]
        v = bld.s.edges[eid].head
        bld.track("y", v, _in_frame(bld, v, bi))
        bld.pull("y", [(eid, "h")])
        prev = bi
    return bld, n_sub


def build_f2_example(N):
    """Splitting of F2 with N edge orbits, 1-acylindrical on non-cyclic subgroups."""
    bld, n_sub = _chain_schedule(N, 0)
    return Example("f2_chain", {"N": N}, bld.s, bld.start, bld.steps, N, (1, "non-cyclic"),
                   domain_steps=n_sub)


def build_generic_chain(N):
    """The same schedule over Z/2^(N+1) * Z, where the pulled powers of a form a finite dyadic chain.

    Edge groups are finite or contain b-words, and the splitting is
    1-acylindrical on infinite subgroups.
    """
    bld, n_sub = _chain_schedule(N, 2 ** (N + 1))
    return Example("generic_chain", {"N": N}, bld.s, bld.start, bld.steps, N, (1, "infinite"),
                   domain_steps=n_sub)


def _in_frame(bld, v, h):
    # the chain is a tree with trivial attachments throughout, so frames agree
    if not bld.s.vgroups[v].contains(h):
        raise ValueError("element does not fix the vertex")
    return h


# ---------------------------------------------------------------------------
# the sharp families


def _is_prime(n):
    return n >= 2 and all(n % d for d in range(2, int(n ** 0.5) + 1))


def _loop_images(P, Q, count):
    """Images of the loop elements in the abelianization Z/Q x Z/P of <b, c>."""
    out = []
    for i in range(count):
        x, y = divmod(i, P - 1)
        out.append(((x + 1) % Q, (y + 1) % P))
    return out


def _separated(P, Q, count):
    if count > (P - 1) * (Q - 1):
        return False
    seen = set()
    for u, v in _loop_images(P, Q, count):
        if (u, v) in seen:
            return False
        seen.update({(u, v), ((-u) % Q, (-v) % P)})
    return True


def choose_primes(r):
    """Distinct primes p < q of least sum, then least p, leaving room for the loop elements.

    The 2(r-2) loop elements must generate pairwise non-conjugate cyclic
    subgroups, so their abelianization images must differ even up to sign.
    """
    need = 2 * (r - 2)
    for total in range(5, 400):
        for p in range(2, total):
            q = total - p
            if p < q and _is_prime(p) and _is_prime(q) and _separated(p, q, need):
                return p, q
    raise ValueError("no prime pair found")  # pragma: no cover


def sharp_start(r, order):
    gens = ["a"] + [f"h{i}" for i in range(1, r)]
    p = Presentation(gens, [order] + [0] * (r - 1))
    vg = {"o": [], "va": [p.gen("a")]}
    edges = {"f1": ("o", "va", [], None, None), "f2": ("va", "o", [], None, p.gen("h1", -1))}
    for j in range(2, r):
        edges[f"l{j}"] = ("o", "o", [], p.gen(f"h{j}"), None)
    return make_splitting(p, vg, edges)


def _subdivide_loops(bld, k, r):
    return [bld.subdivide(f"l{j}", 2 * k)[0] for j in range(2, r)]


def _pull_loops(bld, k, loops, elems):
    for j, eids in enumerate(loops):
        g1, g2 = elems[2 * j], elems[2 * j + 1]
        o = bld.tracked["b"][0]
        bld.track("g1", o, _frame_word(bld, g1))
        bld.track("g2", o, _frame_word(bld, g2))
        bld.pull("g1", [(e, "t") for e in eids[:k]])
        bld.pull("g2", [(e, "h") for e in reversed(eids[k:])])


def _frame_word(bld, w):
    """Evaluate a word in the tracked letters b, c at the central vertex."""
    p = bld.p
    o, b = bld.tracked["b"]
    o2, c = bld.tracked["c"]
    assert o == o2
    out = IDENTITY
    for letter, e in w:
        out = p.mul(out, p.power(b if letter == "b" else c, e))
    return out


def _abstract_elements(k_count, pq):
    """Loop elements as words in the symbols b, c.

    Indices start at 0, so i = (P-1)x + y stays below (P-1)(Q-1) and b^(x+1)
    never wraps round to the identity.
    """
    out = []
    if pq is None:
        for i in range(1, k_count + 1):
            out.append((("b", i), ("c", 1)))
        return out
    P, Q = pq
    for i in range(k_count):
        x, y = divmod(i, P - 1)
        out.append((("b", x + 1), ("c", y + 1)))
    return out


def build_sharp_example(k, r):
    """k-acylindrical splitting of Z/pq * F_(r-1) with floor((2r - 5/2)k) edges."""
    if k < 1 or r < 2:
        raise ValueError("need k >= 1 and r >= 2")
    P, Q = choose_primes(r)
    bld = Builder(sharp_start(r, P * Q))
    p = bld.p
    a = p.gen("a")
    chain, _ = bld.subdivide("f1", ceil(k / 2) + 1)
    first, last = chain[0], "f2"
    half = k // 2
    if half:
        e1, _ = bld.subdivide(first, half)
        e2, _ = bld.subdivide(last, half)
    loops = _subdivide_loops(bld, k, r)
    n_sub = len(bld.steps)
    # pull a from va back along the chain, stopping short of the centre
    bld.track("a", "va", a)
    bld.track("a0", "va", a)
    bld.pull("a", [(e, "h") for e in reversed(chain[1:])])
    if half == 0:
        bld.collapse(first)
        bld.collapse(last)
        bld.track("b", bld.tracked["a"][0], p.power(bld.tracked["a"][1], P))
        bld.track("c", bld.tracked["a0"][0], p.power(bld.tracked["a0"][1], Q))
    else:
        bld.track("b", bld.tracked["a"][0], p.power(bld.tracked["a"][1], P))
        bld.pull("b", [(e, "h") for e in reversed(e1)])
        bld.track("c", bld.tracked["a0"][0], p.power(bld.tracked["a0"][1], Q))
        bld.pull("c", [(e, "t") for e in e2])
    words = _abstract_elements(2 * (r - 2), (P, Q))
    _pull_loops(bld, k, loops, words)
    return Example(
        "sharp_torsion", {"k": k, "r": r}, bld.s, bld.start, bld.steps,
        (4 * r - 5) * k // 2, (k, "all-nontrivial"),
        {"primes": (P, Q), "central": bld.tracked["b"][0],
         "b": bld.tracked["b"][1], "c": bld.tracked["c"][1], "loop_words": words},
        domain_steps=n_sub,
    )


def build_torsionfree_sharp(k, r):
    """k-acylindrical splitting of F_r with (2r - 3)k edges."""
    if k < 1 or r < 2:
        raise ValueError("need k >= 1 and r >= 2")
    bld = Builder(sharp_start(r, 0))
    p = bld.p
    a = p.gen("a")
    chain = ["f1"]
    if k >= 3:
        chain, _ = bld.subdivide("f1", k - 1)
    loops = _subdivide_loops(bld, k, r)
    n_sub = len(bld.steps)
    bld.track("b", "va", a)
    bld.track("c", "va", a)
    if k == 1:
        bld.collapse("f1")
    else:
        bld.pull("b", [(e, "h") for e in reversed(chain)])
    bld.pull("c", [("f2", "t")])
    words = _abstract_elements(2 * (r - 2), None)
    _pull_loops(bld, k, loops, words)
    return Example(
        "sharp_free", {"k": k, "r": r}, bld.s, bld.start, bld.steps,
        (2 * r - 3) * k, (k, "all-nontrivial"),
        {"central": bld.tracked["b"][0], "b": bld.tracked["b"][1], "c": bld.tracked["c"][1],
         "loop_words": words},
        domain_steps=n_sub,
    )


# ---------------------------------------------------------------------------
# verification


@dataclass
class VerificationReport:
    family: str
    params: dict
    checks: list          # (claim, passed, detail)

    @property
    def passed(self):
        return all(ok for _, ok, _ in self.checks)

    def format(self):
        lines = [f"family: {self.family}", "params: " + ", ".join(f"{k}={v}" for k, v in sorted(self.params.items()))]
        for claim, ok, detail in self.checks:
            lines.append(f"{'PASS' if ok else 'FAIL'} {claim}: {detail}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def a_power_diameters(ex: Example):
    """Diameter of the fixed subtree of every nontrivial power of a."""
    s = ex.splitting
    p = s.pres
    n = p.orders[0]
    out = {}
    for m in range(1, n):
        K = subgroup_automaton([p.power(p.gen("a"), m)], p)
        out[m] = bs.fixed_subtree_diameter(s, K)
    return out


def verify_example(ex: Example, built: Splitting | None = None, radius=None, word_bound=None):
    s = built if built is not None else ex.splitting
    checks = []
    n_edges = len(s.edges)
    checks.append(("edge count", n_edges == ex.expected_edges, f"{n_edges} (expected {ex.expected_edges})"))
    final, _, _ = replay(ex.start, ex.steps)
    same = canonical_form(final) == canonical_form(s)
    checks.append(("log replays to the splitting", same, "exact" if same else "differs"))
    k, Q = ex.expected_acyl
    if ex.family in ("f2_chain", "generic_chain"):
        rep = check_reducedness(s)
        checks.append(("reduced", rep.reduced, str(rep.offenders) if rep.offenders else "no offenders"))
    else:
        nontriv = all(not e.group.is_trivial() for e in s.edges.values())
        checks.append(("edge groups nontrivial", nontriv, "all" if nontriv else "some trivial"))
    v = bs.check_acylindricity(s, k, Q)
    checks.append((f"{k}-acylindrical on {Q}", v.passed, v.status))
    if ex.family.startswith("sharp"):
        w = bs.check_acylindricity(s, k - 1, Q) if k >= 1 else None
        ok = w is not None and w.status == "fail"
        detail = w.status
        if ok:
            diam = witness_diameter(s, w)
            ok = diam == k
            detail = f"fail at {k - 1}; witness fixed set diameter {diam}"
        checks.append((f"not {k - 1}-acylindrical", ok, detail))
        if ex.family == "sharp_torsion":
            diams = a_power_diameters(ex)
            worst = max(diams.values())
            checks.append(("fixed sets of powers of a", worst <= k, f"max diameter {worst}"))
    if radius is not None:
        b = bs.expand_ball(s, None, radius, word_bound=word_bound)
        vb = bs.check_acylindricity(b, k, Q, method="ball")
        checks.append((f"ball radius {radius} check", vb.status != "fail", vb.status))
    return VerificationReport(ex.family, ex.params, checks)


def witness_diameter(s, verdict):
    """Diameter of the fixed subtree of a root of the witness stabilizer's generator."""
    K = verdict.witness_stabilizer
    return bs.fixed_subtree_diameter(s, subgroup_automaton([K.gens[0]], s.pres))


def build(family, **params):
    if family in ("f2", "f2_chain"):
        return build_f2_example(params["N"])
    if family in ("chain", "generic_chain"):
        return build_generic_chain(params["N"])
    if family in ("sharp", "sharp_torsion"):
        return build_sharp_example(params["k"], params["r"])
    if family in ("sharp-free", "sharp_free", "torsionfree"):
        return build_torsionfree_sharp(params["k"], params["r"])
    raise ValueError(f"unknown family {family}")


def manifest():
    """(family, parameters, expected edge count) for the shipped example grid."""
    rows = []
    for N in range(1, 7):
        rows.append(("f2_chain", {"N": N}, N))
    for N in range(1, 7):
        rows.append(("generic_chain", {"N": N}, N))
    for k in range(1, 7):
        for r in (2, 3, 4):
            rows.append(("sharp_torsion", {"k": k, "r": r}, (4 * r - 5) * k // 2))
            rows.append(("sharp_free", {"k": k, "r": r}, (2 * r - 3) * k))
    return rows


def format_manifest(rows=None):
    rows = rows or manifest()
    out = ["# family params expected_edges"]
    for fam, params, n in rows:
        out.append(f"{fam} " + ",".join(f"{k}={v}" for k, v in sorted(params.items())) + f" {n}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# random small splittings for property suites


def small_starts():
    """A few one- and two-vertex splittings of small free products of cyclic groups."""
    out = []
    f2 = Presentation(["a", "b"], [0, 0])
    out.append(make_splitting(f2, {"v": []}, {"x": ("v", "v", [], f2.gen("a"), None),
                                              "y": ("v", "v", [], f2.gen("b"), None)}))
    out.append(f2_start())
    for orders in ([2, 3], [6, 4]):
        p = Presentation(["a", "b"], orders)
        out.append(make_splitting(p, {"A": [p.gen("a")], "B": [p.gen("b")]}, {"e": ("A", "B", [], None, None)}))
    p = Presentation(["a", "b", "c"], [2, 3, 0])
    out.append(make_splitting(p, {"A": [p.gen("a")], "B": [p.gen("b")]},
                              {"e": ("A", "B", [], None, None), "l": ("A", "A", [], p.gen("c"), None)}))
    return out


def fold_moves(s: Splitting, witness_bound=2):
    """Every valid fold move at every vertex with witnesses up to the word bound."""
    moves = []
    for x in s.vertices:
        ends = s.ends_at(x)
        wits = elements(s.vgroups[x], witness_bound)
        for i, e1 in enumerate(ends):
            for e2 in ends[i:]:
                for w in wits:
                    m = FoldMove(x, e1, e2, w)
                    try:
                        moves.append(m.with_type(classify_fold(s, m)))
                    except FoldError:
                        continue
    return moves


def random_fold(s: Splitting, rng, witness_bound=2):
    moves = fold_moves(s, witness_bound)
    return rng.choice(moves) if moves else None


def random_splitting(rng, max_vertices=5, folds=None):
    """Random subdivisions and folds applied to one of the small starts."""
    s = rng.choice(small_starts())
    for _ in range(rng.randint(0, 3)):
        room = max_vertices - len(s.vgroups)
        if room < 1 or not s.edges:
            break
        n = rng.randint(2, min(3, room + 1))
        s, _, _ = subdivide(s, rng.choice(s.edge_ids), n)
    for _ in range(rng.randint(0, 3) if folds is None else folds):
        m = random_fold(s, rng)
        if m is None:
            break
        s = apply_fold(s, m).splitting
    return s


def free_cover(s: Splitting):
    """The same graph of groups over the free group on the same letters.

    Words are read literally, so a generator of finite order becomes a free
    generator; the natural projection sends each letter to itself.
    """
    p = s.pres
    F = Presentation(p.gens, [0] * len(p.gens))
    vg = {v: list(G.gens) for v, G in s.vgroups.items()}
    edges = {eid: (e.tail, e.head, list(e.group.gens), e.wt, e.wh) for eid, e in s.edges.items()}
    return Splitting(F, {v: subgroup_automaton(g, F) for v, g in vg.items()},
                     {eid: Edge(t, h, subgroup_automaton(gs, F), wt, wh) for eid, (t, h, gs, wt, wh) in edges.items()},
                     s.tree)
