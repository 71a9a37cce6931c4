import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from foldlab.words import (
    IDENTITY,
    Presentation,
    WordError,
    conjugate,
    coset_rep,
    double_cosets,
    element_order,
    elements,
    enumerate_words,
    find_in_coset,
    intersect,
    is_conjugate,
    join,
    root,
    same_coset,
    subgroup_automaton,
    trivial_subgroup,
    whole_group,
)

F2 = Presentation(["a", "b"], [0, 0])
MIX = Presentation(["a", "b", "c"], [2, 3, 0])
Z8 = Presentation(["a"], [8])


def words(p, max_syl=6):
    syl = st.tuples(st.integers(0, p.rank - 1), st.integers(-4, 4))
    return st.lists(syl, max_size=max_syl).map(p.normalize)


def test_normal_form_reduces_finite_exponents():
    a = MIX.gen("a")
    assert MIX.mul(a, a) == IDENTITY
    assert MIX.power(MIX.gen("b"), 4) == MIX.gen("b")
    assert MIX.normalize([(2, 2), (2, -2)]) == IDENTITY


def test_parse_and_fmt():
    w = MIX.parse("a b^2 c^-3")
    assert MIX.fmt(w) == "a b^2 c^-3"
    assert MIX.parse("1") == IDENTITY
    with pytest.raises(WordError):
        MIX.parse("z")


def test_bad_presentation_rejected():
    with pytest.raises(WordError):
        Presentation(["a", "a"], [0, 0])
    with pytest.raises(WordError):
        Presentation(["a"], [1])


@given(words(MIX), words(MIX))
def test_group_axioms(u, v):
    p = MIX
    assert p.mul(u, p.inv(u)) == IDENTITY
    assert p.inv(p.mul(u, v)) == p.mul(p.inv(v), p.inv(u))
    assert p.parse(p.fmt(u)) == u


@given(words(F2, 4), words(F2, 4))
def test_membership_matches_generators(u, v):
    H = subgroup_automaton([u, v], F2)
    assert H.contains(u) and H.contains(v)
    assert H.contains(F2.mul(u, v, F2.inv(u)))


def test_membership_by_enumeration():
    # [DERIVED] every short word of <a^2, b a b^-1> by brute force products
    a, b = F2.gen("a"), F2.gen("b")
    gens = [F2.power(a, 2), F2.conj(b, a)]
    H = subgroup_automaton(gens, F2)
    brute = {IDENTITY}
    frontier = {IDENTITY}
    letters = gens + [F2.inv(g) for g in gens]
    for _ in range(3):
        frontier = {F2.mul(w, g) for w in frontier for g in letters}
        brute |= frontier
    for w in enumerate_words(F2, 4):
        if w in brute:
            assert H.contains(w)
    assert not H.contains(a)
    assert not H.contains(b)


def test_kurosh_profiles():
    a, b, c = MIX.gen("a"), MIX.gen("b"), MIX.gen("c")
    assert whole_group(MIX).profile().free_rank == 1
    assert whole_group(MIX).profile().finite_factors == (2, 3)
    assert subgroup_automaton([c], MIX).is_cyclic()
    assert subgroup_automaton([b], MIX).order() == 3
    assert subgroup_automaton([MIX.mul(a, b)], MIX).order() is None
    assert trivial_subgroup(MIX).is_trivial()
    K = subgroup_automaton([a, MIX.conj(c, a)], MIX)
    assert K.profile().finite_factors == (2, 2)


def test_intersection_of_cyclic_subgroups():
    a = F2.gen("a")
    H = subgroup_automaton([F2.power(a, 4)], F2)
    K = subgroup_automaton([F2.power(a, 6)], F2)
    assert intersect(H, K) == subgroup_automaton([F2.power(a, 12)], F2)


@given(words(F2, 3), words(F2, 3), words(F2, 3))
def test_intersection_is_contained(u, v, w):
    H = subgroup_automaton([u, v], F2)
    K = subgroup_automaton([v, w], F2)
    I = intersect(H, K)
    assert I.le(H) and I.le(K)
    assert I.contains(v)


@given(words(MIX, 4), words(MIX, 3))
def test_conjugacy_key_is_conjugation_invariant(u, c):
    H = subgroup_automaton([u], MIX)
    assert is_conjugate(H, conjugate(H, c))


def test_non_conjugate_subgroups_have_distinct_keys():
    a, b = F2.gen("a"), F2.gen("b")
    assert not is_conjugate(subgroup_automaton([a], F2), subgroup_automaton([b], F2))
    assert not is_conjugate(subgroup_automaton([a], F2), subgroup_automaton([F2.power(a, 2)], F2))


@given(words(MIX, 4), words(MIX, 3))
def test_coset_reps_are_canonical(g, h):
    K = subgroup_automaton([MIX.gen("b"), MIX.conj(MIX.gen("c"), MIX.gen("a"))], MIX)
    hk = K.gens[0]
    assert coset_rep(K, g) == coset_rep(K, MIX.mul(g, hk))
    assert same_coset(K, g, coset_rep(K, g))


def test_find_in_coset():
    a, b = F2.gen("a"), F2.gen("b")
    H = subgroup_automaton([a], F2)
    K = subgroup_automaton([b], F2)
    # a^3 lies in a^3 b^2 <b>
    m = F2.mul(F2.power(a, 3), F2.power(b, 2))
    u = find_in_coset(H, K, m)
    assert u is not None and H.contains(u) and same_coset(K, u, m)
    assert find_in_coset(H, K, b) is None or H.contains(find_in_coset(H, K, b))


def test_double_cosets_of_finite_factor():
    a = MIX.gen("a")
    A = subgroup_automaton([a], MIX)
    reps = double_cosets(A, A)
    assert reps
    for s in reps:
        assert not intersect(A, conjugate(A, s)).is_trivial()


def test_roots_and_orders():
    a, c = MIX.gen("a"), MIX.gen("c")
    w = MIX.power(MIX.mul(a, c), 3)
    _, u, m = root(MIX, w)
    assert (u, m) == (MIX.mul(a, c), 3)
    assert element_order(Z8, Z8.power(Z8.gen("a"), 2)) == 4
    assert element_order(MIX, MIX.mul(a, c)) == 0
    assert element_order(MIX, IDENTITY) == 1


def test_elements_enumeration_matches_filter():
    # [DERIVED] membership filter over all words of length <= 4
    H = subgroup_automaton([F2.power(F2.gen("a"), 2), F2.gen("b")], F2)
    fast = set(elements(H, 4))
    slow = {w for w in enumerate_words(F2, 4) if H.contains(w)}
    assert fast == slow


def test_join_and_order_in_finite_group():
    a = Z8.gen("a")
    assert join([subgroup_automaton([Z8.power(a, 4)], Z8)], Z8, extra=[Z8.power(a, 2)]).order() == 4
    assert [subgroup_automaton([Z8.power(a, e)], Z8).order() for e in (1, 2, 4)] == [8, 4, 2]


def test_enumerated_subgroups_of_z8():
    a = Z8.gen("a")
    subs = {subgroup_automaton([Z8.power(a, e)], Z8) for e in range(8)}
    assert len(subs) == 4
    for H, K in itertools.product(subs, repeat=2):
        assert H.le(K) == (K.order() % H.order() == 0)
