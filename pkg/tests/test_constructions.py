import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from foldlab import bass_serre as bs
from foldlab import constructions as cons
from foldlab.splittings import canonical_form, dumps, loads, validate
from foldlab.words import element_order, is_conjugate, subgroup_automaton


@pytest.mark.parametrize("N", range(1, 7))
def test_f2_edge_counts(N):
    ex = cons.build_f2_example(N)
    assert len(ex.splitting.edges) == N
    assert ex.splitting.vertices[:2] == ["A", "B"]


@pytest.mark.parametrize("k", range(1, 7))
@pytest.mark.parametrize("r", [2, 3, 4])
def test_sharp_edge_counts(k, r):
    # [PAPER] floor((2r - 5/2)k) with torsion and (2r - 3)k without
    assert len(cons.build_sharp_example(k, r).splitting.edges) == int((2 * r - 2.5) * k)
    assert len(cons.build_torsionfree_sharp(k, r).splitting.edges) == (2 * r - 3) * k


def test_bad_parameters():
    for bad in ((0, 3), (2, 1)):
        with pytest.raises(ValueError):
            cons.build_sharp_example(*bad)
        with pytest.raises(ValueError):
            cons.build_torsionfree_sharp(*bad)
    with pytest.raises(ValueError):
        cons.build_f2_example(0)


def test_prime_choice():
    # [DERIVED] least (p+q, p) whose loop elements have distinct images up to sign
    assert cons.choose_primes(2) == (2, 3)
    assert cons.choose_primes(3) == (2, 5)
    assert cons.choose_primes(4) == (3, 5)
    for r in range(2, 12):
        P, Q = cons.choose_primes(r)
        assert P < Q and (P - 1) * (Q - 1) >= 2 * (r - 2)


def test_sign_collision_rules_out_the_smallest_pair():
    # in Z/3 * Z/2, b^2 c is conjugate to (b c)^-1
    assert cons._loop_images(2, 3, 2) == [(1, 1), (2, 1)]
    assert not cons._separated(2, 3, 2)


@pytest.mark.parametrize("build,k,r", [
    (cons.build_f2_example, 4, None),
    (cons.build_sharp_example, 3, 3),
    (cons.build_sharp_example, 4, 4),
    (cons.build_torsionfree_sharp, 3, 4),
])
def test_log_replays_and_maps(build, k, r):
    ex = build(k) if r is None else build(k, r)
    final, _, _ = cons.replay(ex.start, ex.steps)
    assert canonical_form(final) == canonical_form(ex.splitting)
    assert cons.example_map(ex).check() == []


def test_loop_elements_pairwise_non_conjugate():
    ex = cons.build_sharp_example(3, 4)
    s = ex.splitting
    p = s.pres
    elems = [cons._frame_word(_Frame(ex), w) for w in ex.notes["loop_words"]]
    assert len(elems) == 4
    cyc = [subgroup_automaton([g], p) for g in elems]
    for i, K in enumerate(cyc):
        for H in cyc[i + 1:]:
            assert not is_conjugate(K, H)


class _Frame:
    def __init__(self, ex):
        self.p = ex.splitting.pres
        self.tracked = {"b": (ex.notes["central"], ex.notes["b"]), "c": (ex.notes["central"], ex.notes["c"])}


@pytest.mark.parametrize("k,r", [(2, 3), (3, 3), (4, 4)])
def test_central_vertex_group(k, r):
    ex = cons.build_sharp_example(k, r)
    s = ex.splitting
    p = s.pres
    G = s.vgroups[ex.notes["central"]]
    b, c = ex.notes["b"], ex.notes["c"]
    P, Q = ex.notes["primes"]
    assert G.contains(b) and G.contains(c)
    assert element_order(p, b) == Q and element_order(p, c) == P
    # the free product Z/Q * Z/P sits inside, so <b, c> is not cyclic
    assert not subgroup_automaton([b, c], p).is_cyclic()


def test_powers_of_a_have_small_fixed_sets():
    ex = cons.build_sharp_example(3, 3)
    diams = cons.a_power_diameters(ex)
    assert max(diams.values()) == 3


def test_verify_examples():
    for ex in (cons.build_f2_example(3), cons.build_sharp_example(2, 3), cons.build_torsionfree_sharp(3, 3)):
        rep = cons.verify_example(ex)
        assert rep.passed, rep.format()


def test_verify_flags_a_wrong_splitting():
    ex = cons.build_sharp_example(2, 3)
    other = cons.build_sharp_example(3, 3).splitting
    rep = cons.verify_example(ex, built=other)
    assert not rep.passed
    assert "FAIL edge count" in rep.format()


def test_manifest_matches_builders():
    rows = cons.manifest()
    assert len(rows) == 6 + 6 + 36
    for fam, params, n in rows:
        if params.get("k", 1) <= 3 and params.get("N", 1) <= 5:
            assert len(cons.build(fam, **params).splitting.edges) == n
    text = cons.format_manifest()
    assert text.splitlines()[1] == "f2_chain N=1 1"


def test_free_cover_keeps_the_graph():
    s = cons.build_sharp_example(2, 3).splitting
    f = cons.free_cover(s)
    assert all(o == 0 for o in f.pres.orders)
    assert set(f.edges) == set(s.edges) and set(f.vgroups) == set(s.vgroups)
    validate(f)


def test_example_round_trip_through_text():
    s = cons.build_sharp_example(2, 3).splitting
    assert canonical_form(loads(dumps(s))) == canonical_form(s)


@given(st.integers(0, 100_000))
def test_random_splittings_are_valid(seed):
    s = cons.random_splitting(random.Random(seed))
    validate(s)
    assert len(s.vgroups) <= 5 + 1
    assert bs.check_acylindricity(s, 0, "all-nontrivial").status in ("pass", "fail")


@pytest.mark.parametrize("N", [1, 2, 3])
def test_generic_chain(N):
    ex = cons.build_generic_chain(N)
    s = ex.splitting
    assert tuple(s.pres.orders) == (2 ** (N + 1), 0)
    rep = cons.verify_example(ex)
    assert rep.passed, rep.format()
    # infinite edge groups appear once b-words have been pulled
    assert bs.check_acylindricity(s, 0, "infinite").status == ("pass" if N == 1 else "fail")
