import pytest

from foldlab import bass_serre as bs
from foldlab.constructions import build_f2_example, build_sharp_example, build_torsionfree_sharp, f2_start
from foldlab.influence import make_pclass
from foldlab.words import IDENTITY, elements, subgroup_automaton


def reduced_paths(b, length):
    out = []
    for v0 in sorted(b.vertices, key=repr):
        stack = [(v0, [])]
        while stack:
            v, path = stack.pop()
            if len(path) == length:
                if repr(path[0]) <= repr(path[-1]):
                    out.append(path)
                continue
            for ec in b.incidence.get(v, []):
                if path and ec == path[-1]:
                    continue
                stack.append((b.other_end(ec, v), path + [ec]))
    return out


def test_ball_of_radius_zero():
    b = bs.expand_ball(f2_start(), None, 0)
    assert b.summary()["vertices"] == 1 and not b.edges
    assert bs.ball_to_dot(b).count("--") == 0


def test_ball_is_a_tree():
    b = bs.expand_ball(build_sharp_example(2, 3).splitting, None, 3, word_bound=4)
    g = b.graph()
    assert g.number_of_edges() == g.number_of_nodes() - 1


def test_ball_dot_is_deterministic():
    s = build_f2_example(2).splitting
    a = bs.ball_to_dot(bs.expand_ball(s, None, 2, word_bound=3))
    b = bs.ball_to_dot(bs.expand_ball(s, None, 2, word_bound=3))
    assert a == b


def test_f2_examples_are_one_acylindrical_on_non_cyclic():
    for N in (1, 2, 3):
        v = bs.check_acylindricity(build_f2_example(N).splitting, 1, "non-cyclic")
        assert v.passed, v.format()


def test_f2_example_is_not_acylindrical_on_all_nontrivial():
    # edge groups are infinite cyclic, so every path inside Fix(a^2) is long
    v = bs.check_acylindricity(build_f2_example(2).splitting, 1, "all-nontrivial")
    assert v.status == "fail"


@pytest.mark.parametrize("k,r", [(1, 2), (2, 3), (3, 3), (4, 2)])
def test_sharp_examples_are_sharp(k, r):
    s = build_sharp_example(k, r).splitting
    assert bs.check_acylindricity(s, k).passed
    v = bs.check_acylindricity(s, k - 1)
    assert v.status == "fail"
    assert len(v.witness) == k


def test_torsion_free_fixed_set_of_a():
    s = build_torsionfree_sharp(3, 3).splitting
    a = subgroup_automaton([s.pres.gen("a")], s.pres)
    assert bs.fixed_subtree_diameter(s, a) == 3


def test_sharp_four_three_fixed_sets():
    # [PAPER] every power of a fixes a region of diameter at most 4
    ex = build_sharp_example(4, 3)
    s = ex.splitting
    p = s.pres
    diams = [bs.fixed_subtree_diameter(s, subgroup_automaton([p.power(p.gen("a"), m)], p))
             for m in range(1, p.orders[0])]
    assert max(diams) == 4


def test_hyperbolic_element_fixes_nothing():
    s = f2_start()
    p = s.pres
    K = subgroup_automaton([p.mul(p.gen("a"), p.gen("b"))], p)
    assert bs.fixed_subtree(s, K) is None
    assert bs.fixed_subtree_diameter(s, K) == -1


def test_path_stabilizer_matches_enumeration():
    # [DERIVED] intersecting enumerated short stabilizer elements
    s = build_sharp_example(2, 3).splitting
    b = bs.expand_ball(s, None, 3, word_bound=3)
    cache = {}
    for path in reduced_paths(b, 2)[:300]:
        K = bs.path_stabilizer(b, path)
        assert set(elements(K, 4)) == bs.oracle_path_elements(b, path, 4, cache)


def test_non_reduced_path_rejected():
    b = bs.expand_ball(f2_start(), None, 2)
    ec = next(iter(b.edges))
    with pytest.raises(ValueError):
        bs.path_stabilizer(b, [ec, ec])


def test_ball_method_agrees_with_orbit_method():
    s = build_sharp_example(2, 2).splitting
    b = bs.expand_ball(s, None, 4, word_bound=4)
    for k in (1, 2):
        assert bs.check_acylindricity(b, k, method="ball").status == bs.check_acylindricity(s, k).status


def test_small_ball_is_inconclusive():
    s = build_sharp_example(3, 2).splitting
    b = bs.expand_ball(s, None, 2, word_bound=3)
    assert bs.check_acylindricity(b, 3, method="ball").status == "inconclusive"


def test_larger_than_class_descriptor():
    s = build_sharp_example(2, 2).splitting
    P = make_pclass("trivial", s.pres)
    assert bs.check_acylindricity(s, 2, P).passed
    assert bs.class_name(P) == "larger-than:trivial"


def test_fixed_set_in_ball():
    s = build_torsionfree_sharp(2, 2).splitting
    b = bs.expand_ball(s, None, 3, word_bound=3)
    fs = bs.fixed_set(b, s.pres.gen("a"))
    assert fs.diameter == 2
    assert bs.fixed_set(b, IDENTITY).vertices == set(b.vertices)
