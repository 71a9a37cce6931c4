import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from foldlab.constructions import f2_start, random_splitting, sharp_start
from foldlab.influence import make_pclass
from foldlab.splittings import (
    SplittingError,
    adjacent_step,
    check_reducedness,
    collapse,
    collapse_edge,
    dumps,
    graph_invariants,
    isomorphic,
    loads,
    make_splitting,
    same_point,
    subdivide,
    subdivide_with_record,
    to_dot,
    validate,
)
from foldlab.words import IDENTITY, Presentation


def rose(n):
    p = Presentation([f"x{i}" for i in range(n)], [0] * n)
    return make_splitting(p, {"v": []}, {f"l{i}": ("v", "v", [], p.gen(f"x{i}"), None) for i in range(n)})


def test_rose_with_labelled_vertex_is_valid():
    s = sharp_start(3, 6)
    assert validate(s) == []
    p = Presentation(["a", "h1", "h2"], [6, 0, 0])
    r = make_splitting(p, {"v": [p.gen("a")]}, {"l1": ("v", "v", [], p.gen("h1"), None),
                                                "l2": ("v", "v", [], p.gen("h2"), None)})
    assert validate(r) == []


def test_missing_generator_is_reported():
    p = Presentation(["a", "b"], [0, 0])
    s = make_splitting(p, {"v": [p.gen("a")]}, {})
    assert "generate" in validate(s)[0]


def test_edge_group_outside_vertex_group_is_reported():
    p = Presentation(["a", "b"], [0, 0])
    s = make_splitting(p, {"A": [p.gen("a")], "B": [p.gen("b")]}, {"e": ("A", "B", [p.gen("a")], None, None)})
    assert any("not contained" in x for x in validate(s))


def test_invariants_of_loop_and_tree():
    s = rose(1)
    inv = graph_invariants(s)
    assert (inv.euler_characteristic, inv.betti_1) == (0, 1)
    p = Presentation(["a", "b", "c"], [2, 2, 2])
    t = make_splitting(p, {"m": [], "A": [p.gen("a")], "B": [p.gen("b")], "C": [p.gen("c")]},
                       {f"e{x}": ("m", x, [], None, None) for x in "ABC"})
    inv = graph_invariants(t)
    assert (inv.euler_characteristic, inv.betti_1) == (1, 0)
    assert inv.valence_histogram == {1: 3, 3: 1}


def test_subdivide_and_collapse_round_trip():
    s = f2_start()
    s2, eids, vids = subdivide(s, "e", 3)
    assert len(s2.edges) == 3 and len(vids) == 2
    assert validate(s2) == []
    s3, rec = collapse(s2, eids[1:])
    assert isomorphic(s3, s)
    with pytest.raises(SplittingError):
        subdivide(s, "e", 1)
    with pytest.raises(SplittingError):
        collapse(s, ["nope"])


def test_collapse_loop_adds_stable_letter():
    s = rose(2)
    s2, cr = collapse_edge(s, "l0")
    assert validate(s2) == []
    assert s2.vgroups["v"].contains(s.pres.gen("x0"))


def test_records_track_points():
    s = f2_start()
    s2, eids, vids, rec = subdivide_with_record(s, "e", 2)
    assert rec["A"][0] == "A" and rec["B"][0] == "B"
    m = vids[0]
    step = adjacent_step(s2, m, "A", IDENTITY)
    assert step is not None and s2.far(step[0]) == "A"
    assert adjacent_step(s2, "A", "B", IDENTITY) is None


def test_same_point_uses_cosets():
    s = f2_start()
    a = s.pres.gen("a")
    assert same_point(s, ("A", IDENTITY), ("A", a))
    assert not same_point(s, ("B", IDENTITY), ("B", a))


def test_reducedness():
    s = f2_start()
    assert check_reducedness(s).reduced
    s2, _, _ = subdivide(s, "e", 2)
    rep = check_reducedness(s2, make_pclass("trivial", s.pres))
    assert not rep.reduced and not rep.partially_reduced
    assert rep.minimal


@given(st.integers(0, 10_000))
def test_text_round_trip(seed):
    s = random_splitting(random.Random(seed))
    assert dumps(loads(dumps(s))) == dumps(s)
    assert validate(loads(dumps(s))) == []


def test_loads_rejects_garbage():
    with pytest.raises(SplittingError):
        loads("[presentation]\na:0\n[edge broken\n")


def test_dot_is_deterministic():
    s = f2_start()
    text = to_dot(s)
    assert text == to_dot(loads(dumps(s)))
    assert text.count("--") == 1 and text.count("[label=") == 3
