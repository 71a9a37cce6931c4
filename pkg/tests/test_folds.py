import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from foldlab.constructions import build_f2_example, example_map, f2_start, fold_moves, random_splitting
from foldlab.folds import (
    EquivariantMap,
    FoldError,
    FoldMove,
    apply_fold,
    classify_fold,
    decompose_map,
    format_log,
    identity_map,
    local_fold,
    parse_log,
    parse_move,
    format_move,
    replay,
)
from foldlab.splittings import make_splitting, subdivide, validate
from foldlab.words import IDENTITY, Presentation


def two_loops():
    p = Presentation(["a", "b"], [0, 0])
    return make_splitting(p, {"v": []}, {"x": ("v", "v", [], p.gen("a"), None),
                                         "y": ("v", "v", [], p.gen("b"), None)})


def test_type_three_on_a_loop_pair_drops_betti():
    s = two_loops()
    m = FoldMove("v", ("x", "t"), ("y", "t"))
    assert classify_fold(s, m) == "IIIB"
    res = apply_fold(s, m)
    assert res.splitting.betti() == s.betti() - 1
    assert validate(res.splitting) == []
    assert not res.splitting.vgroups["v"].is_trivial()


def test_type_two_pull():
    s = f2_start()
    a = s.pres.gen("a")
    res = apply_fold(s, FoldMove("A", ("e", "t"), ("e", "t"), a))
    assert res.move.fold_type == "IIA"
    assert res.splitting.edges["e"].group.contains(a)
    assert res.splitting.vgroups["B"].contains(a)


def test_type_one_merges_vertices():
    s, eids, vids = subdivide(f2_start(), "e", 3)
    mid = vids[0]
    ends = s.ends_at(mid)
    res = apply_fold(s, FoldMove(mid, ends[0], ends[1]))
    assert res.move.fold_type in ("IA", "IB")
    assert len(res.splitting.vgroups) == len(s.vgroups) - 1
    assert res.splitting.euler() == s.euler()


def test_invalid_moves_are_rejected():
    s = f2_start()
    with pytest.raises(FoldError):
        classify_fold(s, FoldMove("A", ("e", "t"), ("e", "t"), IDENTITY))
    with pytest.raises(FoldError):
        classify_fold(s, FoldMove("A", ("e", "h"), ("e", "h")))
    with pytest.raises(FoldError):
        classify_fold(s, FoldMove("A", ("e", "t"), ("e", "t"), s.pres.gen("b")))


@given(st.integers(0, 100_000))
def test_random_folds_keep_valid_splittings(seed):
    rng = random.Random(seed)
    s = random_splitting(rng, folds=0)
    moves = fold_moves(s)
    if not moves:
        return
    m = rng.choice(moves)
    res = apply_fold(s, m)
    assert validate(res.splitting) == []
    expected = 1 if m.fold_type.startswith("III") else 0
    assert res.splitting.euler() - s.euler() == expected
    # the record sends adjacent points to adjacent or equal points
    assert set(res.record) == set(s.vgroups)


def test_move_text_round_trip():
    s = f2_start()
    p = s.pres
    m = FoldMove("A", ("e", "t"), ("e", "t"), p.gen("a"), "IIA")
    assert parse_move(p, format_move(p, m)) == m


def test_log_round_trip_and_replay():
    ex = build_f2_example(3)
    p = ex.start.pres
    steps = parse_log(p, format_log(p, ex.steps))
    final, trace, rec = replay(ex.start, steps)
    assert len(final.edges) == 3
    folds = [t for t in trace if t.fold_type]
    assert folds and all(t.delta_chi == (1 if t.fold_type.startswith("III") else 0) for t in folds)


def test_identity_map_is_locally_injective():
    s = build_f2_example(2).splitting
    assert identity_map(s).check() == []
    assert local_fold(identity_map(s)) is None


def test_decompose_example_map():
    ex = build_f2_example(3)
    psi = example_map(ex)
    assert psi.check() == []
    dec = decompose_map(psi)
    assert dec.injective and not dec.exhausted
    assert len(dec.final.domain.edges) == len(dec.final.codomain.edges)
    assert all(m.fold_type == "IIA" for m in dec.moves)


def test_budget_exhaustion_is_flagged():
    psi = example_map(build_f2_example(3))
    dec = decompose_map(psi, budget=1)
    assert dec.exhausted and dec.residual().startswith("budget")


def test_bad_map_rejected():
    s = f2_start()
    bad = EquivariantMap(s, s, {"A": ("B", IDENTITY), "B": ("B", IDENTITY)})
    assert bad.check()
    with pytest.raises(FoldError):
        decompose_map(bad)
