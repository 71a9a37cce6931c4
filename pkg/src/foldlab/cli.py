"""Command line front end.

Sources are either a splitting file or a family name resolved with the
parameter flags: ``f2`` and ``chain`` (--n), ``sharp`` and ``sharp-free`` (--k, --r) and
``rose`` (--n petals).  Exit status is 0 on success, 1 when a check fails
and 2 on bad input.
"""
from __future__ import annotations

import random
import sys
from pathlib import Path

import click

from . import bass_serre as bs
from . import constructions as cons
from . import influence as inf
from .folds import EquivariantMap, parse_log, replay
from .splittings import SplittingError, dumps, loads, make_splitting, to_dot
from .words import Presentation, WordError

FAMILIES = ("f2", "chain", "sharp", "sharp-free")


class InputError(click.ClickException):
    exit_code = 2


def rose(n):
    names = [f"x{i}" for i in range(1, n + 1)]
    p = Presentation(names, [0] * n)
    return make_splitting(p, {"v": []}, {f"l{i}": ("v", "v", [], p.gen(g), None) for i, g in enumerate(names, 1)})


def _example(family, k, r, n):
    try:
        if family == "f2":
            return cons.build_f2_example(n or 1)
        if family == "chain":
            return cons.build_generic_chain(n or 1)
        if family == "sharp":
            return cons.build_sharp_example(k or 1, r or 2)
        if family == "sharp-free":
            return cons.build_torsionfree_sharp(k or 1, r or 2)
    except ValueError as exc:
        raise InputError(str(exc))
    raise InputError(f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}")


def _splitting(source, k, r, n):
    path = Path(source)
    if path.is_file():
        try:
            return loads(path.read_text())
        except (SplittingError, WordError, ValueError) as exc:
            raise InputError(f"{source}: {exc}")
    if source == "rose":
        if not n or n < 1:
            raise InputError("rose needs --n >= 1")
        return rose(n)
    return _example(source, k, r, n).splitting


def _emit(text, out, force):
    click.echo(text, nl=False)
    if out:
        _write(Path(out), text, force)


def _write(path, text, force):
    if path.exists() and not force:
        raise InputError(f"{path} exists; pass --force to overwrite")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc}")


def _seeds(s, text):
    if not text:
        return inf.natural_seeds(s)
    seeds = [v.strip() for v in text.split(",") if v.strip()]
    unknown = [v for v in seeds if v not in s.vgroups]
    if unknown:
        raise InputError(f"unknown seed vertices {unknown}")
    return frozenset(seeds)


def _pclass(text, s):
    try:
        return inf.make_pclass(text, s.pres)
    except ValueError as exc:
        raise InputError(str(exc))


def params(f):
    f = click.option("--k", type=click.IntRange(0), default=None, help="Acylindricity constant (and sharp family k).")(f)
    f = click.option("--r", type=click.IntRange(2), default=None, help="Rank parameter of the sharp families.")(f)
    f = click.option("--n", type=click.IntRange(1), default=None, help="Edge count of the f2 and chain families, petals of a rose.")(f)
    return f


def output(f):
    f = click.option("--out", type=click.Path(dir_okay=False), default=None, help="Also write the report here.")(f)
    f = click.option("--force", is_flag=True, help="Overwrite existing outputs.")(f)
    return f


@click.group()
def main():
    """Splittings, folds, acylindricity checks and edge-count certificates."""


@main.command()
@click.argument("family")
@params
@click.option("--out", "outdir", type=click.Path(file_okay=False), default=None, help="Directory for splitting, log and report.")
@click.option("--force", is_flag=True)
def build(family, k, r, n, outdir, force):
    """Build an example family and report its edge count."""
    ex = _example(family, k, r, n)
    s = ex.splitting
    report = (f"family: {ex.family}\n"
              + "".join(f"{a}: {b}\n" for a, b in sorted(ex.params.items()))
              + f"edges: {len(s.edges)}\nexpected edges: {ex.expected_edges}\n"
              + f"status: {'pass' if len(s.edges) == ex.expected_edges else 'fail'}\n")
    if outdir:
        stem = ex.family + "_" + "_".join(f"{a}{b}" for a, b in sorted(ex.params.items()))
        d = Path(outdir)
        _write(d / f"{stem}.splitting", dumps(s), force)
        _write(d / f"{stem}.start", dumps(ex.start), force)
        _write(d / f"{stem}.log", ex.log, force)
        _write(d / f"{stem}.report", report, force)
    click.echo(report, nl=False)
    sys.exit(0 if len(s.edges) == ex.expected_edges else 1)


@main.command("replay")
@click.argument("start")
@click.argument("log", type=click.Path(exists=True, dir_okay=False))
@params
@output
@click.option("--final", type=click.Path(dir_okay=False), default=None, help="Write the final splitting here.")
def replay_cmd(start, log, k, r, n, out, force, final):
    """Replay a fold log from a start splitting, reporting the Euler characteristic per step."""
    if Path(start).is_file() or start == "rose":
        s = _splitting(start, k, r, n)
    else:
        s = _example(start, k, r, n).start
    try:
        steps = parse_log(s.pres, Path(log).read_text())
        end, trace, _ = replay(s, steps)
    except Exception as exc:
        raise InputError(f"replay failed: {exc}")
    lines = []
    for i, st in enumerate(trace, 1):
        what = st.fold_type or st.step.kind
        lines.append(f"step {i}: {what} delta_chi={st.delta_chi}")
    lines.append(f"final vertices: {len(end.vgroups)}")
    lines.append(f"final edges: {len(end.edges)}")
    _emit("\n".join(lines) + "\n", out, force)
    if final:
        _write(Path(final), dumps(end), force)


@main.command()
@click.argument("source")
@params
@click.option("--radius", type=click.IntRange(0), default=1)
@click.option("--word-bound", type=click.IntRange(1), default=None)
@click.option("--base", default=None, help="Base vertex of the ball.")
@output
def ball(source, k, r, n, radius, word_bound, base, out, force):
    """Expand a ball of the Bass-Serre tree and summarise it."""
    s = _splitting(source, k, r, n)
    if base is not None and base not in s.vgroups:
        raise InputError(f"unknown vertex {base}")
    b = bs.expand_ball(s, base, radius, word_bound=word_bound)
    text = "".join(f"{a}: {v}\n" for a, v in b.summary().items()) + f"base: {b.base}\n"
    _emit(text, out, force)


@main.command("check-acyl")
@click.argument("source")
@params
@click.option("--class", "cls", default="all-nontrivial", show_default=True,
              help="all-nontrivial, non-cyclic, infinite or larger-than:<class>.")
@click.option("--radius", type=click.IntRange(0), default=None, help="Check a ball of this radius instead of the orbit search.")
@click.option("--word-bound", type=click.IntRange(1), default=None)
@output
def check_acyl(source, k, r, n, cls, radius, word_bound, out, force):
    """Check k-acylindricity on a class of subgroups."""
    s = _splitting(source, k, r, n)
    if k is None:
        raise InputError("--k is required")
    Q = cls
    if cls.startswith("larger-than:"):
        Q = _pclass(cls.split(":", 1)[1], s)
    elif cls not in ("all-nontrivial", "non-cyclic", "infinite"):
        raise InputError(f"unknown class {cls!r}")
    if radius is None:
        v = bs.check_acylindricity(s, k, Q)
    else:
        v = bs.check_acylindricity(bs.expand_ball(s, None, radius, word_bound=word_bound), k, Q, method="ball")
    _emit(v.format(s.pres), out, force)
    sys.exit(0 if v.status == "pass" else 1)


@main.command()
@click.argument("source")
@params
@click.option("--pclass", default="trivial", show_default=True)
@click.option("--seeds", default=None, help="Comma separated seed vertices (natural seeds by default).")
@click.option("--seed", type=int, default=None, help="Shuffle forest growth with this random seed.")
@output
def weight(source, k, r, n, pclass, seeds, seed, out, force):
    """Weight of a seed set."""
    s = _splitting(source, k, r, n)
    P = _pclass(pclass, s)
    S = _seeds(s, seeds) if seeds != "" else frozenset()
    try:
        F = inf.grow_forest(s, S, rng=random.Random(seed) if seed is not None else None) if S else None
        led = inf.seed_weight(s, S, P, F)
    except (inf.SeedError, inf.ForestError) as exc:
        raise InputError(str(exc))
    lines = [f"class: {P.name}", "seeds: " + ",".join(sorted(S))]
    for eid, key, w in led.connecting_groups:
        lines.append(f"connecting {eid}: {inf._fmt(w)}")
    lines.append(f"weight: {inf._fmt(led.current_weight)}")
    _emit("\n".join(lines) + "\n", out, force)


@main.command()
@click.argument("source")
@params
@click.option("--pclass", default="trivial", show_default=True)
@click.option("--seeds", default=None)
@output
def certify(source, k, r, n, pclass, seeds, out, force):
    """Certify the edge bound for a seed set."""
    s = _splitting(source, k, r, n)
    if k is None:
        raise InputError("--k is required")
    P = _pclass(pclass, s)
    try:
        cert = inf.certify_edge_bound(s, _seeds(s, seeds), P, k)
    except (inf.SeedError, inf.ForestError) as exc:
        raise InputError(str(exc))
    _emit(cert.format(), out, force)
    sys.exit(0 if cert.passed else 1)


DEFAULT_SEEDS = {"f2_chain": {"A", "B"}, "generic_chain": {"A", "B"}, "sharp_torsion": {"va"}, "sharp_free": {"va"}}


@main.command()
@click.argument("family")
@params
@click.option("--pclass", default="trivial", show_default=True)
@click.option("--mode", type=click.Choice(["simple", "dagger", "fg-quotient"]), default="simple", show_default=True)
@click.option("--budget", type=click.IntRange(1), default=None)
@click.option("--seeds", default=None)
@click.option("--constant", default=None, help="External edge constant, recorded in the trace.")
@output
def driver(family, k, r, n, pclass, mode, budget, seeds, constant, out, force):
    """Run the weight driver on the map from a family's subdivided start."""
    ex = _example(family, k, r, n)
    psi = cons.example_map(ex)
    kk = ex.expected_acyl[0] if k is None else k
    S = _seeds(psi.domain, seeds) if seeds else frozenset(DEFAULT_SEEDS[ex.family])
    phi = None
    if mode == "fg-quotient":
        p = psi.codomain.pres
        phi = {i: ((i, 1),) for i in range(len(p.gens))}
        psi = EquivariantMap(cons.free_cover(psi.domain), psi.codomain, psi.images)
    try:
        trace = inf.run_driver(psi, S, _pclass(pclass, ex.splitting), kk, mode, budget, phi=phi, constant=constant)
    except inf.DriverError as exc:
        raise InputError(str(exc))
    _emit(trace.format(), out, force)
    sys.exit(0 if trace.passed else 1)


@main.command("export-dot")
@click.argument("source")
@params
@click.option("--radius", type=click.IntRange(0), default=None, help="Export a ball instead of the quotient.")
@click.option("--word-bound", type=click.IntRange(1), default=None)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--force", is_flag=True)
def export_dot(source, k, r, n, radius, word_bound, out, force):
    """Write DOT for a quotient graph or a ball."""
    s = _splitting(source, k, r, n)
    if radius is None:
        text = to_dot(s)
    else:
        text = bs.ball_to_dot(bs.expand_ball(s, None, radius, word_bound=word_bound))
    _write(Path(out), text, force)
    click.echo(f"wrote {out}")


@main.command("verify-example")
@click.argument("family")
@params
@click.option("--radius", type=click.IntRange(0), default=None)
@click.option("--word-bound", type=click.IntRange(1), default=None)
@output
def verify_example(family, k, r, n, radius, word_bound, out, force):
    """Check an example's claimed edge count, reducedness and acylindricity."""
    ex = _example(family, k, r, n)
    rep = cons.verify_example(ex, radius=radius, word_bound=word_bound)
    _emit(rep.format(), out, force)
    sys.exit(0 if rep.passed else 1)


if __name__ == "__main__":  # pragma: no cover
    main()
