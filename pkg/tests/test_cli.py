from click.testing import CliRunner

from foldlab.cli import main


def run(*args):
    return CliRunner().invoke(main, list(args))


def test_build_reports_edges():
    res = run("build", "sharp", "--k", "4", "--r", "3")
    assert res.exit_code == 0
    assert "edges: 14" in res.output and "status: pass" in res.output


def test_unknown_family_is_bad_input():
    res = run("build", "nope")
    assert res.exit_code == 2 and "unknown family" in res.output


def test_build_files_then_verify(tmp_path):
    res = run("build", "f2", "--n", "3", "--out", str(tmp_path))
    assert res.exit_code == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["f2_chain_N3.log", "f2_chain_N3.report", "f2_chain_N3.splitting", "f2_chain_N3.start"]
    start = tmp_path / "f2_chain_N3.start"
    final = tmp_path / "final.splitting"
    res = run("replay", str(start), str(tmp_path / "f2_chain_N3.log"), "--final", str(final))
    assert res.exit_code == 0 and "final edges: 3" in res.output
    assert final.read_text() == (tmp_path / "f2_chain_N3.splitting").read_text()
    res = run("check-acyl", str(final), "--k", "1", "--class", "non-cyclic")
    assert res.exit_code == 0 and "status: pass" in res.output
    assert run("verify-example", "f2", "--n", "3").exit_code == 0


def test_refuses_to_overwrite(tmp_path):
    out = tmp_path / "w.txt"
    assert run("weight", "rose", "--n", "2", "--out", str(out)).exit_code == 0
    res = run("weight", "rose", "--n", "2", "--out", str(out))
    assert res.exit_code == 2 and "--force" in res.output
    assert run("weight", "rose", "--n", "2", "--out", str(out), "--force").exit_code == 0


def test_weight_of_rose():
    assert "weight: 6" in run("weight", "rose", "--n", "3").output
    assert "weight: 4" in run("weight", "rose", "--n", "3", "--seeds", "").output
    res = run("weight", "rose", "--n", "3", "--seeds", "zz")
    assert res.exit_code == 2


def test_acylindricity_failure_exits_one(tmp_path):
    assert run("build", "sharp", "--k", "3", "--r", "3", "--out", str(tmp_path)).exit_code == 0
    res = run("check-acyl", str(tmp_path / "sharp_torsion_k3_r3.splitting"), "--k", "2")
    assert res.exit_code == 1 and "status: fail" in res.output
    assert run("check-acyl", "sharp", "--r", "3").exit_code == 2


def test_certify_and_driver():
    res = run("certify", "sharp", "--k", "3", "--r", "3")
    assert res.exit_code == 0 and "status: pass" in res.output
    res = run("driver", "sharp", "--k", "3", "--r", "3")
    assert res.exit_code == 0
    res = run("driver", "sharp", "--k", "3", "--r", "3", "--budget", "1")
    assert res.exit_code == 1
    res = run("driver", "f2", "--n", "2", "--pclass", "cyclic", "--mode", "dagger")
    assert res.exit_code == 2


def test_dot_export_is_deterministic(tmp_path):
    a, b = tmp_path / "a.dot", tmp_path / "b.dot"
    assert run("export-dot", "sharp", "--k", "2", "--r", "3", "--out", str(a)).exit_code == 0
    assert run("export-dot", "sharp", "--k", "2", "--r", "3", "--out", str(b)).exit_code == 0
    assert a.read_text() == b.read_text()
    assert a.read_text().lstrip().startswith(("graph", "digraph"))
    c = tmp_path / "ball.dot"
    assert run("export-dot", "f2", "--n", "2", "--radius", "2", "--out", str(c)).exit_code == 0
    assert "->" in c.read_text() or "--" in c.read_text()


def test_bad_splitting_file(tmp_path):
    bad = tmp_path / "bad.splitting"
    bad.write_text("not a splitting\n")
    res = run("ball", str(bad))
    assert res.exit_code == 2


def test_ball_summary():
    res = run("ball", "f2", "--n", "1", "--radius", "2", "--word-bound", "2")
    assert res.exit_code == 0 and "base:" in res.output


def test_chain_family_and_infinite_class():
    assert run("build", "chain", "--n", "2").exit_code == 0
    res = run("check-acyl", "chain", "--n", "2", "--k", "1", "--class", "infinite")
    assert res.exit_code == 0 and "status: pass" in res.output
    assert run("check-acyl", "chain", "--n", "2", "--k", "1", "--class", "odd").exit_code == 2
