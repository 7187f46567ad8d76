import filecmp
import os
from pathlib import Path

import pytest

from conftest import FIG1_CLAUSES
from satrtd.cli import main, read_config
from satrtd.cnf import Formula, save_dimacs
from satrtd.generators import pigeonhole, random_ksat


@pytest.fixture
def instances(tmp_path):
    fig1 = tmp_path / "fig1.cnf"
    save_dimacs(Formula(10, tuple(FIG1_CLAUSES)), fig1)
    php = tmp_path / "php54.cnf"
    save_dimacs(pigeonhole(5, 4), php)
    small = tmp_path / "small.cnf"
    save_dimacs(random_ksat(40, 170, 3, 2), small)
    return fig1, php, small


def test_solve_exit_codes(instances, tmp_path, capsys):
    fig1, php, _ = instances
    assert main(["solve", str(fig1)]) == 10
    out = capsys.readouterr().out
    assert "s SATISFIABLE" in out and "c stats conflicts=" in out and "propagations=" in out
    assert main(["solve", str(php)]) == 20
    assert "s UNSATISFIABLE" in capsys.readouterr().out
    assert main(["solve", str(tmp_path / "missing.cnf")]) == 1
    bad = tmp_path / "bad.cnf"
    bad.write_text("p cnf 1 1\n2 0\n")
    assert main(["solve", str(bad)]) == 1
    assert "line 2" in capsys.readouterr().err
    assert main(["solve", str(php), "--max-conflicts", "3"]) == 0


def test_missing_upstream_artifacts(instances, tmp_path, capsys):
    _, _, small = instances
    assert main(["sample", str(small), "--pool", str(tmp_path / "nope"), "-o", str(tmp_path)]) == 2
    assert "satrtd record" in capsys.readouterr().err
    assert main(["analyze", str(tmp_path / "nope.jsonl"), "-o", str(tmp_path / "a")]) == 2
    assert "satrtd run" in capsys.readouterr().err
    assert main(["report", str(tmp_path / "none"), "-o", str(tmp_path / "r")]) == 2


def run_pipeline(small, d: Path, extra=()):
    d.mkdir()
    pool = d / "pool.txt"
    assert main(["record", str(small), "-o", str(pool)]) == 0
    assert main(["sample", str(small), "--pool", str(pool), "--p", "0.1", "--count", "3",
                 "--materialize", "--seed", "4", "-o", str(d / "ext")]) == 0
    assert main(["run", str(small), "--pool", str(pool), "--p", "0.05", "--n", "40",
                 "--censor-offset", "5", "--censor-mean", "40", "-o", str(d / "run.jsonl"),
                 *extra]) == 0
    assert main(["analyze", str(d / "run.jsonl"), "-o", str(d / "an"), "--max-components", "2",
                 "--n-init", "2"]) == 0
    assert main(["report", str(d / "an"), "-o", str(d / "plots")]) == 0


def same_tree(a: Path, b: Path):
    for p in sorted(a.rglob("*")):
        if p.is_file() and p.suffix in (".csv", ".txt", ".json", ".svg", ".cnf"):
            assert (b / p.relative_to(a)).read_bytes() == p.read_bytes(), p


def test_pipeline_reproducible(instances, tmp_path):
    _, _, small = instances
    run_pipeline(small, tmp_path / "a", ["--seed", "3"])
    run_pipeline(small, tmp_path / "b", ["--seed", "3", "--workers", "2"])
    same_tree(tmp_path / "a", tmp_path / "b")
    an = tmp_path / "a" / "an"
    for name in ("effect.csv", "km.csv", "km_histogram.csv", "km_histogram_log.csv",
                 "records.csv", "summary.txt"):
        assert (an / name).exists(), name
    assert len(list((tmp_path / "a" / "plots").glob("*.svg"))) >= 5
    assert len(list((tmp_path / "a" / "ext").glob("ext_*.cnf"))) == 3
    summary = (an / "summary.txt").read_text()
    assert "dip = " in summary and "classification = " in summary
    # analyze is idempotent
    assert main(["analyze", str(tmp_path / "a" / "run.jsonl"), "-o", str(tmp_path / "again"),
                 "--max-components", "2", "--n-init", "2"]) == 0
    same_tree(an, tmp_path / "again")


def test_seed_env_fallback_and_config(instances, tmp_path, monkeypatch):
    _, _, small = instances
    pool = tmp_path / "pool.txt"
    assert main(["record", str(small), "-o", str(pool)]) == 0
    monkeypatch.setenv("TOOL_SEED", "11")
    assert main(["sample", str(small), "--pool", str(pool), "--p", "0.2", "-o",
                 str(tmp_path / "env")]) == 0
    monkeypatch.delenv("TOOL_SEED")
    assert main(["sample", str(small), "--pool", str(pool), "--p", "0.2", "--seed", "11", "-o",
                 str(tmp_path / "flag")]) == 0
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("# sampling\nseed = 11\np = 0.2\n")
    assert main(["sample", str(small), "--pool", str(pool), "--config", str(cfg), "-o",
                 str(tmp_path / "cfg")]) == 0
    assert filecmp.cmp(tmp_path / "env" / "ext_0000.txt", tmp_path / "flag" / "ext_0000.txt",
                       shallow=False)
    assert filecmp.cmp(tmp_path / "cfg" / "ext_0000.txt", tmp_path / "flag" / "ext_0000.txt",
                       shallow=False)
    assert main(["sample", str(small), "--pool", str(pool), "--seed", "12", "--p", "0.2",
                 "-o", str(tmp_path / "other")]) == 0
    assert (tmp_path / "other" / "ext_0000.txt").read_bytes() != \
        (tmp_path / "flag" / "ext_0000.txt").read_bytes()


def test_read_config(tmp_path):
    p = tmp_path / "c"
    p.write_text("budget-unit = conflicts  # unit\n\nn=5\n")
    assert read_config(p) == {"budget_unit": "conflicts", "n": "5"}
    p.write_text("oops\n")
    with pytest.raises(ValueError):
        read_config(p)
    p.write_text("nonsense = 1\n")
    with pytest.raises(SystemExit):
        main(["solve", "x.cnf", "--config", str(p)])
