import json

import pytest

from dyadic_gmm.cli import main


@pytest.fixture()
def network(tmp_path):
    edges = tmp_path / "g.txt"
    truths = tmp_path / "t.csv"
    assert main(["simulate", "--n", "30", "--eta-low", "0", "--eta-high", "1", "--seed", "4",
                 "--edges", str(edges), "--truths", str(truths)]) == 0
    return tmp_path, edges, truths


def test_simulate_estimate_compare(network, capsys):
    tmp, edges, truths = network
    assert edges.read_text().startswith("# n=30\n")
    out = tmp / "r.json"
    assert main(["estimate", str(edges), "--max-iters", "200", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["method"] == "semiparametric" and len(doc["coefficients"]) == 30
    lg = tmp / "l.json"
    assert main(["estimate", str(edges), "--method", "logit", "--out", str(lg)]) == 0
    assert json.loads(lg.read_text())["method"] == "logit"
    capsys.readouterr()
    assert main(["compare", str(truths), str(out), "--normalize", "dbmm", "--edges", str(edges)]) == 0
    cmp = json.loads(capsys.readouterr().out)
    assert set(cmp) == {"slope", "intercept", "rank_corr", "mse"}
    assert cmp["slope"] > 0


def test_estimate_std_transform(network):
    tmp, edges, _ = network
    out = tmp / "s.json"
    assert main(["estimate", str(edges), "--transform", "std", "--max-iters", "100", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["transform"]["mode"] == "std"


def test_hist(network, capsys):
    tmp, _, truths = network
    assert main(["hist", str(truths), "--width", "0.2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "left,right,count,height"
    assert sum(int(line.split(",")[2]) for line in lines[1:]) == 30


def test_mc_outputs_deterministic(tmp_path):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text("name = tiny\nn = 16\nB = 2\neta_low = 0\neta_high = 1\nphi = true\nmax_iters = 100\n"
                   "n_restarts = 0\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["mc", str(cfg), "--out-dir", str(a)]) == 0
    assert main(["mc", str(cfg), "--out-dir", str(b)]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert "tiny_records.csv" in names and "tiny_summary.json" in names
    assert "tiny_phi_hist_w0.1.csv" in names
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()


def test_errors_reported_cleanly(tmp_path, capsys):
    assert main(["estimate", str(tmp_path / "missing.txt")]) == 1
    full = tmp_path / "k.txt"
    full.write_text("# n=4\n0 1\n0 2\n0 3\n1 2\n1 3\n2 3\n")
    assert main(["estimate", str(full)]) == 2
    assert "degenerate_anchors" in capsys.readouterr().err
