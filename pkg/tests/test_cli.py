import json
import subprocess
import sys

import pytest

from statewalk.cli import main
from statewalk.explorer import ExplorationLog
from statewalk.graphio import load_graph, loads
from statewalk.metrics import read_csv


def run(*argv):
    return main(list(argv))


@pytest.fixture(scope="module")
def shop_graph(tmp_path_factory):
    d = tmp_path_factory.mktemp("shop")
    out = d / "graph.json"
    assert main(["explore", "--target", "sim:ecommerce", "--seed", "7", "--out", str(out)]) == 0
    base = d / "base.json"
    assert main(["crawl-baseline", "--target", "sim:ecommerce", "--out", str(base)]) == 0
    return out, base


def test_no_command_is_usage_error(capsys):
    with pytest.raises(SystemExit) as ei:
        run()
    assert ei.value.code == 2


@pytest.mark.parametrize("argv", [["explode"], ["explore", "--bogus"], ["explore", "--max-retries", "many"],
                                  ["metrics"], ["export", "--graph", "g.json", "--format", "png"]])
def test_usage_errors_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as ei:
        run(*argv)
    assert ei.value.code == 2
    assert "usage:" in capsys.readouterr().err


def test_web_target_needs_webdriver_url(capsys, tmp_path):
    assert run("explore", "--target", "web:http://localhost:1/", "--out", str(tmp_path / "g.json")) == 2
    assert "--webdriver-url" in capsys.readouterr().err


def test_bad_target_scheme(capsys, tmp_path):
    assert run("explore", "--target", "ftp:x", "--out", str(tmp_path / "g.json")) == 2


def test_missing_target(capsys, tmp_path):
    assert run("explore", "--out", str(tmp_path / "g.json")) == 2


def test_missing_graph_file_exits_1(capsys, tmp_path):
    assert run("metrics", "--graph", str(tmp_path / "nope.json")) == 1
    assert "nope.json" in capsys.readouterr().err


def test_malformed_graph_exits_1(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{\n  \"nodes\": [\n")
    assert run("metrics", "--graph", str(p)) == 1
    assert "line" in capsys.readouterr().err


def test_bad_spec_exits_1(capsys, tmp_path):
    p = tmp_path / "bad.simapp"
    p.write_text("name: x\nstates: {}\n")
    assert run("explore", "--target", f"sim:{p}", "--out", str(tmp_path / "g.json")) == 1
    assert "states" in capsys.readouterr().err


def test_help_shows_defaults(capsys):
    with pytest.raises(SystemExit) as ei:
        run("explore", "--help")
    assert ei.value.code == 0
    text = " ".join(capsys.readouterr().out.split())
    for frag in ("(default: 3)", "(default: 0)", "(default: 5)", "(default: 999)"):
        assert frag in text
    assert "[explore.max_retries]" in text


def test_explore_outputs(shop_graph):
    out, _ = shop_graph
    g = load_graph(out)
    assert len(g) == 22
    elog = ExplorationLog.load(str(out) + ".log.jsonl")
    assert len(elog.actions()) == g.meta["actions"]


def test_explore_is_byte_deterministic(shop_graph, tmp_path):
    out, _ = shop_graph
    again = tmp_path / "again.json"
    assert run("explore", "--target", "sim:ecommerce", "--seed", "7", "--out", str(again)) == 0
    assert again.read_bytes() == out.read_bytes()
    assert (tmp_path / "again.json.log.jsonl").read_bytes() == (out.parent / "graph.json.log.jsonl").read_bytes()


def test_config_file_and_flag_precedence(tmp_path, monkeypatch):
    conf = tmp_path / "sw.conf"
    conf.write_text("[explore]\nmax_retries = 1\nmax_leaf_branches = 2\n")
    a = tmp_path / "a.json"
    assert run("--config", str(conf), "explore", "--target", "sim:linkmaze", "--out", str(a)) == 0
    meta = load_graph(a).meta["config"]
    assert (meta["max_retries"], meta["max_leaf_branches"], meta["max_consecutive_actions"]) == (1, 2, 5)
    monkeypatch.setenv("STATEWALK_CONFIG", str(conf))
    b = tmp_path / "b.json"
    assert run("explore", "--target", "sim:linkmaze", "--max-retries", "2", "--out", str(b)) == 0
    meta = load_graph(b).meta["config"]
    assert (meta["max_retries"], meta["max_leaf_branches"]) == (2, 2)


def test_unreadable_config_exits_1(tmp_path, capsys):
    assert run("--config", str(tmp_path / "missing.conf"), "metrics", "--graph", "x") == 1


def test_metrics_formats(shop_graph, capsys):
    out, _ = shop_graph
    assert run("metrics", "--graph", str(out), "--format", "json") == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["state_coverage"] == 22
    # the shop has no flaky actions, so no first-attempt failures to recover from
    assert rep["failure_recovery_rate"] is None


def test_compare_csv(shop_graph, tmp_path):
    out, base = shop_graph
    dest = tmp_path / "cmp.csv"
    assert run("compare", "--a", str(out), "--b", str(base), "--format", "csv", "--out", str(dest)) == 0
    rows = {r.metric: r for r in read_csv(dest.read_text())}
    assert rows["state_coverage"].a == 22 and rows["state_coverage"].winner == "a"
    assert rows["graph_density"].winner == "a"


def test_compare_text(shop_graph, capsys):
    out, base = shop_graph
    assert run("compare", "--a", str(out), "--b", str(base), "--name-a", "explorer", "--name-b", "crawler") == 0
    text = capsys.readouterr().out
    assert text.splitlines()[0].split()[1:3] == ["explorer", "crawler"]


@pytest.mark.parametrize("fmt,ext", [("dot", "dot"), ("graphml", "graphml"), ("json", "json")])
def test_export(shop_graph, tmp_path, fmt, ext):
    out, _ = shop_graph
    dest = tmp_path / f"g.{ext}"
    assert run("export", "--graph", str(out), "--format", fmt, "--out", str(dest)) == 0
    assert loads(dest.read_text(), fmt) == load_graph(out)


def test_testgen_and_replay(shop_graph, tmp_path, capsys):
    out, _ = shop_graph
    cases = tmp_path / "cases"
    assert run("testgen", "--graph", str(out), "--out-dir", str(cases)) == 0
    files = sorted(cases.glob("*.case"))
    assert files
    argv = ["replay", "--target", "sim:ecommerce", "--seed", "7"]
    for f in files[:5]:
        argv += ["--case", str(f)]
    assert run(*argv) == 0
    assert capsys.readouterr().out.count(": pass") == 5


def test_replay_failure_exit_1(shop_graph, tmp_path, capsys):
    out, _ = shop_graph
    cases = tmp_path / "cases"
    run("testgen", "--graph", str(out), "--out-dir", str(cases))
    f = sorted(cases.glob("*.case"))[0]
    assert run("replay", "--target", "sim:linkmaze", "--case", str(f)) == 1
    assert "fail at step 1" in capsys.readouterr().out


def test_outputs_are_atomic(shop_graph, tmp_path):
    out, _ = shop_graph
    dest = tmp_path / "x.dot"
    run("export", "--graph", str(out), "--format", "dot", "--out", str(dest))
    assert [p.name for p in tmp_path.iterdir()] == ["x.dot"]


def test_module_entry_point(tmp_path):
    p = subprocess.run([sys.executable, "-m", "statewalk", "explode"], capture_output=True, text=True)
    assert p.returncode == 2
    p = subprocess.run([sys.executable, "-m", "statewalk", "metrics", "--graph", str(tmp_path / "none.json")],
                       capture_output=True, text=True)
    assert p.returncode == 1
