"""Command-line interface.

Exit codes: 0 success, 1 operational failure, 2 usage error.  Every flag
has a config-file key (shown in brackets in ``--help``); flags win over
the file, which wins over built-in defaults.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

from . import config as cfg
from . import metrics
from .crawler import CrawlConfig, crawl
from .errors import StatewalkError
from .explorer import ExplorationConfig, ExplorationLog, Explorer
from .graphio import GraphFormat, atomic_write_text, dumps, load_graph, save_graph
from .inference import HeuristicReasoner, RemoteReasoner
from .rerank import RerankConfig
from .simapp import SimDriver, load_spec
from .state import FingerprintConfig
from .testgen import TestCase, TestGenConfig, generate, replay, write_cases
from .values import ValueDictionary

log = logging.getLogger("statewalk")

_DEFAULTS = ExplorationConfig()


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


# -- targets --------------------------------------------------------------------

def make_driver(target: str, seed: int | None = None, webdriver_url: str | None = None,
                timeout_s: float = 10.0):
    """Driver for ``sim:<fixture or path>`` or ``web:<url>``; returns (driver, start_url)."""
    if target.startswith("sim:"):
        spec = load_spec(target[4:])
        return SimDriver(spec, seed=seed), spec.start_url
    if target.startswith("web:"):
        if not webdriver_url:
            raise UsageError("web: targets need --webdriver-url")
        from .webdriver import WebDriverAppDriver, WebDriverClient

        url = target[4:]
        return WebDriverAppDriver(WebDriverClient(webdriver_url, timeout_s), url), url
    raise UsageError(f"target must start with sim: or web:, got {target!r}")


def _pick(flag: Any, conf: dict[str, str], key: str, conv: Callable[[str], Any], default: Any) -> Any:
    if flag is not None:
        return flag
    if key in conf:
        return conv(conf[key])
    return default


def _fp_config(conf: dict[str, str]) -> FingerprintConfig:
    scoped = cfg.section(conf, "fingerprint")
    return FingerprintConfig.from_mapping(scoped) if scoped else FingerprintConfig()


def _values(conf: dict[str, str]) -> ValueDictionary:
    scoped = cfg.section(conf, "values")
    if "values.file" in conf:
        return ValueDictionary.from_file(conf["values.file"])
    extra = {k: v for k, v in scoped.items() if k != "file"}
    return ValueDictionary.from_mapping(extra) if extra else ValueDictionary()


def _int_or_none(v: str) -> int | None:
    return None if v.strip().lower() in ("", "none") else int(v)


# -- subcommands -------------------------------------------------------------------------

def cmd_explore(a, conf) -> int:
    x = cfg.section(conf, "explore")
    seed = _pick(a.seed, x, "seed", cfg.as_int, None)
    config = ExplorationConfig(
        min_reward=_pick(a.min_reward, x, "min_reward", cfg.as_float, _DEFAULTS.min_reward),
        max_leaf_branches=_pick(a.max_leaf_branches, x, "max_leaf_branches", cfg.as_int, _DEFAULTS.max_leaf_branches),
        max_consecutive_actions=_pick(a.max_consecutive_actions, x, "max_consecutive_actions", cfg.as_int,
                                      _DEFAULTS.max_consecutive_actions),
        max_retries=_pick(a.max_retries, x, "max_retries", cfg.as_int, _DEFAULTS.max_retries),
        seed=seed if seed is not None else 0,
        budget=_pick(a.budget, x, "budget", _int_or_none, None),
    )
    target = _pick(a.target, x, "target", str, None)
    if not target:
        raise UsageError("explore needs --target")
    driver, _ = make_driver(target, seed, _pick(a.webdriver_url, conf, "webdriver_url", str, None))
    kind = _pick(a.reasoner, x, "reasoner", str, "heuristic")
    values = _values(conf)
    reasoner = (RemoteReasoner.from_env(fallback=HeuristicReasoner(values)) if kind == "remote"
                else HeuristicReasoner(values))
    rerank_conf = cfg.section(conf, "rerank")
    ex = Explorer(driver, reasoner, config,
                  RerankConfig.from_mapping(rerank_conf) if rerank_conf else RerankConfig(),
                  _fp_config(conf))
    graph, elog = ex.run()
    out = Path(_pick(a.out, x, "out", str, "graph.json"))
    save_graph(graph, out)
    log_path = Path(a.log) if a.log else out.with_name(out.name + ".log.jsonl")
    elog.save(log_path)
    print(f"explored {len(graph)} states, {len(graph.edges)} edges, {len(elog.actions())} actions -> {out}")
    return 0


def cmd_crawl(a, conf) -> int:
    x = cfg.section(conf, "crawl")
    config = CrawlConfig(
        max_depth=_pick(a.max_depth, x, "max_depth", cfg.as_int, 3),
        max_concurrent=_pick(a.concurrency, x, "max_concurrent", cfg.as_int, 8),
        strategy=_pick(a.strategy, x, "strategy", str, "bfs"),
        follow_redirects=_pick(a.follow_redirects, x, "follow_redirects", cfg.as_bool, True),
        user_agents=_pick(None, x, "user_agents", cfg.as_list, CrawlConfig().user_agents),
    )
    target = _pick(a.target, x, "target", str, None)
    if not target:
        raise UsageError("crawl-baseline needs --target")
    driver, start = make_driver(target, None, _pick(a.webdriver_url, conf, "webdriver_url", str, None))
    graph, stats = crawl(driver, start, config, _fp_config(conf))
    out = Path(_pick(a.out, x, "out", str, "baseline.json"))
    save_graph(graph, out)
    print(f"crawled {stats.pages} pages ({stats.errors} errors), {len(graph.edges)} edges -> {out}")
    return 0


def _write_or_print(text: str, out: str | None) -> None:
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def cmd_metrics(a, conf) -> int:
    g = load_graph(a.graph)
    elog = ExplorationLog.load(a.log) if a.log else None
    if elog is None and os.path.exists(str(a.graph) + ".log.jsonl"):
        elog = ExplorationLog.load(str(a.graph) + ".log.jsonl")
    _write_or_print(metrics.format_report(metrics.report(g, elog), a.format), a.out)
    return 0


def _report_for(path: str):
    lp = path + ".log.jsonl"
    elog = ExplorationLog.load(lp) if os.path.exists(lp) else None
    return metrics.report(load_graph(path), elog)


def cmd_compare(a, conf) -> int:
    rows = metrics.compare(_report_for(a.a), _report_for(a.b))
    names = (a.name_a or Path(a.a).stem, a.name_b or Path(a.b).stem)
    text = {"text": lambda: metrics.format_text(rows, names), "csv": lambda: metrics.format_csv(rows),
            "json": lambda: metrics.format_json(rows)}[a.format]()
    _write_or_print(text, a.out)
    return 0


def cmd_export(a, conf) -> int:
    g = load_graph(a.graph)
    fmt = GraphFormat.parse(a.format)
    out = a.out or str(Path(a.graph).with_suffix("." + ("graphml" if fmt is GraphFormat.GRAPHML else fmt.value)))
    atomic_write_text(out, dumps(g, fmt))
    print(f"wrote {out}")
    return 0


def cmd_testgen(a, conf) -> int:
    x = cfg.section(conf, "testgen")
    g = load_graph(a.graph)
    budget = _pick(a.path_budget, x, "path_budget", cfg.as_int, TestGenConfig().path_budget)
    cases = generate(g, TestGenConfig(path_budget=budget))
    paths = write_cases(cases, _pick(a.out_dir, x, "out_dir", str, "tests"))
    print(f"generated {len(paths)} test cases")
    return 0


def cmd_replay(a, conf) -> int:
    driver, _ = make_driver(a.target, a.seed, a.webdriver_url)
    failed = 0
    for path in a.case:
        verdict = replay(driver, TestCase.load(path))
        print(f"{path}: {verdict}")
        failed += not verdict.passed
    return 1 if failed else 0


# -- parser ------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="statewalk", description="Explore web applications into state graphs.")
    p.add_argument("--config", help="key-value config file (default: $STATEWALK_CONFIG)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("explore", help="reward-guided exploration")
    e.add_argument("--target", help="sim:<fixture|file> or web:<url> [explore.target]")
    e.add_argument("--out", help="graph JSON output (default: graph.json) [explore.out]")
    e.add_argument("--log", help="exploration log output (default: <out>.log.jsonl)")
    e.add_argument("--seed", type=int, help="seed for the simulated driver [explore.seed]")
    e.add_argument("--max-retries", type=int, metavar="N",
                   help=f"retries per action (default: {_DEFAULTS.max_retries}) [explore.max_retries]")
    e.add_argument("--min-reward", type=float, metavar="X",
                   help=f"reward threshold (default: {_DEFAULTS.min_reward:g}) [explore.min_reward]")
    e.add_argument("--max-consecutive-actions", type=int, metavar="N",
                   help=f"actions before a forced frontier switch (default: {_DEFAULTS.max_consecutive_actions}) "
                        "[explore.max_consecutive_actions]")
    e.add_argument("--max-leaf-branches", type=int, metavar="N",
                   help=f"out-edges before a state stops expanding (default: {_DEFAULTS.max_leaf_branches}) "
                        "[explore.max_leaf_branches]")
    e.add_argument("--budget", type=int, help="maximum number of actions [explore.budget]")
    e.add_argument("--reasoner", choices=("heuristic", "remote"), help="candidate source [explore.reasoner]")
    e.add_argument("--webdriver-url", help="W3C WebDriver endpoint for web: targets [webdriver_url]")
    e.set_defaults(func=cmd_explore)

    c = sub.add_parser("crawl-baseline", help="hyperlink crawler baseline")
    c.add_argument("--target", help="[crawl.target]")
    c.add_argument("--max-depth", type=int, help="(default: 3) [crawl.max_depth]")
    c.add_argument("--strategy", choices=("bfs", "dfs"), help="(default: bfs) [crawl.strategy]")
    c.add_argument("--concurrency", type=int, help="(default: 8) [crawl.max_concurrent]")
    c.add_argument("--no-follow-redirects", dest="follow_redirects", action="store_const", const=False,
                   help="[crawl.follow_redirects]")
    c.add_argument("--out", help="[crawl.out]")
    c.add_argument("--webdriver-url", help="[webdriver_url]")
    c.set_defaults(func=cmd_crawl)

    m = sub.add_parser("metrics", help="graph metrics report")
    m.add_argument("--graph", required=True)
    m.add_argument("--log", help="exploration log (default: <graph>.log.jsonl if present)")
    m.add_argument("--format", choices=("text", "csv", "json"), default="text")
    m.add_argument("--out")
    m.set_defaults(func=cmd_metrics)

    k = sub.add_parser("compare", help="side-by-side metrics of two graphs")
    k.add_argument("--a", required=True)
    k.add_argument("--b", required=True)
    k.add_argument("--name-a")
    k.add_argument("--name-b")
    k.add_argument("--format", choices=("text", "csv", "json"), default="text")
    k.add_argument("--out")
    k.set_defaults(func=cmd_compare)

    x = sub.add_parser("export", help="convert a JSON graph to DOT or GraphML")
    x.add_argument("--graph", required=True)
    x.add_argument("--format", choices=("dot", "graphml", "json"), required=True)
    x.add_argument("--out")
    x.set_defaults(func=cmd_export)

    t = sub.add_parser("testgen", help="write one test case per root-to-leaf path")
    t.add_argument("--graph", required=True)
    t.add_argument("--out-dir", help="(default: tests) [testgen.out_dir]")
    t.add_argument("--path-budget", type=int, help="[testgen.path_budget]")
    t.set_defaults(func=cmd_testgen)

    r = sub.add_parser("replay", help="replay test cases against a target")
    r.add_argument("--case", required=True, action="append", help="repeatable")
    r.add_argument("--target", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--webdriver-url")
    r.set_defaults(func=cmd_replay)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        conf = cfg.load_config(args.config)
        return args.func(args, conf)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"statewalk: error: {exc}", file=sys.stderr)
        return 2
    except (StatewalkError, OSError, ValueError) as exc:
        print(f"statewalk: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
