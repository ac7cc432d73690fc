import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from statewalk.crawler import CrawlConfig, crawl, extract_hyperlinks
from statewalk.errors import DriverError, DriverUnavailable
from statewalk.simapp import SimDriver, gated_state_keys, load_spec
from statewalk.state import ActionType, Observation

from _support import crawled, hyperlink_depths, oracle_fingerprints

ORIGIN = "http://site.test"


class FakeSite:
    """Fetch driver over a dict of pages; ``redirects`` maps a path to another path."""

    def __init__(self, pages: dict[str, list[str]], redirects=None, broken=(), raw=None):
        self.pages = pages
        self.redirects = redirects or {}
        self.broken = set(broken)
        self.raw = raw or {}
        self.agents: list[tuple[str, str | None]] = []
        self.lock = threading.Lock()

    def fetch(self, url, user_agent=None):
        path = url[len(ORIGIN):] or "/"
        with self.lock:
            self.agents.append((path, user_agent))
        if path in self.broken:
            raise DriverError(f"503 for {path}")
        path = self.redirects.get(path, path)
        if path in self.raw:
            body = self.raw[path]
        elif path in self.pages:
            body = "<html><body><h1>%s</h1>%s</body></html>" % (
                path, "".join(f'<a href="{h}">{h}</a>' for h in self.pages[path]))
        else:
            raise DriverError(f"404 for {path}")
        return Observation(body, {"url": ORIGIN + path, "status": "200", "cookies": ""})


def paths(g):
    return {n.fingerprint.url_path for n in g.nodes}


def test_extract_examples():
    src = ('<a href="/a">a</a><a href="b?x=1#frag">b</a><a href="/a">dup</a><a href="#top">t</a>'
           '<a href="http://other.test/x">o</a><a href="mailto:q@r">m</a><a>no href</a>')
    assert extract_hyperlinks(src, "http://site.test/dir/page") == [
        "http://site.test/a", "http://site.test/dir/b?x=1"]


def test_extract_home_fixture(shop):
    o = SimDriver(shop).fetch(shop.start_url)
    links = extract_hyperlinks(o.page_source, o.url)
    assert links == ["http://shop.sim/catalog", "http://shop.sim/about", "http://shop.sim/help",
                     "http://shop.sim/login"]


def test_depth_zero_is_start_only():
    g, stats = crawl(FakeSite({"/": ["/a"], "/a": ["/"]}), ORIGIN + "/", CrawlConfig(max_depth=0))
    assert len(g) == 1 and len(g.edges) == 0 and stats.pages == 1


def test_two_mutually_linked_pages():
    g, _ = crawl(FakeSite({"/": ["/a"], "/a": ["/"]}), ORIGIN + "/")
    assert len(g) == 2 and len(g.edges) == 2
    assert all(e.action.action_type is ActionType.NAVIGATE for e in g.edges)


def test_chain_truncated_at_depth():
    chain = {f"/{i}" if i else "/": [f"/{i + 1}"] for i in range(10)}
    g, stats = crawl(FakeSite(chain), ORIGIN + "/", CrawlConfig(max_depth=3))
    assert paths(g) == {"/", "/1", "/2", "/3"}
    assert stats.max_depth_reached == 3


def test_bfs_order_and_depths(maze):
    _, stats = crawled("linkmaze")
    depths = [d for _, d in stats.visit_order]
    assert depths == sorted(depths) and max(depths) <= 3
    truth = hyperlink_depths(maze)
    from urllib.parse import urlsplit
    for url, d in stats.visit_order:
        assert truth[urlsplit(url).path or "/"] == d


def test_dfs_reaches_same_pages_within_depth():
    site = {"/": ["/a", "/b"], "/a": ["/a1"], "/b": ["/b1"], "/a1": [], "/b1": []}
    g_b, s_b = crawl(FakeSite(site), ORIGIN + "/", CrawlConfig(strategy="bfs"))
    g_d, s_d = crawl(FakeSite(site), ORIGIN + "/", CrawlConfig(strategy="dfs"))
    assert paths(g_b) == paths(g_d)
    assert [u[len(ORIGIN):] for u, _ in s_d.visit_order] == ["/", "/a", "/a1", "/b", "/b1"]
    assert [u[len(ORIGIN):] for u, _ in s_b.visit_order] == ["/", "/a", "/b", "/a1", "/b1"]


def test_redirect_is_aliased():
    site = FakeSite({"/": ["/old", "/new"], "/new": ["/"]}, redirects={"/old": "/new"})
    g, stats = crawl(site, ORIGIN + "/")
    assert paths(g) == {"/", "/new"} and stats.redirects == 1
    # both anchors on the home page lead to the same node
    targets = {g.node(e.target).fingerprint.url_path for e in g.out_edges(g.root)}
    assert targets == {"/new"} and len(g.out_edges(g.root)) == 2


def test_redirects_not_followed():
    site = FakeSite({"/": ["/old"], "/new": []}, redirects={"/old": "/new"})
    g, stats = crawl(site, ORIGIN + "/", CrawlConfig(follow_redirects=False))
    assert paths(g) == {"/"} and stats.redirects == 1


def test_user_agent_rotation():
    site = FakeSite({"/": ["/a", "/b", "/c"], "/a": [], "/b": [], "/c": []})
    crawl(site, ORIGIN + "/", CrawlConfig(user_agents=("u1", "u2"), max_concurrent=1))
    assert [ua for _, ua in site.agents] == ["u1", "u2", "u1", "u2"]


def test_fetch_errors_logged_not_fatal(caplog):
    site = FakeSite({"/": ["/ok", "/down"], "/ok": []}, broken={"/down"})
    g, stats = crawl(site, ORIGIN + "/")
    assert paths(g) == {"/", "/ok"} and stats.errors == 1
    assert "/down" in caplog.text


def test_unparseable_page_counts_as_error():
    site = FakeSite({"/": ["/bad"]}, raw={"/bad": "\x00\x00"})
    g, stats = crawl(site, ORIGIN + "/")
    assert paths(g) == {"/"} and stats.errors == 1 and stats.pages == 1


def test_start_failure_raises():
    with pytest.raises(DriverUnavailable):
        crawl(FakeSite({}, broken={"/"}), ORIGIN + "/")


@pytest.mark.parametrize("kw", [{"max_depth": -1}, {"max_concurrent": 0}, {"strategy": "random"}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        CrawlConfig(**kw)


def test_config_defaults_and_mapping():
    assert CrawlConfig().max_depth == 3
    c = CrawlConfig.from_mapping({"max_depth": "2", "strategy": "dfs", "follow_redirects": "no",
                                  "user_agents": "a, b"})
    assert (c.max_depth, c.strategy, c.follow_redirects, c.user_agents) == (2, "dfs", False, ("a", "b"))


def test_concurrency_does_not_change_result():
    a = crawl(SimDriver(load_spec("linkmaze")), "http://maze.sim/", CrawlConfig(max_concurrent=1))[0]
    b = crawl(SimDriver(load_spec("linkmaze")), "http://maze.sim/", CrawlConfig(max_concurrent=8))[0]
    assert a.structure()[:3] == b.structure()[:3]


def test_baseline_never_reaches_gated_states():
    g, _ = crawled("ecommerce")
    spec = load_spec("ecommerce")
    gated = {oracle_fingerprints("ecommerce")[k] for k in gated_state_keys(spec)}
    assert gated and not gated & set(g.node_ids())


def test_baseline_is_edge_dense_on_linkmaze():
    g, _ = crawled("linkmaze")
    assert len(g.distinct_pairs()) > len(g) - 1


@st.composite
def sites(draw):
    n = draw(st.integers(1, 12))
    names = ["/"] + [f"/p{i}" for i in range(1, n)]
    return {p: draw(st.lists(st.sampled_from(names), max_size=4)) for p in names}


def _bfs_depths(site):
    depth, q = {"/": 0}, ["/"]
    for p in q:
        for h in site[p]:
            if h not in depth:
                depth[h] = depth[p] + 1
                q.append(h)
    return depth


@settings(max_examples=60)
@given(sites(), st.integers(0, 4), st.sampled_from(["bfs", "dfs"]))
def test_crawl_matches_reference_reachability(site, max_depth, strategy):
    g, stats = crawl(FakeSite(site), ORIGIN + "/", CrawlConfig(max_depth=max_depth, strategy=strategy,
                                                               max_concurrent=1))
    depth = _bfs_depths(site)
    expected = {p for p, d in depth.items() if d <= max_depth}
    if strategy == "bfs":
        assert paths(g) == expected
        assert all(depth[u[len(ORIGIN):]] == d for u, d in stats.visit_order)
    else:
        assert paths(g) <= {p for p in depth} and "/" in paths(g)
    # every recorded edge is a real anchor between crawled pages
    for e in g.edges:
        src, dst = g.node(e.source).fingerprint.url_path, g.node(e.target).fingerprint.url_path
        assert dst in site[src]
    assert g.reachable_from_root() == set(g.node_ids())
