"""Queue-based hyperlink crawler used as the comparison baseline.

It only follows anchors: every page is fetched fresh by URL, so anything
behind a form, a button or session state stays invisible to it.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, Protocol
from urllib.parse import urldefrag, urljoin, urlsplit

from . import config as cfg
from .dom import parse_markup
from .errors import DriverError, DriverUnavailable, UnparseableMarkup
from .executor import WallClock
from .graph import KnowledgeGraph, StateNode, TransitionEdge
from .state import DEFAULT_FINGERPRINT, Action, ActionType, FingerprintConfig, Observation, fingerprint, normalize_url_path

log = logging.getLogger(__name__)

DEFAULT_USER_AGENTS = (
    "Mozilla/5.0 (X11; Linux x86_64) statewalk-baseline/1.0",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 13_4) statewalk-baseline/1.0",
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) statewalk-baseline/1.0",
)


class FetchDriver(Protocol):
    def fetch(self, url: str, user_agent: str | None = None) -> Observation: ...


@dataclass(frozen=True)
class CrawlConfig:
    max_depth: int = 3
    follow_redirects: bool = True
    max_concurrent: int = 8
    user_agents: tuple[str, ...] = DEFAULT_USER_AGENTS
    strategy: str = "bfs"

    def __post_init__(self):
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be >= 1")
        if self.strategy not in ("bfs", "dfs"):
            raise ValueError("strategy must be 'bfs' or 'dfs'")

    @classmethod
    def from_mapping(cls, m: Mapping[str, str]) -> CrawlConfig:
        kw: dict[str, Any] = {}
        if "max_depth" in m:
            kw["max_depth"] = cfg.as_int(m["max_depth"])
        if "max_concurrent" in m:
            kw["max_concurrent"] = cfg.as_int(m["max_concurrent"])
        if "follow_redirects" in m:
            kw["follow_redirects"] = cfg.as_bool(m["follow_redirects"])
        if "user_agents" in m:
            kw["user_agents"] = cfg.as_list(m["user_agents"])
        if "strategy" in m:
            kw["strategy"] = m["strategy"]
        return cls(**kw)


@dataclass
class CrawlStats:
    pages: int = 0
    errors: int = 0
    redirects: int = 0
    visit_order: list[tuple[str, int]] = field(default_factory=list)
    elapsed_ms: int = 0

    @property
    def max_depth_reached(self) -> int:
        return max((d for _, d in self.visit_order), default=0)


def _origin(url: str) -> tuple[str, str]:
    p = urlsplit(url)
    return p.scheme, p.netloc


def _anchors(page_source: str, base_url: str) -> list[tuple[str, str]]:
    """(absolute url, anchor selector) for same-origin anchors, first occurrence wins."""
    doc = parse_markup(page_source)
    out: dict[str, str] = {}
    for el in doc.find_all("a"):
        href = (el.get("href") or "").strip()
        if not href or href.startswith("#") or href.lower().startswith(("javascript:", "mailto:", "tel:")):
            continue
        url = urldefrag(urljoin(base_url, href))[0]
        if _origin(url) == _origin(base_url) and url not in out:
            out[url] = doc.selector_for(el)
    return list(out.items())


def extract_hyperlinks(page_source: str, base_url: str) -> list[str]:
    return [u for u, _ in _anchors(page_source, base_url)]


def _key(url: str) -> str:
    p = urlsplit(url)
    return f"{p.scheme}://{p.netloc}{normalize_url_path(url)}"


class _Crawl:
    def __init__(self, driver: FetchDriver, config: CrawlConfig, fp_config: FingerprintConfig):
        self.driver = driver
        self.config = config
        self.fp_config = fp_config
        self.stats = CrawlStats()
        self.pages: dict[str, tuple[Observation, int]] = {}  # url key -> (obs, depth)
        self.order: list[str] = []
        self.aliases: dict[str, str] = {}
        self._fetches = 0

    def fetch_many(self, urls: list[str]) -> list[Observation | Exception]:
        agents = self.config.user_agents or (None,)
        jobs = []
        for u in urls:
            jobs.append((u, agents[self._fetches % len(agents)]))
            self._fetches += 1

        def one(job):
            try:
                return self.driver.fetch(*job)
            except (DriverError, UnparseableMarkup, OSError) as exc:
                return exc

        if self.config.max_concurrent == 1 or len(jobs) == 1:
            return [one(j) for j in jobs]
        with ThreadPoolExecutor(max_workers=min(self.config.max_concurrent, len(jobs))) as pool:
            return list(pool.map(one, jobs))

    def accept(self, url: str, obs: Observation | Exception, depth: int, visited: set[str]) -> list[str]:
        """Register a fetched page; returns its outgoing links (sorted), or [] when skipped."""
        if isinstance(obs, Exception):
            if not self.order and depth == 0:
                raise DriverUnavailable(f"cannot fetch start page {url}: {obs}")
            self.stats.errors += 1
            log.warning("fetch %s failed: %s", url, obs)
            return []
        final = _key(obs.url)
        if final != _key(url):
            self.stats.redirects += 1
            if not self.config.follow_redirects:
                return []
            self.aliases[_key(url)] = final
            visited.add(final)
        if final in self.pages:
            return []
        try:
            links = sorted(extract_hyperlinks(obs.page_source, obs.url))
        except UnparseableMarkup as exc:
            self.stats.errors += 1
            log.warning("page %s unparseable: %s", url, exc)
            return []
        self.pages[final] = (obs, depth)
        self.order.append(final)
        self.stats.pages += 1
        self.stats.visit_order.append((final, depth))
        return links

    def bfs(self, start: str) -> None:
        visited = {_key(start)}
        level, depth = [start], 0
        while level:
            results = self.fetch_many(level)
            nxt: list[str] = []
            for url, obs in zip(level, results):
                links = self.accept(url, obs, depth, visited)
                if depth < self.config.max_depth:
                    for link in links:
                        if _key(link) not in visited:
                            visited.add(_key(link))
                            nxt.append(link)
            level, depth = nxt, depth + 1

    def dfs(self, start: str) -> None:
        visited = {_key(start)}
        stack = [(start, 0)]
        while stack:
            url, depth = stack.pop()
            (obs,) = self.fetch_many([url])
            links = self.accept(url, obs, depth, visited)
            if depth < self.config.max_depth:
                for link in reversed(links):
                    if _key(link) not in visited:
                        visited.add(_key(link))
                        stack.append((link, depth + 1))

    def build(self) -> KnowledgeGraph:
        g = KnowledgeGraph()
        fps = {}
        for i, k in enumerate(self.order):
            obs, _ = self.pages[k]
            fp = fingerprint(obs, self.fp_config)
            fps[k] = fp
            # visit index as logical discovery time: fetch timestamps race under concurrency
            g.add_state(StateNode(fp, i, None))
        for k in self.order:
            obs, _ = self.pages[k]
            for url, selector in sorted(_anchors(obs.page_source, obs.url)):
                tk = self.aliases.get(_key(url), _key(url))
                if tk not in fps:
                    continue
                action = Action(ActionType.NAVIGATE, selector, (("tag", "a"), ("href", url)), url,
                                f"navigate to {urlsplit(url).path or '/'}")
                g.add_transition(TransitionEdge(fps[k].digest, fps[tk].digest, action))
        return g


def crawl(driver: FetchDriver, start_url: str, config: CrawlConfig = CrawlConfig(),
          fp_config: FingerprintConfig = DEFAULT_FINGERPRINT) -> tuple[KnowledgeGraph, CrawlStats]:
    clock = getattr(driver, "clock", None)
    clock = clock if callable(clock) else WallClock()
    t0 = clock()
    c = _Crawl(driver, config, fp_config)
    c.bfs(start_url) if config.strategy == "bfs" else c.dfs(start_url)
    g = c.build()
    c.stats.elapsed_ms = clock() - t0
    g.meta = {
        "elapsed_ms": c.stats.elapsed_ms,
        "generator": "baseline",
        "pages": c.stats.pages,
        "config": {"max_depth": config.max_depth, "strategy": config.strategy,
                   "max_concurrent": config.max_concurrent, "follow_redirects": config.follow_redirects},
    }
    return g, c.stats
