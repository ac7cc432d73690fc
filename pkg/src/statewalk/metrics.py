"""Graph metrics for comparing explorations, and comparison tables.

All graph measures treat the knowledge graph as directed.  Parallel edges
between one ordered pair count once for density and path structure but
each counts as an interaction in ``edge_complexity``.  Self-loops never
contribute to density or paths.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import deque
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Mapping

from .graph import KnowledgeGraph


def _adjacency(g: KnowledgeGraph) -> tuple[list[str], list[list[int]]]:
    ids = g.node_ids()
    index = {d: i for i, d in enumerate(ids)}
    adj: list[set[int]] = [set() for _ in ids]
    for e in g.edges:
        u, v = index[e.source], index[e.target]
        if u != v:
            adj[u].add(v)
    return ids, [sorted(a) for a in adj]


def state_coverage(g: KnowledgeGraph) -> int:
    return len(g)


def edge_complexity(g: KnowledgeGraph) -> int:
    return len(g.edges)


def graph_density(g: KnowledgeGraph) -> float:
    n = len(g)
    if n < 2:
        return 0.0
    pairs = sum(1 for u, v in g.distinct_pairs() if u != v)
    return pairs / (n * (n - 1))


def _bfs(adj: list[list[int]], s: int) -> list[int]:
    dist = [-1] * len(adj)
    dist[s] = 0
    q = deque([s])
    while q:
        u = q.popleft()
        for v in adj[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def avg_shortest_path(g: KnowledgeGraph) -> float:
    """Mean directed distance over ordered pairs that are connected at all."""
    _, adj = _adjacency(g)
    total = count = 0
    for s in range(len(adj)):
        for t, d in enumerate(_bfs(adj, s)):
            if t != s and d > 0:
                total += d
                count += 1
    return total / count if count else 0.0


def betweenness(g: KnowledgeGraph) -> dict[str, float]:
    """Per-node betweenness (Brandes), normalized by (n-1)(n-2)."""
    ids, adj = _adjacency(g)
    n = len(ids)
    cb = [0.0] * n
    for s in range(n):
        stack: list[int] = []
        preds: list[list[int]] = [[] for _ in range(n)]
        sigma = [0] * n
        dist = [-1] * n
        sigma[s], dist[s] = 1, 0
        q = deque([s])
        while q:
            v = q.popleft()
            stack.append(v)
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    q.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = [0.0] * n
        while stack:
            w = stack.pop()
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1 + delta[w])
            if w != s:
                cb[w] += delta[w]
    norm = (n - 1) * (n - 2)
    return {d: (cb[i] / norm if norm else 0.0) for i, d in enumerate(ids)}


def avg_betweenness(g: KnowledgeGraph) -> float:
    if len(g) < 3:
        return 0.0
    values = betweenness(g)
    return math.fsum(values.values()) / len(values)


def failure_recovery_rate(log: Iterable) -> float | None:
    """Share of first-attempt failures that eventually succeeded.

    Accepts exploration log records (or dicts) with ``errors``/``first_failed``
    and ``outcome`` fields; only action records count.
    """
    failed = recovered = 0
    for r in log:
        rec = r.to_dict() if hasattr(r, "to_dict") else dict(r)
        if rec.get("kind", "action") != "action":
            continue
        if rec.get("first_failed", rec.get("errors", 0) >= 1):
            failed += 1
            if rec.get("outcome") != "Failed":
                recovered += 1
    return recovered / failed if failed else None


@dataclass(frozen=True)
class MetricsReport:
    state_coverage: int
    edge_complexity: int
    failure_recovery_rate: float | None
    time_to_completion_s: float
    graph_density: float
    avg_shortest_path: float
    avg_betweenness: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None and not math.isfinite(v):
                raise ValueError(f"{f.name} is not finite")
        if not 0.0 <= self.graph_density <= 1.0:
            raise ValueError("graph_density outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> MetricsReport:
        return cls(**{f.name: d.get(f.name) for f in fields(cls)})


def report(g: KnowledgeGraph, log: Iterable | None = None) -> MetricsReport:
    return MetricsReport(
        state_coverage=state_coverage(g),
        edge_complexity=edge_complexity(g),
        failure_recovery_rate=failure_recovery_rate(log) if log is not None else None,
        time_to_completion_s=float(g.meta.get("elapsed_ms", 0)) / 1000.0,
        graph_density=graph_density(g),
        avg_shortest_path=avg_shortest_path(g),
        avg_betweenness=avg_betweenness(g),
    )


# -- comparison ---------------------------------------------------------------

ROWS = (
    ("state_coverage", "State coverage"),
    ("edge_complexity", "Edge complexity"),
    ("failure_recovery_rate", "Failure recovery rate"),
    ("time_to_completion_s", "Time to completion (s)"),
    ("graph_density", "Graph density"),
    ("avg_shortest_path", "Avg shortest path"),
    ("avg_betweenness", "Avg betweenness"),
)


@dataclass(frozen=True)
class ComparisonRow:
    metric: str
    a: float | None
    b: float | None
    delta: float | None
    winner: str  # "a", "b", "tie" or "-"


def _winner(metric: str, a, b, ref_edges: tuple[int, int] | None) -> str:
    if a is None or b is None:
        return "-"
    if metric == "edge_complexity" and ref_edges is not None:
        # closer to n-1 is better: a tree is the ideal interaction count
        ka, kb = abs(a - ref_edges[0]), abs(b - ref_edges[1])
    elif metric in ("time_to_completion_s", "graph_density"):
        ka, kb = a, b
    else:
        ka, kb = -a, -b
    if ka == kb:
        return "tie"
    return "a" if ka < kb else "b"


def compare(a: MetricsReport, b: MetricsReport) -> list[ComparisonRow]:
    """Row-wise comparison of two reports; ``delta`` is ``b - a``.

    Winner rules: more states, fewer edges relative to a spanning tree,
    higher recovery, less time, lower density, longer average paths and
    higher average betweenness (clearer junction states) each win.
    """
    ref = (a.state_coverage - 1, b.state_coverage - 1)
    rows = []
    for key, _ in ROWS:
        va, vb = getattr(a, key), getattr(b, key)
        delta = vb - va if va is not None and vb is not None else None
        rows.append(ComparisonRow(key, va, vb, delta, _winner(key, va, vb, ref)))
    return rows


def _fmt(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, int):
        return str(v)
    return f"{v:.4f}"


def format_text(rows: list[ComparisonRow], names: tuple[str, str] = ("a", "b")) -> str:
    labels = dict(ROWS)
    header = ("Metric", names[0], names[1], "Delta", "Winner")
    body = []
    for r in rows:
        win = {"a": names[0], "b": names[1]}.get(r.winner, r.winner)
        body.append((labels[r.metric], _fmt(r.a), _fmt(r.b), _fmt(r.delta), win))
    widths = [max(len(x[i]) for x in [header, *body]) for i in range(5)]
    line = lambda cells: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))
    out = [line(header), "  ".join("-" * w for w in widths)] + [line(b) for b in body]
    return "\n".join(x.rstrip() for x in out) + "\n"


def format_csv(rows: list[ComparisonRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "a", "b", "delta", "winner"])
    for r in rows:
        w.writerow([r.metric, "" if r.a is None else repr(r.a), "" if r.b is None else repr(r.b),
                    "" if r.delta is None else repr(r.delta), r.winner])
    return buf.getvalue()


def _num(s: str):
    if s == "":
        return None
    v = float(s)
    return int(v) if "." not in s and "e" not in s.lower() and v.is_integer() else v


def read_csv(text: str) -> list[ComparisonRow]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append(ComparisonRow(rec["metric"], _num(rec["a"]), _num(rec["b"]), _num(rec["delta"]), rec["winner"]))
    return rows


def format_json(rows: list[ComparisonRow]) -> str:
    return json.dumps([asdict(r) for r in rows], indent=2, sort_keys=True) + "\n"


def format_report(rep: MetricsReport, fmt: str = "text") -> str:
    d = rep.to_dict()
    if fmt == "json":
        return json.dumps(d, indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        for key, _ in ROWS:
            w.writerow([key, "" if d[key] is None else repr(d[key])])
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    labels = dict(ROWS)
    width = max(len(v) for v in labels.values())
    return "".join(f"{labels[k].ljust(width)}  {_fmt(d[k])}\n" for k, _ in ROWS)
