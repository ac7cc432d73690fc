"""The knowledge graph: fingerprinted states joined by action edges."""

from __future__ import annotations

import copy
import threading
from collections import deque
from dataclasses import dataclass
from typing import Any, Iterator, Mapping

from .errors import MissingSourceState
from .reward import RewardScore
from .state import Action, StateFingerprint


@dataclass
class StateNode:
    fingerprint: StateFingerprint
    first_seen_at: int = 0
    observation_ref: str | None = None
    visit_count: int = 1

    @property
    def digest(self) -> str:
        return self.fingerprint.digest

    def to_dict(self) -> dict[str, Any]:
        return {
            "fingerprint": self.fingerprint.to_dict(),
            "first_seen_at": self.first_seen_at,
            "observation_ref": self.observation_ref,
            "visit_count": self.visit_count,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> StateNode:
        return cls(StateFingerprint.from_dict(d["fingerprint"]), int(d.get("first_seen_at", 0)),
                   d.get("observation_ref"), int(d.get("visit_count", 1)))


@dataclass
class TransitionEdge:
    source: str
    target: str
    action: Action
    reward: RewardScore | None = None
    attempts: int = 1
    first_failed: bool = False

    def __post_init__(self):
        if self.attempts < 1:
            raise ValueError("attempts must be >= 1")

    @property
    def triple(self) -> tuple[str, str, str]:
        return (self.source, self.action.key, self.target)

    def to_dict(self) -> dict[str, Any]:
        return {
            "from": self.source,
            "to": self.target,
            "action": self.action.to_dict(),
            "reward": self.reward.to_dict() if self.reward else None,
            "attempts": self.attempts,
            "first_failed": self.first_failed,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> TransitionEdge:
        reward = RewardScore.from_dict(d["reward"]) if d.get("reward") else None
        return cls(d["from"], d["to"], Action.from_dict(d["action"]), reward,
                   int(d.get("attempts", 1)), bool(d.get("first_failed", False)))


def _digest(x: StateFingerprint | str) -> str:
    return x.digest if isinstance(x, StateFingerprint) else x


class KnowledgeGraph:
    """Directed multigraph of states with a designated root.

    Nodes and edges keep insertion order; the first edge inserted into a
    node is its discovery edge, so the discovery edges form a tree rooted
    at ``root``.  A single writer mutates the graph; readers that may run
    concurrently should work on :meth:`snapshot`.
    """

    def __init__(self, meta: Mapping[str, Any] | None = None):
        self.root: str | None = None
        self.meta: dict[str, Any] = dict(meta or {})
        self._nodes: dict[str, StateNode] = {}
        self._edges: list[TransitionEdge] = []
        self._edge_index: dict[tuple[str, str, str], int] = {}
        self._out: dict[str, list[int]] = {}
        self._in: dict[str, list[int]] = {}
        self._lock = threading.Lock()

    # -- queries
    def __contains__(self, fp: StateFingerprint | str) -> bool:
        return _digest(fp) in self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    @property
    def nodes(self) -> list[StateNode]:
        return list(self._nodes.values())

    @property
    def edges(self) -> list[TransitionEdge]:
        return list(self._edges)

    def node(self, fp: StateFingerprint | str) -> StateNode:
        return self._nodes[_digest(fp)]

    def node_ids(self) -> list[str]:
        return list(self._nodes)

    def out_edges(self, fp: StateFingerprint | str) -> list[TransitionEdge]:
        return [self._edges[i] for i in self._out.get(_digest(fp), [])]

    def in_edges(self, fp: StateFingerprint | str) -> list[TransitionEdge]:
        return [self._edges[i] for i in self._in.get(_digest(fp), [])]

    def out_degree(self, fp: StateFingerprint | str) -> int:
        return len(self._out.get(_digest(fp), []))

    def is_leaf(self, fp: StateFingerprint | str) -> bool:
        return self.out_degree(fp) == 0

    def leaves(self) -> list[str]:
        return [d for d in self._nodes if not self._out.get(d)]

    def successors(self, fp: StateFingerprint | str) -> list[str]:
        seen: dict[str, None] = {}
        for e in self.out_edges(fp):
            seen.setdefault(e.target, None)
        return list(seen)

    def discovery_edge(self, fp: StateFingerprint | str) -> TransitionEdge | None:
        ins = self._in.get(_digest(fp))
        return self._edges[ins[0]] if ins else None

    def tree_path(self, fp: StateFingerprint | str) -> list[TransitionEdge]:
        """Discovery edges from the root down to ``fp`` (empty for the root)."""
        d = _digest(fp)
        if d not in self._nodes:
            raise KeyError(d)
        path: list[TransitionEdge] = []
        seen = {d}
        while d != self.root:
            e = self.discovery_edge(d)
            if e is None:
                raise ValueError(f"state {d[:12]} has no path from the root")
            path.append(e)
            d = e.source
            if d in seen:
                raise ValueError("discovery edges contain a cycle")
            seen.add(d)
        path.reverse()
        return path

    def reachable_from_root(self) -> set[str]:
        if self.root is None:
            return set()
        seen = {self.root}
        q = deque([self.root])
        while q:
            u = q.popleft()
            for v in self.successors(u):
                if v not in seen:
                    seen.add(v)
                    q.append(v)
        return seen

    def distinct_pairs(self) -> set[tuple[str, str]]:
        return {(e.source, e.target) for e in self._edges}

    def __iter__(self) -> Iterator[StateNode]:
        return iter(self.nodes)

    # -- mutation
    def add_state(self, node: StateNode) -> bool:
        """Insert ``node``; idempotent on fingerprint.

        Returns False and bumps ``visit_count`` when the state is already known.
        The first state added to an empty graph becomes the root.
        """
        with self._lock:
            d = node.digest
            if d in self._nodes:
                self._nodes[d].visit_count += 1
                return False
            self._nodes[d] = node
            self._out.setdefault(d, [])
            self._in.setdefault(d, [])
            if self.root is None:
                self.root = d
            return True

    def add_transition(self, edge: TransitionEdge, target_node: StateNode | None = None) -> bool:
        """Insert ``edge``; returns True if a new edge was stored.

        The target state is created if absent (from ``target_node`` when
        given).  A repeated (from, action, to) triple is collapsed into the
        stored edge, keeping the larger attempt count and the newer reward.
        """
        if edge.source not in self._nodes:
            raise MissingSourceState(f"source state {edge.source[:12]} not in graph")
        if edge.target not in self._nodes:
            if target_node is None:
                target_node = StateNode(StateFingerprint(edge.target, "", ""))
            elif target_node.digest != edge.target:
                raise ValueError("target_node does not match edge target")
            self.add_state(target_node)
        with self._lock:
            idx = self._edge_index.get(edge.triple)
            if idx is not None:
                old = self._edges[idx]
                old.attempts = max(old.attempts, edge.attempts)
                old.first_failed = old.first_failed or edge.first_failed
                if edge.reward is not None:
                    old.reward = edge.reward
                return False
            self._edge_index[edge.triple] = len(self._edges)
            self._out[edge.source].append(len(self._edges))
            self._in[edge.target].append(len(self._edges))
            self._edges.append(edge)
            return True

    # -- copies and comparison
    def snapshot(self) -> KnowledgeGraph:
        with self._lock:
            g = KnowledgeGraph(copy.deepcopy(self.meta))
            g.root = self.root
            g._nodes = {k: copy.copy(v) for k, v in self._nodes.items()}
            g._edges = [copy.copy(e) for e in self._edges]
            g._edge_index = dict(self._edge_index)
            g._out = {k: list(v) for k, v in self._out.items()}
            g._in = {k: list(v) for k, v in self._in.items()}
        return g

    def structure(self) -> tuple:
        return (
            self.root,
            [n.to_dict() for n in self._nodes.values()],
            [e.to_dict() for e in self._edges],
            self.meta,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return self.structure() == other.structure()

    def __repr__(self) -> str:
        return f"<KnowledgeGraph nodes={len(self._nodes)} edges={len(self._edges)}>"


def add_state(g: KnowledgeGraph, node: StateNode) -> tuple[KnowledgeGraph, bool]:
    return g, g.add_state(node)


def add_transition(g: KnowledgeGraph, edge: TransitionEdge, target_node: StateNode | None = None) -> KnowledgeGraph:
    g.add_transition(edge, target_node)
    return g


def leaves(g: KnowledgeGraph) -> list[str]:
    return g.leaves()
