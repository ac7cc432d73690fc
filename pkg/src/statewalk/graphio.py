"""Graph persistence: JSONGraph (normative), DOT and GraphML.

All three formats carry enough to rebuild the graph exactly, so
``loads(dumps(g, fmt), fmt) == g`` holds for each of them.
"""

from __future__ import annotations

import io
import json
import os
import re
import tempfile
import xml.etree.ElementTree as ET
from enum import Enum
from pathlib import Path
from typing import IO, Any

from .errors import MalformedGraphFile
from .graph import KnowledgeGraph, StateNode, TransitionEdge


class GraphFormat(str, Enum):
    JSON = "json"
    DOT = "dot"
    GRAPHML = "graphml"

    @classmethod
    def parse(cls, name: str) -> GraphFormat:
        n = name.lower()
        if n in ("jsongraph", "json"):
            return cls.JSON
        return cls(n)


def _build(root: str | None, nodes: list[dict], edges: list[dict], meta: dict) -> KnowledgeGraph:
    g = KnowledgeGraph(meta)
    for i, nd in enumerate(nodes):
        try:
            node = StateNode.from_dict(nd)
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedGraphFile(f"bad node #{i}: {exc}") from None
        if not g.add_state(node):
            raise MalformedGraphFile(f"duplicate node {node.digest[:12]}")
    if root is not None and root not in g:
        raise MalformedGraphFile(f"root {root[:12]} is not a node")
    g.root = root
    for i, ed in enumerate(edges):
        try:
            edge = TransitionEdge.from_dict(ed)
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedGraphFile(f"bad edge #{i}: {exc}") from None
        if edge.source not in g or edge.target not in g:
            raise MalformedGraphFile(f"edge #{i} references an unknown state")
        if not g.add_transition(edge):
            raise MalformedGraphFile(f"duplicate edge #{i}")
    return g


# -- JSONGraph ------------------------------------------------------------------

def to_json_dict(g: KnowledgeGraph) -> dict[str, Any]:
    return {
        "root": g.root,
        "nodes": [n.to_dict() for n in g.nodes],
        "edges": [e.to_dict() for e in g.edges],
        "meta": g.meta,
    }


def dumps_json(g: KnowledgeGraph) -> str:
    return json.dumps(to_json_dict(g), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def loads_json(text: str) -> KnowledgeGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedGraphFile(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise MalformedGraphFile("top level must be an object", 1, 1)
    missing = [k for k in ("root", "nodes", "edges", "meta") if k not in doc]
    if missing:
        raise MalformedGraphFile(f"missing keys: {', '.join(missing)}", 1, 1)
    return _build(doc["root"], doc["nodes"], doc["edges"], doc["meta"])


# -- DOT --------------------------------------------------------------------------

def _dot_quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def _dot_ids(g: KnowledgeGraph) -> dict[str, str]:
    shorts: dict[str, int] = {}
    for d in g.node_ids():
        shorts[d[:12]] = shorts.get(d[:12], 0) + 1
    return {d: (d[:12] if shorts[d[:12]] == 1 else d) for d in g.node_ids()}


def edge_label(e: TransitionEdge) -> str:
    desc = e.action.description or e.action.action_type.value
    return f"{desc} [{e.reward.value:g}]" if e.reward is not None else desc


def dumps_dot(g: KnowledgeGraph) -> str:
    ids = _dot_ids(g)
    out = ["digraph statewalk {"]
    out.append(f"  graph [root={_dot_quote(g.root or '')}, meta={_dot_quote(json.dumps(g.meta, sort_keys=True))}];")
    for n in g.nodes:
        attrs = {
            "label": n.fingerprint.url_path or n.digest[:12],
            "fingerprint": json.dumps(n.fingerprint.to_dict(), sort_keys=True),
            "first_seen_at": str(n.first_seen_at),
            "observation_ref": n.observation_ref or "",
            "visit_count": str(n.visit_count),
        }
        body = ", ".join(f"{k}={_dot_quote(v)}" for k, v in attrs.items())
        out.append(f"  {_dot_quote(ids[n.digest])} [{body}];")
    for e in g.edges:
        attrs = {
            "label": edge_label(e),
            "action": json.dumps(e.action.to_dict(), sort_keys=True, ensure_ascii=False),
            "reward": json.dumps(e.reward.to_dict(), sort_keys=True) if e.reward else "",
            "attempts": str(e.attempts),
            "first_failed": "true" if e.first_failed else "false",
        }
        body = ", ".join(f"{k}={_dot_quote(v)}" for k, v in attrs.items())
        out.append(f"  {_dot_quote(ids[e.source])} -> {_dot_quote(ids[e.target])} [{body}];")
    out.append("}")
    return "\n".join(out) + "\n"


_DOT_TOKEN = re.compile(
    r'(?P<ws>[ \t\r\n]+)|(?P<comment>//[^\n]*|#[^\n]*|/\*.*?\*/)'
    r'|(?P<str>"(?:[^"\\]|\\.)*")|(?P<arrow>->)|(?P<id>[A-Za-z0-9_.]+)|(?P<sym>[{}\[\];,=])',
    re.S,
)


def _dot_tokens(text: str):
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _DOT_TOKEN.match(text, pos)
        if not m:
            raise MalformedGraphFile(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        value = m.group()
        col = pos - line_start + 1
        if kind not in ("ws", "comment"):
            if kind == "str":
                value = re.sub(r"\\(.)", lambda mm: "\n" if mm.group(1) == "n" else mm.group(1), value[1:-1])
                kind = "id"
            yield kind, value, line, col
        nl = value.count("\n") if kind in ("ws", "comment") else m.group().count("\n")
        if nl:
            line += nl
            line_start = pos + m.group().rfind("\n") + 1
        pos = m.end()
    yield "eof", "", line, pos - line_start + 1


class _DotParser:
    def __init__(self, text: str):
        self.toks = list(_dot_tokens(text))
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, kind: str | None = None, value: str | None = None):
        tok = self.toks[self.i]
        if (kind and tok[0] != kind) or (value is not None and tok[1] != value):
            want = value or kind
            raise MalformedGraphFile(f"expected {want!r}, found {tok[1] or tok[0]!r}", tok[2], tok[3])
        self.i += 1
        return tok

    def attrs(self) -> dict[str, str]:
        out: dict[str, str] = {}
        if self.peek()[1] != "[":
            return out
        self.take("sym", "[")
        while self.peek()[1] != "]":
            k = self.take("id")[1]
            self.take("sym", "=")
            out[k] = self.take("id")[1]
            if self.peek()[1] in (",", ";"):
                self.i += 1
        self.take("sym", "]")
        return out

    def parse(self):
        tok = self.take("id")
        if tok[1].lower() == "strict":
            tok = self.take("id")
        if tok[1].lower() != "digraph":
            raise MalformedGraphFile("only 'digraph' graphs are supported", tok[2], tok[3])
        if self.peek()[0] == "id":
            self.i += 1
        self.take("sym", "{")
        graph_attrs: dict[str, str] = {}
        nodes: list[tuple[str, dict, tuple]] = []
        edges: list[tuple[str, str, dict, tuple]] = []
        while self.peek()[1] != "}":
            if self.peek()[0] == "eof":
                t = self.peek()
                raise MalformedGraphFile("unterminated graph body", t[2], t[3])
            head = self.take("id")
            if head[1] in ("graph", "node", "edge") and self.peek()[1] == "[":
                a = self.attrs()
                if head[1] == "graph":
                    graph_attrs.update(a)
            elif self.peek()[0] == "arrow":
                self.take("arrow")
                tail = self.take("id")
                edges.append((head[1], tail[1], self.attrs(), head[2:]))
            elif self.peek()[1] == "=":
                self.take("sym", "=")
                graph_attrs[head[1]] = self.take("id")[1]
            else:
                nodes.append((head[1], self.attrs(), head[2:]))
            if self.peek()[1] == ";":
                self.i += 1
        self.take("sym", "}")
        return graph_attrs, nodes, edges


def _json_attr(raw: str, what: str, where: tuple) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedGraphFile(f"bad {what} attribute: {exc.msg}", *where) from None


def loads_dot(text: str) -> KnowledgeGraph:
    graph_attrs, raw_nodes, raw_edges = _DotParser(text).parse()
    ids: dict[str, str] = {}
    nodes = []
    for nid, a, where in raw_nodes:
        if "fingerprint" not in a:
            raise MalformedGraphFile(f"node {nid!r} lacks a fingerprint attribute", *where)
        fp = _json_attr(a["fingerprint"], "fingerprint", where)
        ids[nid] = fp["digest"]
        nodes.append({
            "fingerprint": fp,
            "first_seen_at": int(a.get("first_seen_at", "0")),
            "observation_ref": a.get("observation_ref") or None,
            "visit_count": int(a.get("visit_count", "1")),
        })
    edges = []
    for src, dst, a, where in raw_edges:
        if src not in ids or dst not in ids:
            raise MalformedGraphFile(f"edge {src} -> {dst} references an undeclared node", *where)
        if "action" not in a:
            raise MalformedGraphFile("edge lacks an action attribute", *where)
        edges.append({
            "from": ids[src],
            "to": ids[dst],
            "action": _json_attr(a["action"], "action", where),
            "reward": _json_attr(a["reward"], "reward", where) if a.get("reward") else None,
            "attempts": int(a.get("attempts", "1")),
            "first_failed": a.get("first_failed", "false") == "true",
        })
    meta = json.loads(graph_attrs["meta"]) if graph_attrs.get("meta") else {}
    return _build(graph_attrs.get("root") or None, nodes, edges, meta)


# -- GraphML ----------------------------------------------------------------------

_GML_NS = "http://graphml.graphdrawing.org/xmlns"
_NODE_KEYS = ("fingerprint", "first_seen_at", "observation_ref", "visit_count")
_EDGE_KEYS = ("label", "action", "reward", "attempts", "first_failed")


def dumps_graphml(g: KnowledgeGraph) -> str:
    ET.register_namespace("", _GML_NS)
    root = ET.Element(f"{{{_GML_NS}}}graphml")
    for k in ("root", "meta"):
        ET.SubElement(root, f"{{{_GML_NS}}}key", {"id": k, "for": "graph", "attr.name": k, "attr.type": "string"})
    for k in _NODE_KEYS:
        ET.SubElement(root, f"{{{_GML_NS}}}key", {"id": k, "for": "node", "attr.name": k, "attr.type": "string"})
    for k in _EDGE_KEYS:
        ET.SubElement(root, f"{{{_GML_NS}}}key", {"id": f"e_{k}", "for": "edge", "attr.name": k, "attr.type": "string"})
    graph = ET.SubElement(root, f"{{{_GML_NS}}}graph", {"id": "G", "edgedefault": "directed"})

    def data(parent, key, value):
        d = ET.SubElement(parent, f"{{{_GML_NS}}}data", {"key": key})
        d.text = value

    data(graph, "root", g.root or "")
    data(graph, "meta", json.dumps(g.meta, sort_keys=True))
    for n in g.nodes:
        el = ET.SubElement(graph, f"{{{_GML_NS}}}node", {"id": n.digest})
        data(el, "fingerprint", json.dumps(n.fingerprint.to_dict(), sort_keys=True))
        data(el, "first_seen_at", str(n.first_seen_at))
        data(el, "observation_ref", n.observation_ref or "")
        data(el, "visit_count", str(n.visit_count))
    for i, e in enumerate(g.edges):
        el = ET.SubElement(graph, f"{{{_GML_NS}}}edge", {"id": f"e{i}", "source": e.source, "target": e.target})
        data(el, "e_label", edge_label(e))
        data(el, "e_action", json.dumps(e.action.to_dict(), sort_keys=True, ensure_ascii=False))
        data(el, "e_reward", json.dumps(e.reward.to_dict(), sort_keys=True) if e.reward else "")
        data(el, "e_attempts", str(e.attempts))
        data(el, "e_first_failed", "true" if e.first_failed else "false")
    ET.indent(root)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def loads_graphml(text: str) -> KnowledgeGraph:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        line, col = exc.position
        raise MalformedGraphFile(f"invalid XML: {exc}", line, col + 1) from None
    ns = {"g": _GML_NS}
    graph = root.find("g:graph", ns)
    if graph is None:
        raise MalformedGraphFile("no <graph> element")

    def datamap(el) -> dict[str, str]:
        return {d.get("key"): (d.text or "") for d in el.findall("g:data", ns)}

    gd = datamap(graph)
    nodes = []
    for el in graph.findall("g:node", ns):
        d = datamap(el)
        try:
            nodes.append({
                "fingerprint": json.loads(d["fingerprint"]),
                "first_seen_at": int(d.get("first_seen_at") or 0),
                "observation_ref": d.get("observation_ref") or None,
                "visit_count": int(d.get("visit_count") or 1),
            })
        except (KeyError, ValueError) as exc:
            raise MalformedGraphFile(f"bad node {el.get('id')}: {exc}") from None
    edges = []
    for el in graph.findall("g:edge", ns):
        d = datamap(el)
        try:
            edges.append({
                "from": el.get("source"),
                "to": el.get("target"),
                "action": json.loads(d["e_action"]),
                "reward": json.loads(d["e_reward"]) if d.get("e_reward") else None,
                "attempts": int(d.get("e_attempts") or 1),
                "first_failed": d.get("e_first_failed") == "true",
            })
        except (KeyError, ValueError) as exc:
            raise MalformedGraphFile(f"bad edge {el.get('id')}: {exc}") from None
    meta = json.loads(gd["meta"]) if gd.get("meta") else {}
    return _build(gd.get("root") or None, nodes, edges, meta)


# -- front door ---------------------------------------------------------------------

_DUMP = {GraphFormat.JSON: dumps_json, GraphFormat.DOT: dumps_dot, GraphFormat.GRAPHML: dumps_graphml}
_LOAD = {GraphFormat.JSON: loads_json, GraphFormat.DOT: loads_dot, GraphFormat.GRAPHML: loads_graphml}


def dumps(g: KnowledgeGraph, fmt: GraphFormat | str = GraphFormat.JSON) -> str:
    return _DUMP[GraphFormat.parse(fmt) if isinstance(fmt, str) else fmt](g.snapshot())


def loads(text: str, fmt: GraphFormat | str = GraphFormat.JSON) -> KnowledgeGraph:
    return _LOAD[GraphFormat.parse(fmt) if isinstance(fmt, str) else fmt](text)


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def export(g: KnowledgeGraph, fmt: GraphFormat | str, sink: str | os.PathLike | IO[str]) -> None:
    text = dumps(g, fmt)
    if isinstance(sink, (str, os.PathLike)):
        atomic_write_text(sink, text)
    else:
        sink.write(text)


def import_graph(source: str | os.PathLike | IO[str], fmt: GraphFormat | str = GraphFormat.JSON) -> KnowledgeGraph:
    if isinstance(source, (str, os.PathLike)):
        text = Path(source).read_text(encoding="utf-8")
    elif isinstance(source, io.TextIOBase) or hasattr(source, "read"):
        text = source.read()
    else:
        raise TypeError("source must be a path or a readable text stream")
    return loads(text, fmt)


def load_graph(path: str | os.PathLike) -> KnowledgeGraph:
    return import_graph(path, GraphFormat.JSON)


def save_graph(g: KnowledgeGraph, path: str | os.PathLike) -> None:
    export(g, GraphFormat.JSON, path)
