"""Lenient markup parsing and element selectors.

The parser is built on :mod:`html.parser` and tolerates unclosed tags,
stray end tags and missing ``<html>``/``<body>`` wrappers.  Selectors are
attribute-based child paths such as ``html > body > form#login > input[name="email"]``;
when a path matches more than one element a ``" @N"`` suffix (0-based
document-order index among the matches) disambiguates it.  The path part
is valid CSS, so a WebDriver client can use it directly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from html.parser import HTMLParser

from .errors import UnparseableMarkup

VOID_ELEMENTS = frozenset(
    "area base br col embed hr img input link meta param source track wbr".split()
)

TEXT_INPUT_TYPES = frozenset({"", "text", "email", "password", "search", "tel", "number", "url"})

_SIMPLE_ID = re.compile(r"^[A-Za-z_][A-Za-z0-9_-]*$")
_INDEX_SUFFIX = re.compile(r"^(.*) @(\d+)$")


@dataclass(eq=False)
class Element:
    tag: str
    attrs: dict[str, str]
    parent: Element | None = None
    children: list[Element] = field(default_factory=list)
    text_parts: list[str] = field(default_factory=list)
    order: int = 0

    def get(self, name: str, default: str | None = None) -> str | None:
        return self.attrs.get(name, default)

    @property
    def text(self) -> str:
        """Whitespace-collapsed text of this element and its descendants."""
        parts: list[str] = []

        def walk(e: Element) -> None:
            parts.extend(e.text_parts)
            for c in e.children:
                walk(c)

        walk(self)
        return " ".join(" ".join(parts).split())

    def ancestors(self) -> list[Element]:
        out = []
        p = self.parent
        while p is not None:
            out.append(p)
            p = p.parent
        return out

    def closest(self, tag: str) -> Element | None:
        for a in self.ancestors():
            if a.tag == tag:
                return a
        return None

    def step(self) -> str:
        """Selector step for this element alone."""
        s = self.tag
        ident = self.attrs.get("id")
        name = self.attrs.get("name")
        if ident:
            s += f"#{ident}" if _SIMPLE_ID.match(ident) else f'[id="{_quote(ident)}"]'
        elif name:
            s += f'[name="{_quote(name)}"]'
        return s

    def __repr__(self) -> str:
        return f"<Element {self.step()} #{self.order}>"


def _quote(v: str) -> str:
    return v.replace("\\", "\\\\").replace('"', '\\"')


class Document:
    """A parsed page: top-level elements plus a document-order element list."""

    def __init__(self, roots: list[Element], elements: list[Element]):
        self.roots = roots
        self.elements = elements
        self._paths: dict[int, str] | None = None

    def path_of(self, el: Element) -> str:
        if self._paths is None:
            self._paths = {}
            for e in self.elements:
                parent = self._paths.get(id(e.parent)) if e.parent is not None else None
                self._paths[id(e)] = f"{parent} > {e.step()}" if parent else e.step()
        return self._paths[id(el)]

    def selector_for(self, el: Element) -> str:
        """Unique selector for ``el``; appends a document-order index on ambiguity."""
        path = self.path_of(el)
        matches = [e for e in self.elements if self.path_of(e) == path]
        if len(matches) == 1:
            return path
        return f"{path} @{matches.index(el)}"

    def resolve(self, selector: str) -> list[Element]:
        """All elements matched by ``selector`` (at most one when indexed)."""
        m = _INDEX_SUFFIX.match(selector)
        base, index = (m.group(1), int(m.group(2))) if m else (selector, None)
        matches = [e for e in self.elements if self.path_of(e) == base]
        if index is None:
            return matches
        return [matches[index]] if index < len(matches) else []

    def find_all(self, *tags: str) -> list[Element]:
        return [e for e in self.elements if e.tag in tags]


class _TreeBuilder(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.roots: list[Element] = []
        self.elements: list[Element] = []
        self.stack: list[Element] = []

    def _new(self, tag: str, attrs: list[tuple[str, str | None]]) -> Element:
        parent = self.stack[-1] if self.stack else None
        el = Element(tag=tag.lower(), attrs={k.lower(): (v or "") for k, v in attrs},
                     parent=parent, order=len(self.elements))
        if parent is None:
            self.roots.append(el)
        else:
            parent.children.append(el)
        self.elements.append(el)
        return el

    def handle_starttag(self, tag, attrs):
        el = self._new(tag, attrs)
        if el.tag not in VOID_ELEMENTS:
            self.stack.append(el)

    def handle_startendtag(self, tag, attrs):
        self._new(tag, attrs)

    def handle_endtag(self, tag):
        tag = tag.lower()
        for i in range(len(self.stack) - 1, -1, -1):
            if self.stack[i].tag == tag:
                del self.stack[i:]
                return
        # stray end tag: ignored

    def handle_data(self, data):
        if self.stack and data.strip():
            self.stack[-1].text_parts.append(data)


def parse_markup(page_source: str) -> Document:
    """Parse markup leniently.

    Raises :class:`UnparseableMarkup` for empty or binary input, or when no
    element at all can be recovered.
    """
    if not isinstance(page_source, str) or not page_source.strip():
        raise UnparseableMarkup("empty page source")
    if "\x00" in page_source:
        raise UnparseableMarkup("page source looks binary (NUL bytes)")
    builder = _TreeBuilder()
    try:
        builder.feed(page_source)
        builder.close()
    except Exception as exc:  # html.parser is lenient; this is a last resort
        raise UnparseableMarkup(f"markup parser failed: {exc}") from exc
    if not builder.elements:
        raise UnparseableMarkup("no element structure found")
    return Document(builder.roots, builder.elements)


# -- CSS subset ---------------------------------------------------------------

_STEP = re.compile(
    r'^(?P<tag>[a-zA-Z][a-zA-Z0-9-]*|\*)?(?P<rest>(?:#[A-Za-z_][A-Za-z0-9_-]*|\[[a-zA-Z-]+="(?:[^"\\]|\\.)*"\])*)$'
)
_PART = re.compile(r'#(?P<id>[A-Za-z_][A-Za-z0-9_-]*)|\[(?P<k>[a-zA-Z-]+)="(?P<v>(?:[^"\\]|\\.)*)"\]')


def _parse_step(step: str) -> tuple[str | None, list[tuple[str, str]]]:
    m = _STEP.match(step.strip())
    if not m:
        raise ValueError(f"unsupported selector step: {step!r}")
    tag = m.group("tag")
    conds = []
    for p in _PART.finditer(m.group("rest") or ""):
        if p.group("id"):
            conds.append(("id", p.group("id")))
        else:
            conds.append((p.group("k"), re.sub(r"\\(.)", r"\1", p.group("v"))))
    return (None if tag in (None, "*") else tag.lower()), conds


def select_css(doc: Document, css: str) -> list[Element]:
    """Match the child-combinator CSS subset emitted by :meth:`Document.selector_for`.

    Supports ``tag``, ``#id`` and ``[attr="value"]`` steps joined by ``>``.
    A leading ``:root >`` is accepted.
    """
    text = css.strip()
    if text.startswith(":root"):
        text = text[len(":root"):].lstrip().lstrip(">")
    steps = [_parse_step(s) for s in text.split(">")]

    def ok(e: Element, step) -> bool:
        tag, conds = step
        if tag is not None and e.tag != tag:
            return False
        return all(e.attrs.get(k) == v for k, v in conds)

    out = []
    for e in doc.elements:
        chain = [e] + e.ancestors()
        if len(chain) != len(steps):
            continue
        if all(ok(el, st) for el, st in zip(chain, reversed(steps))):
            out.append(e)
    return out


def split_selector(selector: str) -> tuple[str, int]:
    """Split ``"css @N"`` into ``(css, N)``; unindexed selectors give index 0."""
    m = _INDEX_SUFFIX.match(selector)
    if m:
        return m.group(1), int(m.group(2))
    return selector, 0


def is_text_input(el: Element) -> bool:
    if el.tag == "textarea":
        return True
    return el.tag == "input" and (el.attrs.get("type") or "").lower() in TEXT_INPUT_TYPES
