"""Deterministic in-process simulated web applications.

A SimApp is a small state machine whose states render to HTML pages with
links, buttons, forms and search boxes.  Session variables (cart contents,
delivery zip, login) alter what a page renders, so one URL can show several
distinct states.  Everything is a pure function of (spec, seed, action
sequence), which makes the fixtures usable as ground truth.

File format (YAML, extension ``.simapp``)::

    name: shop
    origin: http://shop.sim
    start: home
    vars: {cart: "", user: ""}
    cookies: {auth: "user != ''"}          # cookie present while guard holds
    seed: 5                                 # drives flakiness and choices
    flakiness: {probability: 0.3, actions: ["submit:*"]}
    costs: {Navigate: 120, Click: 150}      # synthetic milliseconds
    states:
      home:
        url: /
        title: Home
        elements:
          - {heading: "Welcome"}
          - {link: "Catalog", href: /catalog}
          - {button: "Promo", id: promo}
          - {form: login, action: /login, fields: [{name: email, type: email}], submit: "Sign in"}
          - {search: q}
          - {text: "Cart: {cart}", when: "cart != ''"}
        on:
          click:promo: {to: promo}
          submit:login: {to: dash, set: {user: "$email"}}
          key:q: [{to: results, guard: "cart == ''"}, {to: other}]

Action keys are ``nav:<path>`` (implicit, via URL routing), ``click:<id>``,
``submit:<form id>``, ``fill:<field>``, ``key:<field>`` and
``event:<id>:<event>``.  ``set`` values starting with ``$`` copy a submitted
field (``$text`` is the typed text of a key input).  ``to`` may be a list,
in which case the target is drawn from the seeded session RNG.
"""

from __future__ import annotations

import ast
import fnmatch
import hashlib
import html
import random
import threading
from collections import deque
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping
from urllib.parse import urljoin, urlsplit

import yaml

from .dom import Element, is_text_input, parse_markup
from .errors import DriverError, SpecValidationError
from .state import Action, ActionType, Observation
from .values import ValueDictionary

DEFAULT_COSTS_MS = {
    "Navigate": 120, "Click": 150, "FillField": 40, "SubmitForm": 300,
    "KeyInput": 200, "ScriptEvent": 30, "observe": 20, "reset": 200,
}
_ELEMENT_KINDS = ("heading", "text", "link", "button", "hover", "form", "search", "section", "list")


# -- guards -------------------------------------------------------------------------

_ALLOWED = (ast.Expression, ast.BoolOp, ast.And, ast.Or, ast.UnaryOp, ast.Not, ast.Compare,
            ast.Eq, ast.NotEq, ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.In, ast.NotIn,
            ast.Name, ast.Load, ast.Constant, ast.Tuple, ast.List)


class Guard:
    """A boolean expression over session variables (comparisons, and/or/not)."""

    def __init__(self, source: str):
        self.source = source
        try:
            self._tree = ast.parse(source, mode="eval")
        except SyntaxError as exc:
            raise ValueError(f"bad guard {source!r}: {exc.msg}") from None
        for node in ast.walk(self._tree):
            if not isinstance(node, _ALLOWED):
                raise ValueError(f"bad guard {source!r}: {type(node).__name__} not allowed")
        self.names = frozenset(n.id for n in ast.walk(self._tree) if isinstance(n, ast.Name))

    def __call__(self, env: Mapping[str, Any]) -> bool:
        return bool(self._eval(self._tree.body, env))

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, ast.Name):
            return env[node.id]
        if isinstance(node, (ast.Tuple, ast.List)):
            return tuple(self._eval(e, env) for e in node.elts)
        if isinstance(node, ast.UnaryOp):
            return not self._eval(node.operand, env)
        if isinstance(node, ast.BoolOp):
            vals = (self._eval(v, env) for v in node.values)
            return all(vals) if isinstance(node.op, ast.And) else any(vals)
        if isinstance(node, ast.Compare):
            left = self._eval(node.left, env)
            for op, comp in zip(node.ops, node.comparators):
                right = self._eval(comp, env)
                ok = {
                    ast.Eq: lambda a, b: a == b, ast.NotEq: lambda a, b: a != b,
                    ast.Lt: lambda a, b: a < b, ast.LtE: lambda a, b: a <= b,
                    ast.Gt: lambda a, b: a > b, ast.GtE: lambda a, b: a >= b,
                    ast.In: lambda a, b: a in b, ast.NotIn: lambda a, b: a not in b,
                }[type(op)](left, right)
                if not ok:
                    return False
                left = right
            return True
        raise ValueError(f"unsupported guard node {type(node).__name__}")

    def __repr__(self) -> str:
        return f"Guard({self.source!r})"


# -- spec types ------------------------------------------------------------------------

@dataclass(frozen=True)
class ElementSpec:
    kind: str
    props: Mapping[str, Any]
    when: Guard | None = None
    children: tuple[ElementSpec, ...] = ()


@dataclass(frozen=True)
class TransitionSpec:
    to: tuple[str, ...]
    guard: Guard | None = None
    effects: tuple[tuple[str, Any], ...] = ()


@dataclass(frozen=True)
class StateSpec:
    id: str
    url: str
    title: str = ""
    when: Guard | None = None
    aliases: tuple[str, ...] = ()
    status: int = 200
    elements: tuple[ElementSpec, ...] = ()
    on: Mapping[str, tuple[TransitionSpec, ...]] = field(default_factory=dict)

    @property
    def path(self) -> str:
        return urlsplit(self.url).path or "/"


@dataclass(frozen=True)
class Flakiness:
    probability: float
    actions: tuple[str, ...] = ("*",)

    def affects(self, key: str) -> bool:
        return any(fnmatch.fnmatchcase(key, p) for p in self.actions)


@dataclass(frozen=True)
class SimAppSpec:
    name: str
    origin: str
    start: str
    states: Mapping[str, StateSpec]
    vars: Mapping[str, Any] = field(default_factory=dict)
    cookies: Mapping[str, Guard] = field(default_factory=dict)
    flakiness: Flakiness | None = None
    costs: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_COSTS_MS))
    seed: int = 0

    @property
    def start_url(self) -> str:
        return self.origin + self.states[self.start].url.split("{", 1)[0]

    def with_transition(self, state: str, key: str, to: str) -> SimAppSpec:
        """Copy of this spec where ``key`` in ``state`` leads unconditionally to ``to``."""
        st = self.states[state]
        old = st.on.get(key, ())
        effects = old[0].effects if old else ()
        on = dict(st.on)
        on[key] = (TransitionSpec((to,), None, effects),)
        states = dict(self.states)
        states[state] = replace(st, on=on)
        return replace(self, states=states)


# -- loading ----------------------------------------------------------------------------

def _guard(src: Any, where: str, declared: Iterable[str], errors: list[str]) -> Guard | None:
    if src is None:
        return None
    try:
        g = Guard(str(src))
    except ValueError as exc:
        errors.append(f"{where}: {exc}")
        return None
    unknown = sorted(g.names - set(declared))
    if unknown:
        errors.append(f"{where}: guard references undeclared session var(s) {', '.join(unknown)}")
    return g


def _element(raw: Any, where: str, declared, errors: list[str]) -> ElementSpec | None:
    if not isinstance(raw, Mapping):
        errors.append(f"{where}: element must be a mapping")
        return None
    kinds = [k for k in _ELEMENT_KINDS if k in raw]
    if len(kinds) != 1:
        errors.append(f"{where}: element needs exactly one of {', '.join(_ELEMENT_KINDS)}")
        return None
    kind = kinds[0]
    props = {k: v for k, v in raw.items() if k not in ("when", "children")}
    children: list[ElementSpec] = []
    if kind == "section":
        for i, c in enumerate(raw.get("children") or []):
            el = _element(c, f"{where}.children[{i}]", declared, errors)
            if el:
                children.append(el)
    if kind in ("button", "hover") and not raw.get("id"):
        errors.append(f"{where}: {kind} needs an id")
    if kind == "link" and "href" not in raw:
        errors.append(f"{where}: link needs an href")
    if kind == "form":
        if not raw.get("form"):
            errors.append(f"{where}: form needs an id")
        for j, f in enumerate(raw.get("fields") or []):
            if not isinstance(f, Mapping) or "name" not in f:
                errors.append(f"{where}.fields[{j}]: field needs a name")
    return ElementSpec(kind, props, _guard(raw.get("when"), where, declared, errors), tuple(children))


def _walk(elements: Iterable[ElementSpec]) -> Iterable[ElementSpec]:
    for e in elements:
        yield e
        yield from _walk(e.children)


def parse_spec(doc: Mapping[str, Any]) -> SimAppSpec:
    """Validate a decoded spec document; all problems are reported together."""
    errors: list[str] = []
    if not isinstance(doc, Mapping):
        raise SpecValidationError(["top level must be a mapping"])
    for key in ("name", "states", "start"):
        if key not in doc:
            errors.append(f"missing required key '{key}'")
    declared = dict(doc.get("vars") or {})
    origin = str(doc.get("origin") or "http://app.sim").rstrip("/")
    raw_states = doc.get("states") or {}
    if not isinstance(raw_states, Mapping) or not raw_states:
        errors.append("states must be a non-empty mapping")
        raw_states = {}

    states: dict[str, StateSpec] = {}
    for sid, raw in raw_states.items():
        where = f"states.{sid}"
        if not isinstance(raw, Mapping):
            errors.append(f"{where}: must be a mapping")
            continue
        if "url" not in raw:
            errors.append(f"{where}: missing url")
        elements = []
        for i, e in enumerate(raw.get("elements") or []):
            el = _element(e, f"{where}.elements[{i}]", declared, errors)
            if el:
                elements.append(el)
        on: dict[str, tuple[TransitionSpec, ...]] = {}
        # YAML 1.1 reads a bare `on:` key as boolean True
        for key, tr in (raw.get("on") or raw.get(True) or {}).items():
            alts = tr if isinstance(tr, list) else [tr]
            parsed = []
            for j, alt in enumerate(alts):
                w = f"{where}.on[{key}][{j}]"
                if not isinstance(alt, Mapping) or "to" not in alt:
                    errors.append(f"{w}: transition needs a 'to'")
                    continue
                to = alt["to"]
                targets = tuple(to) if isinstance(to, list) else (to,)
                effects = tuple((alt.get("set") or {}).items())
                for var, _ in effects:
                    if var not in declared:
                        errors.append(f"{w}: sets undeclared session var '{var}'")
                parsed.append(TransitionSpec(targets, _guard(alt.get("guard"), w, declared, errors), effects))
            on[str(key)] = tuple(parsed)
        states[str(sid)] = StateSpec(
            id=str(sid), url=str(raw.get("url", "/")), title=str(raw.get("title", sid)),
            when=_guard(raw.get("when"), where, declared, errors),
            aliases=tuple(raw.get("aliases") or ()), status=int(raw.get("status", 200)),
            elements=tuple(elements), on=on,
        )

    for sid, st in states.items():
        for key, alts in st.on.items():
            for alt in alts:
                for t in alt.to:
                    if t not in states:
                        errors.append(f"states.{sid}.on[{key}]: transition target '{t}' does not exist")
        for el in _walk(st.elements):
            if el.kind == "link":
                href = str(el.props["href"])
                if "{" not in href and urlsplit(href).netloc in ("", urlsplit(origin).netloc):
                    if _route(states, urlsplit(href).path or "/", declared, check_guard=False) is None:
                        errors.append(f"states.{sid}: link '{href}' routes to no state")

    start = str(doc.get("start", ""))
    if states and start not in states:
        errors.append(f"start state '{start}' does not exist")

    cookies = {}
    for name, src in (doc.get("cookies") or {}).items():
        g = _guard(src, f"cookies.{name}", declared, errors)
        if g:
            cookies[str(name)] = g

    flaky = None
    if doc.get("flakiness"):
        f = doc["flakiness"]
        p = float(f.get("probability", 0))
        if not 0 <= p < 1:
            errors.append("flakiness.probability must be in [0, 1)")
        flaky = Flakiness(p, tuple(f.get("actions") or ("*",)))

    costs = dict(DEFAULT_COSTS_MS)
    for k, v in (doc.get("costs") or {}).items():
        if not isinstance(v, (int, float)) or v < 0:
            errors.append(f"costs.{k}: must be a non-negative number")
        else:
            costs[str(k)] = int(v)

    if errors:
        raise SpecValidationError(errors)
    seed = doc.get("seed", (doc.get("flakiness") or {}).get("seed", 0))
    if not isinstance(seed, int):
        raise SpecValidationError(["seed must be an integer"])
    return SimAppSpec(str(doc["name"]), origin, start, states, declared, cookies, flaky, costs, seed)


def load_spec(source: str | Path) -> SimAppSpec:
    """Load a spec from a file path, bundled fixture name, or YAML text."""
    text: str
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        path = Path(source)
        if not path.exists():
            path = fixture_path(str(source))
        text = path.read_text(encoding="utf-8")
    else:
        text = source
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SpecValidationError([f"YAML error: {exc}"]) from None
    return parse_spec(doc)


def fixture_names() -> list[str]:
    return sorted(p.name[:-len(".simapp")] for p in resources.files("statewalk.fixtures").iterdir()
                  if p.name.endswith(".simapp"))


def fixture_path(name: str) -> Path:
    stem = name[:-len(".simapp")] if name.endswith(".simapp") else name
    p = resources.files("statewalk.fixtures") / f"{Path(stem).name}.simapp"
    if not p.is_file():
        raise FileNotFoundError(f"no simapp file or bundled fixture named {name!r}")
    return Path(str(p))


# -- sessions and semantics -------------------------------------------------------------------

@dataclass(frozen=True)
class SimSession:
    """Pure session value.

    ``counter`` counts performed actions and seeds choice draws;
    ``flake_cursor`` indexes the flakiness schedule.  Both survive resets so
    a replay after reset draws fresh values from the same seeded streams.
    """

    state: str
    vars: tuple[tuple[str, Any], ...]
    counter: int = 0
    flake_cursor: int = 0
    resets: int = 0

    @property
    def env(self) -> dict[str, Any]:
        return dict(self.vars)


def initial_session(spec: SimAppSpec, previous: SimSession | None = None) -> SimSession:
    base = tuple(sorted(spec.vars.items()))
    if previous is None:
        return SimSession(spec.start, base)
    return SimSession(spec.start, base, previous.counter, previous.flake_cursor, previous.resets + 1)


def _route(states: Mapping[str, StateSpec], path: str, env: Mapping[str, Any], check_guard: bool = True) -> str | None:
    path = path.rstrip("/") or "/"
    for sid, st in states.items():
        paths = {(st.path.rstrip("/") or "/")} | {(a.rstrip("/") or "/") for a in st.aliases}
        if path in paths and (not check_guard or st.when is None or st.when(env)):
            return sid
    return None


_SCHEDULES: dict[tuple[int, float], list[bool]] = {}
_SCHEDULE_LOCK = threading.Lock()
_SCHEDULE_CHUNK = 4096


def flake_schedule(seed: int, probability: float, upto: int) -> list[bool]:
    """Pre-computed failure schedule: entry i says whether flaky attempt i fails."""
    key = (seed, probability)
    with _SCHEDULE_LOCK:
        sched = _SCHEDULES.setdefault(key, [])
        if len(sched) <= upto:
            rng = random.Random(seed)
            # regenerate from scratch so extension is independent of call history
            n = (upto // _SCHEDULE_CHUNK + 1) * _SCHEDULE_CHUNK
            sched[:] = [rng.random() < probability for _ in range(n)]
        return sched


class TransientFailure(DriverError):
    pass


def _resolve_value(v: Any, payload: Mapping[str, str]) -> Any:
    if isinstance(v, str) and v.startswith("$"):
        return payload.get(v[1:], "")
    return v


def step(spec: SimAppSpec, session: SimSession, key: str,
         payload: Mapping[str, str] | None = None, flaky: bool = True) -> SimSession:
    """Apply one sim-level action.

    Raises :class:`TransientFailure` when the flakiness schedule says this
    attempt fails; the session is left unchanged in that case (the caller
    keeps the old value).
    """
    payload = dict(payload or {})
    cursor = session.flake_cursor
    if flaky and spec.flakiness and spec.flakiness.probability > 0 and spec.flakiness.affects(key):
        sched = flake_schedule(spec.seed, spec.flakiness.probability, cursor)
        if sched[cursor]:
            raise TransientFailure(f"transient failure on {key} (schedule slot {cursor})")
        cursor += 1
    env = session.env
    nxt = replace(session, counter=session.counter + 1, flake_cursor=cursor)
    if key.startswith("nav:"):
        target = _route(spec.states, urlsplit(key[4:]).path or "/", env)
        return replace(nxt, state=target if target is not None else f"__404__:{urlsplit(key[4:]).path}")
    st = spec.states.get(session.state)
    if st is None:
        return nxt
    for alt in st.on.get(key, ()):
        if alt.guard is None or alt.guard(env):
            if len(alt.to) == 1:
                target = alt.to[0]
            else:
                target = random.Random(f"{spec.seed}:{session.counter}").choice(alt.to)
            for var, value in alt.effects:
                env[var] = _resolve_value(value, payload)
            return replace(nxt, state=target, vars=tuple(sorted(env.items())))
    return nxt


def _flake_consumed(spec: SimAppSpec, session: SimSession, key: str) -> SimSession:
    """Session after a failed flaky attempt: the schedule slot is used up."""
    return replace(session, flake_cursor=session.flake_cursor + 1)


# -- rendering --------------------------------------------------------------------------------

class _Fmt(dict):
    def __missing__(self, k):
        return "{" + k + "}"


def _interp(text: Any, env: Mapping[str, Any]) -> str:
    return str(text).format_map(_Fmt({k: ("" if v is None else v) for k, v in env.items()}))


def _visible(el: ElementSpec, env) -> bool:
    return el.when is None or el.when(env)


def _render_el(el: ElementSpec, env, out: list[str]) -> None:
    if not _visible(el, env):
        return
    p = el.props
    esc = html.escape
    if el.kind == "heading":
        out.append(f"<h1>{esc(_interp(p['heading'], env))}</h1>")
    elif el.kind == "text":
        out.append(f"<p>{esc(_interp(p['text'], env))}</p>")
    elif el.kind == "link":
        ident = f' id="{esc(str(p["id"]))}"' if p.get("id") else ""
        out.append(f'<a href="{esc(_interp(p["href"], env))}"{ident}>{esc(_interp(p["link"], env))}</a>')
    elif el.kind == "button":
        events = "".join(f' on{esc(ev)}="return app.on(this)"' for ev in p.get("events") or ())
        out.append(f'<button type="button" id="{esc(str(p["id"]))}"{events}>{esc(_interp(p["button"], env))}</button>')
    elif el.kind == "hover":
        events = p.get("events") or ("mouseover",)
        attrs = "".join(f' on{esc(ev)}="return app.tip(this)"' for ev in events)
        out.append(f'<span id="{esc(str(p["id"]))}"{attrs}>{esc(_interp(p["hover"], env))}</span>')
    elif el.kind == "form":
        out.append(f'<form id="{esc(str(p["form"]))}" action="{esc(str(p.get("action", "")))}" method="post">')
        for f in p.get("fields") or ():
            typ = esc(str(f.get("type", "text")))
            label = esc(str(f.get("label", f["name"])))
            out.append(f'<label>{label} <input type="{typ}" name="{esc(str(f["name"]))}"></label>')
        out.append(f'<button type="submit">{esc(str(p.get("submit", "Submit")))}</button></form>')
    elif el.kind == "search":
        ph = esc(str(p.get("placeholder", "Search")))
        out.append(f'<input type="search" name="{esc(str(p["search"]))}" placeholder="{ph}">')
    elif el.kind == "section":
        ident = f' id="{esc(str(p["section"]))}"' if p.get("section") else ""
        out.append(f"<div{ident}>")
        for c in el.children:
            _render_el(c, env, out)
        out.append("</div>")
    elif el.kind == "list":
        out.append("<ul>" + "".join(f"<li>{esc(_interp(i, env))}</li>" for i in p["list"]) + "</ul>")


def session_token(spec: SimAppSpec, session: SimSession) -> str:
    return hashlib.sha256(f"{spec.name}:{spec.seed}:{session.resets}".encode()).hexdigest()[:24]


def render(spec: SimAppSpec, session: SimSession, captured_at: int = 0,
           extra_metadata: Mapping[str, str] | None = None) -> Observation:
    """Render the session's current page as an Observation."""
    env = session.env
    token = session_token(spec, session)
    if session.state.startswith("__404__:"):
        path = session.state.split(":", 1)[1]
        body = "<main id=\"not-found\"><h1>Not found</h1></main>"
        url, status, title = spec.origin + path, 404, "Not found"
    else:
        st = spec.states[session.state]
        parts: list[str] = []
        for el in st.elements:
            _render_el(el, env, parts)
        body = f'<main id="page-{html.escape(st.id)}">' + "".join(parts) + "</main>"
        url, status, title = spec.origin + _interp(st.url, env), st.status, _interp(st.title, env)
    source = (
        "<!DOCTYPE html>\n<html><head>"
        f"<title>{html.escape(title)}</title>"
        f'<meta name="csrf-token" content="{token}">'
        f"</head><body>{body}</body></html>\n"
    )
    cookies = sorted(n for n, g in spec.cookies.items() if g(env))
    metadata = {
        "url": url,
        "status": str(status),
        "cookies": ",".join(cookies),
        "session_token": token,
    }
    if extra_metadata:
        metadata.update(extra_metadata)
    digest = hashlib.sha256(source.encode("utf-8")).hexdigest()
    return Observation(source, metadata, digest, captured_at)


# -- DOM action -> sim key -----------------------------------------------------------------------

def sim_key_for(action: Action, element: Element, current_url: str) -> tuple[str, dict[str, str]]:
    """Translate a DOM-level action on ``element`` into a sim action key and payload."""
    t = action.action_type
    if t is ActionType.NAVIGATE:
        return "nav:" + urljoin(current_url, str(action.payload)), {}
    if t is ActionType.CLICK:
        ident = element.get("id")
        if not ident:
            raise DriverError(f"element {element.step()} is not clickable")
        return f"click:{ident}", {}
    if t is ActionType.SUBMIT_FORM:
        form = element if element.tag == "form" else element.closest("form")
        if form is None or not form.get("id"):
            raise DriverError("submit target is not inside an identifiable form")
        return f"submit:{form.get('id')}", action.payload_map
    if t is ActionType.FILL_FIELD:
        return f"fill:{element.get('name', '')}", {element.get("name", ""): str(action.payload)}
    if t is ActionType.KEY_INPUT:
        pm = action.payload_map
        text = pm.get("text", str(action.payload) if isinstance(action.payload, str) else "")
        return f"key:{element.get('name', '')}", {"text": text, element.get("name", ""): text}
    if t is ActionType.SCRIPT_EVENT:
        return f"event:{element.get('id', '')}:{action.payload}", {}
    raise DriverError(f"unsupported action type {t}")


# -- driver -------------------------------------------------------------------------------------------

class SimDriver:
    """AppDriver over a SimApp, with a synthetic millisecond clock."""

    def __init__(self, spec: SimAppSpec, seed: int | None = None, start_url: str | None = None):
        self.spec = spec if seed is None else replace(spec, seed=seed)
        self.start_url = start_url
        self._lock = threading.RLock()
        self._clock_ms = 0
        self.session = self._fresh(None)

    def _fresh(self, previous: SimSession | None) -> SimSession:
        s = initial_session(self.spec, previous)
        if self.start_url is not None:
            target = _route(self.spec.states, urlsplit(self.start_url).path or "/", s.env)
            s = replace(s, state=target if target is not None else f"__404__:{urlsplit(self.start_url).path}")
        return s

    def _tick(self, what: str) -> None:
        self._clock_ms += int(self.spec.costs.get(what, DEFAULT_COSTS_MS.get(what, 0)))

    def clock(self) -> int:
        return self._clock_ms

    def reset(self) -> None:
        with self._lock:
            self._tick("reset")
            self.session = self._fresh(self.session)

    def navigate(self, url: str) -> None:
        with self._lock:
            self._tick("Navigate")
            self.session = step(self.spec, self.session, "nav:" + url)

    def observe(self) -> Observation:
        with self._lock:
            self._tick("observe")
            return render(self.spec, self.session, self._clock_ms)

    def perform(self, action: Action) -> None:
        with self._lock:
            self._tick(action.action_type.value)
            obs = render(self.spec, self.session)
            doc = parse_markup(obs.page_source)
            matches = doc.resolve(action.target_selector)
            if len(matches) != 1:
                raise DriverError(f"stale or ambiguous selector: {action.target_selector}")
            el = matches[0]
            if action.action_type is ActionType.FILL_FIELD and not is_text_input(el):
                raise DriverError("fill target is not a text input")
            key, payload = sim_key_for(action, el, obs.url)
            try:
                self.session = step(self.spec, self.session, key, payload)
            except TransientFailure:
                self.session = _flake_consumed(self.spec, self.session, key)
                raise

    def fetch(self, url: str, user_agent: str | None = None) -> Observation:
        """Render ``url`` in a pristine session without touching the live one."""
        with self._lock:
            self._tick("Navigate")
            self._tick("observe")
            now = self._clock_ms
        # plain page loads model the crawler's HTTP fetches, which are not flaky
        s = step(self.spec, initial_session(self.spec), "nav:" + url, flaky=False)
        extra = {"user_agent": user_agent} if user_agent else None
        return render(self.spec, s, now, extra)


# -- ground-truth oracle ------------------------------------------------------------------------------

def _visible_elements(spec: SimAppSpec, session: SimSession) -> list[ElementSpec]:
    if session.state.startswith("__404__"):
        return []
    env = session.env
    out: list[ElementSpec] = []

    def walk(els):
        for e in els:
            if _visible(e, env):
                out.append(e)
                walk(e.children)

    walk(spec.states[session.state].elements)
    return out


def state_key(spec: SimAppSpec, session: SimSession) -> tuple:
    """Ground-truth identity: state id, visibility of each guarded element, cookies.

    Defined on the simapp definition alone (no HTML, no hashing) so it can check the
    fingerprint layer independently.
    """
    env = session.env
    if session.state.startswith("__404__"):
        return (session.state, (), ())
    truths = tuple(e.when(env) for e in _walk(spec.states[session.state].elements) if e.when is not None)
    # guards of hidden parents still evaluate; fine, they are pure
    cookies = tuple(sorted(n for n, g in spec.cookies.items() if g(env)))
    return (session.state, truths, cookies)


def sim_actions(spec: SimAppSpec, session: SimSession, values: ValueDictionary) -> list[tuple[str, dict[str, str]]]:
    """Every sim action a user could take on the current page."""
    env = session.env
    acts: list[tuple[str, dict[str, str]]] = []
    for e in _visible_elements(spec, session):
        p = e.props
        if e.kind == "link":
            href = _interp(p["href"], env)
            cur = spec.origin + _interp(spec.states[session.state].url, env)
            full = urljoin(cur, href)
            if urlsplit(full).netloc == urlsplit(spec.origin).netloc:
                acts.append(("nav:" + full, {}))
        elif e.kind == "button":
            acts.append((f"click:{p['id']}", {}))
            for ev in p.get("events") or ():
                acts.append((f"event:{p['id']}:{ev}", {}))
        elif e.kind == "hover":
            for ev in p.get("events") or ("mouseover",):
                acts.append((f"event:{p['id']}:{ev}", {}))
        elif e.kind == "form":
            payload = {}
            for f in p.get("fields") or ():
                v = values.value_for(str(f["name"]), str(f.get("type", "text")))
                payload[str(f["name"])] = v
                acts.append((f"fill:{f['name']}", {str(f["name"]): v}))
            acts.append((f"submit:{p['form']}", payload))
        elif e.kind == "search":
            name = str(p["search"])
            v = values.value_for(name, "search")
            acts.append((f"fill:{name}", {name: v}))
            acts.append((f"key:{name}", {"text": v, name: v}))
    return acts


def _successors(spec: SimAppSpec, s: SimSession, key: str, payload) -> list[SimSession]:
    st = spec.states.get(s.state)
    if key.startswith("nav:") or st is None:
        return [step(spec, s, key, payload)]
    env = s.env
    for alt in st.on.get(key, ()):
        if alt.guard is None or alt.guard(env):
            out = []
            for target in alt.to:
                e2 = dict(env)
                for var, value in alt.effects:
                    e2[var] = _resolve_value(value, payload)
                out.append(SimSession(target, tuple(sorted(e2.items()))))
            return out
    return [s]


def reachable_states(spec: SimAppSpec, values: ValueDictionary = ValueDictionary(),
                     kinds: Iterable[str] | None = None) -> dict[tuple, SimSession]:
    """Exhaustive search of the product state space (state id x session vars).

    Returns one representative session per :func:`state_key`.  ``kinds``
    restricts the action alphabet by key prefix (``{"nav"}`` gives the
    hyperlink-only closure).  Flakiness is ignored: it is transient.
    """
    allowed = set(kinds) if kinds is not None else None
    start = initial_session(spec)
    seen = {(start.state, start.vars)}
    out: dict[tuple, SimSession] = {state_key(spec, start): start}
    q = deque([start])
    while q:
        s = q.popleft()
        for key, payload in sim_actions(spec, s, values):
            if allowed is not None and key.split(":", 1)[0] not in allowed:
                continue
            for nxt in _successors(spec, s, key, payload):
                ident = (nxt.state, nxt.vars)
                if ident in seen:
                    continue
                seen.add(ident)
                out.setdefault(state_key(spec, nxt), nxt)
                q.append(nxt)
    return out


def gated_state_keys(spec: SimAppSpec, values: ValueDictionary = ValueDictionary()) -> set[tuple]:
    """States that cannot be reached without submitting a form or pressing Enter in a search box."""
    everything = set(reachable_states(spec, values))
    without = set(reachable_states(spec, values, kinds={"nav", "click", "event", "fill"}))
    return everything - without


def hyperlink_state_keys(spec: SimAppSpec, values: ValueDictionary = ValueDictionary()) -> set[tuple]:
    return set(reachable_states(spec, values, kinds={"nav"}))
