"""Observations, state fingerprints and actions.

A state's identity is a SHA-256 digest over the normalized URL path, a
canonical DOM signature, and a whitelisted subset of session metadata.
Text, volatile attributes and script bodies never reach the digest, so two
renders of the same page with different cart counts or rotated tokens
fingerprint identically, while adding or removing a form, link or button
always changes the digest.
"""

from __future__ import annotations

import hashlib
import json
import struct
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping
from urllib.parse import parse_qsl, urlencode, urlsplit

from . import config as cfg
from .dom import Document, Element, parse_markup

FINGERPRINT_SCHEME = "statewalk.fingerprint.v1"


@dataclass(frozen=True)
class Observation:
    """Raw capture of the application at one moment."""

    page_source: str
    metadata: Mapping[str, str]
    screenshot_ref: str | None = None
    captured_at: int = 0  # monotonic milliseconds

    def __post_init__(self):
        if "url" not in self.metadata:
            raise ValueError("observation metadata must contain 'url'")

    @property
    def url(self) -> str:
        return self.metadata["url"]

    def to_dict(self) -> dict[str, Any]:
        return {
            "page_source": self.page_source,
            "metadata": dict(self.metadata),
            "screenshot_ref": self.screenshot_ref,
            "captured_at": self.captured_at,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Observation:
        return cls(d["page_source"], dict(d["metadata"]), d.get("screenshot_ref"), int(d.get("captured_at", 0)))

    def content_key(self) -> str:
        """Content address: digest of everything except ``captured_at``."""
        body = json.dumps(
            [self.page_source, sorted(self.metadata.items()), self.screenshot_ref],
            ensure_ascii=False, separators=(",", ":"),
        )
        return hashlib.sha256(body.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class FingerprintConfig:
    metadata_include_keys: tuple[str, ...] = ("status", "cookies")
    volatile_attributes: tuple[str, ...] = (
        "style", "nonce", "data-timestamp", "data-nonce", "csrf-token", "data-csrf", "data-session",
    )
    structural_attributes: tuple[str, ...] = ("id", "name", "type", "href", "action")
    ignore_query_params: bool = False
    hash_name: str = "sha256"

    @classmethod
    def from_mapping(cls, m: Mapping[str, str]) -> FingerprintConfig:
        kw: dict[str, Any] = {}
        for key in ("metadata_include_keys", "volatile_attributes", "structural_attributes"):
            if key in m:
                kw[key] = cfg.as_list(m[key])
        if "ignore_query_params" in m:
            kw["ignore_query_params"] = cfg.as_bool(m["ignore_query_params"])
        if "hash_name" in m and m["hash_name"] != "sha256":
            raise cfg.ConfigError("only sha256 fingerprints are supported")
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> FingerprintConfig:
        flat = cfg.load_kv(path)
        scoped = cfg.section(flat, "fingerprint")
        return cls.from_mapping(scoped or flat)

    def to_dict(self) -> dict[str, Any]:
        return {
            "metadata_include_keys": list(self.metadata_include_keys),
            "volatile_attributes": list(self.volatile_attributes),
            "structural_attributes": list(self.structural_attributes),
            "ignore_query_params": self.ignore_query_params,
            "hash_name": self.hash_name,
        }

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


DEFAULT_FINGERPRINT = FingerprintConfig()


@dataclass(frozen=True)
class StateFingerprint:
    digest: str
    url_path: str
    dom_signature: str
    metadata_keys: tuple[str, ...] = ()

    @property
    def short(self) -> str:
        return self.digest[:12]

    def to_dict(self) -> dict[str, Any]:
        return {
            "digest": self.digest,
            "url_path": self.url_path,
            "dom_signature": self.dom_signature,
            "metadata_keys": list(self.metadata_keys),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> StateFingerprint:
        return cls(d["digest"], d["url_path"], d["dom_signature"], tuple(d.get("metadata_keys", ())))


class ActionType(str, Enum):
    NAVIGATE = "Navigate"
    CLICK = "Click"
    FILL_FIELD = "FillField"
    SUBMIT_FORM = "SubmitForm"
    KEY_INPUT = "KeyInput"
    SCRIPT_EVENT = "ScriptEvent"


Payload = str | tuple[tuple[str, str], ...] | None


def _freeze_payload(p: Any) -> Payload:
    if p is None or isinstance(p, str):
        return p
    if isinstance(p, Mapping):
        return tuple((str(k), str(v)) for k, v in p.items())
    return tuple((str(k), str(v)) for k, v in p)


@dataclass(frozen=True)
class Action:
    """A user-initiated operation bound to one DOM element."""

    action_type: ActionType
    target_selector: str
    target_attributes: tuple[tuple[str, str], ...] = ()
    payload: Payload = None
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "action_type", ActionType(self.action_type))
        object.__setattr__(self, "payload", _freeze_payload(self.payload))
        attrs = self.target_attributes
        attrs = attrs.items() if isinstance(attrs, Mapping) else attrs
        # canonical order so serialized copies compare equal
        object.__setattr__(self, "target_attributes", tuple(sorted((str(k), str(v)) for k, v in attrs)))
        if self.action_type is ActionType.NAVIGATE and not isinstance(self.payload, str):
            raise ValueError("Navigate actions carry a URL payload")
        if self.action_type is ActionType.FILL_FIELD and self.payload is None:
            raise ValueError("FillField actions carry a payload")

    @property
    def attributes(self) -> dict[str, str]:
        return dict(self.target_attributes)

    @property
    def tag(self) -> str:
        return self.attributes.get("tag", "")

    @property
    def payload_map(self) -> dict[str, str]:
        return dict(self.payload) if isinstance(self.payload, tuple) else {}

    @property
    def key(self) -> str:
        """Identity used for de-duplication and the explored store."""
        payload = self.payload if not isinstance(self.payload, tuple) else [list(p) for p in self.payload]
        return json.dumps([self.action_type.value, self.target_selector, payload],
                          ensure_ascii=False, separators=(",", ":"))

    @property
    def action_class(self) -> tuple[str, str]:
        return (self.action_type.value, self.tag)

    def to_dict(self) -> dict[str, Any]:
        payload = self.payload if not isinstance(self.payload, tuple) else dict(self.payload)
        return {
            "action_type": self.action_type.value,
            "target_selector": self.target_selector,
            "target_attributes": dict(self.target_attributes),
            "payload": payload,
            "description": self.description,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Action:
        return cls(
            ActionType(d["action_type"]),
            d["target_selector"],
            tuple(dict(d.get("target_attributes") or {}).items()),
            d.get("payload"),
            d.get("description", ""),
        )


@dataclass(frozen=True)
class StateDelta:
    changed: bool
    url_changed: bool
    dom_distance: int
    metadata_diff: tuple[str, ...] = field(default_factory=tuple)


# -- normalization ---------------------------------------------------------------

def normalize_url_path(url: str, ignore_query_params: bool = False) -> str:
    parts = urlsplit(url)
    path = parts.path or "/"
    if len(path) > 1 and path.endswith("/"):
        path = path.rstrip("/") or "/"
    if parts.query and not ignore_query_params:
        query = urlencode(sorted(parse_qsl(parts.query, keep_blank_values=True)))
        path += "?" + query
    return path


def _token(el: Element, config: FingerprintConfig) -> str:
    tok = el.tag
    volatile = set(config.volatile_attributes)
    for attr in config.structural_attributes:
        if attr in volatile or attr not in el.attrs:
            continue
        value = el.attrs[attr]
        if attr == "href" and config.ignore_query_params:
            value = value.split("?", 1)[0]
        tok += f"#{value}" if attr == "id" else f"[{attr}={value}]"
    return tok


def _serialize(el: Element, config: FingerprintConfig) -> str:
    tok = _token(el, config)
    kids = [_serialize(c, config) for c in el.children]
    if not kids:
        return tok
    if len(kids) == 1:
        return f"{tok}>{kids[0]}"
    return f"{tok}>({','.join(kids)})"


def dom_signature_of(doc: Document, config: FingerprintConfig = DEFAULT_FINGERPRINT) -> str:
    return ",".join(_serialize(r, config) for r in doc.roots)


def normalize_dom(page_source: str, config: FingerprintConfig = DEFAULT_FINGERPRINT) -> str:
    """Canonical structural signature of a page.

    >>> normalize_dom('<div id="a"><p>hello</p></div>')
    'div#a>p'
    """
    return dom_signature_of(parse_markup(page_source), config)


def _element_paths(doc: Document, config: FingerprintConfig) -> Counter:
    paths: dict[int, str] = {}
    out: Counter = Counter()
    for el in doc.elements:
        tok = _token(el, config)
        p = f"{paths[id(el.parent)]}>{tok}" if el.parent is not None else tok
        paths[id(el)] = p
        out[p] += 1
    return out


def _frame(*parts: str) -> bytes:
    buf = bytearray()
    for p in parts:
        b = p.encode("utf-8")
        buf += struct.pack(">I", len(b)) + b
    return bytes(buf)


def fingerprint(obs: Observation, config: FingerprintConfig = DEFAULT_FINGERPRINT) -> StateFingerprint:
    """Deterministic identity of the state captured in ``obs``."""
    url_path = normalize_url_path(obs.url, config.ignore_query_params)
    signature = normalize_dom(obs.page_source, config)
    keys = tuple(sorted(k for k in config.metadata_include_keys if k in obs.metadata and k != "url"))
    fields = [FINGERPRINT_SCHEME, url_path, signature, str(len(keys))]
    for k in keys:
        fields += [k, str(obs.metadata[k])]
    digest = hashlib.new(config.hash_name, _frame(*fields)).hexdigest()
    return StateFingerprint(digest, url_path, signature, keys)


def diff(before: Observation, after: Observation, config: FingerprintConfig = DEFAULT_FINGERPRINT) -> StateDelta:
    fb, fa = fingerprint(before, config), fingerprint(after, config)
    pb = _element_paths(parse_markup(before.page_source), config)
    pa = _element_paths(parse_markup(after.page_source), config)
    distance = sum(((pb - pa) + (pa - pb)).values())
    if distance == 0 and fb.dom_signature != fa.dom_signature:
        distance = 1  # same elements, different arrangement
    keys = sorted(set(before.metadata) | set(after.metadata))
    meta_diff = tuple(k for k in keys if before.metadata.get(k) != after.metadata.get(k))
    return StateDelta(
        changed=fb.digest != fa.digest,
        url_changed=fb.url_path != fa.url_path,
        dom_distance=distance,
        metadata_diff=meta_diff,
    )


def with_metadata(obs: Observation, **updates: str) -> Observation:
    md = dict(obs.metadata)
    md.update(updates)
    return replace(obs, metadata=md)
