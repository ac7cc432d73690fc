"""Form-field value dictionary: which payload to type into which field."""

from __future__ import annotations

import fnmatch
from dataclasses import dataclass, field
from typing import Mapping

from . import config as cfg

DEFAULT_VALUES: tuple[tuple[str, str], ...] = (
    ("*email*", "qa.tester@example.test"),
    ("*password*", "Secr3t-pass"),
    ("*user*", "qa_tester"),
    ("*name*", "Quinn Tester"),
    ("*zip*", "10001"),
    ("*postal*", "10001"),
    ("*phone*", "5550100"),
    ("*card*", "4111111111111111"),
    ("*qty*", "1"),
    ("*quantity*", "1"),
    ("q", "forceps"),
    ("*search*", "forceps"),
)

DEFAULT_BY_TYPE: tuple[tuple[str, str], ...] = (
    ("email", "qa.tester@example.test"),
    ("password", "Secr3t-pass"),
    ("number", "1"),
    ("tel", "5550100"),
    ("search", "forceps"),
    ("url", "http://example.test/"),
)


@dataclass(frozen=True)
class ValueDictionary:
    """Ordered glob patterns on field names, then fallbacks by input type."""

    by_name: tuple[tuple[str, str], ...] = DEFAULT_VALUES
    by_type: tuple[tuple[str, str], ...] = DEFAULT_BY_TYPE
    fallback: str = "test"
    extra: tuple[tuple[str, str], ...] = field(default=())

    def value_for(self, name: str | None, input_type: str | None = None) -> str:
        n = (name or "").lower()
        for pattern, value in self.extra + self.by_name:
            if fnmatch.fnmatchcase(n, pattern.lower()):
                return value
        t = (input_type or "").lower()
        for typ, value in self.by_type:
            if t == typ:
                return value
        return self.fallback

    @classmethod
    def from_mapping(cls, m: Mapping[str, str]) -> ValueDictionary:
        """Patterns from config take precedence over the defaults."""
        fallback = m.get("__fallback__", "test")
        extra = tuple((k, v) for k, v in m.items() if k != "__fallback__")
        return cls(extra=extra, fallback=fallback)

    @classmethod
    def from_file(cls, path) -> ValueDictionary:
        flat = cfg.load_kv(path)
        return cls.from_mapping(cfg.section(flat, "values") or flat)
