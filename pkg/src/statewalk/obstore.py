"""Content-addressed storage for full observations.

Graph nodes keep only an ``observation_ref``; page sources live here,
either in memory or as one JSON file per key under a directory.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from .state import Observation


class ObservationStore:
    def __init__(self, root: str | os.PathLike | None = None):
        self.root = Path(root) if root is not None else None
        self._mem: dict[str, Observation] = {}
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)

    def put(self, obs: Observation) -> str:
        key = obs.content_key()
        if key in self._mem:
            return key
        self._mem[key] = obs
        if self.root is not None:
            path = self.root / f"{key}.json"
            if not path.exists():
                tmp = path.with_suffix(".tmp")
                tmp.write_text(json.dumps(obs.to_dict(), sort_keys=True, ensure_ascii=False), encoding="utf-8")
                os.replace(tmp, path)
        return key

    def get(self, key: str) -> Observation:
        if key in self._mem:
            return self._mem[key]
        if self.root is not None:
            path = self.root / f"{key}.json"
            if path.exists():
                obs = Observation.from_dict(json.loads(path.read_text(encoding="utf-8")))
                self._mem[key] = obs
                return obs
        raise KeyError(key)

    def __contains__(self, key: str) -> bool:
        try:
            self.get(key)
        except KeyError:
            return False
        return True

    def __len__(self) -> int:
        if self.root is not None:
            return len(list(self.root.glob("*.json")))
        return len(self._mem)
