"""Applying actions through a driver, with retries and reset-and-replay recovery."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol, Sequence

from .dom import parse_markup
from .errors import DriverError, DriverSessionLost, UnparseableMarkup
from .graph import KnowledgeGraph
from .obstore import ObservationStore
from .state import (DEFAULT_FINGERPRINT, Action, FingerprintConfig, Observation, StateDelta,
                    StateFingerprint, diff, fingerprint)

log = logging.getLogger(__name__)


class AppDriver(Protocol):
    def reset(self) -> None: ...
    def navigate(self, url: str) -> None: ...
    def observe(self) -> Observation: ...
    def perform(self, action: Action) -> None: ...


class WallClock:
    """Monotonic millisecond clock for drivers without a synthetic one."""

    def __init__(self):
        self._t0 = time.monotonic()

    def __call__(self) -> int:
        return int((time.monotonic() - self._t0) * 1000)


class Outcome(str, Enum):
    CHANGED = "Changed"
    UNCHANGED = "Unchanged"
    FAILED = "Failed"


@dataclass
class ExecutionResult:
    outcome: Outcome
    before: StateFingerprint
    after: StateFingerprint | None = None
    delta: StateDelta | None = None
    attempts: int = 1
    error: str | None = None
    errors: int = 0
    action: Action | None = None
    after_obs: Observation | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.attempts < 1:
            raise ValueError("attempts must be >= 1")
        if self.outcome is Outcome.CHANGED and not (self.delta and self.delta.changed):
            raise ValueError("Changed outcome requires a changed delta")
        if self.outcome is Outcome.FAILED and not self.error:
            raise ValueError("Failed outcome requires an error")

    @property
    def first_failed(self) -> bool:
        return self.errors >= 1

    @property
    def succeeded(self) -> bool:
        return self.outcome is not Outcome.FAILED


@dataclass
class ExecutorConfig:
    max_retries: int = 3
    fingerprint: FingerprintConfig = DEFAULT_FINGERPRINT
    store: ObservationStore | None = None

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


def _check_resolves(action: Action, obs: Observation) -> None:
    try:
        n = len(parse_markup(obs.page_source).resolve(action.target_selector))
    except UnparseableMarkup as exc:
        raise DriverError(f"cannot parse page to resolve selector: {exc}") from exc
    if n != 1:
        raise DriverError(f"selector resolves to {n} elements: {action.target_selector}")


def execute(driver: AppDriver, action: Action, before_obs: Observation,
            config: ExecutorConfig = ExecutorConfig()) -> ExecutionResult:
    """Perform ``action`` with up to ``max_retries`` retries on DriverError.

    The selector is re-resolved before every attempt (stale elements count
    as a failed attempt).  Only driver-session loss propagates.
    """
    before = fingerprint(before_obs, config.fingerprint)
    errors = 0
    current = before_obs
    last_error = ""
    while errors <= config.max_retries:
        try:
            if errors:
                current = driver.observe()
            _check_resolves(action, current)
            driver.perform(action)
            after_obs = driver.observe()
        except DriverSessionLost:
            raise
        except DriverError as exc:
            errors += 1
            last_error = f"{type(exc).__name__}: {exc}"
            log.debug("attempt %d of %s failed: %s", errors, action.description or action.key, exc)
            continue
        if config.store is not None:
            config.store.put(after_obs)
        after = fingerprint(after_obs, config.fingerprint)
        delta = diff(before_obs, after_obs, config.fingerprint)
        outcome = Outcome.CHANGED if delta.changed else Outcome.UNCHANGED
        return ExecutionResult(outcome, before, after, delta, 1 + errors, None, errors, action, after_obs)
    return ExecutionResult(Outcome.FAILED, before, None, None, min(1 + errors, config.max_retries + 1),
                           last_error, errors, action)


def execute_sequence(driver: AppDriver, actions: Sequence[Action], config: ExecutorConfig = ExecutorConfig(),
                     before_obs: Observation | None = None) -> list[ExecutionResult]:
    if not actions:
        raise ValueError("action sequence must not be empty")
    obs = before_obs if before_obs is not None else driver.observe()
    out = []
    for a in actions:
        r = execute(driver, a, obs, config)
        out.append(r)
        if r.outcome is Outcome.FAILED:
            break
        obs = r.after_obs
    return out


def recover(driver: AppDriver, graph: KnowledgeGraph, target: StateFingerprint | str,
            config: ExecutorConfig = ExecutorConfig()) -> bool:
    """Reset, then replay the discovery path from the root to ``target``.

    True iff the replay ends on ``target``'s fingerprint.
    """
    digest = target.digest if isinstance(target, StateFingerprint) else target
    try:
        path = graph.tree_path(digest)
        driver.reset()
        obs = driver.observe()
    except (KeyError, ValueError, DriverError) as exc:
        log.info("recovery to %s impossible: %s", digest[:12], exc)
        return False
    if not path:
        return fingerprint(obs, config.fingerprint).digest == digest
    for edge in path:
        r = execute(driver, edge.action, obs, config)
        if r.outcome is Outcome.FAILED or r.after is None or r.after.digest != edge.target:
            log.info("replay to %s diverged at %s", digest[:12], edge.action.description or edge.action.key)
            return False
        obs = r.after_obs
    return True
