"""Minimal W3C WebDriver client and an AppDriver on top of it.

Only the endpoints the explorer needs are used: new/delete session,
navigate, current URL, page source, find elements, click, send keys,
cookies, screenshot and synchronous script execution.
"""

from __future__ import annotations

import hashlib
import json
import socket
import threading
import urllib.error
import urllib.request
from typing import Any

from .dom import split_selector
from .errors import DriverError, DriverSessionLost, DriverTimeout, DriverUnavailable
from .executor import WallClock
from .state import Action, ActionType, Observation

ELEMENT_KEY = "element-6066-11e4-a52e-4f735466cecf"
ENTER = "\ue007"


class WebDriverClient:
    def __init__(self, base_url: str, timeout_s: float = 10.0, capabilities: dict | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self.capabilities = capabilities or {"alwaysMatch": {"pageLoadStrategy": "normal"}}
        self.session_id: str | None = None

    def _call(self, method: str, path: str, body: Any = None) -> Any:
        data = None if body is None else json.dumps(body).encode("utf-8")
        req = urllib.request.Request(self.base_url + path, data=data, method=method,
                                     headers={"Content-Type": "application/json; charset=utf-8"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                payload = json.loads(resp.read().decode("utf-8") or "{}")
        except urllib.error.HTTPError as exc:
            try:
                err = json.loads(exc.read().decode("utf-8")).get("value", {})
            except ValueError:
                err = {}
            code = err.get("error", f"http {exc.code}")
            msg = f"{code}: {err.get('message', exc.reason)}"
            if code == "invalid session id":
                raise DriverSessionLost(msg) from None
            if code in ("timeout", "script timeout"):
                raise DriverTimeout(msg) from None
            raise DriverError(msg) from None
        except (socket.timeout, TimeoutError) as exc:
            raise DriverTimeout(f"{method} {path} timed out") from exc
        except urllib.error.URLError as exc:
            raise DriverUnavailable(f"webdriver at {self.base_url} unreachable: {exc.reason}") from exc
        return payload.get("value")

    def _s(self, path: str) -> str:
        if self.session_id is None:
            raise DriverSessionLost("no active session")
        return f"/session/{self.session_id}{path}"

    def new_session(self) -> str:
        value = self._call("POST", "/session", {"capabilities": self.capabilities})
        self.session_id = value["sessionId"]
        return self.session_id

    def delete_session(self) -> None:
        if self.session_id is not None:
            try:
                self._call("DELETE", self._s(""))
            finally:
                self.session_id = None

    def get(self, url: str) -> None:
        self._call("POST", self._s("/url"), {"url": url})

    def current_url(self) -> str:
        return self._call("GET", self._s("/url"))

    def page_source(self) -> str:
        return self._call("GET", self._s("/source"))

    def find_elements(self, css: str) -> list[str]:
        found = self._call("POST", self._s("/elements"), {"using": "css selector", "value": css})
        return [e[ELEMENT_KEY] for e in found]

    def click(self, element_id: str) -> None:
        self._call("POST", self._s(f"/element/{element_id}/click"), {})

    def clear(self, element_id: str) -> None:
        self._call("POST", self._s(f"/element/{element_id}/clear"), {})

    def send_keys(self, element_id: str, text: str) -> None:
        self._call("POST", self._s(f"/element/{element_id}/value"), {"text": text})

    def cookies(self) -> list[dict]:
        return self._call("GET", self._s("/cookie")) or []

    def delete_cookies(self) -> None:
        self._call("DELETE", self._s("/cookie"))

    def screenshot(self) -> str:
        return self._call("GET", self._s("/screenshot"))

    def execute(self, script: str, args: list | None = None) -> Any:
        return self._call("POST", self._s("/execute/sync"), {"script": script, "args": args or []})


def _element_ref(element_id: str) -> dict:
    return {ELEMENT_KEY: element_id}


class WebDriverAppDriver:
    """AppDriver over a WebDriver session; ``reset`` clears cookies and reloads the start URL."""

    def __init__(self, client: WebDriverClient, start_url: str):
        self.client = client
        self.start_url = start_url
        self._lock = threading.RLock()
        self.clock = WallClock()
        if client.session_id is None:
            client.new_session()

    def close(self) -> None:
        self.client.delete_session()

    def reset(self) -> None:
        with self._lock:
            self.client.delete_cookies()
            self.client.get(self.start_url)

    def navigate(self, url: str) -> None:
        with self._lock:
            self.client.get(url)

    def observe(self) -> Observation:
        with self._lock:
            source = self.client.page_source()
            url = self.client.current_url()
            cookies = ",".join(sorted(c.get("name", "") for c in self.client.cookies()))
            try:
                shot = hashlib.sha256(self.client.screenshot().encode("ascii")).hexdigest()
            except DriverError:
                shot = None
            return Observation(source, {"url": url, "cookies": cookies, "status": "200"}, shot, self.clock())

    def _element(self, selector: str) -> str:
        css, index = split_selector(selector)
        found = self.client.find_elements(css)
        if index >= len(found):
            raise DriverError(f"no element for selector {selector}")
        return found[index]

    def perform(self, action: Action) -> None:
        with self._lock:
            t = action.action_type
            if t is ActionType.NAVIGATE:
                self.client.get(str(action.payload))
                return
            el = self._element(action.target_selector)
            if t is ActionType.CLICK:
                self.client.click(el)
            elif t is ActionType.FILL_FIELD:
                self.client.clear(el)
                self.client.send_keys(el, str(action.payload))
            elif t is ActionType.KEY_INPUT:
                pm = action.payload_map
                text = pm.get("text", "")
                self.client.clear(el)
                self.client.send_keys(el, text + (ENTER if pm.get("key", "Enter") == "Enter" else ""))
            elif t is ActionType.SUBMIT_FORM:
                css, _ = split_selector(action.target_selector)
                for name, value in action.payload_map.items():
                    fields = self.client.find_elements(f'{css} [name="{name}"]')
                    if fields:
                        self.client.clear(fields[0])
                        self.client.send_keys(fields[0], value)
                self.client.execute("arguments[0].requestSubmit();", [_element_ref(el)])
            elif t is ActionType.SCRIPT_EVENT:
                self.client.execute(
                    "arguments[0].dispatchEvent(new Event(arguments[1], {bubbles: true}));",
                    [_element_ref(el), str(action.payload)])
            else:  # pragma: no cover
                raise DriverError(f"unsupported action type {t}")

    def fetch(self, url: str, user_agent: str | None = None) -> Observation:
        # one browser session: fetches are serialized by the lock
        with self._lock:
            self.client.get(url)
            return self.observe()
