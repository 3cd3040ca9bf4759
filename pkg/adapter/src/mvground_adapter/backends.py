"""HTTP plumbing shared by the live-mode backends."""

from __future__ import annotations

import json
import time
import urllib.error
import urllib.request

from .errors import BackendError


def http_probe(endpoint: str, timeout: float = 3.0) -> bool:
    """True when the endpoint answers at all; an HTTP error still counts."""
    req = urllib.request.Request(endpoint, method="HEAD")
    try:
        with urllib.request.urlopen(req, timeout=timeout):
            return True
    except urllib.error.HTTPError:
        return True
    except (urllib.error.URLError, OSError, ValueError):
        return False


def post_json(endpoint: str, payload: dict, timeout: float) -> dict:
    """POST a JSON object and return the JSON object the backend sends back."""
    body = json.dumps(payload).encode("utf-8")
    req = urllib.request.Request(endpoint, data=body, method="POST",
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            raw = resp.read()
    except (urllib.error.URLError, OSError, ValueError) as e:
        raise BackendError(f"backend call to {endpoint!r} failed: {e}") from None
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as e:
        raise BackendError(f"backend at {endpoint!r} sent invalid JSON: {e.msg}") from None
    if not isinstance(data, dict):
        raise BackendError(f"backend at {endpoint!r} sent a non-object response")
    return data


class RateLimiter:
    """Spaces calls so a backend sees at most ``per_s`` requests per second."""

    def __init__(self, per_s: float):
        self.interval = 1.0 / per_s
        self._last = 0.0

    def wait(self) -> None:
        now = time.monotonic()
        remaining = self._last + self.interval - now
        if remaining > 0:
            time.sleep(remaining)
            now = time.monotonic()
        self._last = now
