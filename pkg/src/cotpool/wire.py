"""Wire-protocol plumbing shared by the teacher and embedding clients.

Covers the retrying JSON POST (OpenAI-compatible endpoints) and the on-disk
response cache: one file per entry under ``root/<model>/<key[:2]>/<key>.json``,
written atomically (temp file + rename) so concurrent writers never interleave
partial entries.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
import threading
import time
from pathlib import Path

import httpx


class EndpointUnavailable(Exception):
    """Endpoint did not produce a usable response within the retry budget."""


class ContextOverflow(Exception):
    """The endpoint rejected the request as exceeding its context window."""


_RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504}
_CONTEXT_MARKERS = ("context_length_exceeded", "maximum context length")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def content_key(obj) -> str:
    """Stable content hash of a JSON-serialisable object."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def post_with_retry(
    client: httpx.Client,
    url: str,
    payload: dict,
    *,
    api_key: str | None = None,
    max_retries: int = 3,
    backoff: float = 0.5,
) -> dict:
    """POST JSON and return the decoded JSON body, retrying transient failures.

    Retries connection errors and retryable HTTP statuses with exponential
    backoff; raises EndpointUnavailable once the budget is exhausted and
    ContextOverflow for context-window rejections (not retryable).
    """
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    last_error: Exception | None = None
    for attempt in range(max_retries + 1):
        try:
            response = client.post(url, json=payload, headers=headers)
        except httpx.HTTPError as exc:
            last_error = exc
        else:
            if response.status_code == 200:
                try:
                    return response.json()
                except ValueError as exc:
                    last_error = exc
            elif response.status_code in _RETRYABLE_STATUS:
                last_error = RuntimeError(f"HTTP {response.status_code}")
            else:
                body = response.text[:2000]
                if any(marker in body for marker in _CONTEXT_MARKERS):
                    raise ContextOverflow(body)
                raise EndpointUnavailable(f"HTTP {response.status_code}: {body}")
        if attempt < max_retries:
            time.sleep(backoff * (2**attempt))
    raise EndpointUnavailable(f"{url}: {last_error}")


def _safe_component(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name) or "_"


class ResponseCache:
    """Content-addressed cache of endpoint responses, one JSON file per entry."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()

    def _path(self, model_id: str, key: str) -> Path:
        return self.root / _safe_component(model_id) / key[:2] / f"{key}.json"

    def get(self, model_id: str, key: str) -> dict | None:
        path = self._path(model_id, key)
        try:
            entry = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            with self._lock:
                self.misses += 1
            return None
        with self._lock:
            self.hits += 1
        return entry

    def put(self, model_id: str, key: str, entry: dict) -> None:
        path = self._path(model_id, key)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(canonical_json(entry))
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def stats(self) -> dict[str, int]:
        with self._lock:
            return {"hits": self.hits, "misses": self.misses}
