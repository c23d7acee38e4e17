"""Model backends answering frame-selection queries.

Every backend receives the same inputs (the composed grid as JPEG
bytes, the prompt text, and the query context) and returns the model
reply as raw text. Parsing stays in the caller so that oracle replies
travel through exactly the same path as live replies.

Backends:

* :class:`HttpBackend` talks to an OpenAI-compatible chat-completions
  endpoint, with rate limiting and retry on transport errors.
* :class:`OracleBackend` answers from ground truth, optionally with
  seeded Gaussian timing noise. It exists to test the search loop in
  isolation from any model.
* :class:`ReplayBackend` replays recorded replies keyed by a request
  digest; :class:`RecordingBackend` populates such a store from live
  runs. Together they make live results reproducible offline.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import random
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import requests

from .annotations import GroundTruthSegmentation
from .errors import BackendError, ConfigError, ReplayMissError

log = logging.getLogger(__name__)

DEFAULT_ENDPOINT = "https://api.openai.com/v1"
DEFAULT_MODEL = "gpt-4o"
DEFAULT_TIMEOUT_S = 120.0
DEFAULT_RATE_LIMIT_RPS = 2.0
API_KEY_ENV = "VLM_API_KEY"


@dataclass(frozen=True)
class QueryContext:
    """What a query is about, independent of its rendered prompt text."""

    label_map: Mapping[int, float]
    focus_index: int
    boundary: str


def request_digest(prompt: str, image_bytes: bytes) -> str:
    """Stable hash identifying one query for recording and replay."""
    h = hashlib.sha256()
    h.update(prompt.encode("utf-8"))
    h.update(b"\x00")
    h.update(image_bytes)
    return h.hexdigest()


class VlmBackend(ABC):
    """A source of answers to frame-selection queries."""

    name: str = "abstract"
    #: Whether two identical runs produce byte-identical replies.
    deterministic: bool = True

    @abstractmethod
    def query(self, image_bytes: bytes, prompt: str,
              context: QueryContext) -> str:
        """Return the raw reply text for one query."""


class OracleBackend(VlmBackend):
    """Answers from ground truth: the label nearest the true boundary.

    With ``noise_std_s > 0`` the target time is perturbed by Gaussian
    noise before snapping to the nearest label. The noise is seeded per
    query from the query content, so results are reproducible under any
    execution order, including thread pools.

    Ties between two equally close labels go to the earlier timestamp.
    """

    def __init__(self, truth: GroundTruthSegmentation,
                 noise_std_s: float = 0.0, seed: int = 0):
        self.truth = truth
        self.noise_std_s = float(noise_std_s)
        self.seed = int(seed)
        self.name = "oracle" if self.noise_std_s == 0 else "noisy-oracle"

    def _target_time(self, context: QueryContext) -> float:
        t = self.truth.true_boundary(context.focus_index, context.boundary)
        if self.noise_std_s > 0:
            digest = hashlib.sha256(json.dumps([
                self.seed, context.focus_index, context.boundary,
                sorted(context.label_map.items()),
            ]).encode()).digest()
            rng = random.Random(digest)
            t += rng.gauss(0.0, self.noise_std_s)
        return t

    def query(self, image_bytes: bytes, prompt: str,
              context: QueryContext) -> str:
        target = self._target_time(context)
        best = min(sorted(context.label_map),
                   key=lambda n: (abs(context.label_map[n] - target),
                                  context.label_map[n]))
        reply = (f"The boundary is nearest frame {best}. "
                 f'{{"points": [{best}]}}')
        return reply


class ReplayBackend(VlmBackend):
    """Replays recorded replies from a JSON-lines store."""

    name = "replay"

    def __init__(self, store_path: str | Path):
        self.store_path = Path(store_path)
        self._replies = load_reply_store(self.store_path)

    def query(self, image_bytes: bytes, prompt: str,
              context: QueryContext) -> str:
        digest = request_digest(prompt, image_bytes)
        try:
            return self._replies[digest]
        except KeyError:
            raise ReplayMissError(
                f"no recorded reply for digest {digest[:16]}... in "
                f"{self.store_path}") from None


class RecordingBackend(VlmBackend):
    """Wraps another backend and appends its replies to a store.

    Repeat queries (same digest) are served from the store without
    touching the inner backend, so a crashed run can resume cheaply.
    """

    def __init__(self, inner: VlmBackend, store_path: str | Path):
        self.inner = inner
        self.name = inner.name
        self.deterministic = inner.deterministic
        self.store_path = Path(store_path)
        self.store_path.parent.mkdir(parents=True, exist_ok=True)
        self._replies = (load_reply_store(self.store_path)
                         if self.store_path.exists() else {})
        self._lock = threading.Lock()

    def query(self, image_bytes: bytes, prompt: str,
              context: QueryContext) -> str:
        digest = request_digest(prompt, image_bytes)
        with self._lock:
            if digest in self._replies:
                return self._replies[digest]
        reply = self.inner.query(image_bytes, prompt, context)
        with self._lock:
            if digest not in self._replies:
                self._replies[digest] = reply
                with self.store_path.open("a") as f:
                    f.write(json.dumps(
                        {"digest": digest, "reply": reply}) + "\n")
        return reply


def load_reply_store(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"replay store not found: {path}")
    replies: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            entry = json.loads(line)
            replies[entry["digest"]] = entry["reply"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(
                f"{path}:{lineno}: bad store entry: {exc}") from exc
    return replies


def record(backend: VlmBackend, store_path: str | Path) -> RecordingBackend:
    """Wrap ``backend`` so all replies are captured into ``store_path``."""
    return RecordingBackend(backend, store_path)


class TokenBucket:
    """Blocking token-bucket rate limiter shared across worker threads."""

    def __init__(self, rate_per_s: float, burst: float | None = None):
        if rate_per_s <= 0:
            raise ConfigError(f"rate must be positive, got {rate_per_s}")
        self.rate = rate_per_s
        self.capacity = burst if burst is not None else max(1.0, rate_per_s)
        self._tokens = self.capacity
        self._updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(
                    self.capacity,
                    self._tokens + (now - self._updated) * self.rate)
                self._updated = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            time.sleep(wait)


class HttpBackend(VlmBackend):
    """OpenAI-compatible chat-completions backend.

    Sends the grid as a base64 JPEG data URI alongside the prompt text,
    at temperature 0. Transport errors, 429, and 5xx responses are
    retried with exponential backoff; other HTTP errors fail fast.
    """

    deterministic = False

    def __init__(self, api_key: str, model: str = DEFAULT_MODEL,
                 endpoint: str = DEFAULT_ENDPOINT,
                 timeout_s: float = DEFAULT_TIMEOUT_S,
                 max_retries: int = 3, backoff_s: float = 1.0,
                 rate_limit_rps: float = DEFAULT_RATE_LIMIT_RPS,
                 temperature: float = 0.0,
                 session: requests.Session | None = None):
        if not api_key:
            raise ConfigError(
                f"no API key: set {API_KEY_ENV} or pass api_key")
        self.api_key = api_key
        self.model = model
        self.endpoint = endpoint.rstrip("/")
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self.temperature = temperature
        self.name = f"http:{model}"
        self._bucket = TokenBucket(rate_limit_rps)
        self._session = session or requests.Session()

    def _payload(self, image_bytes: bytes, prompt: str) -> dict:
        image_b64 = base64.b64encode(image_bytes).decode("ascii")
        return {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": prompt},
                    {"type": "image_url", "image_url": {
                        "url": f"data:image/jpeg;base64,{image_b64}"}},
                ],
            }],
        }

    def query(self, image_bytes: bytes, prompt: str,
              context: QueryContext) -> str:
        url = f"{self.endpoint}/chat/completions"
        payload = self._payload(image_bytes, prompt)
        headers = {"Authorization": f"Bearer {self.api_key}"}
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                delay = self.backoff_s * 2 ** (attempt - 1)
                log.warning("retrying query in %.1fs (attempt %d/%d): %s",
                            delay, attempt, self.max_retries, last_error)
                time.sleep(delay)
            self._bucket.acquire()
            try:
                resp = self._session.post(url, json=payload, headers=headers,
                                          timeout=self.timeout_s)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = BackendError(
                    f"HTTP {resp.status_code}: {resp.text[:200]}")
                continue
            if resp.status_code != 200:
                raise BackendError(
                    f"HTTP {resp.status_code} from {url}: {resp.text[:500]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise BackendError(
                    f"malformed response body from {url}: {exc}") from exc
        raise BackendError(
            f"query failed after {self.max_retries} retries: {last_error}")
