"""Pluggable text-completion backends.

Every language-model call in the package goes through
``GenerationBackend.complete(system, user, output_schema_id)``. Four
implementations ship:

* ``OpenAIChatBackend`` posts to an OpenAI-compatible chat-completions API.
* ``FixtureBackend`` replays canned responses stored as
  ``{prompt_hash}.json`` files, optionally recording misses from a fallback.
* ``HeuristicBackend`` answers deterministically from rules, offline.
* ``ScriptedBackend`` returns pre-set strings (tests).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import urllib.error
import urllib.request
from pathlib import Path

from .errors import BackendError

log = logging.getLogger(__name__)


def prompt_hash(system: str, user: str, output_schema_id: str) -> str:
    payload = json.dumps([output_schema_id, system, user], ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


class GenerationBackend:
    kind = "abstract"

    def complete(self, system: str, user: str, output_schema_id: str) -> str:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind}


class OpenAIChatBackend(GenerationBackend):
    kind = "live"

    def __init__(self, model="gpt-4o-mini", base_url=None, api_key=None, temperature=0.0, timeout=120):
        self.model = model
        self.base_url = (base_url or os.environ.get("AMKG_LLM_BASE_URL") or "").rstrip("/")
        self.api_key = api_key or os.environ.get("AMKG_LLM_API_KEY")
        self.temperature = temperature
        self.timeout = timeout
        if not self.base_url:
            raise BackendError("AMKG_LLM_BASE_URL is not set")

    def complete(self, system, user, output_schema_id):
        body = {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": "system", "content": system}, {"role": "user", "content": user}],
        }
        req = urllib.request.Request(
            self.base_url + "/chat/completions", data=json.dumps(body).encode(), method="POST"
        )
        req.add_header("Content-Type", "application/json")
        if self.api_key:
            req.add_header("Authorization", f"Bearer {self.api_key}")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read())
            return payload["choices"][0]["message"]["content"]
        except (urllib.error.URLError, OSError, KeyError, IndexError, ValueError) as exc:
            raise BackendError(f"chat completion failed: {exc}") from exc

    def describe(self):
        return {"kind": self.kind, "model": self.model, "base_url": self.base_url}


class FixtureBackend(GenerationBackend):
    """Replays ``{hash}.json`` files holding ``{"output_schema_id", "response"}``.

    With ``fallback`` set, misses are answered by the fallback; with
    ``record`` also set, those answers are written back to ``directory``.
    """

    kind = "fixture"

    def __init__(self, directory, fallback: GenerationBackend | None = None, record=False):
        self.directory = Path(directory)
        self.fallback = fallback
        self.record = record
        self._lock = threading.Lock()

    def path_for(self, system, user, output_schema_id) -> Path:
        return self.directory / f"{prompt_hash(system, user, output_schema_id)}.json"

    def complete(self, system, user, output_schema_id):
        path = self.path_for(system, user, output_schema_id)
        if path.exists():
            with open(path, encoding="utf-8") as fh:
                return json.load(fh)["response"]
        if self.fallback is None:
            raise BackendError(f"no fixture response {path.name} for schema {output_schema_id!r}")
        response = self.fallback.complete(system, user, output_schema_id)
        if self.record:
            with self._lock:
                self.directory.mkdir(parents=True, exist_ok=True)
                path.write_text(
                    json.dumps({"output_schema_id": output_schema_id, "response": response},
                               sort_keys=True, indent=1, ensure_ascii=False) + "\n",
                    encoding="utf-8",
                )
        return response

    def describe(self):
        return {"kind": self.kind, "directory": str(self.directory)}


class ScriptedBackend(GenerationBackend):
    """Returns queued responses; ``responses`` is a list or a schema-id -> list map.

    Entries that are exceptions are raised instead of returned. Every call
    is logged in ``calls`` as ``(system, user, output_schema_id)``.
    """

    kind = "scripted"

    def __init__(self, responses):
        if isinstance(responses, dict):
            self.queues = {k: list(v) for k, v in responses.items()}
        else:
            self.queues = {None: list(responses)}
        self.calls = []

    def complete(self, system, user, output_schema_id):
        self.calls.append((system, user, output_schema_id))
        queue = self.queues.get(output_schema_id, self.queues.get(None))
        if not queue:
            raise BackendError(f"scripted backend exhausted for {output_schema_id!r}")
        item = queue.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


class HeuristicBackend(GenerationBackend):
    """Deterministic rule-based responder for every schema the package uses."""

    kind = "heuristic"

    def complete(self, system, user, output_schema_id):
        from . import heuristic

        handler = heuristic.HANDLERS.get(output_schema_id)
        if handler is None:
            raise BackendError(f"heuristic backend has no handler for {output_schema_id!r}")
        return handler(system, user)


def make_backend(kind: str, fixture_dir=None, record=False, model=None) -> GenerationBackend:
    kind = (kind or "heuristic").lower()
    if kind == "live":
        return OpenAIChatBackend(model=model or "gpt-4o-mini")
    if kind == "heuristic":
        return HeuristicBackend()
    if kind == "fixture":
        if fixture_dir is None:
            from .data import fixture_responses_dir

            fixture_dir = fixture_responses_dir()
        return FixtureBackend(fixture_dir, fallback=HeuristicBackend() if record else None, record=record)
    raise BackendError(f"unknown backend kind {kind!r}")
