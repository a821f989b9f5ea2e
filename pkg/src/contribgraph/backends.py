"""Text-generation backends.

The pipeline talks to a single ``generate(prompt) -> text`` contract.
Two implementations ship: a replay mock keyed by the SHA-256 of the
fully rendered prompt (pure, deterministic, used by the whole test
suite), and an OpenAI-compatible HTTP backend configured through
environment variables.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import BackendError

logger = logging.getLogger(__name__)

GEN_ENDPOINT_VAR = "CONTRIBGRAPH_GEN_ENDPOINT"
GEN_API_KEY_VAR = "CONTRIBGRAPH_GEN_API_KEY"
GEN_MODEL_VAR = "CONTRIBGRAPH_GEN_MODEL"


@dataclass
class Usage:
    calls: int = 0
    tokens_in: int = 0
    tokens_out: int = 0
    cost: float = 0.0

    def add(self, tokens_in: int, tokens_out: int, cost: float) -> None:
        self.calls += 1
        self.tokens_in += tokens_in
        self.tokens_out += tokens_out
        self.cost += cost


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class GenerationBackend(ABC):
    """Abstract generation contract: prompt in, text out, usage accounted."""

    name: str = "backend"
    model: str = ""

    def __init__(self) -> None:
        self.usage = Usage()
        self._usage_lock = threading.Lock()

    @property
    def tag(self) -> str:
        return f"{self.name}:{self.model}" if self.model else self.name

    @abstractmethod
    def generate(
        self,
        prompt: str,
        temperature: float = 0.0,
        max_output_tokens: Optional[int] = None,
    ) -> str:
        ...

    def _account(self, tokens_in: int, tokens_out: int, cost: float) -> None:
        with self._usage_lock:
            self.usage.add(tokens_in, tokens_out, cost)


class MockBackend(GenerationBackend):
    """Replay backend: responses come from ``<sha256-of-prompt>.txt`` files.

    A pure function of the prompt, so repeated runs are byte-identical.
    In strict mode (the default) an unknown prompt hash is an error so
    fixture drift fails loudly instead of silently changing output.
    """

    name = "mock"

    def __init__(self, directory: str | Path, model: str = "replay", strict: bool = True):
        super().__init__()
        self.directory = Path(directory)
        self.model = model
        self.strict = strict

    def generate(
        self,
        prompt: str,
        temperature: float = 0.0,
        max_output_tokens: Optional[int] = None,
    ) -> str:
        digest = prompt_hash(prompt)
        path = self.directory / f"{digest}.txt"
        if not path.exists():
            head = prompt[:160].replace("\n", " ")
            message = f"no canned response for prompt hash {digest} ({head!r}...)"
            if self.strict:
                raise BackendError(message)
            logger.warning("%s", message)
            response = ""
        else:
            response = path.read_text(encoding="utf-8")
        # Crude deterministic token estimate; the mock has no tokenizer.
        self._account(len(prompt) // 4, len(response) // 4, 0.0)
        return response

    @staticmethod
    def store_response(directory: str | Path, prompt: str, response: str) -> Path:
        """Write a canned response file for the given prompt (fixture authoring)."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"{prompt_hash(prompt)}.txt"
        path.write_text(response, encoding="utf-8")
        return path


class HttpBackend(GenerationBackend):
    """OpenAI-compatible chat-completions backend.

    Endpoint, credential, and model come from environment variables
    unless given explicitly. Per-1k-token prices feed cost accounting.
    """

    name = "http"

    def __init__(
        self,
        endpoint: Optional[str] = None,
        api_key: Optional[str] = None,
        model: Optional[str] = None,
        price_in_per_1k: float = 0.0,
        price_out_per_1k: float = 0.0,
        timeout: float = 300.0,
    ):
        super().__init__()
        self.endpoint = endpoint or os.environ.get(GEN_ENDPOINT_VAR)
        self.api_key = api_key or os.environ.get(GEN_API_KEY_VAR)
        self.model = model or os.environ.get(GEN_MODEL_VAR, "")
        self.price_in_per_1k = price_in_per_1k
        self.price_out_per_1k = price_out_per_1k
        self.timeout = timeout
        if not self.endpoint:
            raise BackendError(
                f"no generation endpoint configured (set {GEN_ENDPOINT_VAR})"
            )

    def generate(
        self,
        prompt: str,
        temperature: float = 0.0,
        max_output_tokens: Optional[int] = None,
    ) -> str:
        import requests

        payload: dict = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
        }
        if max_output_tokens is not None:
            payload["max_tokens"] = max_output_tokens
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = requests.post(
                self.endpoint, json=payload, headers=headers, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise BackendError(f"generation request failed: {exc}") from exc
        if response.status_code != 200:
            raise BackendError(
                f"generation endpoint returned {response.status_code}: {response.text[:500]}"
            )
        try:
            body = response.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError) as exc:
            raise BackendError(f"malformed completion response: {exc}") from exc
        usage = body.get("usage", {})
        tokens_in = int(usage.get("prompt_tokens", len(prompt) // 4))
        tokens_out = int(usage.get("completion_tokens", len(text) // 4))
        cost = (
            tokens_in * self.price_in_per_1k + tokens_out * self.price_out_per_1k
        ) / 1000.0
        self._account(tokens_in, tokens_out, cost)
        return text


def make_backend(mock_dir: Optional[str] = None, **kwargs) -> GenerationBackend:
    """Mock replay backend when a directory is given, HTTP otherwise."""
    if mock_dir:
        return MockBackend(mock_dir)
    return HttpBackend(**kwargs)


def echo_json(obj) -> str:
    """Format an object the way canned fixture responses do."""
    return "```\n" + json.dumps(obj, ensure_ascii=False, indent=2) + "\n```\n"
