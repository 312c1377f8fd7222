"""Chat clients: the live OpenAI-compatible HTTP client and the scripted
replay client used for deterministic tests.

Messages are neutral dicts {"role", "text", "image"}; each client maps them
onto its own wire format. Clients are instantiated per episode, so concurrent
episodes never share connection state.
"""

from __future__ import annotations

import base64
import json
import os
from pathlib import Path
from typing import Protocol

import requests

API_KEY_ENV = "LANGNAV_API_KEY"
API_KEY_FALLBACK_ENV = "OPENAI_API_KEY"
DEFAULT_TIMEOUT = 120.0


class ClientError(Exception):
    """Any failure talking to the model backend."""


class ChatClient(Protocol):
    def send(self, messages: list[dict]) -> str:
        """Submit the whole conversation; return the assistant reply text."""
        ...


class ScriptedChatClient:
    """Replays canned replies by turn index, ignoring the prompt content."""

    def __init__(self, replies: list[str]):
        self.replies = list(replies)
        self.turn = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedChatClient":
        """Load a transcript file: {"0": reply, "1": reply, ...} or a bare
        list under "replies"."""
        doc = json.loads(Path(path).read_text())
        if isinstance(doc, dict) and "replies" in doc:
            return cls(list(doc["replies"]))
        if isinstance(doc, dict):
            indexed = sorted(((int(k), v) for k, v in doc.items()), key=lambda kv: kv[0])
            return cls([v for _, v in indexed])
        if isinstance(doc, list):
            return cls(doc)
        raise ClientError(f"unrecognized transcript format in {path}")

    def send(self, messages: list[dict]) -> str:
        if self.turn >= len(self.replies):
            raise ClientError(f"scripted transcript exhausted after {self.turn} turns")
        reply = self.replies[self.turn]
        self.turn += 1
        return reply


class LiveChatClient:
    """OpenAI-compatible chat-completions client.

    The API key comes from LANGNAV_API_KEY (or OPENAI_API_KEY); images are
    attached with the data-URL image content convention.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        temperature: float = 0.0,
        timeout: float = DEFAULT_TIMEOUT,
    ):
        self.endpoint = endpoint.rstrip("/")
        if not self.endpoint.endswith("/chat/completions"):
            self.endpoint = self.endpoint + "/chat/completions"
        self.model = model
        self.api_key = api_key or os.environ.get(API_KEY_ENV) or os.environ.get(API_KEY_FALLBACK_ENV, "")
        self.temperature = temperature
        self.timeout = timeout

    def _wire_message(self, msg: dict) -> dict:
        if msg.get("image"):
            image_path = Path(msg["image"])
            try:
                payload = base64.b64encode(image_path.read_bytes()).decode()
            except OSError as exc:
                raise ClientError(f"cannot read image attachment {image_path}: {exc}") from exc
            suffix = image_path.suffix.lstrip(".") or "png"
            return {
                "role": msg["role"],
                "content": [
                    {"type": "text", "text": msg["text"]},
                    {
                        "type": "image_url",
                        "image_url": {"url": f"data:image/{suffix};base64,{payload}"},
                    },
                ],
            }
        return {"role": msg["role"], "content": msg["text"]}

    def send(self, messages: list[dict]) -> str:
        body = {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [self._wire_message(m) for m in messages],
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(self.endpoint, json=body, headers=headers, timeout=self.timeout)
        except requests.RequestException as exc:
            raise ClientError(f"chat endpoint unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise ClientError(f"chat endpoint returned {resp.status_code}: {resp.text[:500]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise ClientError(f"malformed chat response: {exc}") from exc
