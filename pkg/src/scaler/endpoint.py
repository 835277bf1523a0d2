"""Optional chat-completion endpoint client.

Used for generator authoring and for the endpoint-backed policy.  Fully
optional: the rest of the engine runs offline.  Auth tokens are referenced by
environment-variable name and never stored in configuration files.
"""

from __future__ import annotations

import json
import os
import urllib.error
import urllib.request

from .errors import EndpointUnavailable


class CompletionClient:
    """Minimal chat-style HTTP client (OpenAI-compatible request shape)."""

    def __init__(
        self,
        url: str,
        *,
        token_env: str | None = None,
        model: str | None = None,
        timeout_s: float = 120.0,
    ) -> None:
        if not url:
            raise EndpointUnavailable("no completion endpoint configured")
        self.url = url
        self.token_env = token_env
        self.model = model
        self.timeout_s = timeout_s

    def complete(self, messages: list[dict[str, str]], n: int = 1) -> list[str]:
        body: dict[str, object] = {"messages": messages, "n": n}
        if self.model:
            body["model"] = self.model
        headers = {"Content-Type": "application/json"}
        if self.token_env:
            token = os.environ.get(self.token_env)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        request = urllib.request.Request(
            self.url,
            data=json.dumps(body).encode("utf-8"),
            headers=headers,
            method="POST",
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout_s) as response:
                payload = json.loads(response.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, json.JSONDecodeError) as exc:
            raise EndpointUnavailable(f"endpoint request failed: {exc}") from exc
        try:
            return [choice["message"]["content"] for choice in payload["choices"]]
        except (KeyError, TypeError) as exc:
            raise EndpointUnavailable(
                f"endpoint response missing choices/message content: {exc}"
            ) from exc


def strip_code_fences(text: str) -> str:
    """Extract the body of the first fenced code block, if any."""
    stripped = text.strip()
    if "```" not in stripped:
        return stripped
    parts = stripped.split("```")
    if len(parts) < 3:
        return stripped
    block = parts[1]
    first_newline = block.find("\n")
    if first_newline != -1 and block[:first_newline].strip().isalpha():
        block = block[first_newline + 1 :]  # drop the language tag line
    return block.strip()
