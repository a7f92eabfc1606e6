"""Minimal chat-completion transport for the external judge.

Credentials come from the environment only (never required by the offline
test-suite):

* ``STATETRACK_JUDGE_URL``   - chat-completions endpoint (OpenAI-compatible)
* ``STATETRACK_JUDGE_MODEL`` - model name
* ``STATETRACK_JUDGE_KEY``   - bearer token (optional)
"""

from __future__ import annotations

import os
from typing import Callable

from .errors import ValidationError


def completion_from_env() -> Callable[[str, str], str]:
    url = os.environ.get("STATETRACK_JUDGE_URL")
    model = os.environ.get("STATETRACK_JUDGE_MODEL")
    if not url or not model:
        raise ValidationError(
            "external judge needs STATETRACK_JUDGE_URL and STATETRACK_JUDGE_MODEL set"
        )
    key = os.environ.get("STATETRACK_JUDGE_KEY", "")

    import requests

    def complete(system_prompt: str, user_prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_prompt},
            ],
        }
        resp = requests.post(url, json=payload, headers=headers, timeout=60)
        resp.raise_for_status()
        return resp.json()["choices"][0]["message"]["content"]

    return complete
