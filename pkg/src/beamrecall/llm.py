"""Language-model boundary: a remote chat-completions client and an offline stub.

The stub implements just enough rule-based behavior (topic extraction,
relevance yes/no, contrastive templating) for the pipeline to run
deterministically without network access; the remote backend speaks the
de facto chat-completions JSON protocol with bearer auth.
"""

from __future__ import annotations

import json
import re
import time

import httpx

from .errors import BackendUnreachable, MalformedResponse, NoTopic

_RETRY_ATTEMPTS = 3
_TOPIC_MARKER = re.compile(r"\b(about|on|regarding|listening to|following)\b", re.IGNORECASE)
_TOPIC_STOP = re.compile(r"[.?!,;]")
_ARTICLES = ("the", "a", "an")

TOPIC_PROMPT = (
    "Extract the conversation topic the user was following from their "
    "question. Answer with the topic only, at most 8 words."
)
RELEVANCE_PROMPT = (
    "Does the following transcript excerpt genuinely discuss the topic "
    "{topic!r}? Answer yes or no only.\n\n{text}"
)
SUMMARY_PROMPT = (
    "The user followed the {attended} conversation about {topic}. "
    "Summarize what they missed from the other directions as bullet points "
    "of the form 'While you were listening to X, you missed Y.' "
    "Mention each direction label.\n\nAttended:\n{attended_text}\n\n"
    "Missed:\n{missed_text}"
)


class StubLlmBackend:
    """Deterministic rules standing in for a hosted model."""

    kind = "deterministic-stub"

    def extract_topic(self, query: str) -> str:
        matches = list(_TOPIC_MARKER.finditer(query))
        if not matches:
            raise NoTopic(f"no topic marker in {query!r}")
        tail = query[matches[-1].end():]
        stop = _TOPIC_STOP.search(tail)
        if stop:
            tail = tail[:stop.start()]
        words = tail.split()
        while words and words[0].lower() in _ARTICLES:
            words = words[1:]
        topic = " ".join(words).strip()
        if not topic:
            raise NoTopic(f"empty topic after marker in {query!r}")
        return topic

    def is_relevant(self, topic: str, text: str) -> bool:
        # crude containment check; threshold mode is the offline default anyway
        tokens = set(re.findall(r"[a-z0-9]+", topic.lower()))
        text_tokens = set(re.findall(r"[a-z0-9]+", text.lower()))
        return bool(tokens & text_tokens)

    def summarize(self, topic: str, attended_label: str, attended_texts: list[str],
                  missed: list[tuple[str, str]]) -> str:
        if not missed:
            return (
                f"While you were listening to {topic} ({attended_label}), "
                "you missed nothing in the overlapping intervals."
            )
        lines = [
            f"While you were listening to {topic} ({attended_label}), "
            f"you missed ({label}): {text[:200]}"
            for label, text in missed
        ]
        return "\n".join(lines)


class RemoteLlmBackend:
    """Chat-completions client: messages in, first choice's content out."""

    kind = "remote-chat"

    def __init__(self, endpoint: str, model: str, token: str = "",
                 timeout_s: float = 60.0, backoff_base_s: float = 1.0,
                 transport: httpx.BaseTransport | None = None):
        self.endpoint = endpoint
        self.model = model
        self.token = token
        self.timeout_s = timeout_s
        self.backoff_base_s = backoff_base_s
        self._transport = transport

    def _chat(self, prompt: str) -> str:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        last_error = None
        for attempt in range(_RETRY_ATTEMPTS):
            if attempt:
                time.sleep(self.backoff_base_s * 2 ** (attempt - 1))
            try:
                with httpx.Client(timeout=self.timeout_s, transport=self._transport) as client:
                    response = client.post(self.endpoint, json=body, headers=headers)
                if response.status_code >= 500:
                    last_error = f"HTTP {response.status_code}"
                    continue
                if response.status_code != 200:
                    raise MalformedResponse(f"chat backend returned HTTP {response.status_code}")
                payload = response.json()
                return str(payload["choices"][0]["message"]["content"])
            except httpx.HTTPError as exc:
                last_error = str(exc)
                continue
            except json.JSONDecodeError as exc:
                raise MalformedResponse(f"chat response is not JSON: {exc}") from exc
            except (KeyError, IndexError, TypeError) as exc:
                raise MalformedResponse(f"chat response missing choices: {exc}") from exc
        raise BackendUnreachable(
            f"chat backend failed after {_RETRY_ATTEMPTS} attempts: {last_error}"
        )

    def extract_topic(self, query: str) -> str:
        answer = self._chat(f"{TOPIC_PROMPT}\n\nQuestion: {query}").strip()
        if not answer:
            raise NoTopic("chat backend returned an empty topic")
        return " ".join(answer.split()[:8])

    def is_relevant(self, topic: str, text: str) -> bool:
        answer = self._chat(RELEVANCE_PROMPT.format(topic=topic, text=text))
        return answer.strip().lower().startswith("yes")

    def summarize(self, topic: str, attended_label: str, attended_texts: list[str],
                  missed: list[tuple[str, str]]) -> str:
        missed_text = "\n".join(f"[{label}] {text}" for label, text in missed) or "(none)"
        prompt = SUMMARY_PROMPT.format(
            attended=attended_label, topic=topic,
            attended_text="\n".join(attended_texts), missed_text=missed_text,
        )
        return self._chat(prompt)
