"""Transcription boundary plus sentence splitting and ~3-sentence chunking.

ASR itself is pluggable: a remote HTTP backend posts stream audio and
parses timestamped segments, and a fixture backend loads segment JSON for
offline runs. Everything downstream of the segment list is deterministic.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import httpx

from .audio import encode_wav
from .beamform import DirectionalStream
from .errors import BackendUnreachable, BadConfig, FixtureMissing, MalformedResponse

MAX_SENTENCES_PER_CHUNK = 3
ABBREVIATIONS = ("dr.", "mr.", "mrs.", "ms.", "e.g.", "i.e.", "etc.")

_SENTENCE_END = re.compile(r"[.!?]+(?=\s|$)")
_RETRY_ATTEMPTS = 3


@dataclass(frozen=True)
class TranscriptSegment:
    text: str
    start_s: float
    end_s: float

    def __post_init__(self):
        if not self.text.strip():
            raise BadConfig("segment text is empty")
        if not self.start_s < self.end_s:
            raise BadConfig(f"segment interval [{self.start_s}, {self.end_s}] is empty")


@dataclass(frozen=True)
class Chunk:
    """~3-sentence transcript unit carrying what/where/when metadata."""

    chunk_id: int
    text: str
    direction_label: str
    azimuth_deg: float
    start_s: float
    end_s: float
    stream_position: int

    def to_dict(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "text": self.text,
            "direction_label": self.direction_label,
            "azimuth_deg": self.azimuth_deg,
            "start_s": self.start_s,
            "end_s": self.end_s,
            "stream_position": self.stream_position,
        }

    @staticmethod
    def from_dict(d: dict) -> "Chunk":
        return Chunk(
            chunk_id=int(d["chunk_id"]),
            text=d["text"],
            direction_label=d["direction_label"],
            azimuth_deg=float(d["azimuth_deg"]),
            start_s=float(d["start_s"]),
            end_s=float(d["end_s"]),
            stream_position=int(d["stream_position"]),
        )


def _parse_segments(raw) -> list[TranscriptSegment]:
    if not isinstance(raw, list):
        raise MalformedResponse("segments payload is not a list")
    segments = []
    for item in raw:
        try:
            segments.append(TranscriptSegment(
                text=str(item["text"]),
                start_s=float(item["start"]),
                end_s=float(item["end"]),
            ))
        except (KeyError, TypeError, ValueError, BadConfig) as exc:
            raise MalformedResponse(f"bad segment entry {item!r}: {exc}") from exc
    return sorted(segments, key=lambda s: (s.start_s, s.end_s))


class FixtureAsrBackend:
    """Loads segments from JSON files: a single file, or <label>.json in a directory."""

    kind = "fixture-file"

    def __init__(self, path):
        self.path = Path(path)

    def transcribe(self, stream: DirectionalStream) -> list[TranscriptSegment]:
        path = self.path
        if path.is_dir():
            path = path / f"{stream.label}.json"
        if not path.exists():
            raise FixtureMissing(f"no transcript fixture at {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise MalformedResponse(f"{path}: {exc}") from exc
        return _parse_segments(raw)


class RemoteAsrBackend:
    """POSTs stream audio as a multipart WAV upload; expects {"segments": [...]}.

    At most two requests are in flight at once; transient failures retry
    with exponential backoff before giving up.
    """

    kind = "remote-http"

    def __init__(self, endpoint: str, token: str = "", timeout_s: float = 60.0,
                 backoff_base_s: float = 1.0, max_in_flight: int = 2,
                 transport: httpx.BaseTransport | None = None):
        self.endpoint = endpoint
        self.token = token
        self.timeout_s = timeout_s
        self.backoff_base_s = backoff_base_s
        self._gate = threading.Semaphore(max_in_flight)
        self._transport = transport

    def _headers(self) -> dict:
        return {"Authorization": f"Bearer {self.token}"} if self.token else {}

    def transcribe(self, stream: DirectionalStream) -> list[TranscriptSegment]:
        wav_bytes, _ = encode_wav(stream.as_audio(), bit_depth=16)

        last_error = None
        for attempt in range(_RETRY_ATTEMPTS):
            if attempt:
                time.sleep(self.backoff_base_s * 2 ** (attempt - 1))
            try:
                with self._gate, httpx.Client(
                    timeout=self.timeout_s, transport=self._transport
                ) as client:
                    response = client.post(
                        self.endpoint,
                        files={"file": (f"{stream.label}.wav", wav_bytes, "audio/wav")},
                        headers=self._headers(),
                    )
                if response.status_code >= 500:
                    last_error = f"HTTP {response.status_code}"
                    continue
                if response.status_code != 200:
                    raise MalformedResponse(
                        f"ASR backend returned HTTP {response.status_code}"
                    )
                payload = response.json()
            except httpx.HTTPError as exc:
                last_error = str(exc)
                continue
            except json.JSONDecodeError as exc:
                raise MalformedResponse(f"ASR response is not JSON: {exc}") from exc
            if "segments" not in payload:
                raise MalformedResponse("ASR response lacks a segments array")
            return _parse_segments(payload["segments"])
        raise BackendUnreachable(
            f"ASR backend failed after {_RETRY_ATTEMPTS} attempts: {last_error}"
        )


def transcribe_stream(stream: DirectionalStream, backend) -> list[TranscriptSegment]:
    """Segments for one directional stream, sorted by start time."""
    return backend.transcribe(stream)


def split_sentences(text: str) -> list[str]:
    """Rule-based splitter: break on ./!/? followed by whitespace or end,
    except after known abbreviations. Trailing unterminated text is kept
    as a final sentence."""
    sentences = []
    start = 0
    for match in _SENTENCE_END.finditer(text):
        candidate = text[start:match.end()].strip()
        if not candidate:
            start = match.end()
            continue
        last_word = candidate.rsplit(None, 1)[-1].lower()
        if last_word in ABBREVIATIONS:
            continue
        sentences.append(candidate)
        start = match.end()
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def _split_with_tail(text: str) -> tuple[list[str], str]:
    """Complete sentences plus any unterminated trailing fragment.

    Text ending in an abbreviation counts as unterminated so "We saw Dr."
    joins the next segment's "Smith." into one sentence.
    """
    parts = split_sentences(text)
    if not parts:
        return [], ""
    last = parts[-1]
    terminated = bool(re.search(r"[.!?]$", last))
    if terminated and last.rsplit(None, 1)[-1].lower() in ABBREVIATIONS:
        terminated = False
    if not terminated:
        return parts[:-1], last
    return parts, ""


def chunk_segments(segments: list[TranscriptSegment], direction_label: str = "",
                   azimuth_deg: float = 0.0, max_sentences: int = MAX_SENTENCES_PER_CHUNK,
                   first_chunk_id: int = 0) -> list[Chunk]:
    """Greedy grouping of sentences into chunks of at most ``max_sentences``.

    A sentence spanning several segments belongs to the segment where it
    ends, but the chunk's timestamps span every contributing segment.
    """
    # each entry: (sentence text, set of contributing segment indices)
    sentences: list[tuple[str, set[int]]] = []
    fragment = ""
    fragment_segs: set[int] = set()
    for i, segment in enumerate(segments):
        text = f"{fragment} {segment.text}".strip() if fragment else segment.text
        complete, tail = _split_with_tail(text)
        contributors = fragment_segs | {i}
        for j, sentence in enumerate(complete):
            # only the first sentence can reach back into the carried fragment
            sentences.append((sentence, set(contributors) if j == 0 else {i}))
        if tail:
            fragment_segs = {i} if complete else contributors
        else:
            fragment_segs = set()
        fragment = tail
    if fragment:
        sentences.append((fragment, fragment_segs))

    chunks = []
    for base in range(0, len(sentences), max_sentences):
        group = sentences[base:base + max_sentences]
        seg_indices = sorted(set().union(*(s[1] for s in group)))
        chunks.append(Chunk(
            chunk_id=first_chunk_id + len(chunks),
            text=" ".join(s[0] for s in group),
            direction_label=direction_label,
            azimuth_deg=azimuth_deg,
            start_s=min(segments[k].start_s for k in seg_indices),
            end_s=max(segments[k].end_s for k in seg_indices),
            stream_position=len(chunks),
        ))
    return chunks
