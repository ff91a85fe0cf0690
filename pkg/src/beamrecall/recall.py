"""The "what did I miss" query pipeline.

Stages: topic extraction -> top-k retrieval over the index -> relevance
filtering -> window expansion around each kept centroid -> overlap lookup
across the non-attended streams -> contrastive summary. Offline mode
(hash embeddings + stub chat + threshold filtering) is fully
deterministic; identical inputs yield byte-identical serialized results.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .embeddings import embed
from .errors import (
    BadConfig,
    BeamrecallError,
    MixedStreams,
    NoRelevantChunks,
    PipelineError,
    UnknownChunk,
)
from .index import MetadataStore, VectorIndex, index_search
from .transcribe import Chunk


@dataclass(frozen=True)
class RecallConfig:
    top_k: int = 10
    window_k: int = 2
    min_overlap_s: float = 0.5
    relevance_mode: str = "threshold"  # "threshold" | "llm"
    relevance_threshold: float = 0.35

    def __post_init__(self):
        if self.top_k < 1:
            raise BadConfig("top_k must be >= 1")
        if self.window_k < 0:
            raise BadConfig("window_k must be >= 0")
        if self.min_overlap_s <= 0:
            raise BadConfig("min_overlap_s must be > 0")
        if self.relevance_mode not in ("threshold", "llm"):
            raise BadConfig(f"unknown relevance_mode {self.relevance_mode!r}")

    def with_overrides(self, overrides: dict | None) -> "RecallConfig":
        if not overrides:
            return self
        known = {k: v for k, v in overrides.items()
                 if k in ("top_k", "window_k", "min_overlap_s",
                          "relevance_mode", "relevance_threshold")}
        return replace(self, **known)


@dataclass(frozen=True)
class Snippet:
    """Contiguous run of chunks from one stream, ready for playback."""

    direction_label: str
    azimuth_deg: float
    start_s: float
    end_s: float
    text: str
    chunk_ids: tuple

    def position_range(self, store: MetadataStore) -> tuple[int, int]:
        positions = [store.get(c).stream_position for c in self.chunk_ids]
        return min(positions), max(positions)

    def to_dict(self) -> dict:
        return {
            "direction_label": self.direction_label,
            "azimuth_deg": self.azimuth_deg,
            "start_s": self.start_s,
            "end_s": self.end_s,
            "text": self.text,
            "chunk_ids": list(self.chunk_ids),
        }


@dataclass(frozen=True)
class RecallResult:
    topic: str
    attended_direction: str
    attended_azimuth_deg: float
    attended: list[Snippet]
    missed: dict[str, list[Snippet]]
    summary: str
    playback_refs: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "topic": self.topic,
            "attended_direction": self.attended_direction,
            "attended_azimuth_deg": self.attended_azimuth_deg,
            "attended": [s.to_dict() for s in self.attended],
            "missed": {label: [s.to_dict() for s in snippets]
                       for label, snippets in self.missed.items()},
            "summary": self.summary,
            "playback_refs": self.playback_refs,
        }

    def to_json(self) -> str:
        """Canonical serialization: sorted keys, compact separators."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"),
                          ensure_ascii=False)


def extract_topic(query: str, llm) -> str:
    if not query.strip():
        raise BadConfig("query is empty")
    return llm.extract_topic(query)


def retrieve_attended(topic: str, index: VectorIndex, store: MetadataStore,
                      config: RecallConfig, provider) -> list[tuple[Chunk, float]]:
    """Top-k chunks for the topic, restricted to the best-matching direction.

    The attended direction is taken to be the direction of the single
    highest-scoring chunk; hits from other directions are dropped.
    """
    query_vector = embed(topic, provider)
    hits = index_search(index, query_vector, config.top_k)
    attended_label = store.get(hits[0][0]).direction_label
    return [(store.get(cid), score) for cid, score in hits
            if store.get(cid).direction_label == attended_label]


def filter_relevant(topic: str, candidates: list[tuple[Chunk, float]], llm,
                    config: RecallConfig) -> list[tuple[Chunk, float]]:
    """Keep candidates that pass the relevance check, preserving order."""
    if config.relevance_mode == "threshold":
        return [(c, s) for c, s in candidates if s >= config.relevance_threshold]
    return [(c, s) for c, s in candidates if llm.is_relevant(topic, c.text)]


def _snippet_from_chunks(chunks: list[Chunk]) -> Snippet:
    chunks = sorted(chunks, key=lambda c: c.stream_position)
    return Snippet(
        direction_label=chunks[0].direction_label,
        azimuth_deg=chunks[0].azimuth_deg,
        start_s=min(c.start_s for c in chunks),
        end_s=max(c.end_s for c in chunks),
        text=" ".join(c.text for c in chunks),
        chunk_ids=tuple(c.chunk_id for c in chunks),
    )


def expand_window(centroid: Chunk, store: MetadataStore, window_k: int) -> Snippet:
    """Snippet spanning stream positions [c-K, c+K], clamped at stream bounds."""
    if centroid.chunk_id not in store:
        raise UnknownChunk(f"centroid {centroid.chunk_id} not in store")
    stream = store.stream_chunks(centroid.direction_label)
    lo = max(0, centroid.stream_position - window_k)
    hi = min(len(stream) - 1, centroid.stream_position + window_k)
    return _snippet_from_chunks(stream[lo:hi + 1])


def merge_snippets(snippets: list[Snippet], store: MetadataStore) -> list[Snippet]:
    """Union of overlapping or touching position ranges within one stream."""
    if not snippets:
        return []
    labels = {s.direction_label for s in snippets}
    if len(labels) > 1:
        raise MixedStreams(f"cannot merge across streams {sorted(labels)}")
    stream = store.stream_chunks(snippets[0].direction_label)
    ranges = sorted(s.position_range(store) for s in snippets)
    merged = [list(ranges[0])]
    for lo, hi in ranges[1:]:
        if lo <= merged[-1][1] + 1:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [_snippet_from_chunks(stream[lo:hi + 1]) for lo, hi in merged]


def _overlap_s(a_start: float, a_end: float, b_start: float, b_end: float) -> float:
    return min(a_end, b_end) - max(a_start, b_start)


def find_missed(attended: list[Snippet], store: MetadataStore,
                config: RecallConfig) -> dict[str, list[Snippet]]:
    """Chunks from other streams overlapping the attended intervals.

    A chunk is included when it overlaps any attended snippet by at least
    min_overlap_s; included chunks then coalesce into snippets wherever
    their stream positions are adjacent.
    """
    if not attended:
        raise NoRelevantChunks("no attended snippets to match against")
    attended_label = attended[0].direction_label
    missed: dict[str, list[Snippet]] = {}
    for label in store.directions():
        if label == attended_label:
            continue
        hits = [
            chunk for chunk in store.stream_chunks(label)
            if any(_overlap_s(chunk.start_s, chunk.end_s, s.start_s, s.end_s)
                   >= config.min_overlap_s for s in attended)
        ]
        if not hits:
            continue
        groups: list[list[Chunk]] = [[hits[0]]]
        for chunk in hits[1:]:
            if chunk.stream_position == groups[-1][-1].stream_position + 1:
                groups[-1].append(chunk)
            else:
                groups.append([chunk])
        missed[label] = sorted((_snippet_from_chunks(g) for g in groups),
                               key=lambda s: s.start_s)
    return missed


def summarize_contrastive(topic: str, attended: list[Snippet],
                          missed: dict[str, list[Snippet]], llm) -> str:
    if not attended:
        raise NoRelevantChunks("nothing attended to summarize against")
    attended_label = attended[0].direction_label
    missed_pairs = [(label, snippet.text)
                    for label in sorted(missed)
                    for snippet in missed[label]]
    return llm.summarize(topic, attended_label,
                         [s.text for s in attended], missed_pairs)


def answer_query(index: VectorIndex, store: MetadataStore, query: str,
                 config: RecallConfig, llm, provider) -> RecallResult:
    """Run the full pipeline; component failures carry their stage name."""

    def run(stage, fn, *args):
        try:
            return fn(*args)
        except BeamrecallError as exc:
            raise PipelineError(stage, exc) from exc

    topic = run("extract_topic", extract_topic, query, llm)
    hits = run("retrieve", retrieve_attended, topic, index, store, config, provider)
    kept = run("filter", filter_relevant, topic, hits, llm, config)
    if not kept:
        raise PipelineError("filter", NoRelevantChunks(
            f"relevance filtering removed all {len(hits)} candidates"))

    expanded = [run("expand", expand_window, chunk, store, config.window_k)
                for chunk, _ in kept]
    attended = run("expand", merge_snippets, expanded, store)
    missed = run("find_missed", find_missed, attended, store, config)
    summary = run("summarize", summarize_contrastive, topic, attended, missed, llm)

    refs = [{"direction": s.direction_label, "start_s": s.start_s, "end_s": s.end_s}
            for s in attended]
    refs.extend(
        {"direction": s.direction_label, "start_s": s.start_s, "end_s": s.end_s}
        for label in sorted(missed) for s in missed[label]
    )
    return RecallResult(
        topic=topic,
        attended_direction=attended[0].direction_label,
        attended_azimuth_deg=attended[0].azimuth_deg,
        attended=attended,
        missed=missed,
        summary=summary,
        playback_refs=refs,
    )
