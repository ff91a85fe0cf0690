"""Session persistence and the ingest pipeline.

A session directory is self-contained: the original capture, one WAV and
one transcript per directional stream, the vector index, the chunk
records, and a manifest written last via atomic rename so readers only
ever see committed sessions.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .audio import MultichannelAudio, read_wav, write_wav
from .beamform import DirectionalStream, separate_streams
from .config import ServiceConfig, build_asr_backend, build_embedding_provider
from .doa import srp_phat
from .audio import stft
from .embeddings import embed
from .errors import BadConfig, ChannelMismatch, UnknownSession
from .geometry import uma8_geometry
from .index import MetadataStore, VectorIndex, empty_index, index_add, load_index, save_index
from .transcribe import chunk_segments, transcribe_stream

MANIFEST_NAME = "manifest.json"

_COMPASS = [
    (0.0, "front"), (45.0, "front-left"), (90.0, "left"), (135.0, "back-left"),
    (180.0, "back"), (225.0, "back-right"), (270.0, "right"), (315.0, "front-right"),
]


@dataclass(frozen=True)
class SessionManifest:
    session_id: str
    created_at: str
    sample_rate_hz: int
    geometry_name: str
    streams: list[dict]  # {label, azimuth_deg, wav_path, transcript_path}
    chunk_count: int
    config: dict

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "created_at": self.created_at,
            "sample_rate_hz": self.sample_rate_hz,
            "geometry_name": self.geometry_name,
            "streams": self.streams,
            "chunk_count": self.chunk_count,
            "config": self.config,
        }

    @staticmethod
    def from_dict(d: dict) -> "SessionManifest":
        return SessionManifest(
            session_id=d["session_id"],
            created_at=d["created_at"],
            sample_rate_hz=int(d["sample_rate_hz"]),
            geometry_name=d["geometry_name"],
            streams=list(d["streams"]),
            chunk_count=int(d["chunk_count"]),
            config=dict(d["config"]),
        )


def compass_label(azimuth_deg: float) -> str:
    azimuth_deg = azimuth_deg % 360.0
    best = min(_COMPASS, key=lambda c: min(abs(c[0] - azimuth_deg),
                                           360.0 - abs(c[0] - azimuth_deg)))
    return best[1]


def auto_labels(azimuths: list[float]) -> dict[str, float]:
    """Compass names for DOA peaks, deduplicated with the rounded azimuth."""
    labels: dict[str, float] = {}
    for azimuth in azimuths:
        label = compass_label(azimuth)
        if label in labels:
            label = f"{label}-{int(round(azimuth))}"
        labels[label] = azimuth
    return labels


def session_id_for(wav_bytes: bytes, plan: dict, config: ServiceConfig) -> str:
    digest = hashlib.sha256()
    digest.update(wav_bytes)
    digest.update(json.dumps(plan, sort_keys=True).encode())
    digest.update(json.dumps(config.snapshot(), sort_keys=True).encode())
    return digest.hexdigest()[:12]


class SessionStore:
    """Filesystem-backed session registry under one root directory."""

    def __init__(self, root, config: ServiceConfig):
        self.root = Path(root)
        self.config = config
        self._ingest_locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def _lock_for(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._ingest_locks.setdefault(session_id, threading.Lock())

    def session_dir(self, session_id: str) -> Path:
        return self.root / session_id

    def list_sessions(self) -> list[SessionManifest]:
        out = []
        if not self.root.exists():
            return out
        for entry in sorted(self.root.iterdir()):
            manifest = entry / MANIFEST_NAME
            if manifest.is_file():
                out.append(SessionManifest.from_dict(json.loads(manifest.read_text())))
        return out

    def manifest(self, session_id: str) -> SessionManifest:
        path = self.session_dir(session_id) / MANIFEST_NAME
        if not path.is_file():
            raise UnknownSession(f"no session {session_id}")
        return SessionManifest.from_dict(json.loads(path.read_text()))

    def load_session(self, session_id: str) -> tuple[SessionManifest, VectorIndex, MetadataStore]:
        manifest = self.manifest(session_id)
        directory = self.session_dir(session_id)
        index, store = load_index(directory / "index.bin", directory / "chunks.json")
        return manifest, index, store

    def stream_audio(self, session_id: str, direction_label: str) -> MultichannelAudio:
        manifest = self.manifest(session_id)
        for stream in manifest.streams:
            if stream["label"] == direction_label:
                return read_wav(self.session_dir(session_id) / stream["wav_path"])
        raise UnknownSession(f"session {session_id} has no stream {direction_label!r}")

    def input_audio(self, session_id: str) -> MultichannelAudio:
        self.manifest(session_id)
        return read_wav(self.session_dir(session_id) / "input.wav")

    def ingest(self, wav_path, plan_azimuths: dict[str, float] | None = None,
               auto_doa: bool = False, n_sources: int = 2) -> str:
        """Run the capture -> streams -> transcripts -> chunks -> index pipeline.

        Idempotent: the session id is a content hash of the input plus the
        ingest-relevant configuration, and an existing committed session is
        returned as-is.
        """
        wav_path = Path(wav_path)
        wav_bytes = wav_path.read_bytes()
        plan_key = {"azimuths": plan_azimuths or {}, "auto_doa": auto_doa,
                    "n_sources": n_sources if auto_doa else 0}
        session_id = session_id_for(wav_bytes, plan_key, self.config)

        with self._lock_for(session_id):
            directory = self.session_dir(session_id)
            if (directory / MANIFEST_NAME).is_file():
                return session_id
            self._build(session_id, wav_bytes, plan_azimuths, auto_doa, n_sources)
            return session_id

    def _build(self, session_id: str, wav_bytes: bytes,
               plan_azimuths: dict[str, float] | None, auto_doa: bool, n_sources: int):
        directory = self.session_dir(session_id)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "streams").mkdir(exist_ok=True)
        (directory / "transcripts").mkdir(exist_ok=True)

        input_path = directory / "input.wav"
        input_path.write_bytes(wav_bytes)
        audio = read_wav(input_path)

        geometry = uma8_geometry()
        if audio.n_channels != geometry.n_mics:
            raise ChannelMismatch(
                f"{audio.n_channels}-channel capture vs {geometry.n_mics}-mic geometry"
            )

        dsp = self.config.dsp
        if auto_doa:
            estimate = srp_phat(
                stft(audio, dsp.window_size, dsp.hop_size), geometry,
                grid_resolution_deg=dsp.grid_resolution_deg,
                max_peaks=n_sources,
                min_separation_deg=dsp.min_separation_deg,
                speed_of_sound=dsp.speed_of_sound,
            )
            azimuths = auto_labels([p[0] for p in estimate.peaks])
        else:
            if not plan_azimuths:
                raise BadConfig("provide stream azimuths or enable auto DOA")
            azimuths = dict(plan_azimuths)

        streams = separate_streams(
            audio, geometry, azimuths,
            window_size=dsp.window_size, hop_size=dsp.hop_size,
            loading_factor=dsp.loading_factor,
            min_separation_deg=dsp.min_separation_deg,
            speed_of_sound=dsp.speed_of_sound,
        )

        asr = build_asr_backend(self.config)
        provider = build_embedding_provider(self.config)

        stream_entries = []
        store = MetadataStore()
        index = empty_index(self.config.embeddings.dim)
        next_chunk_id = 0
        for stream in streams:
            wav_rel = f"streams/{stream.label}.wav"
            write_wav(stream.as_audio(), directory / wav_rel, bit_depth=16)
            segments = transcribe_stream(stream, asr)
            transcript_rel = f"transcripts/{stream.label}.json"
            (directory / transcript_rel).write_text(json.dumps(
                [{"text": s.text, "start": s.start_s, "end": s.end_s}
                 for s in segments], indent=2))
            chunks = chunk_segments(segments, direction_label=stream.label,
                                    azimuth_deg=stream.azimuth_deg,
                                    first_chunk_id=next_chunk_id)
            next_chunk_id += len(chunks)
            vectors = [embed(c.text, provider) for c in chunks]
            index = index_add(index, [c.chunk_id for c in chunks], vectors)
            for chunk in chunks:
                store.add(chunk)
            stream_entries.append({
                "label": stream.label,
                "azimuth_deg": stream.azimuth_deg,
                "wav_path": wav_rel,
                "transcript_path": transcript_rel,
            })

        save_index(index, store, directory / "index.bin", directory / "chunks.json")

        manifest = SessionManifest(
            session_id=session_id,
            created_at=datetime.now(timezone.utc).isoformat(),
            sample_rate_hz=audio.sample_rate_hz,
            geometry_name=geometry.name,
            streams=stream_entries,
            chunk_count=len(store),
            config=self.config.snapshot(),
        )
        tmp = directory / (MANIFEST_NAME + ".tmp")
        tmp.write_text(json.dumps(manifest.to_dict(), indent=2))
        os.replace(tmp, directory / MANIFEST_NAME)
