"""Exact top-k cosine vector index plus the chunk metadata store.

Session scale is thousands of chunks, so a flat normalized matrix with a
full scan beats any approximate structure on both simplicity and recall.
Adding rows returns a new index value; readers can keep using the old
snapshot while an ingest builds the next one.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingVector
from .errors import CorruptFile, DuplicateId, EmptyIndex, UnknownChunk
from .transcribe import Chunk

_MAGIC = b"BFLM"
_VERSION = 1


@dataclass(frozen=True)
class VectorIndex:
    """N x D matrix of L2-normalized float32 rows with aligned chunk ids."""

    matrix: np.ndarray = field(default_factory=lambda: np.zeros((0, 384), dtype=np.float32))
    ids: tuple = ()

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float32)
        if m.ndim != 2:
            raise CorruptFile("index matrix must be 2-D")
        if m.shape[0] != len(self.ids):
            raise CorruptFile(f"{m.shape[0]} rows vs {len(self.ids)} ids")
        if len(set(self.ids)) != len(self.ids):
            raise DuplicateId("index ids must be unique")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def empty_index(dim: int = 384) -> VectorIndex:
    return VectorIndex(np.zeros((0, dim), dtype=np.float32), ())


def index_add(index: VectorIndex, chunk_ids: list[int],
              vectors: list[EmbeddingVector]) -> VectorIndex:
    """New index with the batch appended; rejects ids already present."""
    if len(chunk_ids) != len(vectors):
        raise DuplicateId(f"{len(chunk_ids)} ids vs {len(vectors)} vectors")
    existing = set(index.ids)
    for cid in chunk_ids:
        if cid in existing:
            raise DuplicateId(f"chunk id {cid} already indexed")
        existing.add(cid)
    if not vectors:
        return index
    rows = np.stack([v.values for v in vectors]).astype(np.float32)
    if index.size and rows.shape[1] != index.dim:
        raise CorruptFile(f"vector dim {rows.shape[1]} vs index dim {index.dim}")
    matrix = rows if index.size == 0 else np.vstack([index.matrix, rows])
    return VectorIndex(matrix, index.ids + tuple(int(c) for c in chunk_ids))


def index_search(index: VectorIndex, query: EmbeddingVector, k: int
                 ) -> list[tuple[int, float]]:
    """Exact top-k by cosine, ties broken by ascending chunk id."""
    if index.size == 0:
        raise EmptyIndex("search on an empty index")
    scores = index.matrix.astype(np.float64) @ query.values
    order = sorted(range(index.size), key=lambda i: (-scores[i], index.ids[i]))
    top = order[:min(k, index.size)]
    return [(index.ids[i], float(scores[i])) for i in top]


class MetadataStore:
    """chunk_id -> Chunk lookup backing the what/where/when metadata."""

    def __init__(self, chunks: list[Chunk] | None = None):
        self._chunks: dict[int, Chunk] = {}
        for chunk in chunks or []:
            self.add(chunk)

    def add(self, chunk: Chunk):
        if chunk.chunk_id in self._chunks:
            raise DuplicateId(f"chunk id {chunk.chunk_id} already stored")
        self._chunks[chunk.chunk_id] = chunk

    def get(self, chunk_id: int) -> Chunk:
        try:
            return self._chunks[chunk_id]
        except KeyError:
            raise UnknownChunk(f"no chunk with id {chunk_id}") from None

    def __len__(self) -> int:
        return len(self._chunks)

    def __contains__(self, chunk_id: int) -> bool:
        return chunk_id in self._chunks

    def ids(self) -> list[int]:
        return sorted(self._chunks)

    def all_chunks(self) -> list[Chunk]:
        return [self._chunks[i] for i in self.ids()]

    def directions(self) -> list[str]:
        return sorted({c.direction_label for c in self._chunks.values()})

    def stream_chunks(self, direction_label: str) -> list[Chunk]:
        chunks = [c for c in self._chunks.values() if c.direction_label == direction_label]
        return sorted(chunks, key=lambda c: c.stream_position)

    def to_json(self) -> str:
        return json.dumps([c.to_dict() for c in self.all_chunks()], indent=2)

    @staticmethod
    def from_json(text: str) -> "MetadataStore":
        return MetadataStore([Chunk.from_dict(d) for d in json.loads(text)])


def save_index(index: VectorIndex, store: MetadataStore, index_path,
               chunks_path=None) -> None:
    """Write the binary index and the chunk-record JSON next to it."""
    index_path = Path(index_path)
    header = _MAGIC + struct.pack("<IQI", _VERSION, index.size, index.dim)
    rows = np.ascontiguousarray(index.matrix, dtype="<f4").tobytes()
    ids = struct.pack(f"<{index.size}Q", *index.ids)
    index_path.write_bytes(header + rows + ids)

    chunks_path = Path(chunks_path) if chunks_path else index_path.with_suffix(".chunks.json")
    chunks_path.write_text(store.to_json())


def load_index(index_path, chunks_path=None) -> tuple[VectorIndex, MetadataStore]:
    """Inverse of save_index; CorruptFile on magic or length mismatch."""
    index_path = Path(index_path)
    data = index_path.read_bytes()
    if len(data) < 20 or data[:4] != _MAGIC:
        raise CorruptFile(f"{index_path}: bad magic")
    version, n, dim = struct.unpack_from("<IQI", data, 4)
    if version != _VERSION:
        raise CorruptFile(f"{index_path}: unsupported version {version}")
    expected = 20 + n * dim * 4 + n * 8
    if len(data) != expected:
        raise CorruptFile(f"{index_path}: {len(data)} bytes, expected {expected}")
    rows = np.frombuffer(data, dtype="<f4", count=n * dim, offset=20)
    matrix = rows.reshape(n, dim).copy()
    ids = struct.unpack_from(f"<{n}Q", data, 20 + n * dim * 4)
    index = VectorIndex(matrix, ids)

    chunks_path = Path(chunks_path) if chunks_path else index_path.with_suffix(".chunks.json")
    store = MetadataStore.from_json(chunks_path.read_text())
    return index, store
