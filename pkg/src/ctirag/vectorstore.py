"""Persistent vector store with exact cosine top-k search.

The store is rebuilt from scratch on every ingestion (no incremental upserts)
and persists as a single file ``<path>/index.rrvs``:

    header  magic "RRVS1" | dim u32 LE | count u32 LE
    record  id_len u32 | id utf-8 | vector dim x f32 LE |
            text_len u32 | text utf-8 | meta_len u32 | metadata JSON (sorted keys)

Writing is deterministic: identical chunks produce bit-identical files.
Scores are cosine similarities computed over f32 values with f64 accumulation;
hits are ordered by score descending, ties broken by chunk_id ascending.
Zero-norm vectors score 0 against everything.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"RRVS1"
INDEX_FILENAME = "index.rrvs"


class VectorStoreError(Exception):
    pass


class DimMismatch(VectorStoreError):
    pass


class DuplicateId(VectorStoreError):
    pass


class IoFailure(VectorStoreError):
    pass


class StoreClosed(VectorStoreError):
    pass


@dataclass(frozen=True)
class StoredChunk:
    chunk_id: str
    vector: np.ndarray
    text: str
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SearchHit:
    chunk_id: str
    score: float
    text: str
    metadata: dict


def _pack_str(value: str) -> bytes:
    data = value.encode("utf-8")
    return struct.pack("<I", len(data)) + data


class VectorStore:
    """Read handle over an immutable snapshot; safe for concurrent readers."""

    def __init__(self, path: Path, ids: list[str], matrix: np.ndarray, texts: list[str], metadata: list[dict]):
        self.path = Path(path)
        self._ids = ids
        self._matrix = matrix  # (count, dim) float32
        self._texts = texts
        self._metadata = metadata
        self._norms = np.linalg.norm(matrix.astype(np.float64), axis=1) if len(ids) else np.zeros(0)
        self._closed = False

    # -- lifecycle ----------------------------------------------------------

    @classmethod
    def rebuild(cls, path: str | Path, chunks: list[StoredChunk], dim: int | None = None) -> "VectorStore":
        """Replace whatever store lives at ``path`` with exactly ``chunks``.

        ``dim`` is inferred from the chunks when present (default 384 for an
        empty store). The index file is written to a temp name and swapped in,
        so a crash mid-write leaves any previous index intact.
        """
        chunks = list(chunks)
        if chunks:
            inferred = int(np.asarray(chunks[0].vector).shape[0])
            if dim is not None and dim != inferred:
                raise DimMismatch(f"dim argument {dim} != chunk dim {inferred}")
            dim = inferred
        elif dim is None:
            dim = 384

        seen: set[str] = set()
        rows = np.zeros((len(chunks), dim), dtype=np.float32)
        for i, chunk in enumerate(chunks):
            if chunk.chunk_id in seen:
                raise DuplicateId(f"duplicate chunk_id {chunk.chunk_id!r}")
            seen.add(chunk.chunk_id)
            vec = np.asarray(chunk.vector, dtype=np.float32)
            if vec.shape != (dim,):
                raise DimMismatch(f"chunk {chunk.chunk_id!r} has dim {vec.shape}, store dim {dim}")
            rows[i] = vec

        root = Path(path)
        index_path = root / INDEX_FILENAME
        tmp_path = root / (INDEX_FILENAME + ".tmp")
        try:
            root.mkdir(parents=True, exist_ok=True)
            with open(tmp_path, "wb") as fh:
                fh.write(MAGIC)
                fh.write(struct.pack("<II", dim, len(chunks)))
                for i, chunk in enumerate(chunks):
                    fh.write(_pack_str(chunk.chunk_id))
                    fh.write(rows[i].astype("<f4").tobytes())
                    fh.write(_pack_str(chunk.text))
                    meta = json.dumps(chunk.metadata, sort_keys=True, separators=(",", ":"))
                    fh.write(_pack_str(meta))
            tmp_path.replace(index_path)
        except OSError as exc:
            raise IoFailure(str(exc)) from exc

        return cls(
            root,
            ids=[c.chunk_id for c in chunks],
            matrix=rows,
            texts=[c.text for c in chunks],
            metadata=[dict(c.metadata) for c in chunks],
        )

    @classmethod
    def open(cls, path: str | Path) -> "VectorStore":
        root = Path(path)
        index_path = root / INDEX_FILENAME
        try:
            data = index_path.read_bytes()
        except OSError as exc:
            raise IoFailure(f"cannot read {index_path}: {exc}") from exc
        try:
            if data[:5] != MAGIC:
                raise IoFailure(f"bad magic in {index_path}")
            dim, count = struct.unpack_from("<II", data, 5)
            offset = 13
            ids: list[str] = []
            texts: list[str] = []
            metadata: list[dict] = []
            matrix = np.zeros((count, dim), dtype=np.float32)

            def read_str(pos: int) -> tuple[str, int]:
                (length,) = struct.unpack_from("<I", data, pos)
                pos += 4
                return data[pos : pos + length].decode("utf-8"), pos + length

            for i in range(count):
                chunk_id, offset = read_str(offset)
                vec = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
                offset += 4 * dim
                text, offset = read_str(offset)
                meta_raw, offset = read_str(offset)
                ids.append(chunk_id)
                matrix[i] = vec
                texts.append(text)
                metadata.append(json.loads(meta_raw))
        except (struct.error, UnicodeDecodeError, json.JSONDecodeError, IndexError) as exc:
            raise IoFailure(f"corrupt index {index_path}: {exc}") from exc
        return cls(root, ids=ids, matrix=matrix, texts=texts, metadata=metadata)

    def close(self) -> None:
        self._closed = True

    # -- queries ------------------------------------------------------------

    @property
    def dim(self) -> int:
        return int(self._matrix.shape[1])

    def stats(self) -> dict:
        self._check_open()
        return {"count": len(self._ids), "dim": self.dim}

    def top_k(self, query: np.ndarray, k: int) -> list[SearchHit]:
        """Exact top-k by cosine similarity; brute-force over all records."""
        self._check_open()
        if k < 1:
            raise ValueError("k must be >= 1")
        q = np.asarray(query, dtype=np.float32)
        if q.shape != (self.dim,):
            raise DimMismatch(f"query dim {q.shape} does not match store dim {self.dim}")
        count = len(self._ids)
        if count == 0:
            return []
        q64 = q.astype(np.float64)
        q_norm = float(np.linalg.norm(q64))
        if q_norm == 0.0:
            scores = np.zeros(count)
        else:
            dots = self._matrix.astype(np.float64) @ q64
            with np.errstate(divide="ignore", invalid="ignore"):
                scores = np.where(self._norms > 0.0, dots / (self._norms * q_norm), 0.0)
            scores = np.clip(scores, -1.0, 1.0)
        order = sorted(range(count), key=lambda i: (-scores[i], self._ids[i]))[:k]
        return [
            SearchHit(
                chunk_id=self._ids[i],
                score=float(scores[i]),
                text=self._texts[i],
                metadata=self._metadata[i],
            )
            for i in order
        ]

    def _check_open(self) -> None:
        if self._closed:
            raise StoreClosed(f"store at {self.path} is closed")
