"""In-process exact-search vector index with diversity-aware selection.

Vectors are stored unit-normalized so cosine similarity reduces to a dot
product.  Entries are keyed by (parent_id, seq); upserting an existing
key replaces its vector.  Searches run against an immutable snapshot, so
readers never block each other while writers hold the upsert lock.

On-disk format (version 1), line-delimited UTF-8 JSON:

    line 1   header: {"format": "claimcheck-index", "version": 1,
                      "model_id": str, "dimension": int, "count": int}
    line 2.. one entry per line, ascending chunk key:
             {"parent_id": str, "seq": int, "vector": [float, ...],
              "metadata": {str: str}}

Floats serialize with ``repr`` (shortest round-trip), so a rebuild from
identical inputs is byte-identical.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import kernels
from .corpus import ChunkKey
from .embedding import unit_normalize
from .errors import ConfigError, IndexFormatError, ValidationError

FORMAT_NAME = "claimcheck-index"
FORMAT_VERSION = 1

DEFAULT_K = 5
DEFAULT_POOL_SIZE = 20
DEFAULT_LAMBDA = 0.5
NO_THRESHOLD = -1.0


@dataclass(frozen=True)
class Hit:
    """One search result."""

    chunk_key: ChunkKey
    similarity: float
    metadata: dict = field(default_factory=dict)


class VectorIndex:
    """Exact cosine search over unit-normalized vectors."""

    def __init__(self, model_id: str, dimension: int):
        if dimension <= 0:
            raise ConfigError(f"index dimension must be positive, got {dimension}")
        self.model_id = model_id
        self.dimension = int(dimension)
        self._lock = threading.Lock()
        self._entries: dict[ChunkKey, tuple[np.ndarray, dict]] = {}
        # snapshot: (keys tuple, matrix, metadata tuple), rebuilt on upsert
        self._snapshot: tuple[tuple[ChunkKey, ...], np.ndarray, tuple[dict, ...]] = (
            (),
            np.empty((0, dimension), np.float64),
            (),
        )

    def __len__(self) -> int:
        return len(self._snapshot[0])

    def upsert(self, items: Iterable[tuple[ChunkKey, np.ndarray, dict]]) -> None:
        """Insert or replace entries; the whole batch validates before any write."""
        staged: list[tuple[ChunkKey, np.ndarray, dict]] = []
        for key, vector, metadata in items:
            arr = np.asarray(vector, dtype=np.float64)
            if arr.ndim != 1 or arr.shape[0] != self.dimension:
                got = arr.shape[0] if arr.ndim == 1 else f"shape {arr.shape}"
                raise ValidationError(
                    f"vector for {tuple(key)} has dimension {got}, index expects {self.dimension}"
                )
            staged.append((ChunkKey(str(key[0]), int(key[1])), unit_normalize(arr), dict(metadata or {})))
        if not staged:
            return
        with self._lock:
            for key, vec, meta in staged:
                self._entries[key] = (vec, meta)
            self._rebuild_snapshot()

    def _rebuild_snapshot(self) -> None:
        keys = tuple(sorted(self._entries))
        if keys:
            matrix = np.vstack([self._entries[k][0] for k in keys])
        else:
            matrix = np.empty((0, self.dimension), np.float64)
        metas = tuple(self._entries[k][1] for k in keys)
        self._snapshot = (keys, matrix, metas)

    def _prepare_query(self, query) -> np.ndarray:
        arr = np.asarray(query, dtype=np.float64)
        if arr.ndim != 1 or arr.shape[0] != self.dimension:
            got = arr.shape[0] if arr.ndim == 1 else f"shape {arr.shape}"
            raise ValidationError(f"query has dimension {got}, index expects {self.dimension}")
        return unit_normalize(arr)

    def _scan(self, query, k: int, min_similarity: float):
        q = self._prepare_query(query)
        keys, matrix, metas = self._snapshot
        if not keys:
            return keys, matrix, metas, np.empty(0, np.int64), np.empty(0, np.float64)
        idx, sims = kernels.topk_scan(matrix, q, int(k), float(min_similarity))
        return keys, matrix, metas, idx, sims

    def top_k(self, query, k: int = DEFAULT_K, min_similarity: float = NO_THRESHOLD) -> list[Hit]:
        """The k most similar entries, similarity descending, key ascending on ties."""
        keys, _, metas, idx, sims = self._scan(query, k, min_similarity)
        return [Hit(keys[i], float(s), dict(metas[i])) for i, s in zip(idx, sims)]

    def mmr_select(
        self,
        query,
        k: int = DEFAULT_K,
        pool_size: int = DEFAULT_POOL_SIZE,
        lambda_: float = DEFAULT_LAMBDA,
        min_similarity: float = NO_THRESHOLD,
    ) -> list[Hit]:
        """Relevance/diversity trade-off selection.

        Fetches the ``pool_size`` most similar entries above the
        threshold, then greedily picks k of them maximizing
        ``lambda_ * sim(query, c) - (1 - lambda_) * max_sim(c, selected)``.
        ``lambda_ = 1`` reproduces :meth:`top_k` exactly; score ties break
        toward the lowest chunk key.
        """
        if not 0.0 <= lambda_ <= 1.0:
            raise ConfigError(f"lambda must be within [0, 1], got {lambda_}")
        if pool_size < k:
            raise ConfigError(f"pool_size {pool_size} is smaller than k {k}")
        keys, matrix, metas, idx, sims = self._scan(query, pool_size, min_similarity)
        if idx.size == 0:
            return []
        # kernels break ties by position, so order the pool by chunk key;
        # snapshot rows are already key-sorted, making that ascending row index
        order = np.argsort(idx)
        pool_rows = idx[order]
        cand_sims = sims[order]
        rows = matrix[pool_rows]
        pairwise = rows @ rows.T
        chosen = kernels.mmr_greedy(cand_sims, pairwise, float(lambda_), int(k))
        return [
            Hit(keys[pool_rows[i]], float(cand_sims[i]), dict(metas[pool_rows[i]]))
            for i in chosen
        ]

    def persist(self, path: str | Path) -> None:
        """Write the index to ``path`` atomically in format version 1."""
        path = Path(path)
        keys, matrix, metas = self._snapshot
        header = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "model_id": self.model_id,
            "dimension": self.dimension,
            "count": len(keys),
        }
        tmp = path.with_name(path.name + ".tmp")
        with tmp.open("w", encoding="utf-8") as fh:
            fh.write(json.dumps(header, ensure_ascii=False, sort_keys=True) + "\n")
            for key, row, meta in zip(keys, matrix, metas):
                entry = {
                    "parent_id": key.parent_id,
                    "seq": key.seq,
                    "vector": [float(x) for x in row],
                    "metadata": {str(k): str(v) for k, v in sorted(meta.items())},
                }
                fh.write(json.dumps(entry, ensure_ascii=False, sort_keys=True) + "\n")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        """Read a persisted index; a damaged file never yields a partial index."""
        path = Path(path)
        if not path.exists():
            raise IndexFormatError(f"index file not found: {path}")
        with path.open(encoding="utf-8") as fh:
            header_line = fh.readline()
            if not header_line.strip():
                raise IndexFormatError(f"{path}: missing header line")
            try:
                header = json.loads(header_line)
            except json.JSONDecodeError as exc:
                raise IndexFormatError(f"{path}: header is not valid JSON: {exc}") from exc
            if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
                raise IndexFormatError(f"{path}: not a {FORMAT_NAME} file")
            version = header.get("version")
            if version != FORMAT_VERSION:
                raise IndexFormatError(
                    f"{path}: format version {version} is not supported (expected {FORMAT_VERSION})"
                )
            count = int(header.get("count", -1))
            dimension = int(header.get("dimension", 0))
            model_id = str(header.get("model_id", ""))
            staged: list[tuple[ChunkKey, np.ndarray, dict]] = []
            for lineno, line in enumerate(fh, start=2):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                    key = ChunkKey(str(row["parent_id"]), int(row["seq"]))
                    vec = np.asarray(row["vector"], dtype=np.float64)
                    meta = dict(row.get("metadata") or {})
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise IndexFormatError(f"{path}: bad entry at line {lineno}: {exc}") from exc
                if vec.ndim != 1 or vec.shape[0] != dimension:
                    raise IndexFormatError(
                        f"{path}: entry at line {lineno} has dimension {vec.shape}, expected {dimension}"
                    )
                norm = float(np.linalg.norm(vec))
                if norm == 0.0 or not np.isfinite(norm):
                    raise IndexFormatError(
                        f"{path}: entry at line {lineno} holds a zero or non-finite vector"
                    )
                # vectors were written normalized; renormalizing them here
                # would shift similarities by 1 ulp and could flip exact-tie
                # ordering between a rebuilt and a reloaded index
                if abs(norm - 1.0) > 1e-9:
                    vec = vec / norm
                staged.append((key, vec, meta))
        if count != len(staged):
            raise IndexFormatError(
                f"{path}: header says {count} entries but file holds {len(staged)} (truncated?)"
            )
        index = cls(model_id=model_id, dimension=dimension)
        with index._lock:
            for key, vec, meta in staged:
                index._entries[key] = (vec, meta)
            index._rebuild_snapshot()
        return index
