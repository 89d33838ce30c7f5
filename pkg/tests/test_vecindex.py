"""Exact-search index: queries, tie rules, and the persistence format."""

from __future__ import annotations

import json

import numpy as np
import pytest

from claimcheck.corpus import ChunkKey
from claimcheck.errors import ConfigError, IndexFormatError, ValidationError
from claimcheck.vecindex import VectorIndex


def basis_index(dimension=4, model_id="m") -> VectorIndex:
    index = VectorIndex(model_id=model_id, dimension=dimension)
    items = [
        (ChunkKey("doc", i), np.eye(dimension)[i], {"title": f"t{i}", "text": f"body {i}"})
        for i in range(dimension)
    ]
    index.upsert(items)
    return index


def test_len_and_empty_search():
    index = VectorIndex("m", 3)
    assert len(index) == 0
    assert index.top_k([1.0, 0.0, 0.0]) == []
    assert index.mmr_select([1.0, 0.0, 0.0]) == []


def test_dimension_validation():
    with pytest.raises(ConfigError):
        VectorIndex("m", 0)
    index = VectorIndex("m", 3)
    with pytest.raises(ValidationError):
        index.top_k([1.0, 0.0])


def test_top_k_orders_by_similarity_then_key():
    index = VectorIndex("m", 2)
    index.upsert(
        [
            (ChunkKey("b", 0), [1.0, 0.0], {}),
            (ChunkKey("a", 1), [1.0, 0.0], {}),  # exact tie with b:0
            (ChunkKey("a", 0), [0.6, 0.8], {}),
        ]
    )
    hits = index.top_k([1.0, 0.0], k=3)
    assert [tuple(h.chunk_key) for h in hits] == [("a", 1), ("b", 0), ("a", 0)]
    assert hits[0].similarity == pytest.approx(1.0)
    assert hits[2].similarity == pytest.approx(0.6)


def test_top_k_threshold_and_k():
    index = basis_index()
    query = [0.9, 0.3, 0.0, 0.0]
    assert len(index.top_k(query, k=2)) == 2
    hits = index.top_k(query, k=10, min_similarity=0.5)
    assert [h.chunk_key.seq for h in hits] == [0]


def test_vectors_stored_normalized():
    index = VectorIndex("m", 2)
    index.upsert([(ChunkKey("a", 0), [10.0, 0.0], {})])
    assert index.top_k([1.0, 0.0])[0].similarity == pytest.approx(1.0)


def test_upsert_replaces_existing_key():
    index = VectorIndex("m", 2)
    index.upsert([(ChunkKey("a", 0), [1.0, 0.0], {"v": "old"})])
    index.upsert([(ChunkKey("a", 0), [0.0, 1.0], {"v": "new"})])
    assert len(index) == 1
    hit = index.top_k([0.0, 1.0])[0]
    assert hit.similarity == pytest.approx(1.0)
    assert hit.metadata == {"v": "new"}


def test_upsert_validates_whole_batch_before_writing():
    index = VectorIndex("m", 2)
    with pytest.raises(ValidationError):
        index.upsert([(ChunkKey("a", 0), [1.0, 0.0], {}), (ChunkKey("a", 1), [1.0], {})])
    assert len(index) == 0  # nothing from the bad batch landed


def test_metadata_is_copied_per_hit():
    index = basis_index()
    hit = index.top_k([1.0, 0.0, 0.0, 0.0], k=1)[0]
    hit.metadata["title"] = "mutated"
    assert index.top_k([1.0, 0.0, 0.0, 0.0], k=1)[0].metadata["title"] == "t0"


# -- MMR ----------------------------------------------------------------------


def test_mmr_prefers_novel_evidence():
    # relevances ~(0.91, 0.86, 0.50) with a and b nearly duplicate
    # (a.b = 0.95) while c is novel (a.c = 0.1); at lambda 0.5 the second
    # pick trades b's higher relevance for c's novelty
    a = [1.0, 0.0, 0.0]
    b = [0.95, 0.3122, 0.0]
    c = [0.1, 0.05, 0.9937]
    query = [0.9, -0.016, 0.4136]
    index = VectorIndex("m", 3)
    index.upsert([(ChunkKey("a", 0), a, {}), (ChunkKey("b", 0), b, {}), (ChunkKey("c", 0), c, {})])
    hits = index.mmr_select(query, k=2, pool_size=3, lambda_=0.5)
    assert [h.chunk_key.parent_id for h in hits] == ["a", "c"]
    relevance_only = index.mmr_select(query, k=2, pool_size=3, lambda_=1.0)
    assert [h.chunk_key.parent_id for h in relevance_only] == ["a", "b"]


def test_mmr_lambda_one_equals_top_k():
    rng = np.random.default_rng(5)
    index = VectorIndex("m", 8)
    index.upsert(
        [(ChunkKey("d", i), rng.normal(size=8), {"i": str(i)}) for i in range(30)]
    )
    for _ in range(10):
        query = rng.normal(size=8)
        via_mmr = index.mmr_select(query, k=6, pool_size=30, lambda_=1.0)
        via_topk = index.top_k(query, k=6)
        assert [h.chunk_key for h in via_mmr] == [h.chunk_key for h in via_topk]
        np.testing.assert_allclose(
            [h.similarity for h in via_mmr], [h.similarity for h in via_topk]
        )


def test_mmr_pool_limits_candidates():
    index = basis_index()
    query = [0.8, 0.5, 0.3, 0.1]
    hits = index.mmr_select(query, k=2, pool_size=2, lambda_=0.0)
    picked = {h.chunk_key.seq for h in hits}
    assert picked <= {0, 1}  # seq 2,3 never entered the pool


def test_mmr_respects_min_similarity():
    index = basis_index()
    hits = index.mmr_select([1.0, 0.0, 0.0, 0.0], k=4, pool_size=4, min_similarity=0.5)
    assert [h.chunk_key.seq for h in hits] == [0]


def test_mmr_parameter_validation():
    index = basis_index()
    with pytest.raises(ConfigError):
        index.mmr_select([1.0, 0, 0, 0], lambda_=1.5)
    with pytest.raises(ConfigError):
        index.mmr_select([1.0, 0, 0, 0], k=5, pool_size=3)


# -- persistence --------------------------------------------------------------


def populated_index() -> VectorIndex:
    rng = np.random.default_rng(9)
    index = VectorIndex("model/with-slash", 5)
    index.upsert(
        [
            (ChunkKey(f"kb{i % 3}", i), rng.normal(size=5), {"title": f"T{i}", "n": str(i)})
            for i in range(12)
        ]
    )
    return index


def test_persist_load_round_trip(tmp_path):
    index = populated_index()
    path = tmp_path / "test.idx"
    index.persist(path)
    loaded = VectorIndex.load(path)

    assert loaded.model_id == index.model_id
    assert loaded.dimension == index.dimension
    assert len(loaded) == len(index)
    query = np.arange(5, dtype=np.float64)
    original = index.top_k(query, k=12)
    reloaded = loaded.top_k(query, k=12)
    assert [h.chunk_key for h in original] == [h.chunk_key for h in reloaded]
    np.testing.assert_array_equal(
        [h.similarity for h in original], [h.similarity for h in reloaded]
    )
    assert [h.metadata for h in original] == [h.metadata for h in reloaded]


def test_persist_is_deterministic_and_reload_stable(tmp_path):
    index = populated_index()
    first = tmp_path / "a.idx"
    second = tmp_path / "b.idx"
    index.persist(first)
    index.persist(second)
    assert first.read_bytes() == second.read_bytes()
    # persist(load(persist(x))) is byte-stable: floats round-trip via repr
    third = tmp_path / "c.idx"
    VectorIndex.load(first).persist(third)
    assert third.read_bytes() == first.read_bytes()


def test_persist_leaves_no_tmp_file(tmp_path):
    path = tmp_path / "test.idx"
    populated_index().persist(path)
    assert [p.name for p in tmp_path.iterdir()] == ["test.idx"]


def test_header_contents(tmp_path):
    path = tmp_path / "test.idx"
    populated_index().persist(path)
    header = json.loads(path.read_text(encoding="utf-8").splitlines()[0])
    assert header == {
        "format": "claimcheck-index",
        "version": 1,
        "model_id": "model/with-slash",
        "dimension": 5,
        "count": 12,
    }


def corrupt(path, mutate):
    lines = path.read_text(encoding="utf-8").splitlines(keepends=True)
    path.write_text("".join(mutate(lines)), encoding="utf-8")


def test_load_rejects_damaged_files(tmp_path):
    path = tmp_path / "test.idx"

    with pytest.raises(IndexFormatError, match="not found"):
        VectorIndex.load(path)

    path.write_text("", encoding="utf-8")
    with pytest.raises(IndexFormatError, match="missing header"):
        VectorIndex.load(path)

    path.write_text("{broken\n", encoding="utf-8")
    with pytest.raises(IndexFormatError, match="not valid JSON"):
        VectorIndex.load(path)

    path.write_text('{"format": "something-else", "version": 1}\n', encoding="utf-8")
    with pytest.raises(IndexFormatError, match="not a claimcheck-index"):
        VectorIndex.load(path)

    populated_index().persist(path)
    corrupt(path, lambda lines: [lines[0].replace('"version": 1', '"version": 99')] + lines[1:])
    with pytest.raises(IndexFormatError, match="version 99"):
        VectorIndex.load(path)

    populated_index().persist(path)
    corrupt(path, lambda lines: lines[:-1])  # truncate one entry
    with pytest.raises(IndexFormatError, match="truncated"):
        VectorIndex.load(path)

    populated_index().persist(path)
    corrupt(path, lambda lines: lines[:-1] + ["{bad json\n"])
    with pytest.raises(IndexFormatError, match="bad entry"):
        VectorIndex.load(path)

    populated_index().persist(path)

    def shrink_vector(lines):
        row = json.loads(lines[1])
        row["vector"] = row["vector"][:-1]
        lines[1] = json.dumps(row) + "\n"
        return lines

    corrupt(path, shrink_vector)
    with pytest.raises(IndexFormatError, match="dimension"):
        VectorIndex.load(path)
