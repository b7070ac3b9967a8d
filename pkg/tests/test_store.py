"""Embedding store: parsing, validation, round trips, vector helpers."""

from __future__ import annotations

import json
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from protoclass import (
    EmbeddingRecord,
    EmbeddingStore,
    FileFormatError,
    Split,
    StoreFormat,
    ZeroNormError,
    class_counts,
    l2_normalize,
    load_store,
    save_store,
)
from protoclass.store import MAGIC

from conftest import make_store


def write_csv(path, header, rows):
    path.write_text("\n".join([",".join(header)] + [",".join(map(str, r)) for r in rows]) + "\n")


class TestCsvLoading:
    def test_two_rows_dim_three(self, tmp_path):
        path = tmp_path / "fixture.csv"
        write_csv(
            path,
            ["record_id", "label_id", "split", "v0", "v1", "v2"],
            [[0, 7, "train", 1.0, 2.0, 3.0], [1, 9, "test", 4.0, 5.0, 6.0]],
        )
        store = load_store(path, StoreFormat.CSV)
        assert len(store) == 2
        assert store.dimension == 3
        assert store.record(0).label_id == 7
        assert store.record(1).split is Split.TEST
        np.testing.assert_array_equal(
            store.vectors, np.array([[1, 2, 3], [4, 5, 6]], dtype=np.float32)
        )

    def test_short_row_reports_position(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "record_id,label_id,split,v0,v1,v2\n"
            "0,1,train,1.0,2.0,3.0\n"
            "1,1,train,1.0,2.0\n"
        )
        with pytest.raises(FileFormatError, match="row 2"):
            load_store(path, StoreFormat.CSV)

    def test_numeric_split_codes_accepted(self, tmp_path):
        path = tmp_path / "codes.csv"
        write_csv(
            path,
            ["record_id", "label_id", "split", "v0", "v1"],
            [[0, 1, 0, 0.5, 0.5], [1, 1, 2, 1.5, 2.5]],
        )
        store = load_store(path, StoreFormat.CSV)
        assert [r.split for r in store.iter_records()] == [Split.TRAIN, Split.TEST]

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "hdr.csv"
        path.write_text("id,label,split,v0\n0,1,train,1.0\n")
        with pytest.raises(FileFormatError, match="header"):
            load_store(path, StoreFormat.CSV)

    def test_duplicate_record_id_positioned(self, tmp_path):
        path = tmp_path / "dup.csv"
        write_csv(
            path,
            ["record_id", "label_id", "split", "v0"],
            [[5, 1, "train", 1.0], [5, 2, "val", 2.0]],
        )
        with pytest.raises(FileFormatError, match="duplicate record_id 5"):
            load_store(path, StoreFormat.CSV)


class TestBinaryRoundTrip:
    def test_roundtrip_identity(self, tmp_path, rng):
        store = make_store(
            {1: {Split.TRAIN: 3, Split.VAL: 1}, 4: {Split.TEST: 2}}, dimension=5, rng=rng
        )
        path = tmp_path / "store.fseb"
        save_store(store, path)
        assert load_store(path) == store

    def test_empty_store_header_size(self, tmp_path):
        store = EmbeddingStore(
            8,
            np.empty(0, np.uint64),
            np.empty(0, np.uint32),
            np.empty(0, np.uint8),
            np.empty((0, 8), np.float32),
            {},
        )
        path = tmp_path / "empty.fseb"
        save_store(store, path)
        # magic(6) + D(4) + N(8) + L(4) + "{}"(2)
        assert path.stat().st_size == 24
        assert load_store(path) == store

    def test_single_record_file_size(self, tmp_path):
        store = make_store({3: {Split.TRAIN: 1}}, dimension=2)
        path = tmp_path / "one.fseb"
        save_store(store, path)
        map_len = len(json.dumps({"3": "label_3"}, separators=(",", ":")).encode())
        # header + label map + one record of u64+u32+u8+2*f32 = 21 bytes
        assert path.stat().st_size == 6 + 16 + map_len + 21

    def test_roundtrip_random_store_field_by_field(self, tmp_path, rng):
        for trial in range(10):
            n_classes = int(rng.integers(1, 6))
            counts = {
                int(label): {
                    split: int(rng.integers(0, 4)) for split in Split
                }
                for label in rng.choice(50, size=n_classes, replace=False)
            }
            store = make_store(counts, dimension=int(rng.integers(2, 9)), rng=rng)
            path = tmp_path / f"rt{trial}.fseb"
            save_store(store, path)
            loaded = load_store(path)
            assert loaded.dimension == store.dimension
            np.testing.assert_array_equal(loaded.record_ids, store.record_ids)
            np.testing.assert_array_equal(loaded.label_ids, store.label_ids)
            np.testing.assert_array_equal(loaded.splits, store.splits)
            np.testing.assert_array_equal(loaded.vectors, store.vectors)
            assert loaded.label_map == store.label_map

    def test_save_is_byte_stable(self, tmp_path, rng):
        store = make_store({2: {Split.TRAIN: 4}}, dimension=3, rng=rng)
        a, b = tmp_path / "a.fseb", tmp_path / "b.fseb"
        save_store(store, a)
        save_store(store, b)
        assert a.read_bytes() == b.read_bytes()


class TestBinaryRejections:
    def _valid_bytes(self) -> bytearray:
        store = make_store({1: {Split.TRAIN: 2}}, dimension=3)
        import io, tempfile, os

        fd, path = tempfile.mkstemp()
        os.close(fd)
        save_store(store, path)
        with open(path, "rb") as fh:
            data = bytearray(fh.read())
        os.unlink(path)
        return data

    def test_bad_magic(self, tmp_path):
        data = self._valid_bytes()
        data[0] ^= 0xFF
        path = tmp_path / "badmagic.fseb"
        path.write_bytes(data)
        with pytest.raises(FileFormatError, match="magic"):
            load_store(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "short.fseb"
        path.write_bytes(MAGIC + b"\x01\x00")
        with pytest.raises(FileFormatError, match="truncated header"):
            load_store(path)

    def test_truncated_records_positioned(self, tmp_path):
        data = self._valid_bytes()
        path = tmp_path / "trunc.fseb"
        path.write_bytes(data[:-4])  # cut into the second record
        with pytest.raises(FileFormatError, match="record 1"):
            load_store(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        data = self._valid_bytes()
        path = tmp_path / "trail.fseb"
        path.write_bytes(bytes(data) + b"\x00")
        with pytest.raises(FileFormatError, match="trailing"):
            load_store(path)

    def test_nonfinite_component_rejected(self, tmp_path):
        data = self._valid_bytes()
        # header: 6 magic + 16 fixed; find map length to locate first vector
        _, n, map_len = struct.unpack_from("<IQI", data, 6)
        vec_off = 6 + 16 + map_len + 8 + 4 + 1
        struct.pack_into("<f", data, vec_off, float("nan"))
        path = tmp_path / "nan.fseb"
        path.write_bytes(data)
        with pytest.raises(FileFormatError, match="non-finite.*record 0"):
            load_store(path)

    def test_label_map_must_cover_labels(self, tmp_path):
        store = make_store({1: {Split.TRAIN: 1}}, dimension=2)
        path = tmp_path / "gap.fseb"
        save_store(store, path)
        data = bytearray(path.read_bytes())
        # swap the record's label id to one absent from the map
        _, _, map_len = struct.unpack_from("<IQI", data, 6)
        struct.pack_into("<I", data, 6 + 16 + map_len + 8, 99)
        path.write_bytes(data)
        with pytest.raises(FileFormatError, match="label map missing"):
            load_store(path)


class TestStoreInvariants:
    def test_vectors_are_read_only(self):
        store = make_store({1: {Split.TRAIN: 1}})
        with pytest.raises(ValueError):
            store.vectors[0, 0] = 1.0

    def test_label_index_matches_linear_scan(self, rng):
        for _ in range(5):
            counts = {
                int(label): {split: int(rng.integers(0, 3)) for split in Split}
                for label in range(int(rng.integers(1, 8)))
            }
            store = make_store(counts, dimension=3, rng=rng)
            for label in store.labels:
                for split in Split:
                    expected = [
                        i
                        for i in range(len(store))
                        if store.record(i).label_id == label
                        and store.record(i).split is split
                    ]
                    got = list(store.label_index[label][split])
                    assert got == expected

    def test_positions_merge_splits_ascending(self):
        store = make_store({5: {Split.TRAIN: 2, Split.VAL: 2, Split.TEST: 1}})
        pos = store.positions(5, {Split.TRAIN, Split.VAL})
        assert list(pos) == sorted(pos)
        assert len(pos) == 4


class TestL2Normalize:
    def test_three_four_five(self):
        np.testing.assert_allclose(l2_normalize([3.0, 4.0]), [0.6, 0.8], atol=1e-12)

    def test_unit_vector_unchanged(self):
        v = np.array([1.0, 0.0, 0.0])
        np.testing.assert_allclose(l2_normalize(v), v, atol=1e-12)

    def test_zero_vector_raises(self):
        with pytest.raises(ZeroNormError):
            l2_normalize([0.0, 0.0])

    def test_batch_rows(self):
        out = l2_normalize(np.array([[3.0, 4.0], [0.0, 2.0]]))
        np.testing.assert_allclose(out, [[0.6, 0.8], [0.0, 1.0]], atol=1e-12)

    @given(
        st.lists(
            st.floats(-1e6, 1e6, allow_nan=False).filter(lambda x: abs(x) > 1e-3),
            min_size=1,
            max_size=16,
        )
    )
    def test_idempotent_and_unit_norm(self, components):
        once = l2_normalize(np.array(components))
        twice = l2_normalize(once)
        assert abs(np.linalg.norm(once) - 1.0) < 1e-6
        np.testing.assert_allclose(once, twice, atol=1e-6)


class TestClassCounts:
    def test_direct_count(self):
        store = make_store({7: {Split.TRAIN: 2}, 9: {Split.TRAIN: 1}})
        assert class_counts(store, {Split.TRAIN}) == {7: 2, 9: 1}

    def test_empty_split_selection(self):
        store = make_store({7: {Split.TRAIN: 2}})
        assert class_counts(store, set()) == {}

    def test_partition_additivity(self, rng):
        store = make_store(
            {1: {Split.TRAIN: 3, Split.VAL: 2}, 2: {Split.VAL: 1}, 3: {Split.TRAIN: 1}},
            rng=rng,
        )
        both = class_counts(store, {Split.TRAIN, Split.VAL})
        train = class_counts(store, {Split.TRAIN})
        val = class_counts(store, {Split.VAL})
        for label in both:
            assert both[label] == train.get(label, 0) + val.get(label, 0)
        assert sum(both.values()) == len(store)


class TestRecordValidation:
    def test_dimension_mismatch_in_from_records(self):
        records = [
            EmbeddingRecord(0, 1, Split.TRAIN, np.zeros(3, np.float32)),
            EmbeddingRecord(1, 1, Split.TRAIN, np.zeros(2, np.float32)),
        ]
        with pytest.raises(FileFormatError, match="record 1"):
            EmbeddingStore.from_records(records, dimension=3)

    def test_nonfinite_vector_rejected(self):
        records = [
            EmbeddingRecord(0, 1, Split.TRAIN, np.array([1, np.inf], np.float32))
        ]
        with pytest.raises(FileFormatError, match="non-finite"):
            EmbeddingStore.from_records(records, dimension=2)
