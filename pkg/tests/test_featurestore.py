import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hsfm.errors import FormatError, ValidationError
from hsfm.featurestore import (
    HEADER_SIZE,
    DatasetSplit,
    FeatureDataset,
    group_sizes,
    read_features,
    write_features,
)

from conftest import random_dataset


def small_dataset(n=3, d=2, class_count=2, group_count=2):
    rng = np.random.default_rng(0)
    return random_dataset(rng, n=n, d=d, class_count=class_count, group_count=group_count)


class TestFeatureDataset:
    def test_canonical_dtypes(self):
        ds = FeatureDataset(
            np.zeros((2, 3)), np.array([0, 1]), np.array([0, 0]), 2, 1
        )
        assert ds.features.dtype == np.float32
        assert ds.labels.dtype == np.uint32
        assert ds.groups.dtype == np.uint32
        assert ds.n == 2 and ds.dim == 3

    def test_arrays_are_read_only(self):
        ds = small_dataset()
        with pytest.raises(ValueError):
            ds.features[0, 0] = 1.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValidationError, match="expected 2 entries"):
            FeatureDataset(np.zeros((2, 2)), np.array([0]), np.array([0, 0]), 2, 1)

    def test_label_out_of_range_reports_row(self):
        with pytest.raises(ValidationError, match=r"label 5 out of range \[0, 2\) at row 1"):
            FeatureDataset(np.zeros((2, 2)), np.array([0, 5]), np.array([0, 0]), 2, 1)

    def test_group_out_of_range_reports_row(self):
        with pytest.raises(ValidationError, match=r"group 3 out of range \[0, 2\) at row 0"):
            FeatureDataset(np.zeros((2, 2)), np.array([0, 1]), np.array([3, 0]), 2, 2)

    def test_non_finite_feature_rejected(self):
        feats = np.zeros((2, 2))
        feats[1, 0] = np.nan
        with pytest.raises(ValidationError, match="non-finite feature value at row 1"):
            FeatureDataset(feats, np.array([0, 1]), np.array([0, 0]), 2, 1)

    def test_split_requires_matching_shapes(self):
        a = small_dataset(d=2)
        b = small_dataset(d=3)
        with pytest.raises(ValidationError, match="split mismatch"):
            DatasetSplit(train=a, val=b, test=a)


class TestSerialization:
    def test_empty_dataset_is_header_only(self, tmp_path):
        ds = FeatureDataset(
            np.zeros((0, 4), dtype=np.float32),
            np.zeros(0, dtype=np.uint32),
            np.zeros(0, dtype=np.uint32),
            2,
            2,
        )
        path = tmp_path / "empty.hsfm"
        write_features(path, ds)
        assert path.stat().st_size == HEADER_SIZE == 32
        assert read_features(path) == ds

    def test_single_row_payload_size(self, tmp_path):
        ds = FeatureDataset(
            np.array([[1.5, -2.0]], dtype=np.float32), np.array([1]), np.array([0]), 2, 1
        )
        path = tmp_path / "one.hsfm"
        write_features(path, ds)
        assert path.stat().st_size == 32 + 8 + 4 + 4

    def test_round_trip_and_reserialization_bytes(self, tmp_path):
        rng = np.random.default_rng(42)
        ds = random_dataset(rng, n=1000, d=64, class_count=3, group_count=4)
        first = tmp_path / "a.hsfm"
        second = tmp_path / "b.hsfm"
        write_features(first, ds)
        loaded = read_features(first)
        assert loaded == ds
        write_features(second, loaded)
        assert first.read_bytes() == second.read_bytes()

    @settings(max_examples=60, deadline=None)
    @given(
        n=st.integers(0, 25),
        d=st.integers(1, 6),
        class_count=st.integers(2, 5),
        group_count=st.integers(1, 4),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_round_trip_identity_property(self, tmp_path_factory, n, d, class_count, group_count, seed):
        rng = np.random.default_rng(seed)
        ds = random_dataset(rng, n=n, d=d, class_count=class_count, group_count=group_count)
        path = tmp_path_factory.mktemp("rt") / "ds.hsfm"
        write_features(path, ds)
        assert read_features(path) == ds

    def test_deterministic_bytes(self, tmp_path):
        ds = small_dataset(n=17, d=5)
        a, b = tmp_path / "a", tmp_path / "b"
        write_features(a, ds)
        write_features(b, ds)
        assert a.read_bytes() == b.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.hsfm"
        path.write_bytes(b"XXXX" + b"\x00" * 28)
        with pytest.raises(FormatError, match="not an HSFM-FS file"):
            read_features(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "v9.hsfm"
        path.write_bytes(struct.pack("<4sIIIII8s", b"HSFM", 9, 0, 4, 2, 2, b"\x00" * 8))
        with pytest.raises(FormatError, match="version 9"):
            read_features(path)

    def test_truncated_payload_reports_expected_vs_actual(self, tmp_path):
        ds = small_dataset(n=4, d=3)
        path = tmp_path / "trunc.hsfm"
        write_features(path, ds)
        whole = path.read_bytes()
        path.write_bytes(whole[:-5])
        with pytest.raises(FormatError, match="expected 80 bytes, found 75"):
            read_features(path)

    def test_trailing_garbage_rejected(self, tmp_path):
        ds = small_dataset(n=2, d=2)
        path = tmp_path / "extra.hsfm"
        write_features(path, ds)
        path.write_bytes(path.read_bytes() + b"\x01")
        with pytest.raises(FormatError, match="payload length mismatch"):
            read_features(path)

    def test_out_of_range_label_in_file(self, tmp_path):
        header = struct.pack("<4sIIIII8s", b"HSFM", 1, 1, 1, 2, 1, b"\x00" * 8)
        payload = (
            np.zeros(1, dtype="<f4").tobytes()
            + np.array([7], dtype="<u4").tobytes()
            + np.array([0], dtype="<u4").tobytes()
        )
        path = tmp_path / "badlabel.hsfm"
        path.write_bytes(header + payload)
        with pytest.raises(FormatError, match=r"label 7 out of range \[0, 2\) at row 0"):
            read_features(path)

    def test_short_file_with_magic_reports_truncation(self, tmp_path):
        path = tmp_path / "short.hsfm"
        path.write_bytes(b"HSFM\x01\x00")
        with pytest.raises(FormatError, match="truncated header"):
            read_features(path)


class TestGroupSizes:
    def test_basic_counts(self):
        ds = FeatureDataset(np.zeros((3, 1)), np.array([0, 0, 1]), np.array([0, 0, 1]), 2, 2)
        assert group_sizes(ds).tolist() == [2, 1]

    def test_empty_dataset(self):
        ds = FeatureDataset(
            np.zeros((0, 1), dtype=np.float32),
            np.zeros(0, dtype=np.uint32),
            np.zeros(0, dtype=np.uint32),
            2,
            3,
        )
        assert group_sizes(ds).tolist() == [0, 0, 0]

    def test_sums_to_n_and_permutation_covariant(self):
        rng = np.random.default_rng(7)
        ds = random_dataset(rng, n=30)
        sizes = group_sizes(ds)
        assert sizes.sum() == ds.n
        perm = rng.permutation(ds.n)
        shuffled = ds.take(perm)
        assert np.array_equal(group_sizes(shuffled), sizes)

    def test_canonical_split_matches_plan(self, canonical_split, canonical_config):
        assert group_sizes(canonical_split.train).tolist() == [1000, 50, 50, 1000]
        assert group_sizes(canonical_split.val).tolist() == [200, 200, 200, 200]
        assert canonical_split.train.n == int(canonical_config.train_group_counts.sum())
