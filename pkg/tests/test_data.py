import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsadv.data import (Dataset, TimeSeries, load_ucr_tsv, make_synthetic,
                        save_ucr_tsv, znormalize, znormalize_dataset)
from tsadv.errors import DataError


def write_tsv(path, rows):
    path.write_text("\n".join("\t".join(r) for r in rows) + "\n")


class TestLoadUcrTsv:
    def test_basic_parse_and_label_remap(self, tmp_path):
        f = tmp_path / "toy.tsv"
        write_tsv(f, [["2", "1.0", "2.0", "3.0"],
                      ["5", "0.5", "0.5", "0.5"],
                      ["2", "-1.0", "0.0", "1.0"]])
        ds = load_ucr_tsv(f)
        assert ds.num_classes == 2
        assert ds.label_mapping == {2.0: 0, 5.0: 1}
        assert [s.label for s in ds.samples] == [0, 1, 0]
        np.testing.assert_array_equal(ds.samples[1].values, [0.5, 0.5, 0.5])
        assert ds.name == "toy"

    def test_ragged_row_names_the_row(self, tmp_path):
        f = tmp_path / "bad.tsv"
        write_tsv(f, [["1", "1.0", "2.0"], ["1", "1.0", "2.0", "3.0"]])
        with pytest.raises(DataError, match="row 2"):
            load_ucr_tsv(f)

    def test_non_numeric_names_row_and_column(self, tmp_path):
        f = tmp_path / "bad.tsv"
        write_tsv(f, [["1", "1.0", "2.0"], ["1", "oops", "3.0"]])
        with pytest.raises(DataError, match=r"row 2, column 2"):
            load_ucr_tsv(f)

    def test_nan_value_rejected(self, tmp_path):
        f = tmp_path / "bad.tsv"
        write_tsv(f, [["1", "1.0", "nan"]])
        with pytest.raises(DataError, match="non-finite"):
            load_ucr_tsv(f)

    def test_empty_file_rejected(self, tmp_path):
        f = tmp_path / "empty.tsv"
        f.write_text("\n\n")
        with pytest.raises(DataError, match="empty"):
            load_ucr_tsv(f)

    def test_too_few_columns_rejected(self, tmp_path):
        f = tmp_path / "thin.tsv"
        write_tsv(f, [["1", "2.0"]])
        with pytest.raises(DataError, match="at least 2 values"):
            load_ucr_tsv(f)

    def test_roundtrip_through_save(self, tmp_path):
        ds = make_synthetic("shifted-gaussian-bumps", 2, 16, 0.1, seed=0)
        f = tmp_path / "rt.tsv"
        save_ucr_tsv(ds, f)
        back = load_ucr_tsv(f)
        assert len(back) == len(ds)
        assert back.num_classes == ds.num_classes
        for a, b in zip(ds.samples, back.samples):
            assert a.label == b.label
            np.testing.assert_array_equal(a.values, b.values)


class TestZnormalize:
    def test_spec_example(self):
        np.testing.assert_array_equal(znormalize(np.array([1.0, 3.0])), [-1.0, 1.0])

    def test_constant_series_maps_to_zeros(self):
        np.testing.assert_array_equal(znormalize(np.full(5, 7.3)), np.zeros(5))

    @given(st.lists(st.floats(min_value=-1e6, max_value=1e6,
                              allow_nan=False, allow_infinity=False),
                    min_size=2, max_size=64))
    @settings(max_examples=200, deadline=None)
    def test_mean_zero_std_one_or_all_zero(self, vals):
        v = np.array(vals)
        out = znormalize(v)
        if np.allclose(out, 0.0):
            return
        # rounding error grows with the conditioning of the input
        # (near-constant series of large magnitude cancel catastrophically)
        tol = 1e-9 * (1.0 + np.max(np.abs(v)) / v.std())
        assert abs(out.mean()) < tol
        assert abs(out.std() - 1.0) < tol

    def test_dataset_normalization_preserves_labels(self):
        ds = make_synthetic("sine-vs-square", 3, 16, 0.2, seed=1)
        norm = znormalize_dataset(ds)
        assert [s.label for s in norm.samples] == [s.label for s in ds.samples]
        assert norm.num_classes == ds.num_classes


class TestSynthetic:
    def test_deterministic_given_seed(self):
        a = make_synthetic("sine-vs-square", 4, 32, 0.3, seed=5)
        b = make_synthetic("sine-vs-square", 4, 32, 0.3, seed=5)
        for sa, sb in zip(a.samples, b.samples):
            np.testing.assert_array_equal(sa.values, sb.values)

    def test_different_seeds_differ(self):
        a = make_synthetic("sine-vs-square", 4, 32, 0.3, seed=5)
        b = make_synthetic("sine-vs-square", 4, 32, 0.3, seed=6)
        assert any(not np.array_equal(sa.values, sb.values)
                   for sa, sb in zip(a.samples, b.samples))

    def test_class_counts_and_shapes(self):
        ds = make_synthetic("shifted-gaussian-bumps", 5, 24, 0.1, seed=0)
        assert len(ds) == 15 and ds.num_classes == 3 and ds.length == 24
        labels = [s.label for s in ds.samples]
        assert all(labels.count(c) == 5 for c in range(3))

    def test_unknown_kind_rejected(self):
        with pytest.raises(DataError, match="unknown synthetic kind"):
            make_synthetic("triangles", 4, 32, 0.1, seed=0)

    def test_invalid_sizes_rejected(self):
        with pytest.raises(DataError):
            make_synthetic("sine-vs-square", 0, 32, 0.1, seed=0)
        with pytest.raises(DataError):
            make_synthetic("sine-vs-square", 4, 4, 0.1, seed=0)


class TestContainers:
    def test_time_series_validation(self):
        with pytest.raises(DataError):
            TimeSeries(np.array(3.0))
        with pytest.raises(DataError):
            TimeSeries(np.array([1.0, np.inf]))

    def test_subset_and_manifest(self):
        ds = make_synthetic("sine-vs-square", 3, 16, 0.2, seed=1)
        sub = ds.subset([0, 5])
        assert len(sub) == 2
        assert sub.samples[1].label == ds.samples[5].label
        m = ds.manifest()
        assert m["num_samples"] == 6 and m["length"] == 16
        assert m["label_mapping"] == {"0.0": 0, "1.0": 1}
