import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pipegrad.data import (
    CATEGORICAL, FILL_MEAN, MISSING_TOKEN, NUMERIC, ColumnSchema, DataError, Dataset, SplitSpec,
    fit_standardizer, fnv1a_64, hash_category, load_csv, load_schema, save_schema, split, write_csv,
)


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadCsv:
    def test_three_rows_verbatim(self, tmp_path):
        p = _write(tmp_path / "d.csv", "x,label\n1.5,0\n-2,1\n3e-3,1\n")
        ds = load_csv(p, [ColumnSchema("x", NUMERIC)], "label")
        assert ds.rows == 3
        assert ds.column("x").tolist() == [1.5, -2.0, 0.003]
        assert ds.labels.tolist() == [0, 1, 1]

    def test_empty_numeric_fill_zero(self, tmp_path):
        p = _write(tmp_path / "d.csv", "x,label\n4,0\n,1\n")
        ds = load_csv(p, [ColumnSchema("x")], "label")
        assert ds.column("x")[1] == 0.0

    def test_empty_numeric_fill_mean(self, tmp_path):
        p = _write(tmp_path / "d.csv", "x,label\n4,0\n,1\n2,1\n")
        ds = load_csv(p, [ColumnSchema("x", NUMERIC, FILL_MEAN)], "label")
        assert ds.column("x")[1] == 3.0

    def test_empty_categorical_becomes_missing_token(self, tmp_path):
        p = _write(tmp_path / "d.csv", "c,label\na,0\n,1\n")
        ds = load_csv(p, [ColumnSchema("c", CATEGORICAL)], "label")
        assert ds.column("c").tolist() == ["a", MISSING_TOKEN]

    def test_label_two_rejected(self, tmp_path):
        p = _write(tmp_path / "d.csv", "x,label\n1,2\n")
        with pytest.raises(DataError, match="invalid label"):
            load_csv(p, [ColumnSchema("x")], "label")

    def test_unparseable_numeric_names_row_and_column(self, tmp_path):
        p = _write(tmp_path / "d.csv", "x,label\n1,0\nabc,1\n")
        with pytest.raises(DataError, match=r"row 3.*'x'"):
            load_csv(p, [ColumnSchema("x")], "label")

    def test_schema_column_missing_from_header(self, tmp_path):
        p = _write(tmp_path / "d.csv", "x,label\n1,0\n")
        with pytest.raises(DataError, match="unknown column 'y'"):
            load_csv(p, [ColumnSchema("y")], "label")

    def test_schema_sidecar_round_trip(self, tmp_path):
        schema = [ColumnSchema("a", NUMERIC, FILL_MEAN), ColumnSchema("b", CATEGORICAL)]
        save_schema(schema, tmp_path / "s.json")
        assert load_schema(tmp_path / "s.json") == schema
        (tmp_path / "bare.json").write_text(json.dumps({"a": "numeric", "b": "categorical"}))
        assert [c.kind for c in load_schema(tmp_path / "bare.json")] == [NUMERIC, CATEGORICAL]


class TestRoundTrip:
    @settings(max_examples=25, deadline=None)
    @given(
        nums=st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=12),
        data=st.data(),
    )
    def test_write_then_load_is_identity(self, tmp_path_factory, nums, data):
        n = len(nums)
        cats = data.draw(st.lists(st.text(alphabet="abcxyz_-", min_size=1, max_size=5), min_size=n, max_size=n))
        labels = data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
        schema = [ColumnSchema("x"), ColumnSchema("c", CATEGORICAL)]
        ds = Dataset(schema, {"x": np.array(nums)}, {"c": np.array(cats, dtype=object)}, labels)
        path = tmp_path_factory.mktemp("rt") / "d.csv"
        write_csv(ds, path)
        back = load_csv(path, schema, "label")
        assert np.array_equal(back.column("x"), ds.column("x"))
        assert back.column("c").tolist() == cats
        assert back.labels.tolist() == labels


class TestSplit:
    def _ds(self, n):
        return Dataset([ColumnSchema("x")], {"x": np.arange(n, dtype=float)}, {}, np.arange(n) % 2)

    def test_sizes(self):
        parts = split(self._ds(10), SplitSpec(0.8, 0.1, 0.1, seed=7))
        assert [p.rows for p in parts] == [8, 1, 1]

    def test_same_seed_same_partition(self):
        a = split(self._ds(50), SplitSpec(0.6, 0.2, 0.2, seed=3))
        b = split(self._ds(50), SplitSpec(0.6, 0.2, 0.2, seed=3))
        for x, y in zip(a, b):
            assert np.array_equal(x.column("x"), y.column("x"))

    def test_partition_covers_rows_once(self):
        parts = split(self._ds(37), SplitSpec(0.5, 0.25, 0.25, seed=1))
        seen = np.sort(np.concatenate([p.column("x") for p in parts]))
        assert np.array_equal(seen, np.arange(37.0))

    def test_fractions_must_sum_to_one(self):
        with pytest.raises(DataError, match="fractions must sum to 1"):
            SplitSpec(0.5, 0.5, 0.5)


class TestHashing:
    def test_empty_string_is_offset_basis(self):
        assert fnv1a_64(b"") == 0xCBF29CE484222325
        assert hash_category("", 10) == 805

    def test_known_fnv_vector(self):
        # published FNV-1a 64 test vector for "a"
        assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C

    @given(st.text(max_size=20), st.integers(1, 30))
    def test_slot_in_range_and_deterministic(self, value, bits):
        s = hash_category(value, bits)
        assert 0 <= s < 2 ** bits
        assert s == hash_category(value, bits)

    def test_bits_out_of_range(self):
        with pytest.raises(ValueError):
            hash_category("a", 31)


class TestStandardizer:
    def test_population_sd(self):
        mean, scale = fit_standardizer([1.0, 2.0, 3.0])
        assert mean == 2.0
        assert scale == pytest.approx(np.sqrt(2.0 / 3.0), abs=1e-12)

    def test_constant_and_single(self):
        assert fit_standardizer([5.0, 5.0, 5.0]) == (5.0, 1.0)
        assert fit_standardizer([0.0]) == (0.0, 1.0)
