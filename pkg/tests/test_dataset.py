import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from fairdp.dataset import (
    ColumnSpec,
    EncodedDataset,
    FetchError,
    ParseError,
    RawTable,
    RemoteFile,
    Schema,
    build_dataset,
    encode,
    fetch_dataset,
    load_csv,
    normalize,
    split,
)

from toys import FIXTURE_DIR

def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


BASIC_SCHEMA = Schema(
    label_column="income",
    label_positive="yes",
    protected_column="sex",
    protected_positive="Male",
    feature_columns=(ColumnSpec("age", "numeric"), ColumnSpec("dept", "categorical")),
)


class TestLoadCsv:
    def test_three_line_file(self, tmp_path):
        path = write(tmp_path, "t.csv", "a,b\n1,2\n3,4\n")
        table = load_csv(path)
        assert table.column_names == ("a", "b")
        assert table.n_rows == 2
        assert table.n_dropped == 0

    def test_ragged_row_names_line(self, tmp_path):
        path = write(tmp_path, "t.csv", "a,b\n1,2\n3,4\n5,6\n7,8,9\n")
        with pytest.raises(ParseError, match="line 5"):
            load_csv(path)

    def test_missing_rows_dropped_and_counted(self, tmp_path):
        path = write(tmp_path, "t.csv", "a,b\n1,2\n?,4\n5,\n6,7\n")
        table = load_csv(path)
        assert table.n_rows == 2
        assert table.n_dropped == 2

    def test_cells_trimmed(self, tmp_path):
        path = write(tmp_path, "t.csv", "a,b\n 1 ,  x y \n")
        assert load_csv(path).rows[0] == ("1", "x y")

    def test_comment_and_blank_lines_skipped(self, tmp_path):
        path = write(tmp_path, "t.csv", "|banner line\na,b\n\n1,2\n")
        table = load_csv(path)
        assert table.column_names == ("a", "b")
        assert table.n_rows == 1

    def test_no_header_generates_names(self, tmp_path):
        path = write(tmp_path, "t.csv", "1,2,3\n4,5,6\n")
        table = load_csv(path, has_header=False)
        assert table.column_names == ("col0", "col1", "col2")
        assert table.n_rows == 2

    def test_empty_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_csv(write(tmp_path, "t.csv", ""))


class TestEncode:
    def make_raw(self):
        return RawTable(
            column_names=("age", "dept", "sex", "income"),
            rows=(
                ("30", "eng", "Male", "yes"),
                ("40", "ops", "Female", "no"),
                ("50", "hr", "Female", "yes"),
                ("35", "eng", "Male", "no"),
            ),
        )

    def test_protected_mapping(self):
        ds = encode(self.make_raw(), BASIC_SCHEMA)
        np.testing.assert_array_equal(ds.z, [1, 0, 0, 1])
        np.testing.assert_array_equal(ds.y, [1, 0, 1, 0])

    def test_one_hot_columns_sum_to_one(self):
        ds = encode(self.make_raw(), BASIC_SCHEMA)
        onehot = ds.X[:, 1:]  # age is first
        assert onehot.shape == (4, 3)
        np.testing.assert_array_equal(onehot.sum(axis=1), np.ones(4))
        # first-seen category order
        assert ds.feature_names == ("age", "dept=eng", "dept=ops", "dept=hr")

    def test_protected_excluded_by_default(self):
        ds = encode(self.make_raw(), BASIC_SCHEMA)
        assert "sex" not in ds.feature_names

    def test_protected_included_when_flagged(self):
        schema = Schema(
            label_column="income",
            label_positive="yes",
            protected_column="sex",
            protected_positive="Male",
            feature_columns=(ColumnSpec("age", "numeric"),),
            include_protected_in_features=True,
        )
        ds = encode(self.make_raw(), schema)
        assert ds.feature_names[-1] == "sex"
        np.testing.assert_array_equal(ds.X[:, -1], ds.z)

    def test_unseen_positive_label_errors(self):
        schema = Schema(
            label_column="income",
            label_positive=">50K",
            protected_column="sex",
            protected_positive="Male",
            feature_columns=(ColumnSpec("age", "numeric"),),
        )
        with pytest.raises(ValueError, match="label"):
            encode(self.make_raw(), schema)

    def test_missing_column_errors(self):
        schema = Schema(
            label_column="income",
            label_positive="yes",
            protected_column="sex",
            protected_positive="Male",
            feature_columns=(ColumnSpec("salary", "numeric"),),
        )
        with pytest.raises(ValueError, match="salary"):
            encode(self.make_raw(), schema)

    def test_non_numeric_cell_errors(self):
        raw = RawTable(
            column_names=("age", "sex", "income"),
            rows=(("abc", "Male", "yes"), ("30", "Female", "no")),
        )
        schema = Schema(
            label_column="income",
            label_positive="yes",
            protected_column="sex",
            protected_positive="Male",
            feature_columns=(ColumnSpec("age", "numeric"),),
        )
        with pytest.raises(ParseError, match="age"):
            encode(raw, schema)

    def test_schema_rejects_label_as_feature(self):
        with pytest.raises(ValueError):
            Schema(
                label_column="income",
                label_positive="yes",
                protected_column="sex",
                protected_positive="Male",
                feature_columns=(ColumnSpec("income", "numeric"),),
            )


class TestNormalize:
    def test_single_column_minmax(self):
        out = normalize(np.array([[0.0], [5.0], [10.0]]))
        np.testing.assert_allclose(out, [[0.0], [0.5], [1.0]])

    def test_constant_columns_collapse(self):
        out = normalize(np.ones((2, 4)))
        np.testing.assert_array_equal(out, np.zeros((2, 4)))

    def test_random_matrix_row_norms(self, rng):
        X = rng.normal(size=(50, 6)) * 100 + 3
        out = normalize(X)
        assert (out >= 0).all()
        assert (np.linalg.norm(out, axis=1) <= 1.0 + 1e-12).all()

    @given(
        hnp.arrays(
            dtype=np.float64,
            shape=st.tuples(st.integers(1, 20), st.integers(1, 8)),
            elements=st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False),
        )
    )
    @settings(max_examples=100, deadline=None)
    def test_unit_ball_property(self, X):
        out = normalize(X)
        assert (out >= 0.0).all()
        assert (np.linalg.norm(out, axis=1) <= 1.0 + 1e-12).all()

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            normalize(np.array([[1.0], [np.inf]]))


class TestBuildDataset:
    def test_normalized_invariant_holds(self, tmp_path):
        raw = load_csv(FIXTURE_DIR / "toy.csv")
        schema = BASIC_SCHEMAS_TOY
        ds = build_dataset(raw, schema)
        ds.check_normalized()

    def test_constant_feature_survives_scaling(self):
        raw = RawTable(
            column_names=("age", "sex", "income"),
            rows=(("30", "Male", "yes"), ("40", "Female", "no")),
        )
        schema = Schema(
            label_column="income",
            label_positive="yes",
            protected_column="sex",
            protected_positive="Male",
            feature_columns=(ColumnSpec("age", "numeric"),),
            add_constant_feature=True,
        )
        ds = build_dataset(raw, schema)
        assert ds.feature_names[-1] == "const"
        np.testing.assert_allclose(ds.X[:, -1], 1.0 / math.sqrt(2), rtol=1e-15)
        ds.check_normalized()


BASIC_SCHEMAS_TOY = Schema(
    label_column="income",
    label_positive="yes",
    protected_column="sex",
    protected_positive="Male",
    feature_columns=(
        ColumnSpec("age", "numeric"),
        ColumnSpec("hours", "numeric"),
        ColumnSpec("dept", "categorical"),
    ),
)


class TestGoldenPipeline:
    def test_encode_load_byte_stable(self):
        # Golden: fingerprint of encode(load(fixture)) frozen at build time.
        raw = load_csv(FIXTURE_DIR / "toy.csv")
        assert raw.n_dropped == 1
        ds = build_dataset(raw, BASIC_SCHEMAS_TOY)
        assert ds.fingerprint() == (
            "4bae6472e0a916754d42b782e0d026f212e3d6c05fd2fcca4284c317c5d0f439"
        )


class TestSplit:
    def make(self, n=10, d=3, seed=0):
        gen = np.random.default_rng(seed)
        return EncodedDataset(
            X=gen.random((n, d)) / math.sqrt(d),
            y=gen.integers(0, 2, size=n),
            z=gen.integers(0, 2, size=n),
            feature_names=tuple(f"f{i}" for i in range(d)),
        )

    def test_sizes_and_determinism(self):
        ds = self.make(10)
        a1, b1 = split(ds, 0.2, seed=42)
        a2, b2 = split(ds, 0.2, seed=42)
        assert a1.n == 8 and b1.n == 2
        np.testing.assert_array_equal(a1.X, a2.X)
        np.testing.assert_array_equal(b1.y, b2.y)

    def test_different_seeds_differ(self):
        ds = self.make(10)
        _, b1 = split(ds, 0.2, seed=1)
        _, b2 = split(ds, 0.2, seed=2)
        assert not np.array_equal(b1.X, b2.X)

    def test_partition_property(self):
        ds = self.make(17, d=2)
        train, test = split(ds, 0.3, seed=5)
        combined = np.vstack([train.X, test.X])
        assert combined.shape[0] == ds.n
        orig = {tuple(row) for row in np.round(ds.X, 12)}
        got = {tuple(row) for row in np.round(combined, 12)}
        assert orig == got

    def test_zbar_recomputed(self):
        X = np.full((5, 1), 0.5)
        ds = EncodedDataset(X=X, y=[0, 1, 0, 1, 0], z=[1, 1, 1, 1, 1],
                            feature_names=("a",))
        train, test = split(ds, 0.2, seed=0)
        assert test.z_bar == 1.0
        assert train.z_bar == 1.0

    def test_fraction_guards(self):
        ds = self.make(10)
        for bad in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                split(ds, bad, seed=0)

    def test_empty_test_part_rejected(self):
        ds = self.make(3)
        with pytest.raises(ValueError):
            split(ds, 0.2, seed=0)  # ceil(3*0.8) == 3 leaves nothing


class TestEncodedDatasetInvariants:
    def test_value_domain_checks(self):
        with pytest.raises(ValueError):
            EncodedDataset(X=np.ones((2, 1)), y=[0, 2], z=[0, 1], feature_names=("a",))
        with pytest.raises(ValueError):
            EncodedDataset(X=np.ones((2, 1)), y=[0, 1], z=[0, 1], feature_names=())

    def test_immutability(self):
        ds = EncodedDataset(X=np.ones((2, 2)) / 2, y=[0, 1], z=[1, 0],
                            feature_names=("a", "b"))
        with pytest.raises(ValueError):
            ds.X[0, 0] = 9.0

    def test_zbar_exact(self):
        ds = EncodedDataset(X=np.ones((4, 1)) / 2, y=[0, 1, 0, 1], z=[1, 0, 0, 1],
                            feature_names=("a",))
        assert ds.z_bar == 0.5


class TestFetch:
    def registry_for(self, src: Path, sha256=None):
        return {
            "toy": (
                RemoteFile("toy.csv", src.as_uri(), size=src.stat().st_size,
                           sha256=sha256),
            )
        }

    def test_download_and_idempotence(self, tmp_path):
        src = FIXTURE_DIR / "toy.csv"
        cache = tmp_path / "cache"
        reg = self.registry_for(src)
        paths = fetch_dataset("toy", cache, registry=reg)
        assert paths["toy.csv"].read_text() == src.read_text()
        stamp = paths["toy.csv"].stat().st_mtime_ns
        again = fetch_dataset("toy", cache, registry=reg)
        assert again["toy.csv"].stat().st_mtime_ns == stamp  # no re-download

    def test_checksum_pinned_then_verified(self, tmp_path):
        src = FIXTURE_DIR / "toy.csv"
        cache = tmp_path / "cache"
        reg = self.registry_for(src)
        fetch_dataset("toy", cache, registry=reg)
        pins = json.loads((cache / "checksums.json").read_text())
        expected = hashlib.sha256(src.read_bytes()).hexdigest()
        assert pins["toy.csv"] == expected
        # corrupt the cached copy: revalidation must fail naming both digests
        (cache / "toy.csv").write_text("tampered")
        with pytest.raises(FetchError, match=expected[:16]):
            fetch_dataset("toy", cache, registry=reg)

    def test_explicit_checksum_mismatch(self, tmp_path):
        src = FIXTURE_DIR / "toy.csv"
        reg = self.registry_for(src, sha256="0" * 64)
        with pytest.raises(FetchError, match="checksum mismatch"):
            fetch_dataset("toy", tmp_path / "cache", registry=reg)

    def test_unknown_dataset_lists_supported(self, tmp_path):
        with pytest.raises(FetchError, match="adult"):
            fetch_dataset("nope", tmp_path / "cache")


# --- Adult-specific goldens: run only when the files are present ------------

ADULT_CACHE = Path(os.environ.get("FAIRDP_CACHE", Path.home() / ".cache" / "fairdp"))

requires_adult = pytest.mark.skipif(
    not (ADULT_CACHE / "adult.data").exists(),
    reason="UCI Adult files not cached (run `fairdp fetch adult` on a networked machine)",
)


@requires_adult
class TestAdultGoldens:
    def test_drop_counts_match_published_values(self):
        train = load_csv(ADULT_CACHE / "adult.data", has_header=False)
        assert train.n_rows == 30162
        assert train.n_dropped == 2399
        test_path = ADULT_CACHE / "adult.test"
        if test_path.exists():
            test = load_csv(test_path, has_header=False)
            assert test.n_rows == 15060
            assert test.n_dropped == 1221
            assert train.n_rows + train.n_dropped + test.n_rows + test.n_dropped == 48842
