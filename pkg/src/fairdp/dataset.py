"""CSV ingestion, encoding and normalization for binary classification tasks
with a binary protected attribute.

Inputs are plain comma-separated files (optional header row, cells trimmed,
``?`` or empty cells treated as missing, ``|``-prefixed lines skipped per the
UCI convention).  A :class:`Schema` names the label column, the protected
column and the feature columns.  Encoded feature rows are scaled so that every
row lies in the nonnegative part of the unit ball: per-column min-max to
[0, 1] followed by a global division by sqrt(d).
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import shutil
import urllib.request
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

MISSING_MARKERS = frozenset({"?", ""})
COMMENT_PREFIX = "|"


class ParseError(ValueError):
    """Malformed input file (ragged row, bad numeric cell, ...)."""


class FetchError(RuntimeError):
    """Dataset download or integrity check failed."""


@dataclass(frozen=True)
class RawTable:
    """A parsed CSV file: trimmed text cells, missing-value rows removed."""

    column_names: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]
    n_dropped: int = 0

    def __post_init__(self):
        if not self.rows:
            raise ValueError("table must have at least one row")
        width = len(self.column_names)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise ValueError(f"row {i} has {len(row)} cells, expected {width}")

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_cols(self) -> int:
        return len(self.column_names)


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str  # "numeric" or "categorical"

    def __post_init__(self):
        if self.kind not in ("numeric", "categorical"):
            raise ValueError(f"unknown column kind {self.kind!r} for {self.name!r}")


@dataclass(frozen=True)
class Schema:
    """Which columns mean what.

    ``label_positive`` is the cell value mapped to y=1 and
    ``protected_positive`` the value mapped to z=1.  The protected column is
    kept out of the feature matrix unless ``include_protected_in_features``
    is set.  ``add_constant_feature`` appends an always-on column (scaled
    together with the rest, see :func:`build_dataset`).
    """

    label_column: str
    label_positive: str
    protected_column: str
    protected_positive: str
    feature_columns: tuple[ColumnSpec, ...]
    include_protected_in_features: bool = False
    add_constant_feature: bool = False

    def __post_init__(self):
        names = [c.name for c in self.feature_columns]
        if len(set(names)) != len(names):
            raise ValueError("duplicate feature column names")
        for special in (self.label_column, self.protected_column):
            if special in names and not (
                special == self.protected_column and self.include_protected_in_features
            ):
                raise ValueError(
                    f"{special!r} is a label/protected column and may not also be a feature"
                )


@dataclass(frozen=True)
class EncodedDataset:
    """Numeric view of a table: features X, labels y, protected attribute z.

    The container itself does not insist on normalized rows (encode and
    normalize are separate steps); :meth:`check_normalized` verifies the
    unit-ball invariant where tests need it.
    """

    X: np.ndarray
    y: np.ndarray
    z: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=np.int64)
        z = np.asarray(self.z, dtype=np.int64)
        if X.ndim != 2:
            raise ValueError("X must be a 2-d matrix")
        n, d = X.shape
        if n < 1 or d < 1:
            raise ValueError("dataset must have at least one row and one feature")
        if y.shape != (n,) or z.shape != (n,):
            raise ValueError("y and z must be length-n vectors")
        if len(self.feature_names) != d:
            raise ValueError("feature_names must have one entry per column")
        for name, v in (("y", y), ("z", z)):
            if not np.isin(v, (0, 1)).all():
                raise ValueError(f"{name} must contain only 0 and 1")
        for arr in (X, y, z):
            arr.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def z_bar(self) -> float:
        return float(self.z.sum()) / self.n

    def check_normalized(self, tol: float = 1e-12) -> None:
        if (self.X < 0).any():
            raise ValueError("negative feature entries")
        norms = np.linalg.norm(self.X, axis=1)
        if (norms > 1.0 + tol).any():
            raise ValueError(f"row norm exceeds 1: max={norms.max()}")

    def fingerprint(self) -> str:
        """Content hash used to tie reports to the exact encoded data."""
        h = hashlib.sha256()
        h.update(self.X.tobytes())
        h.update(self.y.tobytes())
        h.update(self.z.tobytes())
        h.update("|".join(self.feature_names).encode())
        return h.hexdigest()


def load_csv(path: str | Path, has_header: bool = True) -> RawTable:
    """Parse a comma-separated file into a :class:`RawTable`.

    Cells are whitespace-trimmed.  Rows containing a missing-value marker
    ("?" or an empty cell) are dropped and counted in ``n_dropped``.  Blank
    lines and lines starting with ``|`` are skipped.  A row whose cell count
    differs from the header's raises :class:`ParseError` naming the line.
    """
    path = Path(path)
    column_names: tuple[str, ...] | None = None
    rows: list[tuple[str, ...]] = []
    dropped = 0
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        for record in reader:
            if not record or (len(record) == 1 and not record[0].strip()):
                continue
            if record[0].lstrip().startswith(COMMENT_PREFIX):
                continue
            cells = tuple(c.strip() for c in record)
            if column_names is None:
                if has_header:
                    column_names = cells
                    continue
                column_names = tuple(f"col{i}" for i in range(len(cells)))
            if len(cells) != len(column_names):
                raise ParseError(
                    f"{path.name}: line {reader.line_num} has {len(cells)} cells, "
                    f"expected {len(column_names)}"
                )
            if any(c in MISSING_MARKERS for c in cells):
                dropped += 1
                continue
            rows.append(cells)
    if column_names is None:
        raise ParseError(f"{path.name}: file is empty")
    if not rows:
        raise ParseError(f"{path.name}: no usable rows (all dropped or missing)")
    return RawTable(column_names=column_names, rows=tuple(rows), n_dropped=dropped)


def _column(raw: RawTable, name: str) -> list[str]:
    try:
        idx = raw.column_names.index(name)
    except ValueError:
        raise ValueError(f"column {name!r} not present in table") from None
    return [row[idx] for row in raw.rows]


def _binary_indicator(values: list[str], positive: str, what: str) -> np.ndarray:
    observed = set(values)
    if positive not in observed:
        raise ValueError(
            f"{what} positive value {positive!r} never observed "
            f"(observed: {sorted(observed)[:8]}...)"
        )
    return np.fromiter((1 if v == positive else 0 for v in values), dtype=np.int64)


def encode(raw: RawTable, schema: Schema) -> EncodedDataset:
    """Encode a raw table into numeric arrays.  X is NOT yet normalized.

    Categorical columns are one-hot encoded with one indicator per observed
    category, ordered by first occurrence.  Numeric columns pass through.
    """
    y = _binary_indicator(_column(raw, schema.label_column), schema.label_positive, "label")
    z = _binary_indicator(
        _column(raw, schema.protected_column), schema.protected_positive, "protected"
    )

    columns: list[np.ndarray] = []
    names: list[str] = []
    for spec in schema.feature_columns:
        values = _column(raw, spec.name)
        if spec.kind == "numeric":
            try:
                columns.append(np.array([float(v) for v in values], dtype=float))
            except ValueError as exc:
                raise ParseError(f"non-numeric cell in column {spec.name!r}: {exc}") from None
            names.append(spec.name)
        else:
            categories: list[str] = []
            seen: set[str] = set()
            for v in values:
                if v not in seen:
                    seen.add(v)
                    categories.append(v)
            for cat in categories:
                columns.append(
                    np.fromiter((1.0 if v == cat else 0.0 for v in values), dtype=float)
                )
                names.append(f"{spec.name}={cat}")
    if schema.include_protected_in_features:
        columns.append(z.astype(float))
        names.append(schema.protected_column)
    if not columns:
        raise ValueError("schema selects no feature columns")
    X = np.column_stack(columns)
    return EncodedDataset(X=X, y=y, z=z, feature_names=tuple(names))


def normalize(X: np.ndarray) -> np.ndarray:
    """Scale a feature matrix into the nonnegative unit ball.

    Each column is min-max scaled to [0, 1] (constant columns collapse to 0),
    then every entry is divided by sqrt(d), so each row norm is at most 1.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValueError("X must be a 2-d matrix with at least one column")
    if not np.isfinite(X).all():
        raise ValueError("X contains non-finite entries")
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    span = hi - lo
    out = np.zeros_like(X)
    live = span > 0
    out[:, live] = (X[:, live] - lo[live]) / span[live]
    return out / math.sqrt(X.shape[1])


def build_dataset(raw: RawTable, schema: Schema) -> EncodedDataset:
    """encode + normalize in one step; the form every trainer consumes.

    With ``add_constant_feature`` the always-1 column is appended after the
    min-max step so it survives scaling, and the global sqrt(d) divisor counts
    it, preserving the row-norm bound.
    """
    ds = encode(raw, schema)
    if schema.add_constant_feature:
        lo = ds.X.min(axis=0)
        hi = ds.X.max(axis=0)
        span = hi - lo
        unit = np.zeros_like(ds.X)
        live = span > 0
        unit[:, live] = (ds.X[:, live] - lo[live]) / span[live]
        unit = np.column_stack([unit, np.ones(ds.n)])
        X = unit / math.sqrt(unit.shape[1])
        names = ds.feature_names + ("const",)
    else:
        X = normalize(ds.X)
        names = ds.feature_names
    return EncodedDataset(X=X, y=ds.y, z=ds.z, feature_names=names)


def split(
    ds: EncodedDataset, test_fraction: float, seed: int
) -> tuple[EncodedDataset, EncodedDataset]:
    """Deterministic shuffle-split into train/test parts.

    Train gets ceil(n * (1 - test_fraction)) rows, test the remainder.  Both
    parts recompute z_bar over their own rows.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if ds.n < 2:
        raise ValueError("need at least two rows to split")
    n_train = math.ceil(ds.n * (1.0 - test_fraction))
    if n_train >= ds.n:
        raise ValueError(
            f"test part empty: n={ds.n}, test_fraction={test_fraction} "
            f"gives {ds.n - n_train} test rows"
        )
    perm = np.random.default_rng(seed).permutation(ds.n)
    parts = []
    for idx in (perm[:n_train], perm[n_train:]):
        parts.append(
            EncodedDataset(
                X=ds.X[idx],
                y=ds.y[idx],
                z=ds.z[idx],
                feature_names=ds.feature_names,
            )
        )
    return parts[0], parts[1]


# --- dataset fetching -------------------------------------------------------

@dataclass(frozen=True)
class RemoteFile:
    filename: str
    url: str
    # Expected byte size; informational (warn on mismatch).  Integrity is
    # enforced by sha256 pinned on first successful download.
    size: int | None = None
    sha256: str | None = None


_UCI_ADULT = "https://archive.ics.uci.edu/ml/machine-learning-databases/adult"

DATASETS: dict[str, tuple[RemoteFile, ...]] = {
    "adult": (
        RemoteFile("adult.data", f"{_UCI_ADULT}/adult.data", size=3974305),
        RemoteFile("adult.test", f"{_UCI_ADULT}/adult.test", size=2003153),
    ),
}


def _sha256_of(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def fetch_dataset(
    name: str,
    cache_dir: str | Path,
    registry: dict[str, tuple[RemoteFile, ...]] | None = None,
) -> dict[str, Path]:
    """Download a known dataset into ``cache_dir`` and verify checksums.

    Idempotent: cached files are revalidated, not re-downloaded.  Checksums
    are pinned on first successful download (recorded in
    ``cache_dir/checksums.json``) unless the registry entry carries an
    explicit sha256; any later mismatch raises :class:`FetchError` naming the
    expected and actual digests.
    """
    registry = DATASETS if registry is None else registry
    if name not in registry:
        raise FetchError(f"unknown dataset {name!r}; supported: {sorted(registry)}")
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    pin_path = cache_dir / "checksums.json"
    pins: dict[str, str] = {}
    if pin_path.exists():
        pins = json.loads(pin_path.read_text())

    out: dict[str, Path] = {}
    for remote in registry[name]:
        target = cache_dir / remote.filename
        if not target.exists():
            log.info("downloading %s -> %s", remote.url, target)
            tmp = target.with_suffix(target.suffix + ".part")
            try:
                with urllib.request.urlopen(remote.url) as resp, tmp.open("wb") as fh:
                    shutil.copyfileobj(resp, fh)
            except OSError as exc:
                tmp.unlink(missing_ok=True)
                raise FetchError(f"download of {remote.url} failed: {exc}") from exc
            tmp.replace(target)
        digest = _sha256_of(target)
        expected = remote.sha256 or pins.get(remote.filename)
        if expected is not None and digest != expected:
            raise FetchError(
                f"checksum mismatch for {remote.filename}: expected {expected}, got {digest}"
            )
        if expected is None:
            pins[remote.filename] = digest
        if remote.size is not None and target.stat().st_size != remote.size:
            log.warning(
                "%s has size %d, expected %d (upstream file may have changed)",
                remote.filename, target.stat().st_size, remote.size,
            )
        out[remote.filename] = target
    pin_path.write_text(json.dumps(pins, indent=2, sort_keys=True) + "\n")
    return out
