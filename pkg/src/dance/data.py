"""Datasets with a frozen sample order, prefix windows and shard partitioning.

Rows are shuffled at most once, when the dataset is built. Every later view
is a prefix of that order, so a window of size ``m`` is always contained in a
window of size ``n >= m``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Dataset",
    "LibsvmFormatError",
    "SampleWindow",
    "parse_libsvm",
    "load_libsvm",
    "serialize_libsvm",
    "synth_logistic",
    "window",
    "partition",
]


class LibsvmFormatError(ValueError):
    """Raised for malformed libsvm input; ``lineno`` is 1-based."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable sparse feature matrix and +/-1 labels.

    Attributes
    ----------
    features : scipy.sparse.csr_matrix
        ``N x d`` row-major feature matrix with sorted column indices.
    labels : ndarray
        Length-``N`` float array with entries in ``{-1, +1}``.
    order : ndarray
        Permutation that was applied to the source rows, i.e. row ``i`` of
        ``features`` is source row ``order[i]``.
    """

    features: sp.csr_matrix
    labels: np.ndarray
    order: np.ndarray = field(default=None)

    def __post_init__(self):
        X = sp.csr_matrix(self.features, dtype=np.float64)
        X.sort_indices()
        y = np.asarray(self.labels, dtype=np.float64).copy()
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} rows but {y.shape[0]} labels")
        if X.shape[0] < 1:
            raise ValueError("dataset must contain at least one row")
        if not np.all((y == 1.0) | (y == -1.0)):
            raise ValueError("labels must be -1 or +1")
        order = np.arange(X.shape[0]) if self.order is None else np.asarray(self.order)
        order = order.astype(np.int64).copy()
        if order.shape != y.shape:
            raise ValueError("order must be a permutation of the rows")
        for arr in (X.data, X.indices, X.indptr, y, order):
            arr.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "order", order)

    @property
    def N(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def shuffled(self, seed: int) -> "Dataset":
        """Return a copy with rows permuted by a seeded shuffle."""
        perm = np.random.default_rng(seed).permutation(self.N)
        return Dataset(self.features[perm], self.labels[perm], self.order[perm])

    def head(self, n: int) -> "Dataset":
        return Dataset(self.features[:n], self.labels[:n], self.order[:n])

    def tail(self, n: int) -> "Dataset":
        return Dataset(self.features[self.N - n:], self.labels[self.N - n:], self.order[self.N - n:])

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        a, b = self.features, other.features
        return (
            a.shape == b.shape
            and np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
            and np.array_equal(a.data, b.data)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.order, other.order)
        )

    __hash__ = None


def _map_label(raw: float) -> float:
    return 1.0 if raw > 0 else -1.0


def parse_libsvm(
    text: Union[bytes, str, Iterable],
    d_hint: Optional[int] = None,
    shuffle_seed: Optional[int] = None,
) -> Dataset:
    """Parse libsvm-format text into a :class:`Dataset`.

    Each nonempty line is ``<label> <idx>:<val> ...`` with 1-based, strictly
    increasing indices. Labels ``<= 0`` map to -1, everything else to +1.
    ``d`` is the largest index seen, or ``d_hint`` if that is larger.
    Lines starting with ``#`` are skipped.

    If ``shuffle_seed`` is given the rows are shuffled once with it.
    """
    if isinstance(text, bytes):
        lines = text.decode("utf-8").splitlines()
    elif isinstance(text, str):
        lines = text.splitlines()
    else:
        lines = (ln.decode("utf-8") if isinstance(ln, bytes) else ln for ln in text)

    indptr = [0]
    indices: list[int] = []
    values: list[float] = []
    labels: list[float] = []
    d = 0
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            labels.append(_map_label(float(parts[0])))
        except ValueError:
            raise LibsvmFormatError(lineno, f"bad label {parts[0]!r}") from None
        prev = 0
        for tok in parts[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise LibsvmFormatError(lineno, f"expected idx:val, got {tok!r}")
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise LibsvmFormatError(lineno, f"bad pair {tok!r}") from None
            if idx < 1:
                raise LibsvmFormatError(lineno, f"index {idx} is not 1-based")
            if idx <= prev:
                raise LibsvmFormatError(lineno, f"indices not increasing at {tok!r}")
            prev = idx
            indices.append(idx - 1)
            values.append(val)
        d = max(d, prev)
        indptr.append(len(indices))

    if not labels:
        raise LibsvmFormatError(0, "no samples")
    if d_hint is not None:
        d = max(d, int(d_hint))
    X = sp.csr_matrix(
        (np.asarray(values, dtype=np.float64), np.asarray(indices, dtype=np.int64), np.asarray(indptr)),
        shape=(len(labels), max(d, 1)),
    )
    ds = Dataset(X, np.asarray(labels))
    return ds if shuffle_seed is None else ds.shuffled(shuffle_seed)


def load_libsvm(path, d_hint: Optional[int] = None, shuffle_seed: Optional[int] = None) -> Dataset:
    with open(path, "rb") as fh:
        return parse_libsvm(fh.read(), d_hint=d_hint, shuffle_seed=shuffle_seed)


def serialize_libsvm(ds: Dataset) -> str:
    """Write ``ds`` in libsvm format (1-based indices, ``repr`` floats).

    Explicitly stored zeros are kept so the round trip preserves structure.
    """
    out = io.StringIO()
    X = ds.features
    for i in range(ds.N):
        lo, hi = X.indptr[i], X.indptr[i + 1]
        pairs = " ".join(f"{j + 1}:{float(v)!r}" for j, v in zip(X.indices[lo:hi].tolist(), X.data[lo:hi]))
        label = "+1" if ds.labels[i] > 0 else "-1"
        out.write(f"{label} {pairs}\n" if pairs else f"{label}\n")
    return out.getvalue()


def synth_logistic(n: int, d: int, seed: int, margin: float = 1.0) -> Dataset:
    """Draw a logistic-regression dataset around a planted separator.

    Features are i.i.d. standard normal. With a unit-norm planted direction
    ``w0``, the label of ``x`` is ``sign(x @ w0 + margin * xi)`` where ``xi``
    is standard normal noise, so ``margin=0`` gives separable data. The draw
    is deterministic in ``seed`` and rows come out already shuffled.
    """
    if n < 1 or d < 1:
        raise ValueError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    rng = np.random.default_rng(seed)
    w0 = rng.standard_normal(d)
    w0 /= np.linalg.norm(w0)
    X = rng.standard_normal((n, d))
    score = X @ w0 + margin * rng.standard_normal(n)
    y = np.where(score > 0, 1.0, -1.0)
    perm = rng.permutation(n)
    return Dataset(sp.csr_matrix(X[perm]), y[perm], perm)


@dataclass(frozen=True, eq=False)
class SampleWindow:
    """The first ``n`` rows of a dataset in its frozen order."""

    dataset: Dataset
    n: int

    def __post_init__(self):
        if not 1 <= self.n <= self.dataset.N:
            raise ValueError(f"window size {self.n} outside [1, {self.dataset.N}]")

    @property
    def X(self) -> sp.csr_matrix:
        cache = self.__dict__.get("_X")
        if cache is None:
            cache = self.dataset.features[: self.n]
            object.__setattr__(self, "_X", cache)
        return cache

    @property
    def y(self) -> np.ndarray:
        return self.dataset.labels[: self.n]

    @property
    def d(self) -> int:
        return self.dataset.d

    def rows(self, lo: int, hi: int):
        """Features and labels of rows ``[lo, hi)`` of the window."""
        if not 0 <= lo <= hi <= self.n:
            raise ValueError(f"range [{lo}, {hi}) outside window of size {self.n}")
        return self.dataset.features[lo:hi], self.dataset.labels[lo:hi]


def window(ds: Dataset, n: int) -> SampleWindow:
    return SampleWindow(ds, int(n))


def partition(win: Union[SampleWindow, int], workers: int) -> list[range]:
    """Split ``[0, n)`` into ``workers`` contiguous ranges.

    The first ``n % workers`` ranges get one extra row. Empty shards are
    not allowed.
    """
    n = win.n if isinstance(win, SampleWindow) else int(win)
    if workers < 1:
        raise ValueError("need at least one worker")
    if workers > n:
        raise ValueError(f"{workers} workers for {n} rows would leave empty shards")
    base, extra = divmod(n, workers)
    bounds = [0]
    for k in range(workers):
        bounds.append(bounds[-1] + base + (1 if k < extra else 0))
    return [range(bounds[k], bounds[k + 1]) for k in range(workers)]
