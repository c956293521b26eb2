"""Dataset ingestion, n-gram feature extraction, rank-one kernel
families, and deterministic splits and folds."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError, ShapeError
from .kernels import KernelFamily, KernelSpec

TASKS = ("regression", "classification_pm1")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix with targets; classification targets are exact +/-1."""

    X: np.ndarray
    y: np.ndarray
    feature_names: Optional[tuple] = None
    task: str = "regression"

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if X.ndim != 2:
            raise ShapeError(f"X must be 2-d, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ShapeError("y must be 1-d with one entry per row of X")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise DataError("dataset contains non-finite values")
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.task == "classification_pm1" and not np.all(np.isin(y, (-1.0, 1.0))):
            raise DataError("classification targets must be exactly -1 or +1")
        if self.feature_names is not None and len(self.feature_names) != X.shape[1]:
            raise ShapeError("feature_names length differs from the number of columns")
        X = X.copy(); X.flags.writeable = False
        y = y.copy(); y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def m(self) -> int:
        return self.X.shape[0]

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(X=self.X[idx], y=self.y[idx],
                       feature_names=self.feature_names, task=self.task)


def load_delimited(path, label_column: int = -1, delimiter: str = ",",
                   task: str = "regression", label_map: Optional[dict] = None,
                   header: bool = False) -> Dataset:
    """Read a delimited numeric file into a dataset.

    ``label_column`` indexes the target column (negative indices count
    from the end). With ``label_map``, raw label tokens are translated
    through the mapping; unmapped tokens are rejected. Parse problems are
    reported with their line and column.
    """
    rows = []
    names = None
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh, delimiter=delimiter)
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if header and names is None and not rows:
                names = [cell.strip() for cell in row]
                continue
            rows.append((lineno, [cell.strip() for cell in row]))
    if not rows:
        raise DataError(f"empty dataset: {path}")
    width = len(rows[0][1])
    if not -width <= label_column < width:
        raise ConfigError(f"label column {label_column} out of range for {width} fields")
    label_idx = label_column % width

    X_rows, y_vals = [], []
    for lineno, row in rows:
        if len(row) != width:
            raise DataError(f"line {lineno}: expected {width} fields, got {len(row)}")
        feats = []
        for col, cell in enumerate(row):
            if col == label_idx:
                continue
            try:
                val = float(cell)
            except ValueError as exc:
                raise DataError(
                    f"line {lineno}, column {col + 1}: non-numeric value {cell!r}"
                ) from exc
            if not np.isfinite(val):
                raise DataError(f"line {lineno}, column {col + 1}: non-finite value {cell!r}")
            feats.append(val)
        token = row[label_idx]
        if label_map is not None:
            if token not in label_map:
                raise DataError(f"line {lineno}: unmapped label {token!r}")
            label = float(label_map[token])
        else:
            try:
                label = float(token)
            except ValueError as exc:
                raise DataError(f"line {lineno}: non-numeric label {token!r}") from exc
        if not np.isfinite(label):
            raise DataError(f"line {lineno}: non-finite label {token!r}")
        X_rows.append(feats)
        y_vals.append(label)

    if names is not None:
        names = tuple(n for i, n in enumerate(names) if i != label_idx)
    return Dataset(X=np.asarray(X_rows), y=np.asarray(y_vals),
                   feature_names=names, task=task)


def tokenize(text: str) -> list:
    """Lowercased whitespace tokenization."""
    return text.lower().split()


def load_text_corpus(path):
    """Read a labeled corpus: one document per line, 'label<TAB>text'."""
    docs, labels = [], []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if "\t" not in line:
                raise DataError(f"line {lineno}: expected 'label<TAB>text'")
            token, text = line.split("\t", 1)
            try:
                label = float(token)
            except ValueError as exc:
                raise DataError(f"line {lineno}: non-numeric label {token!r}") from exc
            docs.append(tokenize(text))
            labels.append(label)
    if not docs:
        raise DataError(f"empty corpus: {path}")
    return docs, np.asarray(labels)


@dataclass(frozen=True)
class NgramVocabulary:
    """Retained n-grams ordered by descending count, ties lexicographic."""

    n: int
    entries: tuple  # ((token, ...), count) pairs

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        object.__setattr__(self, "entries", tuple(self.entries))

    @property
    def size(self) -> int:
        return len(self.entries)

    def index(self) -> dict:
        return {ngram: i for i, (ngram, _) in enumerate(self.entries)}


def _doc_ngrams(doc, n: int) -> Counter:
    return Counter(tuple(doc[i:i + n]) for i in range(len(doc) - n + 1))


def build_ngram_features(corpus: Sequence[Sequence[str]], n: int = 2, top: int = 100):
    """Count matrix over the ``top`` most frequent n-grams of a corpus.

    The vocabulary is built from this corpus only, ranked by total
    occurrence count (descending) with lexicographic tie-breaking, and
    truncated to the number of distinct n-grams when ``top`` exceeds it.
    Column i of the returned matrix holds per-document occurrence counts
    of vocabulary entry i.
    """
    if top < 1:
        raise ConfigError("top must be at least 1")
    if not corpus:
        raise DataError("corpus is empty")
    per_doc = [_doc_ngrams(list(doc), n) for doc in corpus]
    totals = Counter()
    for counts in per_doc:
        totals.update(counts)
    ranked = sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))[:top]
    vocab = NgramVocabulary(n=n, entries=tuple(ranked))
    return counts_for(per_doc, vocab), vocab


def counts_for(per_doc_counters, vocab: NgramVocabulary) -> np.ndarray:
    index = vocab.index()
    out = np.zeros((len(per_doc_counters), vocab.size))
    for i, counts in enumerate(per_doc_counters):
        for ngram, c in counts.items():
            j = index.get(ngram)
            if j is not None:
                out[i, j] = c
    return out


def apply_vocabulary(corpus: Sequence[Sequence[str]], vocab: NgramVocabulary) -> np.ndarray:
    """Count matrix for new documents under a frozen vocabulary.

    N-grams outside the vocabulary contribute nothing, so no information
    flows back from these documents.
    """
    per_doc = [_doc_ngrams(list(doc), vocab.n) for doc in corpus]
    return counts_for(per_doc, vocab)


def rank1_family(count_matrix, include_offset: bool = True) -> KernelFamily:
    """One rank-one kernel per count column, optionally plus the offset.

    Kernel i is the outer product of column i with itself; the optional
    constant kernel is an all-ones matrix acting as a bias term. Distinct
    columns plus the constant coordinate give pairwise-orthogonal
    feature maps.
    """
    counts = np.asarray(count_matrix, dtype=np.float64)
    if counts.ndim != 2:
        raise ShapeError(f"count matrix must be 2-d, got shape {counts.shape}")
    if np.any(counts < 0):
        raise DataError("count matrix has negative entries")
    specs = [KernelSpec.rank1(i) for i in range(counts.shape[1])]
    if include_offset:
        specs.append(KernelSpec.constant())
    return KernelFamily.from_specs(specs, counts)


@dataclass(frozen=True, eq=False)
class FoldPlan:
    """Assignment of each sample row to one of k folds."""

    k: int
    assignments: np.ndarray
    seed: int

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=np.intp).copy()
        a.flags.writeable = False
        object.__setattr__(self, "assignments", a)

    def fold_indices(self, fold: int):
        """(train_indices, validation_indices) for one fold."""
        mask = self.assignments == fold
        return np.nonzero(~mask)[0], np.nonzero(mask)[0]


def make_folds(m: int, k: int, seed: int) -> FoldPlan:
    """Balanced random fold assignment; fold sizes differ by at most one."""
    if not 2 <= k <= m:
        raise ConfigError(f"need 2 <= k <= m, got k={k}, m={m}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(m)
    assignments = np.empty(m, dtype=np.intp)
    assignments[perm] = np.arange(m) % k
    return FoldPlan(k=k, assignments=assignments, seed=seed)


def split_indices(m: int, fraction: float, seed: int):
    """Deterministic shuffled split of range(m) into (train, test) indices."""
    if not 0.0 < fraction < 1.0:
        raise ConfigError("fraction must lie strictly between 0 and 1")
    n_train = int(round(m * fraction))
    if not 1 <= n_train <= m - 1:
        raise ConfigError(f"fraction {fraction} leaves an empty side for m={m}")
    perm = np.random.default_rng(seed).permutation(m)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def split(dataset: Dataset, fraction: float, seed: int):
    """Random train/test split with round(m * fraction) training rows."""
    tr, te = split_indices(dataset.m, fraction, seed)
    return dataset.take(tr), dataset.take(te)
