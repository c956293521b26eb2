"""Base kernels, Gram matrices, and weighted kernel combinations.

A kernel family bundles p base kernels evaluated on one sample: their
specs, their m x m Gram matrices, and, for rank-one kernels, the explicit
feature columns that generate them. Everything here is an immutable value.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError, NumericalError, ShapeError

KINDS = ("gaussian", "linear", "polynomial", "rank1_feature", "constant_offset")

# Feature-map kinds with a finite, explicitly known embedding.
EXPLICIT_MAP_KINDS = ("rank1_feature", "constant_offset")


def sample_id_of(X) -> str:
    """Deterministic opaque identifier for a data matrix."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    h = hashlib.sha1()
    h.update(str(X.shape).encode())
    h.update(X.tobytes())
    return h.hexdigest()[:16]


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"expected a 2-d data matrix, got shape {X.shape}")
    return X


def _as_vector(x, name="vector") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"{name} must be 1-d, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class KernelSpec:
    """One base kernel. Build instances through the classmethod constructors.

    Kinds: ``gaussian`` (bandwidth sigma), ``linear``, ``polynomial``
    (degree, additive offset), ``rank1_feature`` (product of one feature
    coordinate), ``constant_offset`` (all-ones kernel acting as a bias).
    """

    kind: str
    bandwidth: Optional[float] = None
    degree: Optional[int] = None
    offset: Optional[float] = None
    feature_index: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "gaussian":
            if self.bandwidth is None or not self.bandwidth > 0:
                raise ConfigError("gaussian kernel needs a positive bandwidth")
        if self.kind == "polynomial":
            if self.degree is None or self.degree < 1:
                raise ConfigError("polynomial kernel needs degree >= 1")
            if self.offset is None:
                object.__setattr__(self, "offset", 1.0)
            # A negative offset would break positive semidefiniteness.
            if self.offset < 0:
                raise ConfigError("polynomial kernel needs a nonnegative offset")
        if self.kind == "rank1_feature":
            if self.feature_index is None or self.feature_index < 0:
                raise ConfigError("rank1_feature kernel needs feature_index >= 0")

    @classmethod
    def gaussian(cls, bandwidth: float) -> "KernelSpec":
        return cls(kind="gaussian", bandwidth=float(bandwidth))

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls(kind="linear")

    @classmethod
    def polynomial(cls, degree: int = 2, offset: float = 1.0) -> "KernelSpec":
        return cls(kind="polynomial", degree=int(degree), offset=float(offset))

    @classmethod
    def rank1(cls, feature_index: int) -> "KernelSpec":
        return cls(kind="rank1_feature", feature_index=int(feature_index))

    @classmethod
    def constant(cls) -> "KernelSpec":
        return cls(kind="constant_offset")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        for key in ("bandwidth", "degree", "offset", "feature_index"):
            val = getattr(self, key)
            if val is not None:
                d[key] = val
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        if "kind" not in d:
            raise ConfigError("kernel spec dict needs a 'kind' key")
        allowed = {"kind", "bandwidth", "degree", "offset", "feature_index"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown kernel spec keys: {sorted(unknown)}")
        return cls(**d)


def _eval(spec: KernelSpec, x: np.ndarray, z: np.ndarray) -> float:
    # Scalar kernel evaluation. build_gram routes non-rank-one entries
    # through this same function so Gram entries and eval_kernel agree
    # bit for bit.
    if spec.kind == "linear":
        return float(np.dot(x, z))
    if spec.kind == "gaussian":
        d = x - z
        return float(np.exp(-np.dot(d, d) / (2.0 * spec.bandwidth * spec.bandwidth)))
    if spec.kind == "polynomial":
        return float((np.dot(x, z) + spec.offset) ** spec.degree)
    if spec.kind == "rank1_feature":
        return float(x[spec.feature_index] * z[spec.feature_index])
    return 1.0  # constant_offset


def _check_index(spec: KernelSpec, dim: int):
    if spec.kind == "rank1_feature" and spec.feature_index >= dim:
        raise ConfigError(
            f"rank1_feature index {spec.feature_index} out of range for dimension {dim}"
        )


def eval_kernel(spec: KernelSpec, x, z) -> float:
    """Evaluate one kernel on a pair of points.

    Consistent with :func:`build_gram`: for sample rows xi, xj the value
    equals the corresponding Gram entry.
    """
    x = _as_vector(x, "x")
    z = _as_vector(z, "z")
    if x.shape != z.shape:
        raise ShapeError(f"point dimensions differ: {x.shape[0]} vs {z.shape[0]}")
    if not (np.isfinite(x).all() and np.isfinite(z).all()):
        raise DataError("kernel arguments contain non-finite values")
    _check_index(spec, x.shape[0])
    return _eval(spec, x, z)


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """Symmetric PSD matrix of kernel values over one sample."""

    entries: np.ndarray
    sample_id: str

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.float64)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ShapeError(f"Gram matrix must be square, got shape {e.shape}")
        scale = np.maximum(1.0, np.abs(e))
        if not np.all(np.abs(e - e.T) <= 1e-12 * scale):
            raise NumericalError("Gram matrix is not symmetric within tolerance")
        if e.shape[0] and np.min(np.diag(e)) < -1e-12 * max(1.0, float(np.abs(e).max())):
            raise NumericalError("Gram matrix has a negative diagonal entry")
        e = e.copy()
        e.flags.writeable = False
        object.__setattr__(self, "entries", e)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries)[0])

    def require_psd(self, rel_tol: float = 1e-8):
        """Raise unless the smallest eigenvalue is >= -rel_tol * largest."""
        eigs = np.linalg.eigvalsh(self.entries)
        smallest, largest = float(eigs[0]), float(eigs[-1])
        if smallest < -rel_tol * max(largest, np.finfo(float).tiny):
            raise NumericalError(
                f"Gram matrix is not PSD: min eigenvalue {smallest:.3e}, max {largest:.3e}"
            )


def build_gram(spec: KernelSpec, X) -> GramMatrix:
    """Pairwise kernel matrix over the rows of X.

    The upper triangle is computed and mirrored, so the result is exactly
    symmetric. Rank-one kinds use a vectorized outer product whose entries
    coincide bitwise with :func:`eval_kernel`; the remaining kinds share
    the scalar evaluation routine directly.
    """
    X = _as_matrix(X)
    if not np.isfinite(X).all():
        raise DataError("data matrix contains non-finite values")
    m, d = X.shape
    _check_index(spec, d)
    sid = sample_id_of(X)
    if spec.kind == "rank1_feature":
        col = X[:, spec.feature_index]
        entries = np.outer(col, col)
    elif spec.kind == "constant_offset":
        entries = np.ones((m, m))
    else:
        entries = np.empty((m, m))
        for i in range(m):
            xi = X[i]
            entries[i, i] = _eval(spec, xi, xi)
            for j in range(i + 1, m):
                val = _eval(spec, xi, X[j])
                entries[i, j] = val
                entries[j, i] = val
    return GramMatrix(entries=entries, sample_id=sid)


def cross_gram(spec: KernelSpec, A, B) -> np.ndarray:
    """Kernel values between rows of A and rows of B (len(A) x len(B))."""
    A = _as_matrix(A)
    B = _as_matrix(B)
    if A.shape[1] != B.shape[1]:
        raise ShapeError(f"point dimensions differ: {A.shape[1]} vs {B.shape[1]}")
    if not (np.isfinite(A).all() and np.isfinite(B).all()):
        raise DataError("data matrix contains non-finite values")
    _check_index(spec, A.shape[1])
    if spec.kind == "rank1_feature":
        return np.outer(A[:, spec.feature_index], B[:, spec.feature_index])
    if spec.kind == "constant_offset":
        return np.ones((A.shape[0], B.shape[0]))
    out = np.empty((A.shape[0], B.shape[0]))
    for i in range(A.shape[0]):
        ai = A[i]
        for j in range(B.shape[0]):
            out[i, j] = _eval(spec, ai, B[j])
    return out


def _kappa0_from_grams(grams: Sequence[GramMatrix]) -> float:
    # Smallest valid bound on sqrt(sum_k K_k(x,x)^2) over the sample.
    diags = np.stack([np.diag(g.entries) for g in grams])
    return float(np.sqrt((diags**2).sum(axis=0)).max()) if diags.size else 0.0


def _explicit_features(specs: Sequence[KernelSpec], X: np.ndarray) -> Optional[np.ndarray]:
    if not all(s.kind in EXPLICIT_MAP_KINDS for s in specs):
        return None
    cols = []
    for s in specs:
        _check_index(s, X.shape[1])
        if s.kind == "rank1_feature":
            cols.append(X[:, s.feature_index])
        else:
            cols.append(np.ones(X.shape[0]))
    return np.column_stack(cols)


class KernelFamily:
    """Ordered collection of base kernels over a single sample.

    ``features``, when present, holds one column per kernel such that
    K_k = outer(features[:, k], features[:, k]); solvers use it as an
    exact fast path, and the Gram matrices of such families materialize
    lazily on first access (idempotent, so benign under concurrency).
    ``kappa0`` bounds sqrt(sum_k K_k(x,x)^2) over the sample, verified by
    direct evaluation of the kernel diagonals.
    """

    def __init__(self, grams=None, specs=None, features=None,
                 sample_id: Optional[str] = None, kappa0: Optional[float] = None):
        if grams is None and features is None:
            raise ConfigError("kernel family needs Gram matrices or feature columns")
        self.specs = None if specs is None else tuple(specs)
        self._grams = None
        if features is not None:
            f = np.asarray(features, dtype=np.float64)
            if f.ndim != 2 or f.shape[1] == 0:
                raise ShapeError(f"features must be a nonempty 2-d matrix, got {f.shape}")
            f = f.copy()
            f.flags.writeable = False
            self.features = f
            self._m = f.shape[0]
            self._p = f.shape[1]
        else:
            self.features = None
        if grams is not None:
            grams = tuple(grams)
            if not grams:
                raise ConfigError("kernel family must contain at least one kernel")
            sid = grams[0].sample_id
            m = grams[0].m
            for g in grams:
                if g.sample_id != sid:
                    raise ConfigError("all Gram matrices in a family must share one sample")
                if g.m != m:
                    raise ShapeError("all Gram matrices in a family must share one dimension")
            if self.features is not None and (self._m, self._p) != (m, len(grams)):
                raise ShapeError(
                    f"features must be ({m}, {len(grams)}), got {self.features.shape}"
                )
            self._grams = grams
            self._m = m
            self._p = len(grams)
            sample_id = sid
        if sample_id is None:
            raise ConfigError("feature-backed families need an explicit sample_id")
        if self.specs is not None and len(self.specs) != self._p:
            raise ShapeError("specs and kernel counts differ")
        self.sample_id = sample_id
        if kappa0 is None:
            kappa0 = self._compute_kappa0()
        if kappa0 < 0:
            raise ConfigError("kappa0 must be nonnegative")
        self.kappa0 = float(kappa0)

    def _compute_kappa0(self) -> float:
        if self._grams is not None:
            return _kappa0_from_grams(self._grams)
        diag = self.features**2  # K_k(x_i, x_i) for rank-one columns
        return float(np.sqrt((diag**2).sum(axis=1)).max())

    @property
    def grams(self) -> tuple:
        if self._grams is None:
            F = self.features
            self._grams = tuple(
                GramMatrix(entries=np.outer(F[:, k], F[:, k]), sample_id=self.sample_id)
                for k in range(self._p)
            )
        return self._grams

    @classmethod
    def from_specs(cls, specs: Sequence[KernelSpec], X) -> "KernelFamily":
        """Bundle the given specs over X; rank-one families stay lazy."""
        X = _as_matrix(X)
        if not np.isfinite(X).all():
            raise DataError("data matrix contains non-finite values")
        specs = tuple(specs)
        if not specs:
            raise ConfigError("kernel family must contain at least one kernel")
        features = _explicit_features(specs, X)
        if features is not None:
            return cls(specs=specs, features=features, sample_id=sample_id_of(X))
        grams = tuple(build_gram(s, X) for s in specs)
        return cls(grams=grams, specs=specs)

    @classmethod
    def from_grams(cls, mats, sample_id: Optional[str] = None,
                   features=None) -> "KernelFamily":
        """Wrap raw PSD matrices (no evaluable specs) into a family."""
        grams = []
        for mat in mats:
            if isinstance(mat, GramMatrix):
                grams.append(mat)
            else:
                mat = np.asarray(mat, dtype=np.float64)
                sid = sample_id if sample_id is not None else sample_id_of(
                    np.asarray(mats[0], dtype=np.float64)
                )
                grams.append(GramMatrix(entries=mat, sample_id=sid))
        return cls(grams=tuple(grams), features=features)

    @property
    def p(self) -> int:
        return self._p

    @property
    def m(self) -> int:
        return self._m

    def subset(self, indices) -> "KernelFamily":
        """Restrict every kernel to a sub-sample (row/column selection)."""
        idx = np.asarray(indices, dtype=np.intp)
        child_id = self.sample_id[:8] + "/" + hashlib.sha1(idx.tobytes()).hexdigest()[:8]
        if self.features is not None:
            return KernelFamily(
                specs=self.specs, features=self.features[idx], sample_id=child_id,
            )
        grams = tuple(
            GramMatrix(entries=g.entries[np.ix_(idx, idx)], sample_id=child_id)
            for g in self.grams
        )
        return KernelFamily(grams=grams, specs=self.specs)

    def select_kernels(self, kernel_indices) -> "KernelFamily":
        """Keep only the listed kernels (same sample)."""
        ks = list(kernel_indices)
        specs = None if self.specs is None else tuple(self.specs[k] for k in ks)
        if self.features is not None and self._grams is None:
            return KernelFamily(
                specs=specs, features=self.features[:, ks], sample_id=self.sample_id,
            )
        grams = tuple(self.grams[k] for k in ks)
        feats = None if self.features is None else self.features[:, ks]
        return KernelFamily(grams=grams, specs=specs, features=feats)

    def combined_entries(self, mu) -> np.ndarray:
        """Sum_k mu_k K_k as a raw array (feature fast path when possible)."""
        mu = _as_vector(mu, "mu")
        if mu.shape[0] != self.p:
            raise ShapeError(f"mu has length {mu.shape[0]}, family has {self.p} kernels")
        if self.features is not None:
            return (self.features * mu) @ self.features.T
        out = np.zeros((self.m, self.m))
        for k in range(self.p):
            out += mu[k] * self.grams[k].entries
        return out


def as_family(obj) -> KernelFamily:
    """Coerce a family, a Gram matrix, or a sequence of matrices to a family."""
    if isinstance(obj, KernelFamily):
        return obj
    if isinstance(obj, GramMatrix):
        return KernelFamily.from_grams([obj])
    if isinstance(obj, np.ndarray):
        return KernelFamily.from_grams([obj])
    if isinstance(obj, (list, tuple)):
        return KernelFamily.from_grams(list(obj))
    raise ConfigError(f"cannot interpret {type(obj).__name__} as a kernel family")


def combine(family, mu) -> GramMatrix:
    """Weighted sum of the family's Gram matrices, entrywise.

    Accumulates kernel by kernel in index order, so the result matches an
    independent entrywise loop exactly.
    """
    fam = as_family(family)
    mu = _as_vector(mu, "mu")
    if mu.shape[0] != fam.p:
        raise ShapeError(f"mu has length {mu.shape[0]}, family has {fam.p} kernels")
    if np.any(mu < 0):
        raise ConfigError("combination weights must be nonnegative")
    out = np.zeros((fam.m, fam.m))
    for k in range(fam.p):
        out += mu[k] * fam.grams[k].entries
    return GramMatrix(entries=out, sample_id=fam.sample_id)


def compute_kappa(family, mu_norm_bound: float) -> float:
    """Bound on the combined kernel's diagonal: kappa0 * (||mu0|| + radius)."""
    fam = as_family(family)
    if mu_norm_bound < 0:
        raise ConfigError("mu_norm_bound must be nonnegative")
    return fam.kappa0 * float(mu_norm_bound)
