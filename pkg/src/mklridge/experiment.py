"""Config-driven experiment runner.

Fits and evaluates the L2 weight learner, the L1 baseline, the uniform
kernel sum, and the best single kernel under a cross-validated
hyperparameter search, then writes machine-readable reports with full
seed-level reproducibility: the same config and seed produce the same
bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import diagnostics
from .data import (Dataset, apply_vocabulary, build_ngram_features,
                   load_delimited, load_text_corpus, make_folds, split_indices)
from .errors import ConfigError, DataError, NumericalError, ShapeError
from .kernels import KernelFamily, KernelSpec
from .solver import fit_l1, fit_l2, predict_weighted

METHODS = ("l2mkl", "l1mkl", "uniform", "best_single")
METRICS = ("rmse", "misclassification")

DEFAULT_LAMBDA0_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0)
DEFAULT_RADIUS_GRID = (0.0, 0.01, 0.1, 1.0, 10.0, 100.0)
DEFAULT_BUDGET_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)


def metric_rmse(pred, y) -> float:
    """Root mean squared error."""
    pred = np.asarray(pred, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if pred.shape != y.shape:
        raise ShapeError("prediction and target lengths differ")
    if pred.size == 0:
        raise ConfigError("cannot score an empty prediction vector")
    return float(np.sqrt(np.mean((pred - y) ** 2)))


def metric_misclassification(pred, y) -> float:
    """Fraction of sign disagreements against +/-1 targets; sign(0) is +1."""
    pred = np.asarray(pred, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if pred.shape != y.shape:
        raise ShapeError("prediction and target lengths differ")
    if pred.size == 0:
        raise ConfigError("cannot score an empty prediction vector")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise DataError("misclassification requires exact +/-1 targets")
    signs = np.where(pred >= 0.0, 1.0, -1.0)
    return float(np.mean(signs != y))


_METRIC_FNS = {"rmse": metric_rmse, "misclassification": metric_misclassification}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; see README for the key schema."""

    dataset: dict
    kernels: dict
    methods: tuple = ("l2mkl", "uniform")
    lambda0_grid: tuple = DEFAULT_LAMBDA0_GRID
    radius_grid: tuple = DEFAULT_RADIUS_GRID
    budget_grid: tuple = DEFAULT_BUDGET_GRID
    cv_folds: int = 10
    trials: int = 1
    seed: Optional[int] = None
    metrics: tuple = ("rmse",)
    eta: float = 0.5
    max_iters: int = 200
    l1_max_iters: int = 2000
    l1_tol: float = 1e-8
    out: Optional[str] = None
    fit: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.dataset, dict) or "kind" not in self.dataset:
            raise ConfigError("dataset section must be a dict with a 'kind' key")
        if not isinstance(self.kernels, dict) or "kind" not in self.kernels:
            raise ConfigError("kernels section must be a dict with a 'kind' key")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; expected a subset of {METHODS}")
        if not self.methods:
            raise ConfigError("at least one method must be selected")
        for name in self.metrics:
            if name not in METRICS:
                raise ConfigError(f"unknown metric {name!r}; expected a subset of {METRICS}")
        if not self.metrics:
            raise ConfigError("at least one metric must be selected")
        if not self.lambda0_grid or any(v <= 0 for v in self.lambda0_grid):
            raise ConfigError("lambda0_grid must be nonempty with positive entries")
        if "l2mkl" in self.methods and not self.radius_grid:
            raise ConfigError("radius_grid must be nonempty when l2mkl is selected")
        if any(v < 0 for v in self.radius_grid):
            raise ConfigError("radius_grid entries must be nonnegative")
        if "l1mkl" in self.methods:
            if not self.budget_grid or any(v <= 0 for v in self.budget_grid):
                raise ConfigError("budget_grid must be nonempty with positive entries")
        if self.cv_folds < 2:
            raise ConfigError("cv_folds must be at least 2")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.trials > 1 and self.seed is None:
            raise ConfigError("a seed is required when trials > 1")
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "metrics", tuple(self.metrics))
        object.__setattr__(self, "lambda0_grid", tuple(float(v) for v in self.lambda0_grid))
        object.__setattr__(self, "radius_grid", tuple(float(v) for v in self.radius_grid))
        object.__setattr__(self, "budget_grid", tuple(float(v) for v in self.budget_grid))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        allowed = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "dataset" not in d or "kernels" not in d:
            raise ConfigError("config requires 'dataset' and 'kernels' sections")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot open config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "kernels": self.kernels,
            "methods": list(self.methods),
            "lambda0_grid": list(self.lambda0_grid),
            "radius_grid": list(self.radius_grid),
            "budget_grid": list(self.budget_grid),
            "cv_folds": self.cv_folds,
            "trials": self.trials,
            "seed": self.seed,
            "metrics": list(self.metrics),
            "eta": self.eta,
            "max_iters": self.max_iters,
            "l1_max_iters": self.l1_max_iters,
            "l1_tol": self.l1_tol,
            "out": self.out,
            "fit": self.fit,
        }


# ---------------------------------------------------------------------------
# Canonical JSON output
# ---------------------------------------------------------------------------

def format_float(x: float) -> str:
    """Serialize a float with 17 significant digits (round-trip exact)."""
    if not np.isfinite(x):
        return "null"
    s = format(float(x), ".17g")
    if "." not in s and "e" not in s and "n" not in s:
        s += ".0"  # keep floats typed as floats across JSON round trips
    return s


def dumps_canonical(obj, indent: int = 0) -> str:
    """Deterministic JSON with 17-significant-digit floats."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if obj is None:
        return "null"
    if isinstance(obj, bool) or isinstance(obj, np.bool_):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [dumps_canonical(v, indent + 1) for v in obj]
        return "[\n" + ",\n".join(inner + s for s in items) + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{inner}{json.dumps(str(k))}: {dumps_canonical(v, indent + 1)}"
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    raise ConfigError(f"cannot serialize value of type {type(obj).__name__}")


def write_json_atomic(obj, path) -> str:
    """Write canonical JSON via a temp file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    text = dumps_canonical(obj) + "\n"
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


# ---------------------------------------------------------------------------
# Trial data and kernel recipes
# ---------------------------------------------------------------------------

def synthetic_sparse(dataset_cfg: dict, rng: np.random.Generator):
    """Sparse linear signal: a few unit-coefficient features plus noise."""
    d = int(dataset_cfg.get("n_features", 200))
    ni = int(dataset_cfg.get("n_informative", 10))
    coef = float(dataset_cfg.get("coef", 1.0))
    sigma = float(dataset_cfg.get("noise_sigma", 0.5))
    n_train = int(dataset_cfg.get("train_size", 200))
    n_test = int(dataset_cfg.get("test_size", 200))
    if not 1 <= ni <= d:
        raise ConfigError("n_informative must lie in [1, n_features]")
    total = n_train + n_test
    X = rng.standard_normal((total, d))
    y = coef * X[:, :ni].sum(axis=1) + rng.normal(scale=sigma, size=total)
    train = Dataset(X=X[:n_train], y=y[:n_train])
    test = Dataset(X=X[n_train:], y=y[n_train:])
    return train, test


class _Source:
    """Loads the raw data once and materializes per-trial train/test splits."""

    def __init__(self, config: ExperimentConfig):
        self.cfg = config
        ds = config.dataset
        self.kind = ds["kind"]
        if self.kind == "delimited":
            self.base = load_delimited(
                ds["path"],
                label_column=int(ds.get("label_column", -1)),
                delimiter=ds.get("delimiter", ","),
                task=ds.get("task", "regression"),
                label_map=ds.get("label_map"),
                header=bool(ds.get("header", False)),
            )
            self.fraction = float(ds.get("split_fraction", 0.5))
        elif self.kind == "text":
            self.docs, self.labels = load_text_corpus(ds["path"])
            self.task = ds.get("task", "regression")
            self.fraction = float(ds.get("split_fraction", 0.5))
        elif self.kind == "synthetic_sparse":
            pass
        else:
            raise ConfigError(f"unknown dataset kind {self.kind!r}")

    def trial_data(self, trial_seed: np.random.SeedSequence):
        """Returns (train, test, audit) for one trial."""
        if self.kind == "synthetic_sparse":
            rng = np.random.default_rng(trial_seed)
            train, test = synthetic_sparse(self.cfg.dataset, rng)
            audit = {
                "train_rows": train.m, "test_rows": test.m, "overlap": 0,
                "train_checksum": "fresh-draw", "test_checksum": "fresh-draw",
            }
            return train, test, audit
        split_seed = int(trial_seed.generate_state(1)[0])
        if self.kind == "delimited":
            tr, te = split_indices(self.base.m, self.fraction, split_seed)
            train, test = self.base.take(tr), self.base.take(te)
        else:  # text
            n_docs = len(self.docs)
            tr, te = split_indices(n_docs, self.fraction, split_seed)
            kcfg = self.cfg.kernels
            if kcfg["kind"] != "ngram_rank1":
                raise ConfigError("text datasets require the ngram_rank1 kernel recipe")
            counts_tr, vocab = build_ngram_features(
                [self.docs[i] for i in tr],
                n=int(kcfg.get("n", 2)),
                top=int(kcfg.get("top", 100)),
            )
            counts_te = apply_vocabulary([self.docs[i] for i in te], vocab)
            train = Dataset(X=counts_tr, y=self.labels[tr], task=self.task)
            test = Dataset(X=counts_te, y=self.labels[te], task=self.task)
        overlap = len(set(tr.tolist()) & set(te.tolist()))
        if overlap:
            raise ConfigError("internal split error: train and test rows overlap")
        audit = {
            "train_rows": len(tr), "test_rows": len(te), "overlap": overlap,
            "train_checksum": _index_checksum(tr), "test_checksum": _index_checksum(te),
        }
        return train, test, audit


def _index_checksum(indices) -> str:
    arr = np.sort(np.asarray(indices, dtype=np.int64))
    return hashlib.sha1(arr.tobytes()).hexdigest()[:16]


def build_family(kernels_cfg: dict, train: Dataset) -> KernelFamily:
    """Materialize the configured kernel family on the training rows."""
    kind = kernels_cfg["kind"]
    include_offset = bool(kernels_cfg.get("include_offset", True))
    if kind == "explicit":
        specs = [KernelSpec.from_dict(s) for s in kernels_cfg["specs"]]
        if not specs:
            raise ConfigError("explicit kernel recipe needs at least one spec")
        return KernelFamily.from_specs(specs, train.X)
    if kind in ("rank1_all", "ngram_rank1"):
        specs = [KernelSpec.rank1(i) for i in range(train.X.shape[1])]
        if include_offset:
            specs.append(KernelSpec.constant())
        return KernelFamily.from_specs(specs, train.X)
    raise ConfigError(f"unknown kernel recipe {kind!r}")


# ---------------------------------------------------------------------------
# Cross-validated method runners
# ---------------------------------------------------------------------------

def _predict_rows(family: KernelFamily, mu, alpha, train_idx, query_idx) -> np.ndarray:
    """Within-sample prediction using the family's precomputed kernels."""
    if family.features is not None:
        F = family.features
        return F[query_idx] @ (mu * (F[train_idx].T @ alpha))
    out = np.zeros(len(query_idx))
    for k in range(family.p):
        if mu[k] == 0.0:
            continue
        out += mu[k] * (family.grams[k].entries[np.ix_(query_idx, train_idx)] @ alpha)
    return out


def _fit_for_combo(method, family, y, combo, cfg: ExperimentConfig):
    """Fit one method at one hyperparameter combo; returns (mu_full, alpha, info)."""
    lambda0 = combo[0]
    if method in ("l2mkl", "uniform"):
        radius = combo[1] if method == "l2mkl" else 0.0
        model, report = fit_l2(
            family, y, lambda0, radius,
            eta=cfg.eta, max_iters=cfg.max_iters,
        )
        info = {
            "iterations": model.iterations,
            "converged": model.converged,
            "final_step": model.final_step,
            "objective": report.objective_value,
        }
        return model.weights.mu, model.alpha, info, model
    if method == "l1mkl":
        budget = combo[1]
        result = fit_l1(
            family, y, lambda0, budget,
            tol=cfg.l1_tol, max_iters=cfg.l1_max_iters,
        )
        info = {
            "iterations": result.iterations,
            "converged": result.converged,
            "certificate_gap": result.certificate_gap,
            "objective": result.objective_value,
        }
        return result.mu, result.alpha, info, result
    if method == "best_single":
        kernel_idx = int(combo[1])
        sub = family.select_kernels([kernel_idx])
        model, report = fit_l2(sub, y, lambda0, 0.0, eta=cfg.eta, max_iters=cfg.max_iters)
        mu_full = np.zeros(family.p)
        mu_full[kernel_idx] = model.weights.mu[0]
        info = {
            "iterations": model.iterations,
            "converged": model.converged,
            "final_step": model.final_step,
            "objective": report.objective_value,
        }
        return mu_full, model.alpha, info, model
    raise ConfigError(f"unknown method {method!r}")


def _combo_grid(method, cfg: ExperimentConfig, p: int):
    lams = sorted(cfg.lambda0_grid)
    if method == "l2mkl":
        return [(l0, r) for l0 in lams for r in sorted(cfg.radius_grid)]
    if method == "l1mkl":
        return [(l0, b) for l0 in lams for b in sorted(cfg.budget_grid)]
    if method == "uniform":
        return [(l0,) for l0 in lams]
    if method == "best_single":
        return [(l0, k) for l0 in lams for k in range(p)]
    raise ConfigError(f"unknown method {method!r}")


def _combo_label(method, combo) -> dict:
    if method == "l2mkl":
        return {"lambda0": combo[0], "radius": combo[1]}
    if method == "l1mkl":
        return {"lambda0": combo[0], "budget": combo[1]}
    if method == "uniform":
        return {"lambda0": combo[0]}
    return {"lambda0": combo[0], "kernel": int(combo[1])}


def _run_method_trial(method, family, train: Dataset, test: Dataset,
                      cfg: ExperimentConfig, fold_seed: int):
    """CV-select hyperparameters, refit on the full trial training set,
    and score on the held-out test rows."""
    y = train.y
    m = train.m
    k = min(cfg.cv_folds, m)
    if k < 2:
        raise ConfigError("training set too small for cross-validation")
    plan = make_folds(m, k, fold_seed)
    fold_data = []
    for f in range(k):
        tr_idx, va_idx = plan.fold_indices(f)
        fold_data.append((tr_idx, va_idx, family.subset(tr_idx)))

    select_metric = _METRIC_FNS[cfg.metrics[0]]
    best_combo = None
    best_score = None
    for combo in _combo_grid(method, cfg, family.p):
        scores = []
        for tr_idx, va_idx, sub_family in fold_data:
            mu_full, alpha, _info, _ = _fit_for_combo(method, sub_family, y[tr_idx], combo, cfg)
            preds = _predict_rows(family, mu_full, alpha, tr_idx, va_idx)
            scores.append(select_metric(preds, y[va_idx]))
        score = float(np.mean(scores))
        if best_score is None or score < best_score:
            best_score = score
            best_combo = combo

    mu_full, alpha, info, fitted = _fit_for_combo(method, family, y, best_combo, cfg)
    preds = predict_weighted(family.specs, mu_full, alpha, train.X, test.X)
    metrics = {}
    for name in cfg.metrics:
        if name == "misclassification" and test.task != "classification_pm1":
            continue
        metrics[name] = _METRIC_FNS[name](preds, test.y)

    record = {
        "chosen": _combo_label(method, best_combo),
        "cv_score": best_score,
        "metrics": metrics,
    }
    record.update(info)
    if method in ("l2mkl", "uniform"):
        r_alpha, r_mu = diagnostics.kkt_residuals(fitted, family, y)
        record["kkt"] = {"alpha_residual": r_alpha, "mu_residual": r_mu}
    elif method == "best_single":
        kernel_idx = int(best_combo[1])
        sub = family.select_kernels([kernel_idx])
        r_alpha, r_mu = diagnostics.kkt_residuals(fitted, sub, y)
        record["kkt"] = {"alpha_residual": r_alpha, "mu_residual": r_mu}
    return record


def _run_trial(t: int, source: _Source, cfg: ExperimentConfig,
               trial_seed: np.random.SeedSequence):
    train, test, audit = source.trial_data(trial_seed)
    family = build_family(cfg.kernels, train)
    fold_seed = int(trial_seed.generate_state(2)[1])
    audit = dict(audit)
    audit["trial"] = t
    ortho = diagnostics.orthogonality_check(family, train.X)
    audit["orthogonality"] = ortho
    per_method = {}
    for method in cfg.methods:
        try:
            record = _run_method_trial(method, family, train, test, cfg, fold_seed)
        except NumericalError as exc:
            record = {"failed": str(exc)}
        record["trial"] = t
        per_method[method] = record
    return per_method, audit


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> dict:
    """Execute the full protocol described by ``config``.

    Per trial: resample or split, build the kernel family on training
    rows only, select hyperparameters for each method by k-fold CV on the
    training set (ties resolved toward the smallest lambda0, then the
    smallest second parameter), refit on the full training set, and score
    on held-out rows. Failed fits are recorded, not fatal.
    """
    if not isinstance(config, ExperimentConfig):
        config = ExperimentConfig.from_dict(config)
    source = _Source(config)
    master = np.random.SeedSequence(0 if config.seed is None else config.seed)
    trial_seeds = master.spawn(config.trials)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(
                lambda args: _run_trial(*args),
                [(t, source, config, trial_seeds[t]) for t in range(config.trials)],
            ))
    else:
        results = [
            _run_trial(t, source, config, trial_seeds[t])
            for t in range(config.trials)
        ]

    methods_out = {}
    for method in config.methods:
        trials = [res[0][method] for res in results]
        ok = [tr for tr in trials if "failed" not in tr]
        mean, std = {}, {}
        if ok:
            for name in cfg_metric_names(config, ok):
                vals = np.array([tr["metrics"][name] for tr in ok])
                mean[name] = float(vals.mean())
                std[name] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        methods_out[method] = {
            "trials": trials,
            "mean": mean,
            "std": std,
            "failed": len(trials) - len(ok),
        }

    report = {
        "config": config.to_dict(),
        "trials": config.trials,
        "methods": methods_out,
        "audit": [res[1] for res in results],
    }
    if config.out:
        write_json_atomic(report, os.path.join(config.out, "report.json"))
    return report


def cfg_metric_names(config: ExperimentConfig, ok_trials) -> list:
    names = []
    for name in config.metrics:
        if all(name in tr["metrics"] for tr in ok_trials):
            names.append(name)
    return names


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------

def _table_rows(report: dict):
    rows = []
    for method in report["methods"]:
        entry = report["methods"][method]
        for name in entry["mean"]:
            rows.append({
                "method": method,
                "metric": name,
                "mean": entry["mean"][name],
                "std": entry["std"][name],
            })
    rows.sort(key=lambda r: (r["method"], r["metric"]))
    return rows


def emit_tables(report: dict, out_dir, fmt: str = "csv") -> dict:
    """Write the absolute and baseline-normalized metric tables.

    The normalized table divides each method's mean by the uniform
    baseline's mean for the same metric (the baseline row is exactly
    1.0); it is omitted with a note when the baseline method is missing.
    CSV and JSON emissions carry identical numeric content.
    """
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown table format {fmt!r}; expected 'csv' or 'json'")
    os.makedirs(out_dir, exist_ok=True)
    rows = _table_rows(report)
    written = {}

    def write_rows(name, rows_, columns):
        path = os.path.join(out_dir, f"{name}.{fmt}")
        if fmt == "json":
            write_json_atomic(rows_, path)
        else:
            lines = [",".join(columns)]
            for r in rows_:
                cells = []
                for c in columns:
                    val = r[c]
                    cells.append(format_float(val) if isinstance(val, float) else str(val))
                lines.append(",".join(cells))
            text = "\n".join(lines) + "\n"
            fd, tmp = tempfile.mkstemp(dir=out_dir, suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(text)
            os.replace(tmp, path)
        written[name] = path

    write_rows("absolute_metrics", rows, ("method", "metric", "mean", "std"))

    baseline = report["methods"].get("uniform")
    if baseline is None or not baseline.get("mean"):
        written["note"] = "normalized table omitted: uniform baseline not present"
        return written
    norm_rows = []
    for r in rows:
        base = baseline["mean"].get(r["metric"])
        if base is None or base == 0.0:
            continue
        norm_rows.append({
            "method": r["method"],
            "metric": r["metric"],
            "normalized_mean": r["mean"] / base,
        })
    write_rows("normalized_metrics", norm_rows, ("method", "metric", "normalized_mean"))
    return written


# ---------------------------------------------------------------------------
# Single fits and the diagnostics suite (CLI back ends)
# ---------------------------------------------------------------------------

def run_fit(config: ExperimentConfig) -> dict:
    """Fit one model on the full configured dataset and summarize it."""
    fit_cfg = dict(config.fit)
    method = fit_cfg.get("method", "l2mkl")
    if method not in ("l2mkl", "l1mkl", "uniform"):
        raise ConfigError("fit.method must be l2mkl, l1mkl, or uniform")
    source = _Source(config)
    seed = np.random.SeedSequence(0 if config.seed is None else config.seed)
    train, _test, _audit = source.trial_data(seed.spawn(1)[0])
    family = build_family(config.kernels, train)
    lambda0 = float(fit_cfg.get("lambda0", 0.1))
    out = {
        "method": method,
        "lambda0": lambda0,
        "rows": train.m,
        "kernels": family.p,
        "orthogonality": diagnostics.orthogonality_check(family, train.X),
    }
    if method in ("l2mkl", "uniform"):
        radius = float(fit_cfg.get("radius", 1.0)) if method == "l2mkl" else 0.0
        model, report = fit_l2(family, train.y, lambda0, radius,
                               eta=config.eta, max_iters=config.max_iters)
        r_alpha, r_mu = diagnostics.kkt_residuals(model, family, train.y)
        out.update({
            "radius": radius,
            "iterations": model.iterations,
            "converged": model.converged,
            "final_step": model.final_step,
            "objective": report.objective_value,
            "kkt": {"alpha_residual": r_alpha, "mu_residual": r_mu},
            "mu": model.weights.mu.tolist(),
        })
    else:
        budget = float(fit_cfg.get("budget", 1.0))
        result = fit_l1(family, train.y, lambda0, budget,
                        tol=config.l1_tol, max_iters=config.l1_max_iters)
        out.update({
            "budget": budget,
            "iterations": result.iterations,
            "converged": result.converged,
            "certificate_gap": result.certificate_gap,
            "objective": result.objective_value,
            "mu": result.mu.tolist(),
        })
    return out


def run_diagnose(config: dict) -> dict:
    """Run the verification suites named in the config; see README."""
    if not isinstance(config, dict):
        raise ConfigError("diagnose config must be a JSON object")
    known = {"identity", "stability", "bounds", "fit_check"}
    unknown = set(config) - known
    if unknown:
        raise ConfigError(f"unknown diagnose sections: {sorted(unknown)}")
    if not config:
        raise ConfigError("diagnose config selects no sections")
    out = {}

    if "identity" in config:
        sec = config["identity"]
        cases = int(sec.get("cases", 1000))
        dim = int(sec.get("dim", 8))
        radius = float(sec.get("radius", 1.0))
        rng = np.random.default_rng(int(sec.get("seed", 0)))
        worst = 0.0
        for _ in range(cases):
            v = rng.uniform(0.0, 10.0, size=dim)
            w = rng.uniform(0.0, 10.0, size=dim)
            v[rng.integers(dim)] += 0.1  # keep both norms nonzero
            w[rng.integers(dim)] += 0.1
            worst = max(worst, diagnostics.weight_shift_identity_gap(v, w, radius))
        out["identity"] = {"cases": cases, "dim": dim, "radius": radius, "max_gap": worst}

    if "stability" in config:
        sec = config["stability"]
        m = int(sec.get("m", 50))
        d = int(sec.get("d", m))
        trials = int(sec.get("trials", 100))
        lambda0 = float(sec.get("lambda0", 0.5))
        seed = int(sec.get("seed", 0))
        rng = np.random.default_rng(seed)
        w_true = rng.standard_normal(d) / np.sqrt(d)

        def draw_point(r):
            x = r.standard_normal(d)
            return x, float(x @ w_true + 0.1 * r.standard_normal())

        X = np.vstack([draw_point(rng)[0] for _ in range(m)])
        y = X @ w_true + 0.1 * rng.standard_normal(m)
        specs = [KernelSpec.linear()]
        from .solver import MuWeights
        weights = MuWeights(np.ones(1), np.ones(1), 0.0)
        rep = diagnostics.stability_trial(
            specs, X, y, lambda0, weights, trials, seed + 1, draw_point,
        )
        out["stability"] = {
            "m": m, "d": d, "trials": rep.trials,
            "kappa": rep.kappa, "max_error": rep.max_error,
            "lambda_min": rep.lambda_min,
            "stability_bound": rep.stability_bound,
            "classical_bound": rep.classical_bound,
            "max_empirical_delta": rep.max_empirical_delta,
            "violations": rep.violations,
        }

    if "bounds" in config:
        sec = config["bounds"]
        vals = diagnostics.bound_values(
            kappa=float(sec["kappa"]), max_error=float(sec["max_error"]),
            radius=float(sec["radius"]), lambda0=float(sec["lambda0"]),
            p=int(sec["p"]), m=int(sec["m"]), delta=float(sec["delta"]),
        )
        out["bounds"] = {
            "c0": vals.c0, "c1": vals.c1, "beta": vals.beta,
            "generalization_gap": vals.generalization_gap,
        }

    if "fit_check" in config:
        sec = config["fit_check"]
        cfg = ExperimentConfig.from_dict(sec)
        out["fit_check"] = run_fit(cfg)

    return out
