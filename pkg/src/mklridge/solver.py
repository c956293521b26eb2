"""Ridge solvers and kernel-weight learning.

Three fitting routes live here. ``fit_l2`` runs the interpolated
fixed-point iteration for the L2-constrained weight problem, whose
optimum has the closed form mu = mu0 + radius * v/||v|| with
v_k = alpha' K_k alpha. ``oracle_fit`` solves the same problem by
projected gradient descent with a Frank-Wolfe gap certificate and is
kept deliberately independent of that closed form so the two can be
checked against each other. ``fit_l1`` is the L1-budget baseline.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import ConfigError, NumericalError, ShapeError
from .kernels import GramMatrix, as_family

log = logging.getLogger(__name__)

# Quadratic forms of PSD matrices may go this far below zero from roundoff.
NEG_QUAD_TOL = 1e-10

# ||v|| at or below this (times p) is treated as the degenerate v = 0 case.
DEGENERATE_V_TOL = 1e-14


def _as_vector(x, name="vector") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"{name} must be 1-d, got shape {x.shape}")
    return x


def _gram_entries(K) -> np.ndarray:
    if isinstance(K, GramMatrix):
        return K.entries
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ShapeError(f"kernel matrix must be square, got shape {K.shape}")
    return K


def _solve_pd(B: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Solve B a = y for symmetric positive definite B via Cholesky.

    One iterative-refinement pass keeps the residual near machine level;
    a residual above 1e-8 ||y|| is reported as a numerical failure with
    an eigenvalue estimate of the offending matrix.
    """
    try:
        factor = scipy.linalg.cho_factor(B, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        smallest = float(np.linalg.eigvalsh(B)[0])
        raise NumericalError(
            f"Cholesky factorization failed; smallest eigenvalue ~ {smallest:.6e}"
        ) from exc
    alpha = scipy.linalg.cho_solve(factor, y, check_finite=False)
    ynorm = float(np.linalg.norm(y))
    resid = y - B @ alpha
    if np.linalg.norm(resid) > 1e-14 * max(ynorm, 1.0):
        alpha = alpha + scipy.linalg.cho_solve(factor, resid, check_finite=False)
        resid = y - B @ alpha
    if np.linalg.norm(resid) > 1e-8 * ynorm:
        smallest = float(np.linalg.eigvalsh(B)[0])
        raise NumericalError(
            f"linear solve residual {np.linalg.norm(resid):.3e} exceeds tolerance; "
            f"smallest eigenvalue ~ {smallest:.6e}"
        )
    return alpha


def krr_solve(K, y, lam: float) -> np.ndarray:
    """Dual ridge solution alpha = (K + lam I)^(-1) y.

    K must be PSD and lam > 0, so K + lam I is positive definite and a
    Cholesky solve applies.
    """
    A = _gram_entries(K)
    y = _as_vector(y, "y")
    if A.shape[0] != y.shape[0]:
        raise ShapeError(f"K is {A.shape[0]}x{A.shape[0]} but y has length {y.shape[0]}")
    if not lam > 0:
        raise ConfigError("ridge amount lam must be positive")
    B = A + lam * np.eye(A.shape[0])
    return _solve_pd(B, y)


def quad_forms(alpha, family) -> np.ndarray:
    """Per-kernel quadratic forms v_k = alpha' K_k alpha.

    Entries are nonnegative for PSD kernels; roundoff negatives within
    ``NEG_QUAD_TOL`` are clamped to zero (and logged), anything lower is
    treated as a PSD violation.
    """
    fam = as_family(family)
    alpha = _as_vector(alpha, "alpha")
    if alpha.shape[0] != fam.m:
        raise ShapeError(f"alpha has length {alpha.shape[0]}, sample size is {fam.m}")
    if fam.features is not None:
        proj = fam.features.T @ alpha
        return proj * proj
    v = np.array([alpha @ (g.entries @ alpha) for g in fam.grams])
    worst = float(v.min(initial=0.0))
    if worst < -NEG_QUAD_TOL:
        raise NumericalError(
            f"quadratic form {worst:.3e} below -{NEG_QUAD_TOL:g}; kernel not PSD?"
        )
    if worst < 0.0:
        log.debug("clamped quadratic-form roundoff of %.3e to zero", worst)
        v = np.maximum(v, 0.0)
    return v


@dataclass(frozen=True, eq=False)
class MuWeights:
    """Kernel combination weights with their anchor and ball radius.

    Feasible set: mu >= 0 and ||mu - mu0|| <= radius. The anchor mu0 is
    normalized so its smallest component is one.
    """

    mu: np.ndarray
    mu0: np.ndarray
    radius: float

    def __post_init__(self):
        mu = _as_vector(self.mu, "mu")
        mu0 = _as_vector(self.mu0, "mu0")
        if mu.shape != mu0.shape:
            raise ShapeError("mu and mu0 lengths differ")
        if self.radius < 0:
            raise ConfigError("radius must be nonnegative")
        if np.any(mu0 <= 0):
            raise ConfigError("mu0 must be strictly positive")
        if abs(float(mu0.min()) - 1.0) > 1e-9:
            raise ConfigError("mu0 must be normalized so its minimum component is 1")
        if np.any(mu < -1e-12):
            raise ConfigError("mu must be nonnegative")
        if np.linalg.norm(mu - mu0) > self.radius + 1e-9 * max(1.0, self.radius):
            raise ConfigError("mu lies outside the feasible ball around mu0")
        mu = np.maximum(mu, 0.0)
        mu.flags.writeable = False
        mu0 = mu0.copy()
        mu0.flags.writeable = False
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "mu0", mu0)

    @property
    def p(self) -> int:
        return self.mu.shape[0]


def default_mu0(p: int) -> np.ndarray:
    """All-ones anchor (already normalized to minimum component one)."""
    return np.ones(p)


def _validated_mu0(mu0, p: int) -> np.ndarray:
    if mu0 is None:
        return default_mu0(p)
    mu0 = _as_vector(mu0, "mu0")
    if mu0.shape[0] != p:
        raise ShapeError(f"mu0 has length {mu0.shape[0]}, family has {p} kernels")
    if np.any(mu0 <= 0):
        raise ConfigError("mu0 must be strictly positive")
    if abs(float(mu0.min()) - 1.0) > 1e-9:
        raise ConfigError("mu0 must be normalized so its minimum component is 1")
    return mu0


def update_weights(quad, mu0, radius: float) -> MuWeights:
    """Closed-form weight update mu = mu0 + radius * v / ||v||.

    When ||v|| is numerically zero the direction is immaterial (the
    weighted objective no longer depends on it) and mu = mu0 is returned.
    """
    v = _as_vector(quad, "quad")
    mu0 = _validated_mu0(mu0, v.shape[0])
    if radius < 0:
        raise ConfigError("radius must be nonnegative")
    if np.any(v < -NEG_QUAD_TOL):
        raise ConfigError("quadratic-form vector has a negative entry beyond tolerance")
    v = np.maximum(v, 0.0)
    nv = float(np.linalg.norm(v))
    if nv <= DEGENERATE_V_TOL * v.shape[0]:
        mu = mu0.copy()
    else:
        mu = mu0 + radius * (v / nv)
    return MuWeights(mu=mu, mu0=mu0, radius=float(radius))


def objective(alpha, y, lam: float, quad, mu0, radius: float) -> float:
    """Reduced dual objective -lam a'a + 2 a'y - mu0'v - radius ||v||."""
    alpha = _as_vector(alpha, "alpha")
    y = _as_vector(y, "y")
    v = _as_vector(quad, "quad")
    mu0 = _as_vector(mu0, "mu0")
    if alpha.shape != y.shape:
        raise ShapeError("alpha and y lengths differ")
    if v.shape != mu0.shape:
        raise ShapeError("quad and mu0 lengths differ")
    return float(
        -lam * (alpha @ alpha)
        + 2.0 * (alpha @ y)
        - mu0 @ v
        - radius * np.linalg.norm(v)
    )


@dataclass(frozen=True, eq=False)
class MklModel:
    """Fitted state of a kernel-weight learner."""

    weights: MuWeights
    alpha: np.ndarray
    lam: float          # ridge amount, lambda0 * m
    lambda0: float
    quad: np.ndarray    # v_k = alpha' K_k alpha at the returned alpha
    iterations: int
    converged: bool
    final_step: float   # ||alpha_next - alpha|| at exit

    def __post_init__(self):
        a = _as_vector(self.alpha, "alpha").copy()
        a.flags.writeable = False
        object.__setattr__(self, "alpha", a)
        q = _as_vector(self.quad, "quad").copy()
        q.flags.writeable = False
        object.__setattr__(self, "quad", q)


@dataclass(frozen=True, eq=False)
class SolveReport:
    """Objective value and optional per-iteration (step, objective) pairs."""

    objective_value: float
    trajectory: Optional[tuple] = None


def fit_l2(family, y, lambda0: float, radius: float, mu0=None,
           eta: float = 0.5, epsilon: Optional[float] = None,
           max_iters: int = 200, record_trajectory: bool = False):
    """Learn kernel weights under the L2 ball constraint.

    Interpolated fixed-point iteration: starting from the anchor-kernel
    ridge solution, repeatedly recompute v from the current dual vector,
    set mu = mu0 + radius * v/||v||, re-solve the ridge system for that
    mu, and mix old and new duals with weight ``eta``; stop when the dual
    moves less than ``epsilon``.

    Parameters
    ----------
    family : KernelFamily or sequence of Gram matrices
    y : length-m target vector
    lambda0 : per-point ridge weight; the solve uses lam = lambda0 * m
    radius : weight-ball radius (0 freezes mu at mu0)
    mu0 : anchor weights, default all ones
    eta : interpolation weight in (0, 1)
    epsilon : stopping threshold on ||alpha_next - alpha||;
        default 1e-8 * (1 + ||y||)
    max_iters : iteration cap; exceeding it returns converged=False
    record_trajectory : store (step, objective) per iteration

    Returns
    -------
    (MklModel, SolveReport)
        The model carries the final in-loop weights and the exact ridge
        solution computed for them, so a converged model is a consistent
        (mu, alpha) pair up to the stopping tolerance.
    """
    fam = as_family(family)
    y = _as_vector(y, "y")
    m = fam.m
    if y.shape[0] != m:
        raise ShapeError(f"y has length {y.shape[0]}, sample size is {m}")
    if not lambda0 > 0:
        raise ConfigError("lambda0 must be positive")
    if radius < 0:
        raise ConfigError("radius must be nonnegative")
    if not 0.0 < eta < 1.0:
        raise ConfigError("eta must lie in (0, 1)")
    if max_iters < 1:
        raise ConfigError("max_iters must be at least 1")
    mu0 = _validated_mu0(mu0, fam.p)
    lam = lambda0 * m
    if epsilon is None:
        epsilon = 1e-8 * (1.0 + float(np.linalg.norm(y)))
    if not epsilon > 0:
        raise ConfigError("epsilon must be positive")

    eye = lam * np.eye(m)
    alpha_next = _solve_pd(fam.combined_entries(mu0) + eye, y)

    converged = False
    iterations = 0
    step = float("inf")
    traj = [] if record_trajectory else None
    weights = None
    solved = alpha_next
    for it in range(1, max_iters + 1):
        alpha = alpha_next
        v = quad_forms(alpha, fam)
        weights = update_weights(v, mu0, radius)
        solved = _solve_pd(fam.combined_entries(weights.mu) + eye, y)
        alpha_next = eta * alpha + (1.0 - eta) * solved
        if not np.isfinite(alpha_next).all():
            raise NumericalError("weight-learning iteration diverged to non-finite values")
        step = float(np.linalg.norm(alpha_next - alpha))
        iterations = it
        if record_trajectory:
            vq = quad_forms(alpha_next, fam)
            traj.append((step, objective(alpha_next, y, lam, vq, mu0, radius)))
        if step < epsilon:
            converged = True
            break

    alpha_out = solved
    quad_out = quad_forms(alpha_out, fam)
    model = MklModel(
        weights=weights,
        alpha=alpha_out,
        lam=lam,
        lambda0=float(lambda0),
        quad=quad_out,
        iterations=iterations,
        converged=converged,
        final_step=step,
    )
    report = SolveReport(
        objective_value=objective(alpha_out, y, lam, quad_out, mu0, radius),
        trajectory=None if traj is None else tuple(traj),
    )
    return model, report


# ---------------------------------------------------------------------------
# Reference solver (projected gradient) and the L1 baseline
# ---------------------------------------------------------------------------

def project_ball_orthant(x, mu0, radius: float, max_alternations: int = 10000) -> np.ndarray:
    """Project onto {mu >= 0, ||mu - mu0|| <= radius} by alternating clips.

    Ball clip (rescale mu - mu0) then orthant clip, repeated to a fixed
    point; a fixed point of the composition lies in both sets.
    """
    x = _as_vector(x, "x")
    mu0 = _as_vector(mu0, "mu0")
    z = x
    for _ in range(max_alternations):
        d = z - mu0
        nd = float(np.linalg.norm(d))
        if nd > radius:
            z = mu0 if radius == 0.0 else mu0 + d * (radius / nd)
        z = np.maximum(z, 0.0)
        if np.linalg.norm(z - mu0) <= radius * (1.0 + 1e-12) + 1e-15:
            return z
    raise NumericalError("alternating projection onto the weight set did not converge")


def project_l1_orthant(x, budget: float) -> np.ndarray:
    """Project onto {mu >= 0, sum(mu) <= budget} (sort-based, exact)."""
    x = _as_vector(x, "x")
    clipped = np.maximum(x, 0.0)
    if clipped.sum() <= budget:
        return clipped
    # Projection lands on the face sum(mu) = budget: shift-and-clip with
    # the usual sorted-cumulative-sum threshold.
    u = np.sort(x)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, x.shape[0] + 1)
    cond = u - (css - budget) / j > 0
    rho = int(np.nonzero(cond)[0][-1])
    theta = (css[rho] - budget) / (rho + 1.0)
    return np.maximum(x - theta, 0.0)


@dataclass(frozen=True, eq=False)
class OracleResult:
    """Projected-gradient solution with its optimality certificate."""

    weights: MuWeights
    alpha: np.ndarray
    objective_value: float
    converged: bool
    iterations: int
    certificate_gap: float


def _pgd_minimize(value_grad, project, lmo, x0, tol, max_iters):
    """Projected gradient descent with a Frank-Wolfe gap stopping rule.

    ``value_grad(x) -> (val, grad, extra)``, ``project(x)`` maps onto the
    feasible set, ``lmo(grad)`` returns the feasible minimizer of the
    linearized objective. Uses Barzilai-Borwein step seeds safeguarded by
    a sufficient-decrease backtracking line search.
    """
    x = project(np.asarray(x0, dtype=np.float64))
    val, grad, extra = value_grad(x)
    gap = float("inf")
    t = 1.0 / max(float(np.linalg.norm(grad)), 1e-12)
    prev_x = None
    prev_grad = None
    it = 0
    for it in range(1, max_iters + 1):
        gap = float(grad @ (x - lmo(grad)))
        if gap <= tol * max(1.0, abs(val)):
            return x, val, extra, True, it - 1, gap
        if prev_x is not None:
            dx = x - prev_x
            dg = grad - prev_grad
            denom = float(dx @ dg)
            if denom > 0:
                t = float(dx @ dx) / denom
        t = min(max(t, 1e-16), 1e16)
        accepted = False
        for _ in range(60):
            cand = project(x - t * grad)
            d = cand - x
            dnorm2 = float(d @ d)
            if dnorm2 == 0.0:
                # Projected step is a fixed point at this step size.
                break
            cval, cgrad, cextra = value_grad(cand)
            if cval <= val + float(grad @ d) + dnorm2 / (2.0 * t) + 1e-12 * max(1.0, abs(val)):
                prev_x, prev_grad = x, grad
                x, val, grad, extra = cand, cval, cgrad, cextra
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # No descent possible at machine resolution; report the gap.
            break
    gap = float(grad @ (x - lmo(grad)))
    return x, val, extra, gap <= tol * max(1.0, abs(val)), it, gap


def oracle_fit(family, y, lambda0: float, radius: float, mu0=None,
               tol: float = 1e-9, max_iters: int = 50000) -> OracleResult:
    """Reference solver for the L2-constrained weight problem.

    Minimizes G(mu) = y' (K(mu) + lam I)^(-1) y over the feasible ball by
    projected gradient descent. The gradient is -v(alpha(mu)) (Danskin),
    the projection alternates ball and orthant clips, and the run stops
    once the Frank-Wolfe gap certifies the objective within ``tol``
    (relative). Small instances only; this is ground truth for fit_l2,
    not a production path.
    """
    fam = as_family(family)
    y = _as_vector(y, "y")
    if y.shape[0] != fam.m:
        raise ShapeError(f"y has length {y.shape[0]}, sample size is {fam.m}")
    if fam.m > 200 or fam.p > 50:
        raise ConfigError("oracle_fit is restricted to m <= 200 and p <= 50")
    if not lambda0 > 0:
        raise ConfigError("lambda0 must be positive")
    if not tol > 0:
        raise ConfigError("tol must be positive")
    mu0 = _validated_mu0(mu0, fam.p)
    lam = lambda0 * fam.m
    eye = lam * np.eye(fam.m)

    def value_grad(mu):
        alpha = _solve_pd(fam.combined_entries(mu) + eye, y)
        v = quad_forms(alpha, fam)
        return float(y @ alpha), -v, alpha

    if radius == 0.0:
        val, _, alpha = value_grad(mu0)
        return OracleResult(
            weights=MuWeights(mu0.copy(), mu0, 0.0), alpha=alpha,
            objective_value=val, converged=True, iterations=0, certificate_gap=0.0,
        )

    def project(x):
        return project_ball_orthant(x, mu0, radius)

    def lmo(grad):
        gn = float(np.linalg.norm(grad))
        if gn == 0.0:
            return mu0
        # grad = -v <= 0, so the ball minimizer is nonnegative and hence
        # also the minimizer over the intersection with the orthant.
        return mu0 - radius * (grad / gn)

    mu, val, alpha, converged, iters, gap = _pgd_minimize(
        value_grad, project, lmo, mu0, tol, max_iters
    )
    if not converged:
        raise NumericalError(
            f"oracle did not certify optimality after {iters} iterations "
            f"(gap {gap:.3e})"
        )
    return OracleResult(
        weights=MuWeights(mu, mu0, float(radius)), alpha=alpha,
        objective_value=val, converged=converged, iterations=iters,
        certificate_gap=gap,
    )


@dataclass(frozen=True, eq=False)
class L1Model:
    """L1-budget baseline fit; ``converged`` flags certificate failure."""

    mu: np.ndarray
    alpha: np.ndarray
    objective_value: float
    converged: bool
    iterations: int
    certificate_gap: float


def fit_l1(family, y, lambda0: float, budget: float,
           tol: float = 1e-8, max_iters: int = 2000) -> L1Model:
    """L1-regularized baseline: weights on {mu >= 0, sum(mu) <= budget}.

    Same ridge objective as the L2 route, solved by projected gradient
    with the exact simplex-style projection. Non-convergence within
    ``max_iters`` is flagged on the result, not raised.
    """
    fam = as_family(family)
    y = _as_vector(y, "y")
    if y.shape[0] != fam.m:
        raise ShapeError(f"y has length {y.shape[0]}, sample size is {fam.m}")
    if not lambda0 > 0:
        raise ConfigError("lambda0 must be positive")
    if not budget > 0:
        raise ConfigError("budget must be positive")
    lam = lambda0 * fam.m
    eye = lam * np.eye(fam.m)

    def value_grad(mu):
        alpha = _solve_pd(fam.combined_entries(mu) + eye, y)
        v = quad_forms(alpha, fam)
        return float(y @ alpha), -v, alpha

    def project(x):
        return project_l1_orthant(x, budget)

    def lmo(grad):
        k = int(np.argmin(grad))
        s = np.zeros(fam.p)
        if grad[k] < 0:
            s[k] = budget
        return s

    x0 = np.full(fam.p, budget / fam.p)
    mu, val, alpha, converged, iters, gap = _pgd_minimize(
        value_grad, project, lmo, x0, tol, max_iters
    )
    return L1Model(
        mu=mu, alpha=alpha, objective_value=val,
        converged=converged, iterations=iters, certificate_gap=gap,
    )


def predict_weighted(specs, mu, alpha, X_train, X):
    """Evaluate h(x) = sum_i alpha_i sum_k mu_k K_k(x_i, x).

    ``X`` may be a single point (returns a float) or a matrix of points
    (returns a vector). Rank-one families are evaluated through their
    feature columns; other kinds fall back to per-kernel cross matrices.
    """
    from .kernels import EXPLICIT_MAP_KINDS, cross_gram, _as_matrix  # local import avoids cycle

    if specs is None:
        raise ConfigError("prediction requires evaluable kernel specs")
    X_train = _as_matrix(X_train)
    mu = _as_vector(mu, "mu")
    alpha = _as_vector(alpha, "alpha")
    single = np.asarray(X, dtype=np.float64).ndim == 1
    Xq = np.asarray(X, dtype=np.float64)
    if single:
        Xq = Xq[None, :]
    Xq = _as_matrix(Xq)
    if Xq.shape[1] != X_train.shape[1]:
        raise ShapeError(
            f"query dimension {Xq.shape[1]} differs from training dimension {X_train.shape[1]}"
        )
    if len(specs) != mu.shape[0]:
        raise ShapeError("number of specs differs from number of weights")
    if alpha.shape[0] != X_train.shape[0]:
        raise ShapeError("alpha length differs from number of training rows")

    if all(s.kind in EXPLICIT_MAP_KINDS for s in specs):
        def feature_cols(M):
            cols = [
                M[:, s.feature_index] if s.kind == "rank1_feature" else np.ones(M.shape[0])
                for s in specs
            ]
            return np.column_stack(cols)
        f_train = feature_cols(X_train)
        f_query = feature_cols(Xq)
        out = f_query @ (mu * (f_train.T @ alpha))
    else:
        out = np.zeros(Xq.shape[0])
        for k, spec in enumerate(specs):
            if mu[k] == 0.0:
                continue
            out += mu[k] * (cross_gram(spec, Xq, X_train) @ alpha)
    return float(out[0]) if single else out


def predict(model: MklModel, specs, X_train, X):
    """Prediction of a fitted model at new points; see predict_weighted."""
    return predict_weighted(specs, model.weights.mu, model.alpha, X_train, X)
