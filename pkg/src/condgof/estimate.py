"""Parameter estimators feeding the tests.

Three routes with different downstream calibration:

- mle_gaussian_linear: closed form for the Gaussian linear family (least
  squares slopes, sigma = sqrt(RSS / n), the likelihood normalization).
- mle_numeric: monotone gradient ascent with a backtracking line search for
  any family exposing a score. Scale parameters move on the log scale so
  positivity never needs an explicit constraint. The log-likelihood sequence
  is nondecreasing by construction; exhausting the iteration budget before
  the gradient tolerance is met raises ConvergenceFailureError carrying the
  last iterate.
- min_chisq_estimate: minimizes the Pearson statistic of the cross-
  classified table over theta with a deterministic Nelder-Mead simplex plus
  seeded restarts. The objective is piecewise constant in theta (counts only
  change when a transformed response crosses a bin edge), so the returned
  point is guaranteed not to be worse than the starting point: the best
  evaluation ever seen, including the start itself, wins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceFailureError,
    DegenerateFitError,
    InvalidArgumentError,
    InvalidStartError,
    ModelEvaluationError,
    SingularDesignError,
)
from .models import ConditionalModel, Dataset, GaussianLinearModel, log_likelihood, rosenblatt
from .partition import Partition
from .stats import pearson_stat
from .tabulate import UGrid, cross_classify

_SIGMA_MIN = 1e-12


@dataclass(frozen=True)
class OptimizerConfig:
    max_iterations: int = 500
    tolerance: float = 1e-8
    restarts: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 0:
            raise InvalidArgumentError("max_iterations must be >= 0")
        if self.tolerance <= 0:
            raise InvalidArgumentError("tolerance must be > 0")
        if self.restarts < 0:
            raise InvalidArgumentError("restarts must be >= 0")


def mle_gaussian_linear(data: Dataset) -> np.ndarray:
    """Closed-form MLE (beta0..betak, sigma) for the Gaussian linear family."""
    n, k = data.n, data.k
    if n < k + 2:
        raise InvalidArgumentError(
            f"need at least k + 2 = {k + 2} observations, got {n}"
        )
    design = np.hstack([np.ones((n, 1)), data.x])
    if np.linalg.matrix_rank(design) < k + 1:
        raise SingularDesignError("design matrix is rank deficient")
    beta, _res, _rank, _sv = np.linalg.lstsq(design, data.y, rcond=None)
    resid = data.y - design @ beta
    sigma = float(np.sqrt(resid @ resid / n))
    if sigma < _SIGMA_MIN:
        raise DegenerateFitError(
            f"residual scale {sigma:.3e} collapsed below {_SIGMA_MIN}", beta=beta
        )
    return np.concatenate([beta, [sigma]])


def _to_internal(theta: np.ndarray, log_idx: tuple[int, ...]) -> np.ndarray:
    phi = theta.copy()
    for i in log_idx:
        phi[i] = np.log(theta[i])
    return phi


def _from_internal(phi: np.ndarray, log_idx: tuple[int, ...]) -> np.ndarray:
    theta = phi.copy()
    for i in log_idx:
        theta[i] = np.exp(phi[i])
    return theta


def mle_numeric(
    model: ConditionalModel,
    data: Dataset,
    init,
    config: OptimizerConfig = OptimizerConfig(),
) -> np.ndarray:
    """Maximum likelihood by monotone gradient ascent with backtracking.

    Works on the average log likelihood so the gradient tolerance does not
    scale with n; stops when that gradient's infinity norm (in the internal
    parametrization) drops to config.tolerance. Raises InvalidStartError
    when the likelihood at init is not finite, ConvergenceFailureError when
    the budget runs out or no uphill step exists.
    """
    theta = model.validate_theta(init)
    log_idx = model.log_scale_indices()

    def objective(th: np.ndarray) -> float:
        return log_likelihood(model, th, data) / data.n

    def gradient(th: np.ndarray) -> np.ndarray:
        g = model.score(data.y, data.x, th).mean(axis=0)
        if not np.isfinite(g).all():
            raise ModelEvaluationError("score produced non-finite values")
        # chain rule for log-scale coordinates
        for i in log_idx:
            g[i] = g[i] * th[i]
        return g

    ll = objective(theta)
    if not np.isfinite(ll):
        raise InvalidStartError(f"log likelihood at init is {ll}")

    phi = _to_internal(theta, log_idx)
    step = 1.0
    for _ in range(config.max_iterations):
        g = gradient(theta)
        if np.abs(g).max() <= config.tolerance:
            return theta
        improved = False
        t = step
        while t > 1e-18:
            cand_phi = phi + t * g
            cand = _from_internal(cand_phi, log_idx)
            try:
                cand_ll = objective(cand)
            except ModelEvaluationError:
                cand_ll = -np.inf
            if np.isfinite(cand_ll) and cand_ll > ll:
                phi, theta, ll = cand_phi, cand, cand_ll
                step = min(t * 2.0, 1e6)
                improved = True
                break
            t *= 0.5
        if not improved:
            raise ConvergenceFailureError(
                "no uphill step found; gradient may be inconsistent with the likelihood",
                theta=theta,
            )
    g = gradient(theta)
    if np.abs(g).max() <= config.tolerance:
        return theta
    raise ConvergenceFailureError(
        f"gradient norm {np.abs(g).max():.3e} above tolerance after "
        f"{config.max_iterations} iterations",
        theta=theta,
    )


def _nelder_mead(f, x0: np.ndarray, max_iter: int, xatol: float = 1e-6, fatol: float = 1e-9):
    """Minimal deterministic Nelder-Mead; returns the best vertex seen."""
    n = x0.shape[0]
    alpha, gamma, rho, sigma = 1.0, 2.0, 0.5, 0.5
    simplex = [x0.copy()]
    for i in range(n):
        v = x0.copy()
        v[i] = v[i] + (0.05 if v[i] == 0.0 else 0.05 * abs(v[i]) + 0.01)
        simplex.append(v)
    fvals = [f(v) for v in simplex]
    for _ in range(max_iter):
        order = np.argsort(fvals, kind="stable")
        simplex = [simplex[i] for i in order]
        fvals = [fvals[i] for i in order]
        spread = max(np.abs(simplex[i] - simplex[0]).max() for i in range(1, n + 1))
        if spread <= xatol and abs(fvals[-1] - fvals[0]) <= fatol:
            break
        centroid = np.mean(simplex[:-1], axis=0)
        xr = centroid + alpha * (centroid - simplex[-1])
        fr = f(xr)
        if fr < fvals[0]:
            xe = centroid + gamma * (xr - centroid)
            fe = f(xe)
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
        else:
            xc = centroid + rho * (simplex[-1] - centroid)
            fc = f(xc)
            if fc < fvals[-1]:
                simplex[-1], fvals[-1] = xc, fc
            else:
                for i in range(1, n + 1):
                    simplex[i] = simplex[0] + sigma * (simplex[i] - simplex[0])
                    fvals[i] = f(simplex[i])
    best = int(np.argmin(fvals))
    return simplex[best], fvals[best]


def min_chisq_estimate(
    model: ConditionalModel,
    data: Dataset,
    grid: UGrid,
    partition: Partition,
    init,
    config: OptimizerConfig = OptimizerConfig(),
) -> np.ndarray:
    """Parameter value minimizing the Pearson statistic of the table.

    Derivative-free simplex from init plus config.restarts seeded restarts;
    never returns a point with a larger objective than init.
    """
    theta0 = model.validate_theta(init)
    log_idx = model.log_scale_indices()

    def objective(phi: np.ndarray) -> float:
        theta = _from_internal(phi, log_idx)
        try:
            model.validate_theta(theta)
            v = rosenblatt(model, theta, data)
            table = cross_classify(v, data.x, grid, partition)
            return pearson_stat(table)
        except Exception:
            return np.inf

    phi0 = _to_internal(theta0, log_idx)
    f0 = objective(phi0)
    if not np.isfinite(f0):
        raise InvalidStartError("objective at init is not finite")

    best_phi, best_f = phi0, f0
    iters = max(config.max_iterations, 50 * theta0.shape[0])
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(config.seed)))
    starts = [phi0]
    for _ in range(config.restarts):
        starts.append(phi0 + rng.normal(0.0, 0.1, size=phi0.shape) * (1.0 + np.abs(phi0)))
    for s in starts:
        cand_phi, cand_f = _nelder_mead(objective, s, max_iter=iters)
        if cand_f < best_f:
            best_phi, best_f = cand_phi, cand_f
    return _from_internal(best_phi, log_idx)


def fisher_information_estimate(
    model: ConditionalModel, data: Dataset, theta
) -> np.ndarray:
    """Outer-product information estimate (1/n) sum score score', symmetrized."""
    th = model.validate_theta(theta)
    s = model.score(data.y, data.x, th)
    if not np.isfinite(s).all():
        raise ModelEvaluationError("score produced non-finite values")
    info = s.T @ s / data.n
    return 0.5 * (info + info.T)
