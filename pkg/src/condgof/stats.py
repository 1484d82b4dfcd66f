"""Chi-square statistics on the contingency table and their p-values.

Expected counts under the null are E_{lj} = N_j * w_l: column totals spread
over response bins proportionally to the bin widths, since the transformed
response is uniform and independent of the covariates exactly when the
conditional model is correct. On those expectations the module computes the
classical trinity (Pearson, likelihood ratio, score/Lagrange multiplier,
the latter coinciding with Pearson here), the Neyman version, and two Wald
quadratic forms.

Degrees of freedom follow a policy: the conditional convention J*(L-1),
motivated by the columns being independent multinomials given the covariate
cell counts, or the unconditional JL - 1. Estimating p parameters from the
raw data leaves Pearson and the likelihood ratio with a distribution pinned
only between chi-square laws with df and df - p degrees of freedom, so for
that estimator run_test reports a df interval and a p-value interval; the
Wald form built at the raw-data MLE repairs its own covariance and gets a
point df equal to the numerical rank of that covariance.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import (
    CovarianceConstructionError,
    EmptyCellError,
    InvalidArgumentError,
    InvalidDfError,
    SingularInformationError,
)
from .models import ConditionalModel, Dataset, rosenblatt
from .partition import Partition
from .tabulate import ContingencyTable, UGrid, _bin0, require_positive_columns

_RANK_RTOL = 1e-10


class StatKind(enum.Enum):
    PEARSON = "pearson"
    LR = "lr"
    LM = "lm"
    NEYMAN = "neyman"
    WALD_NULL = "wald_null"
    WALD_RAW_MLE = "wald_raw_mle"


class EstimatorKind(enum.Enum):
    KNOWN = "known"
    RAW_MLE = "raw_mle"
    MIN_CHISQ = "min_chisq"


class DfConvention(enum.Enum):
    CONDITIONAL = "conditional"  # J * (L - 1) - p_adjust
    UNCONDITIONAL = "unconditional"  # J * L - 1 - p_adjust


@dataclass(frozen=True)
class DfPolicy:
    """Degrees-of-freedom convention plus the parameter-count adjustment."""

    convention: DfConvention = DfConvention.CONDITIONAL
    p_adjust: int = 0

    def __post_init__(self):
        if self.p_adjust < 0:
            raise InvalidArgumentError("p_adjust must be >= 0")

    def base_df(self, L: int, J: int) -> int:
        if self.convention is DfConvention.CONDITIONAL:
            return J * (L - 1)
        return J * L - 1

    def df(self, L: int, J: int) -> int:
        return self.base_df(L, J) - self.p_adjust


def chisq_sf(x: float, df: int) -> float:
    """Chi-square upper tail probability; see backend.chisq_sf."""
    return backend.chisq_sf(x, df)


def _expected(table: ContingencyTable) -> np.ndarray:
    require_positive_columns(table)
    return np.outer(table.widths, table.column_counts.astype(np.float64))


def pearson_stat(table: ContingencyTable) -> float:
    """Sum of (O - E)^2 / E."""
    E = _expected(table)
    diff = table.O - E
    return float((diff * diff / E).sum())


def lm_stat(table: ContingencyTable) -> float:
    """Score statistic; for this testing problem it equals Pearson exactly."""
    return pearson_stat(table)


def lr_stat(table: ContingencyTable) -> float:
    """Likelihood ratio 2 * sum O * log(O / E), with 0 log 0 = 0."""
    E = _expected(table)
    O = table.O.astype(np.float64)
    pos = O > 0
    total = 2.0 * float((O[pos] * np.log(O[pos] / E[pos])).sum())
    return total


def has_zero_cells(table: ContingencyTable) -> bool:
    return bool((table.O == 0).any())


def neyman_stat(table: ContingencyTable) -> float:
    """Sum of (O - E)^2 / O; every observed count must be positive."""
    if has_zero_cells(table):
        raise EmptyCellError("neyman statistic requires every observed count > 0")
    E = _expected(table)
    O = table.O.astype(np.float64)
    diff = O - E
    return float((diff * diff / O).sum())


def _pinv_psd(M: np.ndarray, neg_tol: float = 1e-8):
    """Spectral pseudoinverse of a symmetric PSD matrix.

    Eigenvalues above rtol * max are inverted, the rest dropped. Returns
    (pinv, rank). Eigenvalues below -neg_tol raise, since the matrix is
    then not a covariance.
    """
    M = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(M)
    wmax = float(w.max(initial=0.0))
    if wmax <= 0.0:
        return np.zeros_like(M), 0
    if float(w.min()) < -neg_tol:
        raise CovarianceConstructionError(
            f"covariance has eigenvalue {float(w.min()):.3e} below -{neg_tol:g}"
        )
    keep = w > _RANK_RTOL * wmax
    rank = int(keep.sum())
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / w[keep]
    return (V * inv) @ V.T, rank


def _discrepancy(table: ContingencyTable) -> tuple[np.ndarray, np.ndarray]:
    """(d, p0) with d = vec(O/n) - p0 and p0_{lj} = w_l * qhat_j (row-major)."""
    p0 = np.outer(table.widths, table.q_hat).ravel()
    d = table.O.ravel() / table.n - p0
    return d, p0


def wald_null_quadform(table: ContingencyTable) -> float:
    """n * d' S+ d with S = diag(p0) - p0 p0'; equals Pearson algebraically."""
    value, _rank, _warn = _wald_null_detail(table)
    return value


def _wald_null_detail(table: ContingencyTable):
    require_positive_columns(table)
    d, p0 = _discrepancy(table)
    S = np.diag(p0) - np.outer(p0, p0)
    pinv, rank = _pinv_psd(S)
    warn = []
    structural = table.L * table.J - 1
    if rank < structural:
        warn.append(
            f"null covariance rank {rank} below the structural {structural}"
        )
    value = float(table.n * d @ pinv @ d)
    return value, rank, warn


def _margin_conditional_base(table: ContingencyTable) -> np.ndarray:
    """Covariance of sqrt(n) d given the column margins, block per column.

    Block j is qhat_j * (diag(w) - w w'). Using this rather than the plain
    multinomial diag(p0) - p0 p0' matters only for the rank readout: the
    discrepancy d satisfies one exact linear constraint per column because
    the column margins are estimated, and for equal-width grids the two
    matrices induce the same quadratic form on that constraint subspace.
    """
    L, J = table.L, table.J
    w = table.widths
    block = np.diag(w) - np.outer(w, w)
    S = np.zeros((L * J, L * J))
    for j in range(J):
        idx = np.arange(L) * J + j
        S[np.ix_(idx, idx)] = table.q_hat[j] * block
    return S


def wald_raw_mle(
    table: ContingencyTable,
    model: ConditionalModel,
    theta_hat: np.ndarray,
    data: Dataset,
    grid: UGrid,
    partition: Partition,
    adjusted: bool = True,
) -> tuple[float, int]:
    """Wald statistic at the raw-data MLE with its score-adjusted covariance.

    The covariance of the cell discrepancies shrinks when cells move with
    the estimated parameter: Sigma = S_base - C I^{-1} C', where C holds
    per-cell score means and I the estimated information. Returns the
    statistic and the numerical rank of Sigma, which is the degrees of
    freedom of its limiting chi-square law and does not grow back with the
    number of estimated parameters. adjusted=False drops the correction (the
    known-parameter case) and reduces to the null quadratic form.

    When the model supplies closed forms for both ingredients (expected
    information and per-bin conditional score means), those replace the raw
    moment estimates. The empirical versions carry enough noise at moderate
    n to visibly inflate the statistic: the subtracted term C I^{-1} C' is
    quadratic in C, so estimation error in C biases it upward, and the
    outer-product information adds fourth-moment noise on top.
    """
    require_positive_columns(table)
    theta = model.validate_theta(theta_hat)
    d, _p0 = _discrepancy(table)
    S = _margin_conditional_base(table)
    L, J = table.L, table.J

    if adjusted:
        n = data.n
        j0 = partition.locate0(data.x)
        info = model.expected_information(data.x, theta)
        ebs = model.bin_score_means(data.x, grid.thresholds, theta)
        if info is not None and ebs is not None:
            if not (np.isfinite(info).all() and np.isfinite(ebs).all()):
                raise SingularInformationError(
                    "model moment evaluation produced non-finite values"
                )
            percell = np.zeros((J, L, model.param_dim))
            np.add.at(percell, j0, ebs)
            C = percell.transpose(1, 0, 2).reshape(L * J, model.param_dim) / n
        else:
            scores = model.score(data.y, data.x, theta)
            if not np.isfinite(scores).all():
                raise SingularInformationError(
                    "score evaluation produced non-finite values"
                )
            info = scores.T @ scores / n
            v = rosenblatt(model, theta, data)
            l0 = _bin0(grid, v)
            cell = l0 * J + j0
            C = np.zeros((L * J, model.param_dim))
            np.add.at(C, cell, scores)
            C /= n
        info = 0.5 * (info + info.T)
        w_info = np.linalg.eigvalsh(info)
        if w_info.max() <= 0.0 or w_info.min() <= _RANK_RTOL * w_info.max():
            raise SingularInformationError(
                "estimated information matrix is numerically singular"
            )
        # The population version of C has zero column sums (scores have
        # conditional mean zero given the covariates), but the sample version
        # does not, and that residue lands outside the support of S where it
        # produces spurious negative eigenvalues of order 1/n. Reallocate each
        # column's score sum across response bins by the null weights so the
        # correction shares the exact zero-sum structure of d and S. For the
        # closed-form C the sums already telescope to zero and this is a no-op.
        C3 = C.reshape(L, J, model.param_dim)
        C3 -= table.widths[:, None, None] * C3.sum(axis=0)[None, :, :]
        S = S - C @ np.linalg.solve(info, C.T)

    pinv, rank = _pinv_psd(S)
    value = float(table.n * d @ pinv @ d)
    return value, rank


@dataclass
class TestReport:
    """One statistic with its degrees of freedom and p-value (or intervals)."""

    kind: StatKind
    value: float
    estimator: EstimatorKind
    df: int | None = None
    df_interval: tuple[int, int] | None = None
    p_value: float | None = None
    p_interval: tuple[float, float] | None = None
    warnings: list[str] = field(default_factory=list)

    def rejects(self, level: float) -> bool:
        """Decision at a level; interval-valued p rejects only when p_hi < level."""
        if self.p_value is not None:
            return self.p_value < level
        return self.p_interval[1] < level


@dataclass
class WaldInputs:
    """Extra inputs wald_raw_mle needs beyond the table."""

    model: ConditionalModel
    theta_hat: np.ndarray
    data: Dataset
    grid: UGrid
    partition: Partition


def _point_report(kind, value, estimator, df, warnings) -> TestReport:
    if df < 1:
        if value <= 1e-12:
            # degenerate but well-defined case: statistic is identically 0
            return TestReport(
                kind=kind,
                value=value,
                estimator=estimator,
                df=df,
                p_value=1.0,
                warnings=warnings + ["degenerate grid: 0 degrees of freedom, p forced to 1"],
            )
        raise InvalidDfError(f"df must be >= 1 for a p-value, got {df}")
    return TestReport(
        kind=kind,
        value=value,
        estimator=estimator,
        df=df,
        p_value=chisq_sf(value, df),
        warnings=warnings,
    )


def run_test(
    kind: StatKind,
    table: ContingencyTable,
    df_policy: DfPolicy,
    estimator: EstimatorKind = EstimatorKind.KNOWN,
    wald_inputs: WaldInputs | None = None,
) -> TestReport:
    """Compute one statistic and calibrate it per the df policy.

    Estimator semantics: known and min_chisq give a point df equal to the
    policy df (with the policy's p_adjust); raw_mle gives pearson/lr a df
    interval [base - p_adjust, base] with the matching p-value interval,
    and wald_raw_mle a point df equal to its covariance rank. Other kinds
    under raw_mle fall back to the point policy df with a warning.
    """
    if not isinstance(kind, StatKind):
        raise InvalidArgumentError(f"kind must be a StatKind, got {kind!r}")
    if not isinstance(estimator, EstimatorKind):
        raise InvalidArgumentError(f"estimator must be an EstimatorKind, got {estimator!r}")
    L, J = table.L, table.J
    warnings: list[str] = []

    if kind is StatKind.WALD_RAW_MLE:
        if estimator is not EstimatorKind.RAW_MLE:
            raise InvalidArgumentError("wald_raw_mle requires the raw_mle estimator")
        if wald_inputs is None:
            raise InvalidArgumentError("wald_raw_mle requires wald_inputs")
        value, rank = wald_raw_mle(
            table,
            wald_inputs.model,
            wald_inputs.theta_hat,
            wald_inputs.data,
            wald_inputs.grid,
            wald_inputs.partition,
        )
        return _point_report(kind, value, estimator, rank, warnings)

    if kind is StatKind.PEARSON:
        value = pearson_stat(table)
    elif kind is StatKind.LM:
        value = lm_stat(table)
    elif kind is StatKind.LR:
        value = lr_stat(table)
        if has_zero_cells(table):
            warnings.append("zero observed cells contribute 0 to the likelihood ratio")
    elif kind is StatKind.NEYMAN:
        value = neyman_stat(table)
    elif kind is StatKind.WALD_NULL:
        value, rank, wwarn = _wald_null_detail(table)
        warnings.extend(wwarn)
    else:  # pragma: no cover - enum is exhaustive
        raise InvalidArgumentError(f"unhandled statistic kind {kind}")

    base = df_policy.base_df(L, J)
    if estimator is EstimatorKind.RAW_MLE and kind in (StatKind.PEARSON, StatKind.LR):
        df_lo = base - df_policy.p_adjust
        df_hi = base
        if value <= 1e-12 and df_hi < 1:
            return _point_report(kind, value, estimator, df_hi, warnings)
        if df_lo < 1:
            raise InvalidDfError(
                f"lower df endpoint must be >= 1, got {df_lo} (base {base}, "
                f"p_adjust {df_policy.p_adjust})"
            )
        p_lo = chisq_sf(value, df_lo)
        p_hi = chisq_sf(value, df_hi)
        return TestReport(
            kind=kind,
            value=value,
            estimator=estimator,
            df_interval=(df_lo, df_hi),
            p_interval=(p_lo, p_hi),
            warnings=warnings,
        )
    if estimator is EstimatorKind.RAW_MLE:
        warnings.append(
            "raw_mle calibration bracket applies; point df uses the adjusted policy value"
        )
    return _point_report(kind, value, estimator, df_policy.df(L, J), warnings)
