"""Monte Carlo engine for size, power, and df calibration studies.

Reproducibility contract: replication i of an experiment with master seed s
derives all of its randomness from SeedSequence(entropy=s, spawn_key=(i,)),
split into three child streams (data, partition, estimator) and fed to the
Philox counter-based generator. Replications therefore neither share state
nor depend on execution order, and run_replication(cfg, i) is a pure
function of (cfg, i).

Aggregation is order-independent: outcomes are sorted by replication index
before any reduction, so feeding them in any order yields the same result.
Failed replications are recorded with a reason string, never resampled; an
experiment with more than 5% failures raises ExperimentInvalidError.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import (
    CondgofError,
    ExperimentInvalidError,
    InvalidArgumentError,
)
from .estimate import OptimizerConfig, mle_gaussian_linear, mle_numeric, min_chisq_estimate
from .models import ConditionalModel, Dataset, resolve_model, rosenblatt
from .partition import Cell, Partition, gessaman_partition, rtp_partition
from .stats import (
    DfConvention,
    DfPolicy,
    EstimatorKind,
    StatKind,
    TestReport,
    WaldInputs,
    run_test,
)
from .tabulate import balanced_grid, cross_classify

DGP_FAMILIES = ("gaussian_linear", "gaussian_heteroskedastic", "exponential_regression")
COVARIATE_LAWS = ("uniform", "normal")


@dataclass(frozen=True)
class DgpSpec:
    """Data generating process for one experiment."""

    family: str
    true_params: tuple[float, ...]
    covariate_law: str
    n: int
    k: int

    def __post_init__(self):
        if self.family not in DGP_FAMILIES:
            raise InvalidArgumentError(
                f"unknown dgp family {self.family!r}; known: {DGP_FAMILIES}"
            )
        if self.covariate_law not in COVARIATE_LAWS:
            raise InvalidArgumentError(
                f"unknown covariate law {self.covariate_law!r}; known: {COVARIATE_LAWS}"
            )
        if self.n < 1 or self.k < 1:
            raise InvalidArgumentError("n and k must be >= 1")
        object.__setattr__(self, "true_params", tuple(float(v) for v in self.true_params))


@dataclass(frozen=True)
class PartitionRule:
    """How the covariate space is cut: fixed grid, gessaman, or rtp."""

    kind: str  # "grid" | "gessaman" | "rtp"
    T: int = 2
    r: int = 1

    def __post_init__(self):
        if self.kind not in ("grid", "gessaman", "rtp"):
            raise InvalidArgumentError(f"unknown partition rule {self.kind!r}")
        if self.T < 2:
            raise InvalidArgumentError("T must be >= 2")
        if self.r < 1:
            raise InvalidArgumentError("r must be >= 1")

    def cell_count(self, k: int) -> int:
        if self.kind == "rtp":
            return 1 + k * self.r * (self.T - 1)
        return self.T**k


@dataclass(frozen=True)
class SimConfig:
    dgp: DgpSpec
    model: str
    estimator: str  # "known" | "raw_mle" | "min_chisq"
    L: int
    partition: PartitionRule
    stats: tuple[str, ...] = ("pearson",)
    levels: tuple[float, ...] = (0.05,)
    replications: int = 100
    master_seed: int = 0
    theta: tuple[float, ...] | None = None
    df_convention: str = "conditional"

    def __post_init__(self):
        if self.estimator not in ("known", "raw_mle", "min_chisq"):
            raise InvalidArgumentError(f"unknown estimator {self.estimator!r}")
        if self.L < 1:
            raise InvalidArgumentError("L must be >= 1")
        if self.replications < 1:
            raise InvalidArgumentError("replications must be >= 1")
        if not self.stats:
            raise InvalidArgumentError("at least one statistic is required")
        for s in self.stats:
            if s not in ("pearson", "lr", "lm", "neyman", "wald"):
                raise InvalidArgumentError(f"unknown statistic {s!r}")
        for lv in self.levels:
            if not 0.0 < lv < 1.0:
                raise InvalidArgumentError(f"levels must lie in (0, 1), got {lv}")
        if self.df_convention not in ("conditional", "unconditional"):
            raise InvalidArgumentError(
                f"unknown df convention {self.df_convention!r}"
            )
        if self.estimator == "known" and self.theta is None:
            raise InvalidArgumentError("estimator 'known' requires theta")
        object.__setattr__(self, "stats", tuple(self.stats))
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        if self.theta is not None:
            object.__setattr__(self, "theta", tuple(float(v) for v in self.theta))


def law_grid_partition(law: str, k: int, T: int) -> Partition:
    """Fixed product partition with T equal-probability slices per axis.

    Edges come from the covariate law's quantiles, not from data, so the
    cells are deterministic and every cell has population mass T^-k > 0.
    """
    if law == "uniform":
        inner = [-1.0 + 2.0 * i / T for i in range(1, T)]
    elif law == "normal":
        inner = [backend.std_normal_quantile(i / T) for i in range(1, T)]
    else:
        raise InvalidArgumentError(f"unknown covariate law {law!r}")
    edges = [-np.inf] + inner + [np.inf]
    cells: list[Cell] = []
    index = [0] * k
    while True:
        lo = np.array([edges[index[d]] for d in range(k)])
        up = np.array([edges[index[d] + 1] for d in range(k)])
        cells.append(Cell(lo, up))
        d = k - 1
        while d >= 0:
            index[d] += 1
            if index[d] < T:
                break
            index[d] = 0
            d -= 1
        if d < 0:
            break
    return Partition(cells, origin="fixed", T=T)


def simulate_dataset(dgp: DgpSpec, rng: np.random.Generator) -> Dataset:
    """Draw one dataset from the data generating process."""
    n, k = dgp.n, dgp.k
    if dgp.covariate_law == "uniform":
        x = rng.uniform(-1.0, 1.0, size=(n, k))
    else:
        x = rng.standard_normal((n, k))
    theta = np.asarray(dgp.true_params)
    design = np.hstack([np.ones((n, 1)), x])
    if dgp.family == "gaussian_linear":
        if theta.shape[0] != k + 2:
            raise InvalidArgumentError("gaussian_linear needs k + 2 parameters")
        mu = design @ theta[:-1]
        y = mu + theta[-1] * rng.standard_normal(n)
    elif dgp.family == "gaussian_heteroskedastic":
        if theta.shape[0] != k + 2:
            raise InvalidArgumentError("gaussian_heteroskedastic needs k + 2 parameters")
        mu = design @ theta[:-1]
        scale = theta[-1] * (1.0 + np.abs(x[:, 0]))
        y = mu + scale * rng.standard_normal(n)
    else:  # exponential_regression
        if theta.shape[0] != k + 1:
            raise InvalidArgumentError("exponential_regression needs k + 1 parameters")
        rate = np.exp(design @ theta)
        y = rng.exponential(1.0, size=n) / rate
    return Dataset(y=y, x=x)


@dataclass
class RepOutcome:
    """Everything one replication produced, or its failure reason."""

    rep_index: int
    reports: dict[str, TestReport] = field(default_factory=dict)
    error: str | None = None


def _rep_streams(master_seed: int, rep_index: int):
    root = np.random.SeedSequence(entropy=master_seed, spawn_key=(rep_index,))
    data_ss, part_ss, est_ss = root.spawn(3)
    data_rng = np.random.Generator(np.random.Philox(data_ss))
    part_seed = int(part_ss.generate_state(1, dtype=np.uint64)[0])
    est_seed = int(est_ss.generate_state(1, dtype=np.uint64)[0])
    return data_rng, part_seed, est_seed


def _build_partition(cfg: SimConfig, x: np.ndarray, part_seed: int) -> Partition:
    rule = cfg.partition
    if rule.kind == "grid":
        return law_grid_partition(cfg.dgp.covariate_law, cfg.dgp.k, rule.T)
    if rule.kind == "gessaman":
        return gessaman_partition(x, rule.T)
    part, _tree = rtp_partition(x, rule.T, rule.r, part_seed)
    return part


def _estimate_theta(cfg: SimConfig, model: ConditionalModel, data: Dataset):
    """Known theta or the raw-data MLE; min_chisq refines the MLE later."""
    if cfg.estimator == "known":
        return np.asarray(cfg.theta), 0
    if model.name == "gaussian_linear":
        theta_raw = mle_gaussian_linear(data)
    else:
        theta_raw = mle_numeric(
            model,
            data,
            np.zeros(model.param_dim),
            OptimizerConfig(max_iterations=500, tolerance=1e-6),
        )
    return theta_raw, model.param_dim


def _resolve_stat(name: str, estimator: str) -> StatKind:
    if name == "wald":
        return StatKind.WALD_RAW_MLE if estimator == "raw_mle" else StatKind.WALD_NULL
    return StatKind(name)


def run_replication(cfg: SimConfig, rep_index: int) -> RepOutcome:
    """One full pipeline pass; pure function of (cfg, rep_index)."""
    outcome = RepOutcome(rep_index=rep_index)
    try:
        data_rng, part_seed, est_seed = _rep_streams(cfg.master_seed, rep_index)
        data = simulate_dataset(cfg.dgp, data_rng)
        model = resolve_model(cfg.model, cfg.dgp.k)
        partition = _build_partition(cfg, data.x, part_seed)
        grid = balanced_grid(cfg.L)

        theta, p_adjust = _estimate_theta(cfg, model, data)
        if cfg.estimator == "min_chisq":
            theta = min_chisq_estimate(
                model,
                data,
                grid,
                partition,
                theta,
                OptimizerConfig(restarts=2, seed=est_seed, max_iterations=200),
            )

        v = rosenblatt(model, theta, data)
        table = cross_classify(v, data.x, grid, partition)

        estimator_kind = EstimatorKind(cfg.estimator)
        policy = DfPolicy(DfConvention(cfg.df_convention), p_adjust=p_adjust)
        wald_in = WaldInputs(
            model=model, theta_hat=theta, data=data, grid=grid, partition=partition
        )
        for name in cfg.stats:
            kind = _resolve_stat(name, cfg.estimator)
            outcome.reports[name] = run_test(
                kind,
                table,
                policy,
                estimator=estimator_kind,
                wald_inputs=wald_in if kind is StatKind.WALD_RAW_MLE else None,
            )
    except CondgofError as exc:
        outcome.reports = {}
        outcome.error = f"{type(exc).__name__}: {exc}"
    return outcome


@dataclass
class StatLevelResult:
    stat: str
    level: float
    rejections: int
    rate: float
    mc_se: float


@dataclass
class StatSummary:
    stat: str
    mean: float
    variance: float
    ks_uniform: float | None
    mean_df: float | None


@dataclass
class SimResult:
    config: SimConfig
    replications: int
    failed: int
    results: list[StatLevelResult]
    summaries: list[StatSummary]
    failures: list[tuple[int, str]]

    def rate(self, stat: str, level: float) -> float:
        for row in self.results:
            if row.stat == stat and row.level == level:
                return row.rate
        raise InvalidArgumentError(f"no result for stat={stat!r} level={level}")

    def summary(self, stat: str) -> StatSummary:
        for s in self.summaries:
            if s.stat == stat:
                return s
        raise InvalidArgumentError(f"no summary for stat={stat!r}")

    def to_dict(self) -> dict:
        return {
            "config": config_to_dict(self.config),
            "replications": self.replications,
            "failed": self.failed,
            "results": [
                {
                    "stat": r.stat,
                    "level": r.level,
                    "rejections": r.rejections,
                    "rate": r.rate,
                    "mc_se": r.mc_se,
                }
                for r in self.results
            ],
            "summaries": [
                {
                    "stat": s.stat,
                    "mean": s.mean,
                    "variance": s.variance,
                    "ks_uniform": s.ks_uniform,
                    "mean_df": s.mean_df,
                }
                for s in self.summaries
            ],
            "failures": [{"rep_index": i, "reason": msg} for i, msg in self.failures],
        }


def ks_uniform_distance(values: np.ndarray) -> float:
    """One-sample Kolmogorov-Smirnov distance to the uniform law on [0, 1]."""
    u = np.sort(np.asarray(values, dtype=np.float64))
    n = u.shape[0]
    if n == 0:
        raise InvalidArgumentError("need at least one value")
    hi = np.arange(1, n + 1) / n - u
    lo = u - np.arange(0, n) / n
    return float(max(hi.max(), lo.max()))


def aggregate(cfg: SimConfig, outcomes: list[RepOutcome]) -> SimResult:
    """Reduce replication outcomes; invariant to the order they arrive in."""
    ordered = sorted(outcomes, key=lambda o: o.rep_index)
    failures = [(o.rep_index, o.error) for o in ordered if o.error is not None]
    good = [o for o in ordered if o.error is None]
    R = len(ordered)
    if R == 0:
        raise InvalidArgumentError("no outcomes to aggregate")
    if len(failures) > 0.05 * R:
        raise ExperimentInvalidError(
            f"{len(failures)} of {R} replications failed (> 5%)"
        )
    n_eff = len(good)
    results: list[StatLevelResult] = []
    summaries: list[StatSummary] = []
    for name in cfg.stats:
        reports = [o.reports[name] for o in good]
        values = np.array([rep.value for rep in reports])
        point_ps = [rep.p_value for rep in reports if rep.p_value is not None]
        ks = None
        if len(point_ps) == n_eff and n_eff > 0:
            ks = ks_uniform_distance(np.array(point_ps))
        dfs = [rep.df for rep in reports if rep.df is not None]
        mean_df = float(np.mean(dfs)) if len(dfs) == n_eff and n_eff > 0 else None
        summaries.append(
            StatSummary(
                stat=name,
                mean=float(values.mean()) if n_eff else float("nan"),
                variance=float(values.var(ddof=1)) if n_eff > 1 else float("nan"),
                ks_uniform=ks,
                mean_df=mean_df,
            )
        )
        for level in cfg.levels:
            rej = sum(1 for rep in reports if rep.rejects(level))
            rate = rej / n_eff if n_eff else float("nan")
            se = math.sqrt(rate * (1.0 - rate) / n_eff) if n_eff else float("nan")
            results.append(
                StatLevelResult(
                    stat=name, level=level, rejections=rej, rate=rate, mc_se=se
                )
            )
    return SimResult(
        config=cfg,
        replications=R,
        failed=len(failures),
        results=results,
        summaries=summaries,
        failures=failures,
    )


def run_experiment(cfg: SimConfig) -> SimResult:
    """Run all replications sequentially and aggregate."""
    outcomes = [run_replication(cfg, i) for i in range(cfg.replications)]
    return aggregate(cfg, outcomes)


def calibrate_df(cfg: SimConfig) -> dict:
    """Null-distribution diagnostic: statistic means against both df books.

    Runs the experiment and reports, per statistic, the Monte Carlo mean and
    its standard error next to the conditional and unconditional df under
    the configured adjustment, plus the mean reported point df when the
    statistic carries one (the raw-MLE Wald's covariance rank).
    """
    res = run_experiment(cfg)
    model = resolve_model(cfg.model, cfg.dgp.k)
    p_adjust = 0 if cfg.estimator == "known" else model.param_dim
    J = cfg.partition.cell_count(cfg.dgp.k)
    L = cfg.L
    out = {}
    for name in cfg.stats:
        summ = res.summary(name)
        n_eff = res.replications - res.failed
        se = math.sqrt(summ.variance / n_eff) if n_eff > 1 else float("nan")
        out[name] = {
            "mean": summ.mean,
            "se": se,
            "df_conditional": J * (L - 1) - p_adjust,
            "df_unconditional": J * L - 1 - p_adjust,
            "mean_reported_df": summ.mean_df,
            "replications": n_eff,
        }
    return out


def config_to_dict(cfg: SimConfig) -> dict:
    return {
        "dgp": {
            "family": cfg.dgp.family,
            "true_params": list(cfg.dgp.true_params),
            "covariate_law": cfg.dgp.covariate_law,
            "n": cfg.dgp.n,
            "k": cfg.dgp.k,
        },
        "model": cfg.model,
        "estimator": cfg.estimator,
        "L": cfg.L,
        "partition": {
            "kind": cfg.partition.kind,
            "T": cfg.partition.T,
            "r": cfg.partition.r,
        },
        "stats": list(cfg.stats),
        "levels": list(cfg.levels),
        "replications": cfg.replications,
        "master_seed": cfg.master_seed,
        "theta": None if cfg.theta is None else list(cfg.theta),
        "df_convention": cfg.df_convention,
    }


def config_from_dict(doc: dict) -> SimConfig:
    """Parse a simulation config document, naming every offending field."""
    problems = []
    if not isinstance(doc, dict):
        raise InvalidArgumentError("config document must be a JSON object")
    dgp_doc = doc.get("dgp")
    if not isinstance(dgp_doc, dict):
        problems.append("dgp")
        dgp = None
    else:
        try:
            dgp = DgpSpec(
                family=dgp_doc.get("family", ""),
                true_params=tuple(dgp_doc.get("true_params", ())),
                covariate_law=dgp_doc.get("covariate_law", ""),
                n=int(dgp_doc.get("n", 0)),
                k=int(dgp_doc.get("k", 0)),
            )
        except (CondgofError, TypeError, ValueError) as exc:
            problems.append(f"dgp ({exc})")
            dgp = None
    part_doc = doc.get("partition", {})
    partition = None
    if not isinstance(part_doc, dict):
        problems.append("partition")
    else:
        try:
            partition = PartitionRule(
                kind=part_doc.get("kind", ""),
                T=int(part_doc.get("T", 2)),
                r=int(part_doc.get("r", 1)),
            )
        except (CondgofError, TypeError, ValueError) as exc:
            problems.append(f"partition ({exc})")
    cfg = None
    if dgp is not None and partition is not None:
        try:
            theta = doc.get("theta")
            cfg = SimConfig(
                dgp=dgp,
                model=doc.get("model", ""),
                estimator=doc.get("estimator", ""),
                L=int(doc.get("L", 0)),
                partition=partition,
                stats=tuple(doc.get("stats", ("pearson",))),
                levels=tuple(doc.get("levels", (0.05,))),
                replications=int(doc.get("replications", 0)),
                master_seed=int(doc.get("master_seed", 0)),
                theta=None if theta is None else tuple(theta),
                df_convention=doc.get("df_convention", "conditional"),
            )
        except (CondgofError, TypeError, ValueError) as exc:
            problems.append(f"config ({exc})")
    if problems:
        raise InvalidArgumentError(
            "invalid simulation config fields: " + "; ".join(problems)
        )
    return cfg
