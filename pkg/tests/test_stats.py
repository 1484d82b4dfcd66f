"""Table statistics, their algebraic identities, and p-value calibration."""

import math

import mpmath as mp
import numpy as np
import pytest

from condgof import (
    ContingencyTable,
    CovarianceConstructionError,
    Dataset,
    DfConvention,
    DfPolicy,
    EmptyCellError,
    EstimatorKind,
    GaussianLinearModel,
    InvalidArgumentError,
    InvalidDfError,
    SingularInformationError,
    StatKind,
    UGrid,
    WaldInputs,
    balanced_grid,
    chisq_sf,
    cross_classify,
    gessaman_partition,
    has_zero_cells,
    lm_stat,
    lr_stat,
    mle_gaussian_linear,
    neyman_stat,
    pearson_stat,
    rosenblatt,
    rtp_partition,
    run_test,
    wald_null_quadform,
)
from condgof import TestReport as Report
from condgof.stats import wald_raw_mle


def _table(O, widths=None):
    O = np.asarray(O, dtype=np.int64)
    L = O.shape[0]
    if widths is None:
        widths = np.full(L, 1.0 / L)
    col = O.sum(axis=0)
    n = int(O.sum())
    return ContingencyTable(O=O, column_counts=col, n=n, widths=widths, q_hat=col / n)


def _random_table(rng, L, J, lo=3, hi=40):
    col = rng.integers(lo, hi, J)
    O = np.stack([rng.multinomial(c, np.full(L, 1.0 / L)) for c in col], axis=1)
    return _table(O)


TAB_2X2 = _table([[6, 4], [4, 6]])


class TestPointStatistics:
    def test_pearson_hand_value(self):
        # E = 5 everywhere, four deviations of 1: 4 / 5
        assert pearson_stat(TAB_2X2) == pytest.approx(0.8, abs=1e-15)

    def test_lr_hand_value(self):
        # high precision oracle: 2 sum O log(O/E)
        mp.mp.dps = 40
        oracle = 2 * (
            2 * 6 * mp.log(mp.mpf(6) / 5) + 2 * 4 * mp.log(mp.mpf(4) / 5)
        )
        assert float(oracle) == pytest.approx(0.8054205420275552, abs=1e-15)
        assert lr_stat(TAB_2X2) == pytest.approx(float(oracle), abs=1e-13)

    def test_neyman_hand_value(self):
        # 2/6 + 2/4 = 5/6
        assert neyman_stat(TAB_2X2) == pytest.approx(5.0 / 6.0, abs=1e-15)

    def test_lr_zero_cells_contribute_nothing(self):
        t = _table([[5, 0], [5, 8]])
        O = t.O.astype(float)
        E = np.outer(t.widths, t.column_counts)
        manual = 2 * sum(
            O[i, j] * math.log(O[i, j] / E[i, j])
            for i in range(2)
            for j in range(2)
            if O[i, j] > 0
        )
        assert lr_stat(t) == pytest.approx(manual, rel=1e-14)
        assert has_zero_cells(t)

    def test_neyman_needs_positive_counts(self):
        with pytest.raises(EmptyCellError):
            neyman_stat(_table([[5, 0], [5, 8]]))

    def test_empty_column_rejected(self):
        t = _table([[3, 0], [2, 0]])
        for f in (pearson_stat, lr_stat, wald_null_quadform):
            with pytest.raises(EmptyCellError):
                f(t)


class TestIdentities:
    def test_pearson_equals_lm(self):
        rng = np.random.Generator(np.random.Philox(101))
        for _ in range(200):
            t = _random_table(rng, int(rng.integers(2, 6)), int(rng.integers(2, 7)))
            assert abs(pearson_stat(t) - lm_stat(t)) <= 1e-12

    def test_pearson_equals_wald_null(self):
        rng = np.random.Generator(np.random.Philox(202))
        for _ in range(200):
            t = _random_table(rng, int(rng.integers(2, 6)), int(rng.integers(2, 7)))
            x2 = pearson_stat(t)
            assert abs(x2 - wald_null_quadform(t)) <= 1e-8 * max(1.0, x2)

    def test_lr_second_order_match(self):
        # with all cells close to expected the two statistics agree to O(dev)
        rng = np.random.Generator(np.random.Philox(303))
        checked = 0
        for _ in range(300):
            t = _random_table(rng, 3, 4, lo=5000, hi=8000)
            E = np.outer(t.widths, t.column_counts)
            rel = np.abs(t.O - E) / E
            if rel.max() > 0.05:
                continue
            checked += 1
            x2 = pearson_stat(t)
            assert abs(lr_stat(t) - x2) <= 0.02 * x2 + 1e-9
        assert checked > 100

    def test_unadjusted_wald_matches_null_form(self):
        rng = np.random.Generator(np.random.Philox(404))
        n = 500
        x = rng.uniform(-1, 1, (n, 2))
        y = 0.3 + x @ [1.0, -0.5] + rng.standard_normal(n)
        data = Dataset(y=y, x=x)
        model = GaussianLinearModel(k=2)
        theta = mle_gaussian_linear(data)
        grid = balanced_grid(4)
        part, _ = rtp_partition(x, 2, 2, seed=11)
        table = cross_classify(rosenblatt(model, theta, data), x, grid, part)
        w0, rank0 = wald_raw_mle(
            table, model, theta, data, grid, part, adjusted=False
        )
        assert abs(w0 - wald_null_quadform(table)) <= 1e-10 * max(1.0, w0)
        assert rank0 == part.J * (grid.L - 1)


class TestChisqSfReexport:
    def test_matches_backend_values(self):
        assert chisq_sf(3.841458820694124, 1) == pytest.approx(0.05, abs=1e-10)
        assert chisq_sf(5.0, 2) == pytest.approx(math.exp(-2.5), rel=1e-12)


class TestDfPolicy:
    def test_conventions(self):
        cond = DfPolicy(DfConvention.CONDITIONAL, p_adjust=4)
        assert cond.base_df(4, 5) == 15
        assert cond.df(4, 5) == 11
        uncond = DfPolicy(DfConvention.UNCONDITIONAL, p_adjust=0)
        assert uncond.df(4, 5) == 19

    def test_negative_adjust_rejected(self):
        with pytest.raises(InvalidArgumentError):
            DfPolicy(p_adjust=-1)


class TestRunTest:
    def _big_table(self, seed=55):
        rng = np.random.Generator(np.random.Philox(seed))
        return _random_table(rng, 4, 5, lo=30, hi=60)

    def test_known_theta_point_df(self):
        t = self._big_table()
        rep = run_test(StatKind.PEARSON, t, DfPolicy(p_adjust=0))
        assert rep.df == 15 and rep.df_interval is None
        assert rep.p_value == pytest.approx(chisq_sf(rep.value, 15), abs=1e-15)
        assert rep.estimator is EstimatorKind.KNOWN

    def test_raw_mle_bracket(self):
        t = self._big_table()
        rep = run_test(
            StatKind.PEARSON,
            t,
            DfPolicy(p_adjust=4),
            estimator=EstimatorKind.RAW_MLE,
        )
        assert rep.df is None
        assert rep.df_interval == (11, 15)
        p_lo, p_hi = rep.p_interval
        assert p_lo == pytest.approx(chisq_sf(rep.value, 11), abs=1e-15)
        assert p_hi == pytest.approx(chisq_sf(rep.value, 15), abs=1e-15)
        assert p_lo <= p_hi

    def test_min_chisq_point_df(self):
        t = self._big_table()
        rep = run_test(
            StatKind.LR,
            t,
            DfPolicy(p_adjust=4),
            estimator=EstimatorKind.MIN_CHISQ,
        )
        assert rep.df == 11 and rep.p_interval is None

    def test_interval_rejection_rule(self):
        r = Report(
            kind=StatKind.PEARSON,
            value=20.0,
            estimator=EstimatorKind.RAW_MLE,
            df_interval=(11, 15),
            p_interval=(0.01, 0.07),
        )
        assert not r.rejects(0.05)
        r2 = Report(
            kind=StatKind.PEARSON,
            value=30.0,
            estimator=EstimatorKind.RAW_MLE,
            df_interval=(11, 15),
            p_interval=(0.01, 0.04),
        )
        assert r2.rejects(0.05)
        r3 = Report(
            kind=StatKind.PEARSON,
            value=5.0,
            estimator=EstimatorKind.KNOWN,
            df=3,
            p_value=0.03,
        )
        assert r3.rejects(0.05)

    def test_degenerate_single_bin(self):
        # L = 1 means every count sits in its column margin: statistic 0
        O = np.array([[7, 9, 4]])
        t = _table(O, widths=np.array([1.0]))
        rep = run_test(StatKind.PEARSON, t, DfPolicy())
        assert rep.value == pytest.approx(0.0, abs=1e-15)
        assert rep.p_value == 1.0
        assert any("degenerate" in w for w in rep.warnings)

    def test_bracket_floor_error(self):
        t = _table([[6, 4], [4, 6]])
        with pytest.raises(InvalidDfError):
            run_test(
                StatKind.PEARSON,
                t,
                DfPolicy(p_adjust=2),
                estimator=EstimatorKind.RAW_MLE,
            )

    def test_argument_validation(self):
        t = self._big_table()
        with pytest.raises(InvalidArgumentError):
            run_test("pearson", t, DfPolicy())
        with pytest.raises(InvalidArgumentError):
            run_test(StatKind.PEARSON, t, DfPolicy(), estimator="known")
        with pytest.raises(InvalidArgumentError):
            run_test(StatKind.WALD_RAW_MLE, t, DfPolicy())
        with pytest.raises(InvalidArgumentError):
            run_test(
                StatKind.WALD_RAW_MLE,
                t,
                DfPolicy(),
                estimator=EstimatorKind.RAW_MLE,
            )

    def test_raw_mle_other_kind_warns(self):
        t = self._big_table()
        rep = run_test(
            StatKind.WALD_NULL,
            t,
            DfPolicy(p_adjust=4),
            estimator=EstimatorKind.RAW_MLE,
        )
        assert rep.df == 11
        assert any("bracket" in w for w in rep.warnings)


class _NoMoments(GaussianLinearModel):
    """Closed-form moment hooks disabled; forces the empirical route."""

    def expected_information(self, x, theta):
        return None

    def bin_score_means(self, x, thresholds, theta):
        return None


class TestWaldRawMle:
    def _fit(self, seed=42, n=800, scale=None):
        rng = np.random.Generator(np.random.Philox(seed))
        x = rng.uniform(-1, 1, (n, 2))
        y = 0.5 + x @ [1.0, -0.7] + 1.2 * rng.standard_normal(n)
        if scale is not None:
            x = x * scale
        data = Dataset(y=y, x=x)
        model = GaussianLinearModel(k=2)
        theta = mle_gaussian_linear(data)
        grid = balanced_grid(4)
        part, _ = rtp_partition(x, 2, 2, seed=7)
        table = cross_classify(rosenblatt(model, theta, data), x, grid, part)
        return table, model, theta, data, grid, part

    def test_rank_is_structural(self):
        table, model, theta, data, grid, part = self._fit()
        value, rank = wald_raw_mle(table, model, theta, data, grid, part)
        assert rank == part.J * (grid.L - 1)
        assert value > 0 and math.isfinite(value)

    def test_invariant_to_covariate_scaling(self):
        base, model, theta, data, grid, part = self._fit(seed=42)
        w1, _ = wald_raw_mle(base, model, theta, data, grid, part)
        tab2, model2, theta2, data2, grid2, part2 = self._fit(
            seed=42, scale=np.array([10.0, 0.1])
        )
        np.testing.assert_array_equal(base.O, tab2.O)
        w2, _ = wald_raw_mle(tab2, model2, theta2, data2, grid2, part2)
        assert w2 == pytest.approx(w1, rel=1e-8)

    def test_empirical_fallback(self):
        table, _model, theta, data, grid, part = self._fit()
        value, rank = wald_raw_mle(
            table, _NoMoments(k=2), theta, data, grid, part
        )
        closed, _ = wald_raw_mle(table, GaussianLinearModel(k=2), theta, data, grid, part)
        assert rank == part.J * (grid.L - 1)
        # noisier ingredients, same target
        assert value == pytest.approx(closed, rel=0.5)

    def test_empty_column_raises(self):
        _table_, model, theta, data, grid, part = self._fit()
        O = np.array(_table_.O, copy=True)
        O[:, 0] = 0
        col = O.sum(axis=0)
        bad = ContingencyTable(
            O=O,
            column_counts=col,
            n=int(O.sum()),
            widths=_table_.widths,
            q_hat=col / O.sum(),
        )
        with pytest.raises(EmptyCellError):
            wald_raw_mle(bad, model, theta, data, grid, part)

    def test_collinear_design_raises(self):
        rng = np.random.Generator(np.random.Philox(9))
        n = 200
        x0 = rng.uniform(-1, 1, n)
        x = np.column_stack([x0, x0])
        y = 0.5 + 0.2 * x0 + rng.standard_normal(n)
        data = Dataset(y=y, x=x)
        theta = np.array([0.5, 0.1, 0.1, 1.0])
        grid = balanced_grid(4)
        part, _ = rtp_partition(x, 2, 1, seed=5)
        table = cross_classify(
            rosenblatt(GaussianLinearModel(k=2), theta, data), x, grid, part
        )
        with pytest.raises(SingularInformationError):
            wald_raw_mle(table, GaussianLinearModel(k=2), theta, data, grid, part)
        with pytest.raises(SingularInformationError):
            wald_raw_mle(table, _NoMoments(k=2), theta, data, grid, part)

    def test_run_test_wald_report(self):
        table, model, theta, data, grid, part = self._fit()
        rep = run_test(
            StatKind.WALD_RAW_MLE,
            table,
            DfPolicy(p_adjust=4),
            estimator=EstimatorKind.RAW_MLE,
            wald_inputs=WaldInputs(
                model=model, theta_hat=theta, data=data, grid=grid, partition=part
            ),
        )
        assert rep.df == part.J * (grid.L - 1)
        assert rep.p_value == pytest.approx(chisq_sf(rep.value, rep.df), abs=1e-15)
