import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from evrk.evaluation.compare import (
    GalvinTechnique,
    Technique,
    YangTechnique,
    comparison_table,
    evaluate_technique,
    format_table,
    write_report_csv,
)
from evrk.evaluation.crossval import coefficient_of_variation, fold_partition, repeated_kfold, write_cv_csv
from evrk.evaluation.metrics import NotAValue, corr, mae, mae_dev, rmse
from evrk.evaluation.stats import betainc, t_isf, t_sf, t_test

scipy_stats = pytest.importorskip("scipy.stats")
scipy_special = pytest.importorskip("scipy.special")


def naive_metrics(a, e):
    a = np.asarray(a, dtype=np.longdouble)
    e = np.asarray(e, dtype=np.longdouble)
    d = a - e
    r = np.sqrt(np.mean(d * d))
    m = np.mean(np.abs(d))
    da, de = a - a.mean(), e - e.mean()
    c = np.sum(da * de) / np.sqrt(np.sum(da * da) * np.sum(de * de))
    return float(r), float(m), float(c)


def test_metrics_match_naive_oracle_on_random_pairs():
    rng = np.random.default_rng(0)
    a = rng.normal(5000, 3000, 10_000)
    e = a + rng.normal(0, 800, 10_000)
    r, m, c = naive_metrics(a, e)
    assert rmse(a, e) == pytest.approx(r, rel=1e-12)
    assert mae(a, e) == pytest.approx(m, rel=1e-12)
    assert corr(a, e) == pytest.approx(c, rel=1e-12)


@given(arrays(np.float64, st.integers(2, 50), elements=st.floats(-1e4, 1e4)),
       arrays(np.float64, 50, elements=st.floats(-1e4, 1e4)))
def test_metric_properties(a, noise):
    e = a + noise[:a.size]
    assert rmse(a, e) >= mae(a, e) - 1e-9 * max(1.0, mae(a, e))
    assert rmse(a, a) == 0.0 and mae(a, a) == 0.0
    c = corr(a, e)
    assert isinstance(c, NotAValue) or -1.0 <= c <= 1.0


def test_corr_affine_invariance():
    rng = np.random.default_rng(1)
    a = rng.normal(size=1000)
    assert corr(a, 2 * a + 5) == pytest.approx(1.0, abs=1e-12)
    assert corr(a, -3 * a + 1) == pytest.approx(-1.0, abs=1e-12)


def test_corr_on_constant_input_is_not_a_value():
    c = corr(np.ones(5), np.arange(5.0))
    assert isinstance(c, NotAValue) and math.isnan(c) and str(c) == "NA" and "actual" in c.reason


def test_metrics_reject_bad_lengths():
    with pytest.raises(ValueError):
        rmse([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        mae([], [])


def test_mae_dev_is_mae_over_trip_energies():
    assert mae_dev([1.0, 2.0, 3.0], [1.5, 2.0, 2.0]) == pytest.approx(0.5)


@pytest.mark.parametrize("df", [1, 2, 5, 10, 18, 30, 120])
@pytest.mark.parametrize("alpha", [0.1, 0.05, 0.01])
def test_t_quantiles_match_scipy(df, alpha):
    assert t_isf(alpha, df) == pytest.approx(scipy_stats.t.isf(alpha, df), rel=1e-9)
    assert t_sf(1.3, df) == pytest.approx(scipy_stats.t.sf(1.3, df), rel=1e-10)


@given(st.floats(0.1, 20), st.floats(0.1, 20), st.floats(0.0, 1.0))
def test_betainc_matches_scipy(a, b, x):
    assert betainc(a, b, x) == pytest.approx(scipy_special.betainc(a, b, x), rel=1e-9, abs=1e-13)


def test_t_test_matches_scipy_pooled():
    rng = np.random.default_rng(2)
    a, b = rng.normal(0.0, 1.0, 10), rng.normal(1.0, 1.0, 10)
    ours = t_test(a, b)
    ref = scipy_stats.ttest_ind(a, b, equal_var=True)
    assert ours.df == 18
    assert ours.t_stat == pytest.approx(ref.statistic, rel=1e-12)
    assert ours.p_one_tail == pytest.approx(ref.pvalue / 2, rel=1e-9)
    assert ours.t_critical_one_tail == pytest.approx(1.734, abs=5e-4)


def test_t_test_degenerate_samples():
    same = t_test([1.0, 1.0], [1.0, 1.0])
    assert math.isnan(same.t_stat) and same.undefined_reason
    apart = t_test([1.0, 1.0], [2.0, 2.0])
    assert apart.reject_null and math.isinf(apart.t_stat)
    with pytest.raises(ValueError):
        t_test([1.0], [1.0, 2.0])


@given(st.integers(10, 200), st.integers(2, 10), st.integers(0, 2 ** 16))
def test_fold_partition_covers_disjointly(n, k, seed):
    folds = fold_partition(n, k, np.random.default_rng(seed))
    assert len(folds) == k and all(len(f) > 0 for f in folds)
    assert sorted(np.concatenate(folds).tolist()) == list(range(n))
    assert max(map(len, folds)) - min(map(len, folds)) <= 1


def test_repeated_kfold_invariants(tmp_path):
    n = 47
    seen = []

    def trainer(train_idx, valid_idx):
        seen.append((train_idx, valid_idx))
        return np.arange(len(valid_idx), dtype=float), np.arange(len(valid_idx), dtype=float) + 1.0

    reports = repeated_kfold(n, trainer, k=10, runs=2, seed=3)
    assert len(reports) == 20
    for r in reports:
        assert len(r.valid_folds) == 3
        assert np.intersect1d(r.train_idx, r.valid_idx).size == 0
        assert np.union1d(r.train_idx, r.valid_idx).tolist() == list(range(n))
        assert r.rmse == 1.0 and r.mae == 1.0
    # within a run every item is validated exactly three times
    counts = np.zeros(n, dtype=int)
    for r in reports[:10]:
        counts[r.valid_idx] += 1
    assert np.all(counts == 3)
    path = tmp_path / "cv.csv"
    write_cv_csv(reports, path, "seed=3")
    assert path.read_text().splitlines()[1] == "run,fold,metric,value"
    with pytest.raises(ValueError):
        repeated_kfold(n, trainer, k=3, n_valid_folds=3)


def test_coefficient_of_variation():
    assert coefficient_of_variation([1.0, 1.0, 1.0]) == 0.0
    assert coefficient_of_variation([1.0, 3.0]) == pytest.approx(np.std([1, 3], ddof=1) / 2)


class Oracle(Technique):
    name = "Oracle"

    def estimate(self, windows):
        return np.concatenate([w.act_pow for w in windows])


def test_comparison_table_marks_best(small_dataset, tmp_path):
    datasets = {"valid": small_dataset}
    reports = comparison_table([Oracle(), GalvinTechnique(), YangTechnique()], datasets, timing_repeats=5,
                               max_timed_trips=1)
    oracle = reports[0]
    assert oracle.rmse == 0.0 and oracle.mae_dev == 0.0
    assert {"rmse", "mae", "mae_dev", "corr"} <= oracle.best
    assert oracle.n_trips == len(small_dataset.trips)
    path = tmp_path / "cmp.csv"
    write_report_csv(reports, path, "seed=0", exclude=("mptdc",))
    lines = path.read_text().splitlines()
    assert lines[1] == "technique,dataset,metric,unit,value,best"
    assert len(lines) == 2 + 3 * 4 and not any(",mptdc," in line for line in lines)
    table = format_table(reports)
    assert "0.0*" in table and "MPTDC" in table


def test_comparison_table_needs_five_timings(small_dataset):
    with pytest.raises(ValueError):
        comparison_table([Oracle()], {"v": small_dataset}, timing_repeats=4)


def test_trip_level_technique_gets_na(small_dataset):
    class TripOnly(Technique):
        name = "TripOnly"
        per_second = False

        def trip_energy_J(self, windows):
            return 0.0

    report = evaluate_technique(TripOnly(), small_dataset, "valid", max_timed_trips=1)
    assert isinstance(report.rmse, NotAValue) and str(report.corr) == "NA"
    assert report.mae_dev > 0
