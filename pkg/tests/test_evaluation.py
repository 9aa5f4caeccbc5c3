"""Split-half stability: correlations, bootstrap CIs, report files."""

import numpy as np
import pytest
from scipy import stats

from shotmix.errors import InsufficientSampleError, InvalidParameterError
from shotmix.evaluation import (
    CI_LEVEL,
    MIN_PAIRED_PLAYERS,
    StabilityReport,
    ThresholdResult,
    build_stability_report,
    cell_seed,
    correlate,
    derive_seed,
    load_report_json,
    paired_halves,
    pearson,
    save_report_csv,
    save_report_json,
    split_half_correlations,
    threshold_sweep,
    tied_ranks,
)
from shotmix.metrics import METRIC_NAMES, MetricRow, MetricTable
from shotmix.preprocess import FIRST_HALF, SECOND_HALF


def row(player, half, shots=50, gax=0.0, ega=0.0, rb=0.3, gen=0.3, season="s1"):
    return MetricRow(
        player_id=player, season_id=season, half=half, shot_count=shots,
        goals=5, sum_xg=4.0, sum_postxg_ext=5.0,
        gax=gax, ega=ega, rb_postxg=rb, gen_postxg=gen,
    )


def synthetic_table(n_players, noise, seed, shots=50):
    """Paired halves where every metric carries the same latent signal."""
    rng = np.random.default_rng(seed)
    latent = rng.normal(size=n_players)
    rows = []
    for i in range(n_players):
        for half in (FIRST_HALF, SECOND_HALF):
            e = rng.normal(scale=noise, size=4)
            rows.append(row(f"p{i:03d}", half, shots=shots,
                            gax=latent[i] + e[0], ega=latent[i] + e[1],
                            rb=latent[i] + e[2], gen=latent[i] + e[3]))
    return MetricTable(rows=rows)


class TestSeeds:
    def test_deterministic(self):
        assert derive_seed(7, "bootstrap") == derive_seed(7, "bootstrap")

    def test_labels_and_bases_separate_streams(self):
        seeds = {derive_seed(7, "a"), derive_seed(7, "b"), derive_seed(8, "a")}
        assert len(seeds) == 3

    def test_range(self):
        s = derive_seed(123456789, "x")
        assert 0 <= s < 2 ** 63

    def test_cell_seed_distinct_across_grid(self):
        cells = [(g, r) for g in (0.0, 6.0, 12.0) for r in (True, False)]
        seeds = {cell_seed(3, g, r) for g, r in cells}
        assert len(seeds) == len(cells)


class TestCorrelation:
    def test_pearson_matches_scipy(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=200)
        y = 0.4 * x + rng.normal(size=200)
        assert pearson(x, y) == pytest.approx(stats.pearsonr(x, y).statistic, abs=1e-12)

    def test_constant_input_is_nan(self, caplog):
        import logging

        with caplog.at_level(logging.INFO, logger="shotmix.evaluation"):
            assert np.isnan(pearson(np.ones(5), np.arange(5.0)))
        assert any("constant" in r.message for r in caplog.records)

    def test_perfect_correlation(self):
        x = np.arange(10.0)
        assert pearson(x, 2 * x + 1) == pytest.approx(1.0, abs=1e-12)
        assert pearson(x, -x) == pytest.approx(-1.0, abs=1e-12)

    def test_tied_ranks_match_scipy(self):
        x = np.array([3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0, 3.0])
        assert np.array_equal(tied_ranks(x), stats.rankdata(x))

    def test_spearman_matches_scipy(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=80)
        y = x ** 3 + rng.normal(scale=0.2, size=80)
        got = correlate(x, y, method="spearman")
        assert got == pytest.approx(stats.spearmanr(x, y).statistic, abs=1e-12)

    def test_unknown_method_rejected(self):
        with pytest.raises(InvalidParameterError):
            correlate(np.arange(4.0), np.arange(4.0), method="kendall")


class TestPairing:
    def test_joins_on_player_season(self):
        table = MetricTable(rows=[
            row("a", FIRST_HALF, gax=1.0), row("a", SECOND_HALF, gax=2.0),
            row("b", FIRST_HALF, gax=3.0),  # no second half: dropped
            row("c", FIRST_HALF, gax=4.0), row("c", SECOND_HALF, gax=5.0),
        ])
        keys, first, second = paired_halves(table)
        assert keys == [("a", "s1"), ("c", "s1")]
        assert np.array_equal(first["gax"], [1.0, 4.0])
        assert np.array_equal(second["gax"], [2.0, 5.0])

    def test_min_shots_applies_to_both_halves(self):
        table = MetricTable(rows=[
            row("a", FIRST_HALF, shots=45), row("a", SECOND_HALF, shots=39),
            row("b", FIRST_HALF, shots=41), row("b", SECOND_HALF, shots=40),
        ])
        keys, _, _ = paired_halves(table, min_shots=40)
        assert keys == [("b", "s1")]

    def test_same_player_two_seasons_counts_twice(self):
        table = MetricTable(rows=[
            row("a", FIRST_HALF, season="s1"), row("a", SECOND_HALF, season="s1"),
            row("a", FIRST_HALF, season="s2"), row("a", SECOND_HALF, season="s2"),
        ])
        keys, _, _ = paired_halves(table)
        assert keys == [("a", "s1"), ("a", "s2")]


class TestMatrix:
    def test_matrix_entries_by_hand(self):
        rng = np.random.default_rng(2)
        table = synthetic_table(30, noise=0.5, seed=2)
        m = split_half_correlations(table)
        keys, first, second = paired_halves(table)
        for i, mi in enumerate(METRIC_NAMES):
            for j, mj in enumerate(METRIC_NAMES):
                assert m[i, j] == pytest.approx(
                    stats.pearsonr(first[mi], second[mj]).statistic, abs=1e-12)

    def test_too_few_pairs_raises(self):
        table = MetricTable(rows=[
            row("a", FIRST_HALF), row("a", SECOND_HALF),
            row("b", FIRST_HALF), row("b", SECOND_HALF),
        ])
        with pytest.raises(InsufficientSampleError):
            split_half_correlations(table)
        assert MIN_PAIRED_PLAYERS == 3

    def test_spearman_method_passes_through(self):
        table = synthetic_table(25, noise=0.3, seed=3)
        m = split_half_correlations(table, method="spearman")
        keys, first, second = paired_halves(table)
        expected = stats.spearmanr(first["gax"], second["gax"]).statistic
        assert m[0, 0] == pytest.approx(expected, abs=1e-12)


class TestSweep:
    def test_reproducible_with_seed(self):
        table = synthetic_table(40, noise=0.8, seed=4)
        a = threshold_sweep(table, [0, 10], n_bootstrap=200, seed=11)
        b = threshold_sweep(table, [0, 10], n_bootstrap=200, seed=11)
        for ra, rb in zip(a, b):
            assert ra == rb

    def test_different_seed_moves_ci(self):
        table = synthetic_table(40, noise=0.8, seed=4)
        a = threshold_sweep(table, [0], n_bootstrap=200, seed=11)
        b = threshold_sweep(table, [0], n_bootstrap=200, seed=12)
        assert a[0].correlations["gax"] != b[0].correlations["gax"]

    def test_ci_brackets_point_estimate(self):
        table = synthetic_table(60, noise=0.6, seed=5)
        (res,) = threshold_sweep(table, [0], n_bootstrap=500, seed=6)
        for m in METRIC_NAMES:
            point, lo, hi = res.correlations[m]
            assert lo <= point <= hi
            assert -1.0 <= lo <= hi <= 1.0

    def test_ci_shrinks_with_more_players(self):
        small = synthetic_table(25, noise=0.6, seed=7)
        big = synthetic_table(400, noise=0.6, seed=7)
        (rs,) = threshold_sweep(small, [0], n_bootstrap=400, seed=8)
        (rb,) = threshold_sweep(big, [0], n_bootstrap=400, seed=8)
        for m in METRIC_NAMES:
            width_small = rs.correlations[m][2] - rs.correlations[m][1]
            width_big = rb.correlations[m][2] - rb.correlations[m][1]
            assert width_big < width_small

    def test_underpopulated_threshold_reported_not_fatal(self):
        table = synthetic_table(10, noise=0.5, seed=9, shots=20)
        results = threshold_sweep(table, [0, 50], n_bootstrap=100, seed=10)
        assert results[0].correlations is not None
        assert results[1].correlations is None
        assert results[1].n_players == 0

    def test_bad_bootstrap_count_rejected(self):
        table = synthetic_table(10, noise=0.5, seed=9)
        with pytest.raises(InvalidParameterError):
            threshold_sweep(table, [0], n_bootstrap=0)

    def test_high_noise_lowers_self_correlation(self):
        quiet = synthetic_table(150, noise=0.2, seed=12)
        loud = synthetic_table(150, noise=3.0, seed=12)
        (rq,) = threshold_sweep(quiet, [0], n_bootstrap=100, seed=13)
        (rl,) = threshold_sweep(loud, [0], n_bootstrap=100, seed=13)
        for m in METRIC_NAMES:
            assert rq.correlations[m][0] > rl.correlations[m][0]


class TestReport:
    def make_report(self, n=40):
        table = synthetic_table(n, noise=0.5, seed=14)
        return build_stability_report(table, [0, 10, 20], n_bootstrap=150, seed=15)

    def test_structure(self):
        rep = self.make_report()
        assert [t.min_shots for t in rep.thresholds] == [0, 10, 20]
        assert rep.correlation_matrix.shape == (4, 4)
        assert rep.matrix_min_shots == 0
        # matrix diagonal equals the sweep's point estimates at threshold 0
        for i, m in enumerate(METRIC_NAMES):
            assert rep.correlation_matrix[i, i] == pytest.approx(
                rep.thresholds[0].correlations[m][0], abs=1e-12)

    def test_empty_thresholds_rejected(self):
        table = synthetic_table(10, noise=0.5, seed=16)
        with pytest.raises(InvalidParameterError):
            build_stability_report(table, [], n_bootstrap=50)

    def test_json_round_trip(self, tmp_path):
        rep = self.make_report()
        path = tmp_path / "report.json"
        save_report_json(path, rep)
        loaded = load_report_json(path)
        assert loaded.method == rep.method
        assert loaded.n_bootstrap == rep.n_bootstrap
        assert loaded.seed == rep.seed
        assert np.array_equal(loaded.correlation_matrix, rep.correlation_matrix)
        assert loaded.thresholds == rep.thresholds

    def test_csv_has_ci_columns(self, tmp_path):
        rep = self.make_report()
        path = tmp_path / "report.csv"
        save_report_csv(path, rep)
        lines = path.read_text().splitlines()
        assert lines[0] == "threshold,metric,correlation,ci_low,ci_high"
        # one row per (threshold, metric)
        assert len(lines) == 1 + 3 * len(METRIC_NAMES)

    def test_underpopulated_rows_written_empty(self, tmp_path):
        table = synthetic_table(8, noise=0.5, seed=17, shots=10)
        rep = build_stability_report(table, [0, 99], n_bootstrap=50, seed=18)
        path = tmp_path / "report.csv"
        save_report_csv(path, rep)
        last = path.read_text().splitlines()[-1]
        assert last.endswith(",,,")  # no correlation columns for the dead threshold
