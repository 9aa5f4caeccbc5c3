"""Split-half stability of the skill metrics, with bootstrap uncertainty.

A metric is useful for skill measurement only if a player's first-half
value predicts their second-half value.  This module joins metric rows
across season halves, computes the between-half correlation matrix, sweeps
the minimum-shots inclusion threshold with percentile-bootstrap confidence
intervals (resampling players), and re-runs the whole pipeline over a grid
of preprocessing choices to check the conclusions are not artifacts of one
configuration.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .backend import parallel_map
from .errors import InsufficientSampleError, InvalidParameterError, ShotmixError
from .geometry import DEFAULT_FRAME, GoalFrame
from .metrics import METRIC_NAMES, MetricTable, compute_metrics
from .mixture import (
    DEFAULT_PRIOR_ALPHA,
    DEFAULT_PRUNE_THRESHOLD,
    GridSpec,
    fit_mixture,
    prune_and_refit,
)
from .players import HierarchyConfig
from .preprocess import (
    FIRST_HALF,
    SECOND_HALF,
    PipelineConfig,
    ShotRecord,
    run_pipeline,
    shots_array,
)
from .valuation import DEFAULT_RIDGE, DEFAULT_VALUE_SAMPLES, component_values, fit_postxg

logger = logging.getLogger(__name__)

MIN_PAIRED_PLAYERS = 3
CI_LEVEL = 0.90


def derive_seed(base_seed: int, label: str) -> int:
    """Stable 63-bit child seed for a named stage of a run."""
    digest = hashlib.sha256(f"{base_seed}|{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2 ** 63)


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Two-pass Pearson correlation; NaN when either side is constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.sqrt((xc * xc).sum())
    sy = np.sqrt((yc * yc).sum())
    if sx == 0.0 or sy == 0.0:
        logger.info("correlation undefined: constant metric column")
        return float("nan")
    return float((xc * yc).sum() / (sx * sy))


def tied_ranks(x: np.ndarray) -> np.ndarray:
    """Average ranks (1-based) with ties sharing their mean rank."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.shape[0])
    sx = x[order]
    i = 0
    while i < x.shape[0]:
        j = i
        while j + 1 < x.shape[0] and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def correlate(x: np.ndarray, y: np.ndarray, method: str = "pearson") -> float:
    if method == "pearson":
        return pearson(x, y)
    if method == "spearman":
        return pearson(tied_ranks(x), tied_ranks(y))
    raise InvalidParameterError(f"method must be 'pearson' or 'spearman', got {method!r}")


def paired_halves(table: MetricTable, min_shots: int = 0):
    """Join metric rows across halves per (player, season).

    Keeps pairs where both halves exist and both meet min_shots.  Returns
    (keys, first, second) where first/second map metric name to an array.
    """
    by_key = {}
    for r in table.rows:
        by_key[(r.player_id, r.season_id, r.half)] = r
    seasons = sorted({(r.player_id, r.season_id) for r in table.rows})
    keys = []
    first = {m: [] for m in METRIC_NAMES}
    second = {m: [] for m in METRIC_NAMES}
    for player_id, season_id in seasons:
        a = by_key.get((player_id, season_id, FIRST_HALF))
        b = by_key.get((player_id, season_id, SECOND_HALF))
        if a is None or b is None:
            continue
        if a.shot_count < min_shots or b.shot_count < min_shots:
            continue
        keys.append((player_id, season_id))
        for m in METRIC_NAMES:
            first[m].append(getattr(a, m))
            second[m].append(getattr(b, m))
    first = {m: np.array(v, dtype=float) for m, v in first.items()}
    second = {m: np.array(v, dtype=float) for m, v in second.items()}
    return keys, first, second


def split_half_correlations(table: MetricTable, min_shots: int = 0,
                            method: str = "pearson") -> np.ndarray:
    """Matrix M[i, j] = corr(metric_i in first half, metric_j in second half).

    Metric order follows METRIC_NAMES; diagonal entries are the split-half
    stabilities.  Requires at least 3 qualifying player-seasons.
    """
    keys, first, second = paired_halves(table, min_shots)
    if len(keys) < MIN_PAIRED_PLAYERS:
        raise InsufficientSampleError(
            f"only {len(keys)} player-seasons have both halves with "
            f">= {min_shots} shots; need {MIN_PAIRED_PLAYERS}")
    out = np.empty((len(METRIC_NAMES), len(METRIC_NAMES)))
    for i, mi in enumerate(METRIC_NAMES):
        for j, mj in enumerate(METRIC_NAMES):
            out[i, j] = correlate(first[mi], second[mj], method)
    return out


@dataclass
class ThresholdResult:
    min_shots: int
    n_players: int
    # metric -> (correlation, ci_low, ci_high); None when underpopulated.
    correlations: dict | None


@dataclass
class StabilityReport:
    method: str
    n_bootstrap: int
    seed: int
    thresholds: list[ThresholdResult]
    correlation_matrix: np.ndarray | None
    matrix_min_shots: int


def _bootstrap_ci(x: np.ndarray, y: np.ndarray, idx: np.ndarray, method: str):
    """Percentile CI of the correlation over pre-drawn resample indices."""
    reps = np.empty(idx.shape[0])
    if method == "pearson":
        xs = x[idx]
        ys = y[idx]
        xc = xs - xs.mean(axis=1, keepdims=True)
        yc = ys - ys.mean(axis=1, keepdims=True)
        sx = np.sqrt((xc * xc).sum(axis=1))
        sy = np.sqrt((yc * yc).sum(axis=1))
        with np.errstate(invalid="ignore", divide="ignore"):
            reps = (xc * yc).sum(axis=1) / (sx * sy)
        reps[(sx == 0.0) | (sy == 0.0)] = np.nan
    else:
        for b in range(idx.shape[0]):
            reps[b] = correlate(x[idx[b]], y[idx[b]], method)
    if np.all(np.isnan(reps)):
        return float("nan"), float("nan")
    tail = 100.0 * (1.0 - CI_LEVEL) / 2.0
    lo, hi = np.nanpercentile(reps, [tail, 100.0 - tail])
    return float(lo), float(hi)


def threshold_sweep(
    table: MetricTable,
    thresholds: Sequence[int],
    n_bootstrap: int = 1000,
    seed: int = 0,
    method: str = "pearson",
) -> list[ThresholdResult]:
    """Self-correlation per metric at each min-shots threshold, with 90%
    percentile bootstrap CIs resampling player-seasons.

    Thresholds that leave fewer than 3 qualifying player-seasons come back
    with correlations=None rather than failing the sweep.
    """
    if n_bootstrap < 1:
        raise InvalidParameterError(f"n_bootstrap must be >= 1, got {n_bootstrap}")
    rng = np.random.default_rng(seed)
    results = []
    for t in thresholds:
        keys, first, second = paired_halves(table, t)
        n = len(keys)
        if n < MIN_PAIRED_PLAYERS:
            results.append(ThresholdResult(min_shots=t, n_players=n, correlations=None))
            continue
        idx = rng.integers(0, n, size=(n_bootstrap, n))
        corr = {}
        for m in METRIC_NAMES:
            point = correlate(first[m], second[m], method)
            lo, hi = _bootstrap_ci(first[m], second[m], idx, method)
            corr[m] = (point, lo, hi)
        results.append(ThresholdResult(min_shots=t, n_players=n, correlations=corr))
    return results


def build_stability_report(
    table: MetricTable,
    thresholds: Sequence[int],
    n_bootstrap: int = 1000,
    seed: int = 0,
    method: str = "pearson",
) -> StabilityReport:
    """Threshold sweep plus the full correlation matrix at the lowest threshold."""
    thresholds = list(thresholds)
    if not thresholds:
        raise InvalidParameterError("need at least one threshold")
    matrix_min = thresholds[0]
    try:
        matrix = split_half_correlations(table, matrix_min, method)
    except InsufficientSampleError:
        matrix = None
    return StabilityReport(
        method=method,
        n_bootstrap=n_bootstrap,
        seed=seed,
        thresholds=threshold_sweep(table, thresholds, n_bootstrap, seed, method),
        correlation_matrix=matrix,
        matrix_min_shots=matrix_min,
    )


# ---------------------------------------------------------------------------
# full pipeline and the sensitivity grid


@dataclass(frozen=True)
class PipelineSettings:
    """Model and evaluation settings for an end-to-end run."""

    grid: GridSpec = GridSpec()
    prior_alpha: float = DEFAULT_PRIOR_ALPHA
    prune_threshold: float = DEFAULT_PRUNE_THRESHOLD
    hierarchy_alpha: float = 30.0
    ridge: float = DEFAULT_RIDGE
    n_value_samples: int = DEFAULT_VALUE_SAMPLES
    thresholds: tuple[int, ...] = (0, 10, 20, 40)
    n_bootstrap: int = 1000
    method: str = "pearson"


def run_full_pipeline(
    records: Sequence[ShotRecord],
    config: PipelineConfig = PipelineConfig(),
    settings: PipelineSettings = PipelineSettings(),
    seed: int = 0,
    frame: GoalFrame = DEFAULT_FRAME,
) -> StabilityReport:
    """Raw records to stability report: preprocess, fit, value, evaluate."""
    result = run_pipeline(records, config, frame)
    shots = result.shots
    pts = shots_array(shots)
    model = fit_mixture(pts, settings.grid, frame, settings.prior_alpha)
    trimmed = prune_and_refit(model, pts, settings.prune_threshold, settings.prior_alpha)
    on_frame = [s for s in shots
                if abs(s.end_point.y) <= frame.width / 2.0
                and 0.0 <= s.end_point.z <= frame.height]
    post_model = fit_postxg(
        shots_array(on_frame),
        np.array([s.is_goal for s in on_frame], dtype=float),
        settings.ridge,
    )
    values = component_values(
        trimmed.components, post_model, frame,
        n_samples=settings.n_value_samples,
        base_seed=derive_seed(seed, "values"),
    )
    table = compute_metrics(shots, trimmed, values,
                            HierarchyConfig(alpha=settings.hierarchy_alpha))
    return build_stability_report(
        table, settings.thresholds, settings.n_bootstrap,
        seed=derive_seed(seed, "bootstrap"), method=settings.method,
    )


@dataclass(frozen=True)
class CellFailure:
    """A sensitivity cell that errored; the rest of the grid still runs."""

    error: str


def cell_seed(base_seed: int, distance_threshold: float, reflect: bool) -> int:
    return derive_seed(base_seed, f"cell|{distance_threshold!r}|{reflect}")


def sensitivity_grid(
    records: Sequence[ShotRecord],
    distance_thresholds: Sequence[float],
    reflect_options: Sequence[bool] = (True, False),
    config: PipelineConfig = PipelineConfig(),
    settings: PipelineSettings = PipelineSettings(),
    base_seed: int = 0,
    frame: GoalFrame = DEFAULT_FRAME,
) -> dict:
    """Re-run the full pipeline per (distance threshold, reflection) cell.

    Returns {(threshold, reflect): StabilityReport | CellFailure}.  Cells
    run independently (worker pool capped by SHOTMIX_THREADS) with derived
    per-cell seeds, so one failing configuration cannot take down the grid.
    """
    cells = [(float(t), bool(r)) for t in distance_thresholds for r in reflect_options]
    if not cells:
        raise InvalidParameterError("sensitivity grid needs at least one cell")

    def run_cell(cell):
        threshold, reflect = cell
        cell_config = replace(config, min_distance_yd=threshold, reflect_left_foot=reflect)
        try:
            return run_full_pipeline(records, cell_config, settings,
                                     seed=cell_seed(base_seed, threshold, reflect),
                                     frame=frame)
        except ShotmixError as exc:
            logger.warning("sensitivity cell %s failed: %s", cell, exc)
            return CellFailure(error=f"{type(exc).__name__}: {exc}")

    outputs = parallel_map(run_cell, cells)
    return dict(zip(cells, outputs))


# ---------------------------------------------------------------------------
# persistence


def report_payload(report: StabilityReport) -> dict:
    return {
        "method": report.method,
        "n_bootstrap": report.n_bootstrap,
        "seed": report.seed,
        "metrics": list(METRIC_NAMES),
        "matrix_min_shots": report.matrix_min_shots,
        "correlation_matrix": (
            None if report.correlation_matrix is None
            else [[float(v) for v in row] for row in report.correlation_matrix]
        ),
        "thresholds": [
            {
                "min_shots": t.min_shots,
                "n_players": t.n_players,
                "correlations": (
                    None if t.correlations is None else {
                        m: {"correlation": c, "ci_low": lo, "ci_high": hi}
                        for m, (c, lo, hi) in t.correlations.items()
                    }
                ),
            }
            for t in report.thresholds
        ],
    }


def save_report_json(path, report: StabilityReport) -> None:
    with open(path, "w") as fh:
        json.dump(report_payload(report), fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_report_json(path) -> StabilityReport:
    with open(path) as fh:
        payload = json.load(fh)
    matrix = payload["correlation_matrix"]
    return StabilityReport(
        method=payload["method"],
        n_bootstrap=payload["n_bootstrap"],
        seed=payload["seed"],
        matrix_min_shots=payload["matrix_min_shots"],
        correlation_matrix=None if matrix is None else np.array(matrix, dtype=float),
        thresholds=[
            ThresholdResult(
                min_shots=t["min_shots"],
                n_players=t["n_players"],
                correlations=(
                    None if t["correlations"] is None else {
                        m: (d["correlation"], d["ci_low"], d["ci_high"])
                        for m, d in t["correlations"].items()
                    }
                ),
            )
            for t in payload["thresholds"]
        ],
    )


def save_report_csv(path, report: StabilityReport) -> None:
    """Stability curves as CSV rows (threshold, metric, correlation, CI)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "metric", "correlation", "ci_low", "ci_high"])
        for t in report.thresholds:
            for m in METRIC_NAMES:
                if t.correlations is None:
                    writer.writerow([t.min_shots, m, "", "", ""])
                else:
                    c, lo, hi = t.correlations[m]
                    writer.writerow([t.min_shots, m, repr(c), repr(lo), repr(hi)])


def _cell_dirname(threshold: float, reflect: bool) -> str:
    return f"dist_{threshold:g}_reflect_{'on' if reflect else 'off'}"


def save_sensitivity(outdir, results: dict) -> None:
    """Per-cell JSON reports plus one combined CSV across all cells."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    combined = outdir / "combined.csv"
    with open(combined, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["distance_threshold", "reflect", "threshold", "metric",
                         "correlation", "ci_low", "ci_high"])
        for (threshold, reflect), report in results.items():
            cell_dir = outdir / _cell_dirname(threshold, reflect)
            cell_dir.mkdir(exist_ok=True)
            if isinstance(report, CellFailure):
                with open(cell_dir / "error.json", "w") as efh:
                    json.dump({"error": report.error}, efh, sort_keys=True, indent=1)
                    efh.write("\n")
                continue
            save_report_json(cell_dir / "stability.json", report)
            for t in report.thresholds:
                for m in METRIC_NAMES:
                    if t.correlations is None:
                        writer.writerow([repr(threshold), reflect, t.min_shots, m, "", "", ""])
                    else:
                        c, lo, hi = t.correlations[m]
                        writer.writerow([repr(threshold), reflect, t.min_shots, m,
                                         repr(c), repr(lo), repr(hi)])
