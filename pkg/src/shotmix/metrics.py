"""Shooting-skill metrics per player, season, and season half.

Two model-based metrics and two outcome baselines per (player, season,
half) row:

- rb_postxg: dot product of the player's shrunk mixture weights with the
  component values, i.e. expected goal probability per shot implied by the
  player's estimated aiming profile.
- gen_postxg: mean over the player's shots of the responsibility-weighted
  component values under the global weights, a per-shot generative value.
- gax: goals minus summed pre-shot xg.
- ega: summed (external post-shot value minus pre-shot xg).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .errors import InvalidInputError
from .mixture import MixtureModel, component_arrays
from .players import HierarchyConfig, PlayerWeights, fit_player_weights
from .preprocess import CanonicalShot, shots_array
from .valuation import ComponentValue

logger = logging.getLogger(__name__)

METRIC_NAMES = ("gax", "ega", "rb_postxg", "gen_postxg")

CSV_COLUMNS = (
    "player_id", "season_id", "half", "shot_count", "goals",
    "sum_xg", "sum_postxg_ext", "gax", "ega", "rb_postxg", "gen_postxg",
)


def _values_array(values) -> np.ndarray:
    if len(values) and isinstance(values[0], ComponentValue):
        return np.array([v.value for v in values], dtype=float)
    return np.asarray(values, dtype=float).reshape(-1)


def rb_postxg(theta: np.ndarray, values) -> float:
    """Expected per-shot value of a weight profile: theta dot values."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    vals = _values_array(values)
    if theta.shape[0] != vals.shape[0]:
        raise InvalidInputError(
            f"{theta.shape[0]} weights but {vals.shape[0]} component values")
    return float(theta @ vals)


def gen_postxg_points(pts: np.ndarray, model: MixtureModel, values) -> np.ndarray:
    """Responsibility-weighted component values for (n, 2) end points.

    Responsibilities come from the global weights.  A point with zero
    density under every component (only possible below the ground) falls
    back to the nearest component by Mahalanobis distance.
    """
    pts = np.ascontiguousarray(np.asarray(pts, dtype=float).reshape(-1, 2))
    vals = _values_array(values)
    if vals.shape[0] != model.n_components:
        raise InvalidInputError(
            f"{vals.shape[0]} values for {model.n_components} components")
    log_dens = model.log_density_matrix(pts)
    with np.errstate(divide="ignore"):
        log_w = np.log(model.weights, out=np.full(model.weights.shape, -np.inf),
                       where=model.weights > 0)
    out = kernels.weighted_value_rows(log_dens, log_w, vals)
    bad = ~np.isfinite(out)
    if bad.any():
        logger.warning("gen_postxg: %d points had zero density everywhere; "
                       "using nearest component by Mahalanobis distance", int(bad.sum()))
        means, covs = component_arrays(model.components)
        inv = np.linalg.inv(covs)
        for i in np.nonzero(bad)[0]:
            d = pts[i] - means
            maha = np.einsum("kj,kjl,kl->k", d, inv, d)
            out[i] = vals[int(np.argmin(maha))]
    return out


def gen_postxg_shot(p, model: MixtureModel, values) -> float:
    """Generative value of a single end point."""
    return float(gen_postxg_points(np.asarray(p, dtype=float).reshape(1, 2), model, values)[0])


@dataclass
class MetricRow:
    player_id: str
    season_id: str
    half: str
    shot_count: int
    goals: int
    sum_xg: float
    sum_postxg_ext: float
    gax: float
    ega: float
    rb_postxg: float
    gen_postxg: float

    def key(self):
        return (self.player_id, self.season_id, self.half)


@dataclass
class MetricTable:
    rows: list[MetricRow]

    def by_key(self) -> dict:
        return {r.key(): r for r in self.rows}

    def sorted(self) -> "MetricTable":
        return MetricTable(rows=sorted(self.rows, key=lambda r: r.key()))


def group_shots(shots: Sequence[CanonicalShot]) -> dict:
    """Group shots by (player_id, season_id, half), preserving input order."""
    groups: dict[tuple, list[CanonicalShot]] = {}
    for s in shots:
        groups.setdefault((s.player_id, s.season_id, s.half), []).append(s)
    return groups


def fit_period_weights(
    shots: Sequence[CanonicalShot],
    model: MixtureModel,
    config: HierarchyConfig = HierarchyConfig(),
) -> dict:
    """Shrunk weights per (player_id, season_id, half) group."""
    groups = group_shots(shots)
    pts_by_key = {key: shots_array(rows) for key, rows in groups.items()}
    return fit_player_weights(pts_by_key, model, config)


def player_table(
    shots: Sequence[CanonicalShot],
    weights: Mapping,
    model: MixtureModel,
    values,
) -> MetricTable:
    """Metric rows keyed by (player_id, season_id, half).

    `weights` maps each group key to its PlayerWeights; every group present
    in the shots must be covered.  Rows come back lexicographically sorted.
    """
    vals = _values_array(values)
    groups = group_shots(shots)
    missing = [k for k in groups if k not in weights]
    if missing:
        raise InvalidInputError(
            f"no fitted weights for {len(missing)} groups, first: {missing[0]}")
    if shots:
        gen_all = gen_postxg_points(shots_array(shots), model, vals)
    offsets: dict[tuple, list[int]] = {}
    for i, s in enumerate(shots):
        offsets.setdefault((s.player_id, s.season_id, s.half), []).append(i)

    rows = []
    for key, group in groups.items():
        pw: PlayerWeights = weights[key]
        goals = sum(1 for s in group if s.is_goal)
        sum_xg = float(sum(s.xg for s in group))
        sum_post = float(sum(s.postxg_ext for s in group))
        gen_vals = gen_all[offsets[key]]
        rows.append(MetricRow(
            player_id=key[0],
            season_id=key[1],
            half=key[2],
            shot_count=len(group),
            goals=goals,
            sum_xg=sum_xg,
            sum_postxg_ext=sum_post,
            gax=goals - sum_xg,
            ega=sum_post - sum_xg,
            rb_postxg=rb_postxg(pw.theta, vals),
            gen_postxg=float(gen_vals.mean()),
        ))
    return MetricTable(rows=rows).sorted()


def compute_metrics(
    shots: Sequence[CanonicalShot],
    model: MixtureModel,
    values,
    config: HierarchyConfig = HierarchyConfig(),
) -> MetricTable:
    """Fit per-period weights and build the metric table in one call."""
    weights = fit_period_weights(shots, model, config)
    return player_table(shots, weights, model, values)


# ---------------------------------------------------------------------------
# persistence

PERIOD_KEY_SEP = "::"


def compose_period_key(key: tuple) -> str:
    """Flatten a (player_id, season_id, half) key for JSON storage.

    Ids must not contain the '::' separator.
    """
    for part in key:
        if PERIOD_KEY_SEP in part:
            raise InvalidInputError(f"id {part!r} contains the reserved separator '::'")
    return PERIOD_KEY_SEP.join(key)


def parse_period_key(key: str) -> tuple:
    parts = key.split(PERIOD_KEY_SEP)
    if len(parts) != 3:
        raise InvalidInputError(f"bad period key {key!r}, expected player::season::half")
    return tuple(parts)


def save_metric_table(path, table: MetricTable) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in table.sorted().rows:
            writer.writerow([
                r.player_id, r.season_id, r.half, r.shot_count, r.goals,
                repr(r.sum_xg), repr(r.sum_postxg_ext), repr(r.gax),
                repr(r.ega), repr(r.rb_postxg), repr(r.gen_postxg),
            ])


def load_metric_table(path) -> MetricTable:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
            raise InvalidInputError(
                f"metric table {path} has columns {reader.fieldnames}, "
                f"expected {list(CSV_COLUMNS)}")
        for d in reader:
            rows.append(MetricRow(
                player_id=d["player_id"],
                season_id=d["season_id"],
                half=d["half"],
                shot_count=int(d["shot_count"]),
                goals=int(d["goals"]),
                sum_xg=float(d["sum_xg"]),
                sum_postxg_ext=float(d["sum_postxg_ext"]),
                gax=float(d["gax"]),
                ega=float(d["ega"]),
                rb_postxg=float(d["rb_postxg"]),
                gen_postxg=float(d["gen_postxg"]),
            ))
    return MetricTable(rows=rows)
