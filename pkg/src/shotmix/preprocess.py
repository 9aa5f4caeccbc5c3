"""Raw shot events to canonical goal-frame end points.

Input rows live in pitch coordinates (120 x 80 yards, goal line at x = 120,
goal center at y = 40).  The pipeline applies, in order:

1. post-bias correction of end_y for configured seasons (tracking providers
   draw posts wider than they are, biasing clicks near the posts outward),
2. linear projection of Saved/Blocked end points onto the goal line along
   the shot's last segment (height passes through),
3. conversion to goal-frame coordinates (y centered on the goal, z up),
4. removal of shots closer than min_distance_yd to the goal center,
5. optional y-reflection of left-footed shots so curl direction lines up.

Every dropped row lands in a rejection log with a reason code; output rows
plus rejections always add up to the input count.  Kept goals outside the
frame are possible data errors and are reported as anomalies, not dropped.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateTrajectoryError, InvalidParameterError
from .geometry import DEFAULT_FRAME, GoalFrame, GoalPoint, in_goal_frame

FIRST_HALF = "first"
SECOND_HALF = "second"

# Rejection-log reason codes.
REASON_PARSE = "parse_error"
REASON_MIN_DISTANCE = "min_distance"
REASON_DEGENERATE = "degenerate_trajectory"
REASON_NEGATIVE_Z = "negative_z"

ANOMALY_GOAL_OFF_FRAME = "goal_off_frame"


class Outcome(enum.Enum):
    SAVED = "Saved"
    GOAL = "Goal"
    OFF_TARGET = "OffTarget"
    BLOCKED = "Blocked"
    POST = "Post"


class BodyPart(enum.Enum):
    RIGHT_FOOT = "RightFoot"
    LEFT_FOOT = "LeftFoot"
    HEADER = "Header"
    OTHER = "Other"


_OUTCOME_LOOKUP = {o.value.replace(" ", "").casefold(): o for o in Outcome}
_BODY_LOOKUP = {b.value.replace(" ", "").casefold(): b for b in BodyPart}

RAW_FIELDS = (
    "player_id", "season_id", "timestamp", "outcome",
    "start_x", "start_y", "end_x", "end_y", "end_z",
    "body_part", "xg", "postxg",
)


@dataclass
class ShotRecord:
    """One raw shot event in pitch coordinates."""

    player_id: str
    season_id: str
    outcome: Outcome
    start_x: float
    start_y: float
    end_x: float
    end_y: float
    end_z: float
    body_part: BodyPart
    xg: float
    postxg: float
    timestamp: str | None = None


@dataclass
class CanonicalShot:
    """One cleaned shot with a goal-frame end point."""

    player_id: str
    season_id: str
    half: str
    end_point: GoalPoint
    outcome: Outcome
    is_goal: bool
    xg: float
    postxg_ext: float
    distance: float


@dataclass(frozen=True)
class PipelineConfig:
    min_distance_yd: float = 6.0
    reflect_left_foot: bool = True
    post_correction_seasons: tuple[str, ...] = ()
    inflated_half_width_yd: float = 0.30
    true_half_width_yd: float = 0.12
    correction_limit_yd: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "post_correction_seasons",
                           tuple(self.post_correction_seasons))
        if self.min_distance_yd < 0:
            raise InvalidParameterError(
                f"min_distance_yd must be >= 0, got {self.min_distance_yd}")
        if not (0 < self.true_half_width_yd <= self.inflated_half_width_yd
                < self.correction_limit_yd):
            raise InvalidParameterError(
                "post widths must satisfy 0 < true <= inflated < limit, got "
                f"true={self.true_half_width_yd} inflated={self.inflated_half_width_yd} "
                f"limit={self.correction_limit_yd}")

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidParameterError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "min_distance_yd": self.min_distance_yd,
            "reflect_left_foot": self.reflect_left_foot,
            "post_correction_seasons": list(self.post_correction_seasons),
            "inflated_half_width_yd": self.inflated_half_width_yd,
            "true_half_width_yd": self.true_half_width_yd,
            "correction_limit_yd": self.correction_limit_yd,
        }


@dataclass
class PipelineResult:
    shots: list[CanonicalShot]
    rejections: list[tuple[int, str]] = field(default_factory=list)
    anomalies: list[tuple[int, str]] = field(default_factory=list)


def correct_post_bias(
    end_y: float,
    inflated_half_width: float,
    true_half_width: float,
    frame: GoalFrame = DEFAULT_FRAME,
    limit: float = 1.0,
) -> float:
    """Remap pitch end_y near each post to undo inflated post widths.

    Piecewise linear around the nearest post center, continuous and
    monotone: offsets of inflated_half_width map to true_half_width,
    offsets at or beyond `limit` are unchanged, the post center itself is a
    fixed point.  With inflated == true this is the identity.
    """
    if not (0 < true_half_width <= inflated_half_width < limit):
        raise InvalidParameterError(
            "post widths must satisfy 0 < true <= inflated < limit, got "
            f"true={true_half_width} inflated={inflated_half_width} limit={limit}")
    posts = (frame.y_center - frame.width / 2.0, frame.y_center + frame.width / 2.0)
    post = min(posts, key=lambda p: abs(end_y - p))
    d = end_y - post
    mag = abs(d)
    if mag >= limit:
        return end_y
    if mag <= inflated_half_width:
        new_mag = mag * (true_half_width / inflated_half_width)
    else:
        slope = (limit - true_half_width) / (limit - inflated_half_width)
        new_mag = true_half_width + (mag - inflated_half_width) * slope
    return post + math.copysign(new_mag, d) if d != 0.0 else post


def project_to_goal_line(start, end, goal_line_x: float) -> float:
    """Pitch y where the segment start->end crosses the goal line.

    Height is not projected; callers keep the recorded z.  A segment with no
    x displacement cannot be projected.
    """
    sx, sy = float(start[0]), float(start[1])
    ex, ey = float(end[0]), float(end[1])
    if ex == goal_line_x:
        return ey
    if ex == sx:
        raise DegenerateTrajectoryError(
            f"shot segment has no x displacement (x={sx}); cannot project")
    return sy + (ey - sy) * (goal_line_x - sx) / (ex - sx)


def reflect_left_footed(p: GoalPoint, body_part: BodyPart) -> GoalPoint:
    """Mirror left-footed end points across the goal center line."""
    if body_part is BodyPart.LEFT_FOOT:
        return GoalPoint(-p.y, p.z)
    return p


def _timestamp_sort_key(records: Sequence[tuple[int, ShotRecord]]):
    """Within-season ordering: timestamps when all rows have them, else input order."""
    stamps = [rec.timestamp for _, rec in records]
    if any(s is None or s == "" for s in stamps):
        return None
    try:
        numeric = [float(s) for s in stamps]
        return {idx: val for (idx, _), val in zip(records, numeric)}
    except ValueError:
        return {idx: str(rec.timestamp) for idx, rec in records}


def assign_halves(kept: Sequence[tuple[int, ShotRecord]]) -> dict[int, str]:
    """Split each season's kept shots into first/second half by median rank."""
    by_season: dict[str, list[tuple[int, ShotRecord]]] = {}
    for idx, rec in kept:
        by_season.setdefault(rec.season_id, []).append((idx, rec))
    halves: dict[int, str] = {}
    for season_rows in by_season.values():
        key = _timestamp_sort_key(season_rows)
        if key is None:
            ordered = [idx for idx, _ in season_rows]
        else:
            ordered = [idx for idx, _ in sorted(season_rows, key=lambda ir: (key[ir[0]], ir[0]))]
        cut = (len(ordered) + 1) // 2
        for rank, idx in enumerate(ordered):
            halves[idx] = FIRST_HALF if rank < cut else SECOND_HALF
    return halves


def run_pipeline(
    records: Sequence[ShotRecord],
    config: PipelineConfig = PipelineConfig(),
    frame: GoalFrame = DEFAULT_FRAME,
    first_row: int = 1,
) -> PipelineResult:
    """Run the cleaning pipeline over parsed records.

    Row numbers in the logs are 1-based positions in `records` (offset by
    first_row so callers can account for rows lost during parsing).
    """
    kept: list[tuple[int, ShotRecord]] = []
    staged: dict[int, tuple[GoalPoint, float]] = {}
    rejections: list[tuple[int, str]] = []
    for offset, rec in enumerate(records):
        row = first_row + offset
        if rec.end_z < 0.0:
            rejections.append((row, REASON_NEGATIVE_Z))
            continue
        end_y = rec.end_y
        if rec.season_id in config.post_correction_seasons:
            end_y = correct_post_bias(
                end_y,
                config.inflated_half_width_yd,
                config.true_half_width_yd,
                frame,
                limit=config.correction_limit_yd,
            )
        if rec.outcome in (Outcome.SAVED, Outcome.BLOCKED):
            try:
                end_y = project_to_goal_line(
                    (rec.start_x, rec.start_y), (rec.end_x, end_y), frame.goal_line_x)
            except DegenerateTrajectoryError:
                rejections.append((row, REASON_DEGENERATE))
                continue
        point = GoalPoint(end_y - frame.y_center, rec.end_z)
        distance = math.hypot(rec.start_x - frame.goal_line_x,
                              rec.start_y - frame.y_center)
        if distance < config.min_distance_yd:
            rejections.append((row, REASON_MIN_DISTANCE))
            continue
        if config.reflect_left_foot:
            point = reflect_left_footed(point, rec.body_part)
        kept.append((row, rec))
        staged[row] = (point, distance)

    halves = assign_halves(kept)
    shots: list[CanonicalShot] = []
    anomalies: list[tuple[int, str]] = []
    for row, rec in kept:
        point, distance = staged[row]
        is_goal = rec.outcome is Outcome.GOAL
        if is_goal and not in_goal_frame(frame, point):
            anomalies.append((row, ANOMALY_GOAL_OFF_FRAME))
        shots.append(CanonicalShot(
            player_id=rec.player_id,
            season_id=rec.season_id,
            half=halves[row],
            end_point=point,
            outcome=rec.outcome,
            is_goal=is_goal,
            xg=rec.xg,
            postxg_ext=rec.postxg,
            distance=distance,
        ))
    return PipelineResult(shots=shots, rejections=rejections, anomalies=anomalies)


# ---------------------------------------------------------------------------
# parsing and file IO


def parse_record(row: dict) -> ShotRecord:
    """Build a ShotRecord from a raw mapping; raises ValueError on bad rows."""
    missing = [k for k in RAW_FIELDS if k not in row and k != "timestamp"]
    if missing:
        raise ValueError(f"missing fields: {missing}")
    outcome_key = str(row["outcome"]).replace(" ", "").replace("_", "").casefold()
    if outcome_key not in _OUTCOME_LOOKUP:
        raise ValueError(f"unknown outcome {row['outcome']!r}")
    body_key = str(row["body_part"]).replace(" ", "").replace("_", "").casefold()
    if body_key not in _BODY_LOOKUP:
        raise ValueError(f"unknown body_part {row['body_part']!r}")
    numbers = {}
    for name in ("start_x", "start_y", "end_x", "end_y", "end_z", "xg", "postxg"):
        try:
            numbers[name] = float(row[name])
        except (TypeError, ValueError):
            raise ValueError(f"field {name} is not a number: {row[name]!r}")
        if not math.isfinite(numbers[name]):
            raise ValueError(f"field {name} is not finite: {row[name]!r}")
    ts = row.get("timestamp")
    if ts is not None:
        ts = str(ts)
    return ShotRecord(
        player_id=str(row["player_id"]),
        season_id=str(row["season_id"]),
        timestamp=ts,
        outcome=_OUTCOME_LOOKUP[outcome_key],
        body_part=_BODY_LOOKUP[body_key],
        **numbers,
    )


def _iter_raw_rows(path: Path) -> Iterable[dict]:
    if path.suffix.lower() == ".csv":
        with open(path, newline="") as fh:
            yield from csv.DictReader(fh)
    else:
        with open(path) as fh:
            for line in fh:
                if line.strip():
                    yield json.loads(line)


def preprocess_file(
    path,
    config: PipelineConfig = PipelineConfig(),
    frame: GoalFrame = DEFAULT_FRAME,
) -> PipelineResult:
    """Parse a raw CSV or JSON-lines file and run the pipeline.

    Malformed rows become parse_error rejections and the run continues.
    """
    path = Path(path)
    records: list[ShotRecord] = []
    parse_rejections: list[tuple[int, str]] = []
    ordered_rows: list[int] = []
    row = 0
    for raw in _iter_raw_rows(path):
        row += 1
        try:
            records.append(parse_record(raw))
            ordered_rows.append(row)
        except (ValueError, KeyError) as exc:
            parse_rejections.append((row, f"{REASON_PARSE}: {exc}"))
    result = run_pipeline(records, config, frame)
    # Remap pipeline row numbers (positions among parsed records) back to
    # input-file row numbers, then merge in the parse failures.
    remap = {i + 1: ordered_rows[i] for i in range(len(ordered_rows))}
    rejections = [(remap[r], reason) for r, reason in result.rejections]
    anomalies = [(remap[r], code) for r, code in result.anomalies]
    rejections.extend(parse_rejections)
    rejections.sort()
    return PipelineResult(shots=result.shots, rejections=rejections, anomalies=anomalies)


def write_canonical(path, shots: Sequence[CanonicalShot]) -> None:
    """Write canonical shots as JSON lines."""
    with open(path, "w") as fh:
        for s in shots:
            fh.write(json.dumps({
                "player_id": s.player_id,
                "season_id": s.season_id,
                "half": s.half,
                "end_y": s.end_point.y,
                "end_z": s.end_point.z,
                "outcome": s.outcome.value,
                "is_goal": s.is_goal,
                "xg": s.xg,
                "postxg_ext": s.postxg_ext,
                "distance": s.distance,
            }, sort_keys=True))
            fh.write("\n")


def read_canonical(path) -> list[CanonicalShot]:
    shots = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            shots.append(CanonicalShot(
                player_id=d["player_id"],
                season_id=d["season_id"],
                half=d["half"],
                end_point=GoalPoint(float(d["end_y"]), float(d["end_z"])),
                outcome=Outcome(d["outcome"]),
                is_goal=bool(d["is_goal"]),
                xg=float(d["xg"]),
                postxg_ext=float(d["postxg_ext"]),
                distance=float(d["distance"]),
            ))
    return shots


def write_log(path, entries: Sequence[tuple[int, str]], label: str = "reason") -> None:
    """Write a (row_number, reason) log as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row_number", label])
        for row, reason in entries:
            writer.writerow([row, reason])


def shots_array(shots: Sequence[CanonicalShot]) -> np.ndarray:
    """End points of a shot sequence as an (n, 2) float array."""
    return np.array([[s.end_point.y, s.end_point.z] for s in shots],
                    dtype=float).reshape(len(shots), 2)
