"""Synthetic shot corpora with known ground truth.

Each simulated player draws true weights theta* ~ Dirichlet(alpha * beta)
around the generator's global weights, then every shot picks a component
from theta*, an end point from that component's truncated Gaussian, and a
goal flag from Bernoulli(postxg(end point)).  Off-frame points can never be
goals because postxg is zero there.  Halves alternate shot by shot so both
season halves get an equal share of every player's shots.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidParameterError
from .geometry import GoalPoint, in_goal_frame, sample
from .mixture import MixtureModel
from .preprocess import FIRST_HALF, SECOND_HALF, CanonicalShot, Outcome
from .valuation import PostXgModel, postxg_batch

DEFAULT_SIM_ALPHA = 30.0
# Canonical shots carry a start distance; simulated shots use one plausible
# constant since nothing downstream of the distance filter consumes it.
SIM_DISTANCE = 12.0


@dataclass(frozen=True, eq=False)
class SimulationSpec:
    """Generator settings: who shoots, how often, and from which model."""

    model: MixtureModel
    postxg_model: PostXgModel
    n_players: int = 100
    shots_per_player: int | tuple[int, int] = 100
    alpha: float = DEFAULT_SIM_ALPHA
    seed: int = 0
    season_id: str = "sim"
    player_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.player_ids is not None:
            object.__setattr__(self, "player_ids", tuple(self.player_ids))
            object.__setattr__(self, "n_players", len(self.player_ids))
        if self.n_players < 1:
            raise InvalidParameterError(f"need at least one player, got {self.n_players}")
        if self.alpha <= 0:
            raise InvalidParameterError(f"alpha must be positive, got {self.alpha}")
        spp = self.shots_per_player
        if isinstance(spp, tuple):
            lo, hi = spp
            if not (0 <= lo <= hi):
                raise InvalidParameterError(f"bad shots_per_player range {spp}")
        elif spp < 0:
            raise InvalidParameterError(f"shots_per_player must be >= 0, got {spp}")

    def ids(self) -> list[str]:
        if self.player_ids is not None:
            return list(self.player_ids)
        width = max(4, len(str(self.n_players)))
        return [f"P{i + 1:0{width}d}" for i in range(self.n_players)]


def _draw_theta(rng: np.random.Generator, beta: np.ndarray, alpha: float) -> np.ndarray:
    """Dirichlet(alpha * beta) via normalized gammas; zero weights stay zero."""
    shape = alpha * beta
    gam = np.where(shape > 0, rng.gamma(np.maximum(shape, 1e-300)), 0.0)
    total = gam.sum()
    if total <= 0.0:
        # All gamma draws underflowed; fall back to the prior mean.
        return beta.copy()
    return gam / total


def simulate_corpus(spec: SimulationSpec):
    """Generate a canonical corpus; returns (shots, ground_truth dict).

    Deterministic given spec.seed: every player uses an independent child
    generator keyed by (seed, player index), so the corpus is reproducible
    regardless of how players might be distributed over workers.
    """
    model = spec.model
    beta = model.weights
    k = model.n_components
    ids = spec.ids()
    shots: list[CanonicalShot] = []
    theta_truth: dict[str, list[float]] = {}
    all_probs: list[np.ndarray] = []

    for i, player_id in enumerate(ids):
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(entropy=spec.seed, spawn_key=(i,))))
        theta = _draw_theta(rng, beta, spec.alpha)
        theta_truth[player_id] = [float(t) for t in theta]
        if isinstance(spec.shots_per_player, tuple):
            lo, hi = spec.shots_per_player
            n = int(rng.integers(lo, hi + 1))
        else:
            n = int(spec.shots_per_player)
        if n == 0:
            continue
        comp_idx = rng.choice(k, size=n, p=theta)
        points = np.empty((n, 2))
        for j in range(k):
            mask = comp_idx == j
            cnt = int(mask.sum())
            if cnt:
                points[mask] = sample(model.components[j].as_truncated(), rng, size=cnt)
        probs = postxg_batch(spec.postxg_model, model.frame, points)
        goals = rng.random(n) < probs
        all_probs.append(probs)
        for s in range(n):
            point = GoalPoint(float(points[s, 0]), float(points[s, 1]))
            if goals[s]:
                outcome = Outcome.GOAL
            elif in_goal_frame(model.frame, point):
                outcome = Outcome.SAVED
            else:
                outcome = Outcome.OFF_TARGET
            shots.append(CanonicalShot(
                player_id=player_id,
                season_id=spec.season_id,
                half=FIRST_HALF if s % 2 == 0 else SECOND_HALF,
                end_point=point,
                outcome=outcome,
                is_goal=bool(goals[s]),
                xg=0.0,  # corpus mean filled in below
                postxg_ext=float(probs[s]),
                distance=SIM_DISTANCE,
            ))

    if shots:
        mean_postxg = float(np.concatenate(all_probs).mean())
        for s in shots:
            s.xg = mean_postxg

    ground_truth = {
        "alpha": spec.alpha,
        "seed": spec.seed,
        "season_id": spec.season_id,
        "global_weights": [float(b) for b in beta],
        "players": theta_truth,
    }
    return shots, ground_truth


# Demo generator used when no fitted model is supplied: a sparse subset of
# the default grid (component index = (z_row * n_y + y_col) * n_lambdas +
# lambda_index) with hand-picked weights, and a postxg surface that favors
# the corners over the center.
_DEMO_COMPONENT_INDEXES = (2, 10, 18, 28, 36, 44, 64, 92, 104, 121)
_DEMO_WEIGHTS = (0.16, 0.14, 0.16, 0.10, 0.10, 0.07, 0.07, 0.06, 0.06, 0.08)
_DEMO_POSTXG_COEF = (-1.5, 0.0, 0.10, 0.0, 0.55, 0.0, 0.0)


def default_generator():
    """A self-contained (MixtureModel, PostXgModel) pair for demo corpora."""
    from .mixture import GridSpec, build_grid

    spec = GridSpec()
    grid = build_grid(spec)
    components = [grid[i] for i in _DEMO_COMPONENT_INDEXES]
    model = MixtureModel(
        components=components,
        weights=np.array(_DEMO_WEIGHTS),
        grid_spec=spec,
        trimmed=True,
        prune_threshold=None,
    )
    return model, PostXgModel(coefficients=np.array(_DEMO_POSTXG_COEF))


def save_ground_truth(path, ground_truth: dict) -> None:
    with open(path, "w") as fh:
        json.dump(ground_truth, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_ground_truth(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
