"""Per-player mixture weights shrunk toward the global weights.

Each player's weights theta get a Dirichlet(alpha * beta) prior centered on
the global weights beta.  The EM M-step is the posterior-mean style update

    theta_k = (sum_i r_ik + alpha * beta_k) / (n_shots + alpha)

whose pseudo-counts alpha * beta_k keep every update strictly positive, so
no clamping is needed: few shots mean theta stays near beta, many shots let
the data dominate.  Players with no shots get theta = beta exactly.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import kernels
from .errors import InvalidInputError, InvalidParameterError
from .mixture import MixtureModel, model_hash

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 30.0
DEFAULT_MAX_ITER = 200
DEFAULT_TOL_PER_SHOT = 1e-8

# Per-shot log-likelihood floor for shots with no density under any component.
LOGLIK_FLOOR = float(np.log(1e-300))


@dataclass(frozen=True)
class HierarchyConfig:
    """Shrinkage strength and EM stopping rule for player-level fits."""

    alpha: float = DEFAULT_ALPHA
    max_iter: int = DEFAULT_MAX_ITER
    tol_per_shot: float = DEFAULT_TOL_PER_SHOT

    def __post_init__(self):
        if not (self.alpha > 0 and np.isfinite(self.alpha)):
            raise InvalidParameterError(f"alpha must be positive and finite, got {self.alpha}")
        if self.max_iter < 1:
            raise InvalidParameterError(f"max_iter must be >= 1, got {self.max_iter}")


@dataclass
class PlayerWeights:
    theta: np.ndarray
    shot_count: int
    iterations: int = 0
    log_posterior: float = float("nan")


def _player_objective(loglik, theta, beta, alpha):
    # log-posterior up to a constant: loglik + sum_k alpha*beta_k*log(theta_k).
    # beta_k = 0 forces theta_k = 0; those terms contribute nothing.
    live = beta > 0
    return loglik + float(alpha * np.sum(beta[live] * np.log(theta[live])))


def _fit_one(pts: np.ndarray, model: MixtureModel, config: HierarchyConfig) -> PlayerWeights:
    beta = model.weights
    n = pts.shape[0]
    if n == 0:
        return PlayerWeights(theta=beta.copy(), shot_count=0, iterations=0,
                             log_posterior=_player_objective(0.0, beta, beta, config.alpha))
    log_dens = model.log_density_matrix(pts)
    theta = beta.copy()
    prev = -np.inf
    iterations = 0
    with np.errstate(divide="ignore"):
        for _ in range(config.max_iter):
            log_t = np.log(theta, out=np.full(theta.shape, -np.inf), where=theta > 0)
            loglik, colsums = kernels.em_estep(log_dens, log_t)
            obj = _player_objective(loglik, theta, beta, config.alpha)
            iterations += 1
            if obj - prev < config.tol_per_shot * n and iterations > 1:
                break
            prev = obj
            theta = (colsums + config.alpha * beta) / (n + config.alpha)
    return PlayerWeights(theta=theta, shot_count=n, iterations=iterations, log_posterior=obj)


def fit_player_weights(
    shots_by_player: Mapping,
    model: MixtureModel,
    config: HierarchyConfig = HierarchyConfig(),
) -> dict:
    """Fit shrunk weights for every key in shots_by_player.

    Values are (n, 2) arrays of goal-frame end points (possibly empty).
    Keys are opaque; callers may use player ids or composite period keys.
    """
    if model.n_components == 0:
        raise InvalidInputError("model has no components")
    out = {}
    for key, pts in shots_by_player.items():
        pts = np.ascontiguousarray(np.asarray(pts, dtype=float).reshape(-1, 2))
        if pts.size and np.any(pts[:, 1] < 0.0):
            raise InvalidInputError(
                f"player {key!r} has end points below the support (z < 0)")
        out[key] = _fit_one(pts, model, config)
    return out


def log_likelihood_per_shot(shots: np.ndarray, weights: np.ndarray, model: MixtureModel) -> float:
    """Mean per-shot log density of the weighted mixture over the shots.

    Shots with zero density under every component contribute log(1e-300).
    """
    pts = np.ascontiguousarray(np.asarray(shots, dtype=float).reshape(-1, 2))
    if pts.shape[0] == 0:
        raise InvalidInputError("cannot score an empty shot set")
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if weights.shape[0] != model.n_components:
        raise InvalidInputError(
            f"{weights.shape[0]} weights for {model.n_components} components"
        )
    log_dens = model.log_density_matrix(pts)
    with np.errstate(divide="ignore"):
        log_w = np.log(weights, out=np.full(weights.shape, -np.inf), where=weights > 0)
    scored = log_dens + log_w[None, :]
    row_max = np.max(scored, axis=1)
    finite = row_max > -np.inf
    rows = np.full(pts.shape[0], LOGLIK_FLOOR)
    if finite.any():
        sub = scored[finite] - row_max[finite, None]
        rows[finite] = np.log(np.exp(sub).sum(axis=1)) + row_max[finite]
    rows = np.maximum(rows, LOGLIK_FLOOR)
    floored = int(np.sum(rows <= LOGLIK_FLOOR))
    if floored:
        logger.info("log_likelihood_per_shot: %d of %d shots hit the density floor",
                    floored, pts.shape[0])
    return float(rows.mean())


# ---------------------------------------------------------------------------
# persistence


def save_player_weights(path, weights_map: Mapping[str, PlayerWeights],
                        model: MixtureModel, alpha: float) -> None:
    """Write a JSON map id -> {theta, shot_count} tagged with the model hash."""
    payload = {
        "model_hash": model_hash(model),
        "alpha": alpha,
        "players": {
            str(key): {"theta": [float(t) for t in pw.theta], "shot_count": pw.shot_count}
            for key, pw in sorted(weights_map.items(), key=lambda kv: str(kv[0]))
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_player_weights(path):
    """Read a player-weights file; returns (map, model_hash, alpha)."""
    with open(path) as fh:
        payload = json.load(fh)
    try:
        weights_map = {
            key: PlayerWeights(theta=np.array(entry["theta"], dtype=float),
                               shot_count=int(entry["shot_count"]))
            for key, entry in payload["players"].items()
        }
        return weights_map, payload["model_hash"], float(payload["alpha"])
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"malformed player-weights file {path}: {exc}") from exc


def check_model_hash(file_hash: str, model: MixtureModel, what: str) -> None:
    """Raise when a dependent artifact was fit against a different model."""
    from .errors import ModelHashMismatchError

    actual = model_hash(model)
    if file_hash != actual:
        raise ModelHashMismatchError(
            f"{what} was fit against model {file_hash[:12]}..., "
            f"but the supplied model hashes to {actual[:12]}..."
        )
