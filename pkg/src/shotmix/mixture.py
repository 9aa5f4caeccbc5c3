"""Saturated mixture of truncated Gaussians over the goal mouth.

The component set is a fixed grid: means on an n_y x n_z lattice spanning
the goal frame (edges inclusive), each mean carrying one component per
covariance scale lambda.  Only the mixture weights are estimated, by MAP-EM
under a symmetric Dirichlet(1/2) prior whose M-step clamp drives the weights
of superfluous components to exactly zero.  Components below a threshold are
then pruned and the weights refit on the surviving set.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .errors import (
    ConvergenceError,
    InvalidInputError,
    InvalidParameterError,
    PruneError,
)
from .geometry import DEFAULT_FRAME, GoalFrame, TruncatedGaussian

DEFAULT_PRIOR_ALPHA = 0.5
DEFAULT_PRUNE_THRESHOLD = 0.01
DEFAULT_MAX_ITER = 500
DEFAULT_TOL_PER_SHOT = 1e-8

# Dispersion calibration anchors: sample covariances of end points around
# the aim point, measured at two aiming heights (yards).  Entries are
# [[var_y, cov_yz], [cov_yz, var_z]].
COV_ANCHOR_LOW_Z = 0.14
COV_ANCHOR_HIGH_Z = 1.75
COV_ANCHOR_LOW = np.array([[0.704, 0.157], [0.157, 0.297]])
COV_ANCHOR_HIGH = np.array([[0.782, 0.442], [0.442, 0.742]])

EIGENVALUE_FLOOR = 1e-4

# Objective contribution of a weight clamped to zero: the Dirichlet penalty
# is evaluated at this floor instead of 0, so removing a component adds a
# large fixed boundary term and the objective stays finite and monotone.
_DEAD_WEIGHT_FLOOR = 1e-300


@dataclass(frozen=True)
class GridSpec:
    """Mean lattice dimensions and covariance scales for the saturated grid."""

    n_y: int = 11
    n_z: int = 6
    lambdas: tuple[float, ...] = (1.0, 3.8)

    def __post_init__(self):
        if self.n_y < 1 or self.n_z < 1:
            raise InvalidParameterError(f"grid must be at least 1x1, got {self.n_y}x{self.n_z}")
        if len(self.lambdas) == 0 or any(l <= 0 for l in self.lambdas):
            raise InvalidParameterError(f"lambdas must be positive, got {self.lambdas}")
        object.__setattr__(self, "lambdas", tuple(float(l) for l in self.lambdas))

    @property
    def n_components(self) -> int:
        return self.n_y * self.n_z * len(self.lambdas)


def interpolate_covariance(z: float, floor: float = EIGENVALUE_FLOOR) -> np.ndarray:
    """Entrywise-linear covariance between the two calibration anchors.

    Extrapolates linearly outside [COV_ANCHOR_LOW_Z, COV_ANCHOR_HIGH_Z]; if
    extrapolation breaks positive definiteness, eigenvalues are floored at
    `floor` and the matrix reassembled.
    """
    if not np.isfinite(z) or z < 0.0:
        raise InvalidParameterError(f"aim height must be finite and >= 0, got {z}")
    t = (z - COV_ANCHOR_LOW_Z) / (COV_ANCHOR_HIGH_Z - COV_ANCHOR_LOW_Z)
    # Two-sided form so both anchors are reproduced exactly at t = 0 and t = 1.
    cov = (1.0 - t) * COV_ANCHOR_LOW + t * COV_ANCHOR_HIGH
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
    if det <= floor * floor or cov[0, 0] <= 0.0 or cov[1, 1] <= 0.0:
        vals, vecs = np.linalg.eigh(cov)
        vals = np.maximum(vals, floor)
        cov = (vecs * vals) @ vecs.T
        cov = 0.5 * (cov + cov.T)
    return cov


@dataclass(frozen=True, eq=False)
class MixtureComponent:
    """One grid component: a mean, its base covariance, and a scale lambda."""

    mean: np.ndarray
    base_cov: np.ndarray
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).reshape(2))
        object.__setattr__(self, "base_cov", np.asarray(self.base_cov, dtype=float).reshape(2, 2))
        if self.lam <= 0:
            raise InvalidParameterError(f"lambda must be positive, got {self.lam}")

    @property
    def cov(self) -> np.ndarray:
        """Effective covariance lambda * base_cov."""
        return self.lam * self.base_cov

    def as_truncated(self) -> TruncatedGaussian:
        return TruncatedGaussian(self.mean, self.cov)


def build_grid(spec: GridSpec = GridSpec(), frame: GoalFrame = DEFAULT_FRAME) -> list[MixtureComponent]:
    """Lay out the component grid over the goal frame, edges inclusive.

    Means run y in [-width/2, width/2] (n_y points) and z in [0, height]
    (n_z points).  Component order is z-major, then y, then lambda.
    """
    ys = np.linspace(-frame.width / 2.0, frame.width / 2.0, spec.n_y)
    zs = np.linspace(0.0, frame.height, spec.n_z)
    components = []
    for z in zs:
        base = interpolate_covariance(z)
        for y in ys:
            for lam in spec.lambdas:
                components.append(MixtureComponent(np.array([y, z]), base, lam))
    return components


def component_arrays(components: Sequence[MixtureComponent]):
    """Stack means and effective covariances into (K, 2) and (K, 2, 2) arrays."""
    means = np.array([c.mean for c in components], dtype=float).reshape(len(components), 2)
    covs = np.array([c.cov for c in components], dtype=float).reshape(len(components), 2, 2)
    return means, covs


@dataclass
class FitDiagnostics:
    iterations: int
    final_log_posterior: float
    converged: bool
    objective_history: np.ndarray = field(repr=False)


@dataclass(eq=False)
class MixtureModel:
    """A component set with fitted weights and the fit's provenance."""

    components: list[MixtureComponent]
    weights: np.ndarray
    frame: GoalFrame = DEFAULT_FRAME
    grid_spec: GridSpec | None = None
    trimmed: bool = False
    prune_threshold: float | None = None
    diagnostics: FitDiagnostics | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(self.components) != self.weights.shape[0]:
            raise InvalidInputError(
                f"{len(self.components)} components but {self.weights.shape[0]} weights"
            )
        if len(self.components) == 0:
            raise InvalidInputError("model must have at least one component")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-6:
            raise InvalidInputError("weights must be a simplex")

    @property
    def n_components(self) -> int:
        return len(self.components)

    def log_density_matrix(self, pts: np.ndarray) -> np.ndarray:
        pts = np.ascontiguousarray(np.asarray(pts, dtype=float).reshape(-1, 2))
        means, covs = component_arrays(self.components)
        return kernels.trunc_log_density_matrix(pts, means, covs)


def _objective(loglik: float, weights: np.ndarray, prior_alpha: float) -> float:
    penalty = (prior_alpha - 1.0) * np.sum(np.log(np.maximum(weights, _DEAD_WEIGHT_FLOOR)))
    return loglik + float(penalty)


def fit_global_weights(
    shots: np.ndarray,
    components: Sequence[MixtureComponent],
    prior_alpha: float = DEFAULT_PRIOR_ALPHA,
    *,
    max_iter: int = DEFAULT_MAX_ITER,
    tol_per_shot: float = DEFAULT_TOL_PER_SHOT,
    return_diagnostics: bool = False,
):
    """MAP-EM fit of mixture weights over a fixed component set.

    The E-step computes responsibilities under the current weights; the
    M-step sets beta_k proportional to max(0, sum_i r_ik + prior_alpha - 1)
    and renormalizes, so weights can hit exactly zero and stay there.  Stops
    when the penalized log-posterior improves by less than tol_per_shot per
    shot, or at max_iter.

    Returns the weight simplex, or (weights, FitDiagnostics) when
    return_diagnostics is set.
    """
    pts = np.ascontiguousarray(np.asarray(shots, dtype=float).reshape(-1, 2))
    n = pts.shape[0]
    k = len(components)
    if n == 0:
        raise InvalidInputError("cannot fit weights on an empty shot set")
    if np.any(pts[:, 1] < 0.0):
        raise InvalidInputError("end points below the support (z < 0); clean the corpus first")
    if k == 0:
        raise InvalidInputError("cannot fit weights with no components")
    if prior_alpha <= 0:
        raise InvalidParameterError(f"prior_alpha must be positive, got {prior_alpha}")

    means, covs = component_arrays(components)
    log_dens = kernels.trunc_log_density_matrix(pts, means, covs)

    weights = np.full(k, 1.0 / k)
    history = []
    converged = False
    with np.errstate(divide="ignore"):
        for _ in range(max_iter):
            log_w = np.log(weights, out=np.full(k, -np.inf), where=weights > 0)
            loglik, colsums = kernels.em_estep(log_dens, log_w)
            obj = _objective(loglik, weights, prior_alpha)
            if not math.isfinite(obj):
                raise ConvergenceError(
                    "penalized log-posterior is not finite; every shot has zero "
                    "density under every component"
                )
            history.append(obj)
            if len(history) > 1 and history[-1] - history[-2] < tol_per_shot * n:
                converged = True
                break
            clamped = np.maximum(colsums + (prior_alpha - 1.0), 0.0)
            total = clamped.sum()
            if total <= 0.0:
                raise ConvergenceError(
                    "all component weights clamped to zero; the corpus cannot "
                    "support any component under this prior"
                )
            weights = clamped / total

    diag = FitDiagnostics(
        iterations=len(history),
        final_log_posterior=history[-1],
        converged=converged,
        objective_history=np.array(history),
    )
    if return_diagnostics:
        return weights, diag
    return weights


def prune(model: MixtureModel, threshold: float = DEFAULT_PRUNE_THRESHOLD) -> MixtureModel:
    """Drop components with weight below threshold and renormalize the rest."""
    if not (0.0 <= threshold < 1.0):
        raise InvalidParameterError(f"prune threshold must be in [0, 1), got {threshold}")
    keep = model.weights >= threshold
    if not keep.any():
        raise PruneError(
            f"pruning at {threshold} would remove all {model.n_components} components"
        )
    kept_weights = model.weights[keep]
    return MixtureModel(
        components=[c for c, k in zip(model.components, keep) if k],
        weights=kept_weights / kept_weights.sum(),
        frame=model.frame,
        grid_spec=model.grid_spec,
        trimmed=True,
        prune_threshold=threshold,
        diagnostics=model.diagnostics,
    )


def fit_mixture(
    shots: np.ndarray,
    spec: GridSpec = GridSpec(),
    frame: GoalFrame = DEFAULT_FRAME,
    prior_alpha: float = DEFAULT_PRIOR_ALPHA,
    *,
    max_iter: int = DEFAULT_MAX_ITER,
    tol_per_shot: float = DEFAULT_TOL_PER_SHOT,
) -> MixtureModel:
    """Build the saturated grid and fit its weights on a shot corpus."""
    components = build_grid(spec, frame)
    weights, diag = fit_global_weights(
        shots, components, prior_alpha,
        max_iter=max_iter, tol_per_shot=tol_per_shot, return_diagnostics=True,
    )
    return MixtureModel(
        components=components, weights=weights, frame=frame,
        grid_spec=spec, diagnostics=diag,
    )


def prune_and_refit(
    model: MixtureModel,
    shots: np.ndarray,
    threshold: float = DEFAULT_PRUNE_THRESHOLD,
    prior_alpha: float = DEFAULT_PRIOR_ALPHA,
    *,
    max_iter: int = DEFAULT_MAX_ITER,
    tol_per_shot: float = DEFAULT_TOL_PER_SHOT,
) -> MixtureModel:
    """Prune low-weight components, then refit weights on the survivors."""
    trimmed = prune(model, threshold)
    weights, diag = fit_global_weights(
        shots, trimmed.components, prior_alpha,
        max_iter=max_iter, tol_per_shot=tol_per_shot, return_diagnostics=True,
    )
    trimmed.weights = weights
    trimmed.diagnostics = diag
    return trimmed


# ---------------------------------------------------------------------------
# persistence


def _model_payload(model: MixtureModel) -> dict:
    return {
        "frame": {
            "width": model.frame.width,
            "height": model.frame.height,
            "y_center": model.frame.y_center,
            "goal_line_x": model.frame.goal_line_x,
        },
        "grid_spec": (
            None if model.grid_spec is None else {
                "n_y": model.grid_spec.n_y,
                "n_z": model.grid_spec.n_z,
                "lambdas": list(model.grid_spec.lambdas),
            }
        ),
        "components": [
            {
                "mean_y": c.mean[0],
                "mean_z": c.mean[1],
                "base_cov_yy": c.base_cov[0, 0],
                "base_cov_yz": c.base_cov[0, 1],
                "base_cov_zz": c.base_cov[1, 1],
                "lambda": c.lam,
            }
            for c in model.components
        ],
        "weights": [float(w) for w in model.weights],
        "trimmed": model.trimmed,
        "prune_threshold": model.prune_threshold,
    }


def model_hash(model: MixtureModel) -> str:
    """sha256 over the canonical JSON of the model, ignoring fit diagnostics."""
    blob = json.dumps(_model_payload(model), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def save_model(path, model: MixtureModel) -> None:
    payload = _model_payload(model)
    payload["diagnostics"] = (
        None if model.diagnostics is None else {
            "iterations": model.diagnostics.iterations,
            "final_log_posterior": model.diagnostics.final_log_posterior,
            "converged": model.diagnostics.converged,
        }
    )
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_model(path) -> MixtureModel:
    with open(path) as fh:
        payload = json.load(fh)
    try:
        frame = GoalFrame(**payload["frame"])
        spec = payload["grid_spec"]
        grid_spec = None if spec is None else GridSpec(
            n_y=spec["n_y"], n_z=spec["n_z"], lambdas=tuple(spec["lambdas"])
        )
        components = [
            MixtureComponent(
                mean=np.array([c["mean_y"], c["mean_z"]]),
                base_cov=np.array([
                    [c["base_cov_yy"], c["base_cov_yz"]],
                    [c["base_cov_yz"], c["base_cov_zz"]],
                ]),
                lam=c["lambda"],
            )
            for c in payload["components"]
        ]
        diag = payload.get("diagnostics")
        diagnostics = None if diag is None else FitDiagnostics(
            iterations=diag["iterations"],
            final_log_posterior=diag["final_log_posterior"],
            converged=diag["converged"],
            objective_history=np.empty(0),
        )
        return MixtureModel(
            components=components,
            weights=np.array(payload["weights"], dtype=float),
            frame=frame,
            grid_spec=grid_spec,
            trimmed=payload["trimmed"],
            prune_threshold=payload["prune_threshold"],
            diagnostics=diagnostics,
        )
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"malformed model file {path}: {exc}") from exc
