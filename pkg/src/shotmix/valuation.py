"""Post-shot goal probability and Monte Carlo component values.

The on-frame goal probability is a logistic model with a cubic polynomial
in each goal-plane coordinate:

    log-odds(y, z) = b0 + b1*y + b2*y^2 + b3*y^3 + b4*z + b5*z^2 + b6*z^3

Off-frame points always score zero.  Fitting is ridge-penalized maximum
likelihood by damped Newton; the penalty scales with the number of
observations so duplicating a training set leaves coefficients unchanged.
A component's value is the expected goal probability of its end points,
estimated by Monte Carlo over truncated-Gaussian draws.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .backend import parallel_map
from .errors import (
    ConvergenceError,
    DegenerateDataError,
    InvalidInputError,
    InvalidParameterError,
)
from .geometry import DEFAULT_FRAME, GoalFrame, sample
from .mixture import MixtureComponent, MixtureModel, model_hash

logger = logging.getLogger(__name__)

COEF_NAMES = ("intercept", "y", "y2", "y3", "z", "z2", "z3")

DEFAULT_RIDGE = 1e-4
DEFAULT_MAX_ITER = 100
GRAD_TOL = 1e-8
DEFAULT_VALUE_SAMPLES = 100_000


@dataclass(frozen=True, eq=False)
class PostXgModel:
    """Cubic-logit goal probability on the goal plane; zero off frame."""

    coefficients: np.ndarray
    ridge: float = DEFAULT_RIDGE

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if coef.shape[0] != len(COEF_NAMES):
            raise InvalidParameterError(
                f"expected {len(COEF_NAMES)} coefficients, got {coef.shape[0]}"
            )
        if not np.all(np.isfinite(coef)):
            raise InvalidParameterError("coefficients must be finite")
        object.__setattr__(self, "coefficients", coef)


def design_matrix(pts: np.ndarray) -> np.ndarray:
    """Feature matrix [1, y, y^2, y^3, z, z^2, z^3] for (n, 2) points."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    y = pts[:, 0]
    z = pts[:, 1]
    return np.column_stack([np.ones_like(y), y, y * y, y ** 3, z, z * z, z ** 3])


def postxg_batch(model: PostXgModel, frame: GoalFrame, pts: np.ndarray) -> np.ndarray:
    """Goal probabilities for (n, 2) points; exactly 0 outside the frame."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    logits = design_matrix(pts) @ model.coefficients
    # Clipping the logit keeps exp() in range; probabilities saturate anyway.
    probs = 1.0 / (1.0 + np.exp(-np.clip(logits, -500.0, 500.0)))
    inside = (
        (np.abs(pts[:, 0]) <= frame.width / 2.0)
        & (pts[:, 1] >= 0.0)
        & (pts[:, 1] <= frame.height)
    )
    return np.where(inside, probs, 0.0)


def postxg(model: PostXgModel, frame: GoalFrame, p) -> float:
    """Goal probability at a single point."""
    return float(postxg_batch(model, frame, np.asarray(p, dtype=float).reshape(1, 2))[0])


def _penalized_loglik(X, y, coef, ridge_n):
    logits = X @ coef
    # log(sigmoid) via the stable -log1p(exp(-|t|)) split.
    ll = -np.logaddexp(0.0, -logits) * y - np.logaddexp(0.0, logits) * (1.0 - y)
    return float(ll.sum()) - 0.5 * ridge_n * float(coef[1:] @ coef[1:])


def fit_postxg(
    pts: np.ndarray,
    labels: np.ndarray,
    ridge: float = DEFAULT_RIDGE,
    *,
    max_iter: int = DEFAULT_MAX_ITER,
    grad_tol: float = GRAD_TOL,
) -> PostXgModel:
    """Ridge-penalized logistic fit by damped Newton.

    pts are on-frame goal-plane points, labels the goal outcomes.  The ridge
    penalty 0.5 * ridge * n * ||coef[1:]||^2 spares the intercept and scales
    with n.  Converged when the gradient max-norm drops below grad_tol.
    """
    X = design_matrix(pts)
    y = np.asarray(labels, dtype=float).reshape(-1)
    n = X.shape[0]
    if y.shape[0] != n:
        raise InvalidInputError(f"{n} points but {y.shape[0]} labels")
    if n == 0:
        raise DegenerateDataError("empty training set")
    if not (np.all((y == 0.0) | (y == 1.0))):
        raise InvalidInputError("labels must be 0/1")
    if y.min() == y.max():
        raise DegenerateDataError("training set needs at least one goal and one miss")
    if ridge < 0:
        raise InvalidParameterError(f"ridge must be >= 0, got {ridge}")

    ridge_n = ridge * n
    penalty_mask = np.ones(X.shape[1])
    penalty_mask[0] = 0.0
    coef = np.zeros(X.shape[1])
    obj = _penalized_loglik(X, y, coef, ridge_n)
    for _ in range(max_iter):
        logits = np.clip(X @ coef, -500.0, 500.0)
        p = 1.0 / (1.0 + np.exp(-logits))
        grad = X.T @ (y - p) - ridge_n * penalty_mask * coef
        if np.max(np.abs(grad)) < grad_tol:
            return PostXgModel(coefficients=coef, ridge=ridge)
        w = p * (1.0 - p)
        hess = X.T @ (X * w[:, None]) + ridge_n * np.diag(penalty_mask)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"singular Hessian during Newton fit: {exc}") from exc
        # Halve the step until the penalized log-likelihood improves.
        scale = 1.0
        for _ in range(60):
            trial = coef + scale * step
            trial_obj = _penalized_loglik(X, y, trial, ridge_n)
            if trial_obj >= obj:
                break
            scale *= 0.5
        else:
            raise ConvergenceError("Newton step failed to improve the objective")
        coef = coef + scale * step
        obj = trial_obj
    raise ConvergenceError(f"Newton fit did not converge in {max_iter} iterations")


@dataclass(frozen=True)
class ComponentValue:
    """Monte Carlo estimate of a component's expected goal probability."""

    value: float
    mc_std_error: float
    n_samples: int
    low_precision: bool = False


def component_value(
    component: MixtureComponent,
    model: PostXgModel,
    frame: GoalFrame = DEFAULT_FRAME,
    n_samples: int = DEFAULT_VALUE_SAMPLES,
    seed: int = 0,
) -> ComponentValue:
    """Mean goal probability over truncated-Gaussian draws from the component.

    Deterministic given the seed.  mc_std_error is the sample standard
    deviation over sqrt(n_samples); a single-sample estimate reports 0 and
    is flagged low-precision.
    """
    if n_samples < 1:
        raise InvalidParameterError(f"n_samples must be >= 1, got {n_samples}")
    rng = np.random.default_rng(seed)
    draws = sample(component.as_truncated(), rng, size=n_samples)
    vals = postxg_batch(model, frame, draws)
    value = float(vals.mean())
    std_err = float(vals.std() / np.sqrt(n_samples))
    return ComponentValue(
        value=value,
        mc_std_error=std_err,
        n_samples=n_samples,
        low_precision=n_samples < 2,
    )


def component_values(
    components: Sequence[MixtureComponent],
    model: PostXgModel,
    frame: GoalFrame = DEFAULT_FRAME,
    n_samples: int = DEFAULT_VALUE_SAMPLES,
    base_seed: int = 0,
) -> list[ComponentValue]:
    """Values for a component set, one derived seed (base_seed + index) each."""
    tasks = list(enumerate(components))
    return parallel_map(
        lambda ic: component_value(ic[1], model, frame, n_samples, seed=base_seed + ic[0]),
        tasks,
    )


# ---------------------------------------------------------------------------
# persistence


def save_postxg(path, model: PostXgModel) -> None:
    payload = {name: float(c) for name, c in zip(COEF_NAMES, model.coefficients)}
    payload["ridge"] = model.ridge
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_postxg(path) -> PostXgModel:
    with open(path) as fh:
        payload = json.load(fh)
    try:
        coef = np.array([payload[name] for name in COEF_NAMES], dtype=float)
        return PostXgModel(coefficients=coef, ridge=float(payload["ridge"]))
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"malformed postxg file {path}: {exc}") from exc


def save_values(path, values: Sequence[ComponentValue], mixture: MixtureModel,
                n_samples: int, base_seed: int) -> None:
    if len(values) != mixture.n_components:
        raise InvalidInputError(
            f"{len(values)} values for {mixture.n_components} components"
        )
    payload = {
        "model_hash": model_hash(mixture),
        "base_seed": base_seed,
        "n_samples": n_samples,
        "values": [
            {
                "value": v.value,
                "mc_std_error": v.mc_std_error,
                "n_samples": v.n_samples,
                "low_precision": v.low_precision,
            }
            for v in values
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_values(path):
    """Read a component-values file; returns (values, model_hash)."""
    with open(path) as fh:
        payload = json.load(fh)
    try:
        values = [
            ComponentValue(
                value=float(v["value"]),
                mc_std_error=float(v["mc_std_error"]),
                n_samples=int(v["n_samples"]),
                low_precision=bool(v["low_precision"]),
            )
            for v in payload["values"]
        ]
        return values, payload["model_hash"]
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"malformed values file {path}: {exc}") from exc
