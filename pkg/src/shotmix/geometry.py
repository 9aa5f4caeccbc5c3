"""Goal-frame geometry and the truncated bivariate Gaussian.

Coordinates on the goal plane are (y, z): y in yards across the goal mouth
with 0 at the center of the goal, z in yards above the ground.  Shot
end-point distributions are bivariate Gaussians truncated to the half-plane
z >= 0 (the ground); the truncation is renormalized, so densities integrate
to one over z >= 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DegenerateComponentError, InvalidParameterError
from .kernels import _LOG_2PI, log_ndtr, ndtr

# Proposal budget per requested draw before the sampler gives up.
MAX_REJECTION_PROPOSALS = 10**6


class GoalPoint(NamedTuple):
    """A point on the goal plane, yards: y across the mouth, z above ground."""

    y: float
    z: float


@dataclass(frozen=True)
class GoalFrame:
    """Goal-mouth geometry in yards plus its location on the pitch.

    Parameters
    ----------
    width : float
        Distance between the posts.
    height : float
        Crossbar height above the ground.
    y_center : float
        Pitch y coordinate of the goal center.
    goal_line_x : float
        Pitch x coordinate of the goal line.
    """

    width: float = 8.0
    height: float = 2.67
    y_center: float = 40.0
    goal_line_x: float = 120.0

    def __post_init__(self):
        if not (self.width > 0.0 and self.height > 0.0):
            raise InvalidParameterError(
                f"goal frame must have positive size, got width={self.width} height={self.height}"
            )


DEFAULT_FRAME = GoalFrame()


def in_goal_frame(frame: GoalFrame, p) -> bool:
    """True when p = (y, z) lies on or inside the frame (posts and bar inclusive)."""
    y, z = p
    return abs(y) <= frame.width / 2.0 and 0.0 <= z <= frame.height


@dataclass(frozen=True, eq=False)
class TruncatedGaussian:
    """Bivariate Gaussian on (y, z), truncated and renormalized to z >= 0.

    mean is length-2, cov is a symmetric positive-definite 2x2 matrix.
    """

    mean: np.ndarray
    cov: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(2)
        cov = np.asarray(self.cov, dtype=float).reshape(2, 2)
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(cov)):
            raise InvalidParameterError("mean and cov must be finite")
        if abs(cov[0, 1] - cov[1, 0]) > 1e-12 * max(1.0, abs(cov[0, 1])):
            raise InvalidParameterError(f"covariance must be symmetric, got {cov}")
        a, b, c = cov[0, 0], cov[0, 1], cov[1, 1]
        det = a * c - b * b
        if a <= 0.0 or c <= 0.0 or det <= 0.0:
            raise InvalidParameterError(
                f"covariance must be positive definite, got {cov} (det={det})"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        # Lower-triangular Cholesky factor, closed form for 2x2.
        l11 = math.sqrt(a)
        l21 = b / l11
        l22 = math.sqrt(c - l21 * l21)
        object.__setattr__(self, "_chol", np.array([[l11, 0.0], [l21, l22]]))


def acceptance_probability(g: TruncatedGaussian) -> float:
    """Probability that the untruncated Gaussian lands in z >= 0.

    Closed form: Phi(mu_z / sqrt(cov_zz)).
    """
    return ndtr(g.mean[1] / math.sqrt(g.cov[1, 1]))


def trunc_logpdf(g: TruncatedGaussian, p) -> float:
    """Log density of the truncated Gaussian at p = (y, z); -inf below the ground."""
    y, z = float(p[0]), float(p[1])
    if z < 0.0:
        return -math.inf
    a, b, c = g.cov[0, 0], g.cov[0, 1], g.cov[1, 1]
    det = a * c - b * b
    dy = y - g.mean[0]
    dz = z - g.mean[1]
    quad = (dy * dy * c - 2.0 * dy * dz * b + dz * dz * a) / det
    log_acc = log_ndtr(g.mean[1] / math.sqrt(c))
    return -_LOG_2PI - 0.5 * math.log(det) - 0.5 * quad - log_acc


def trunc_pdf(g: TruncatedGaussian, p) -> float:
    """Density of the truncated Gaussian at p = (y, z); 0 below the ground."""
    lp = trunc_logpdf(g, p)
    return 0.0 if lp == -math.inf else math.exp(lp)


def sample(g: TruncatedGaussian, rng: np.random.Generator, size: int | None = None):
    """Draw from the truncated Gaussian by rejection from the untruncated one.

    Parameters
    ----------
    g : TruncatedGaussian
    rng : np.random.Generator
        Owns all randomness; a fixed seed reproduces the stream exactly.
    size : int or None
        None returns a single (2,) point, otherwise a (size, 2) array.

    Raises
    ------
    DegenerateComponentError
        After 10**6 proposals per requested draw without enough acceptances,
        which only happens when the mean sits far below the ground.
    """
    n = 1 if size is None else int(size)
    if n < 0:
        raise InvalidParameterError(f"size must be >= 0, got {size}")
    if n == 0:
        return np.empty((0, 2))
    out = np.empty((n, 2))
    got = 0
    proposals = 0
    budget = MAX_REJECTION_PROPOSALS * n
    chunk = max(2 * n, 256)
    while got < n:
        if proposals >= budget:
            raise DegenerateComponentError(
                f"rejection sampler exhausted {budget} proposals "
                f"(acceptance probability {acceptance_probability(g):.3g})"
            )
        m = min(chunk, budget - proposals)
        cand = rng.standard_normal((m, 2)) @ g._chol.T + g.mean
        proposals += m
        keep = cand[cand[:, 1] >= 0.0]
        take = min(n - got, keep.shape[0])
        out[got:got + take] = keep[:take]
        got += take
    return out[0] if size is None else out
