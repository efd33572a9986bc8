"""Grid filter over each worker's hidden expertise and influence."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .human import TrustForm, boltzmann_probs, influenced_probs, trust_delta
from .planner import CostTable

log = logging.getLogger(__name__)

UNDERFLOW = 1e-300


class GridConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    beta_bins: int = Field(5, ge=1)
    theta_bins: int = Field(10, ge=1)
    beta_range: tuple[float, float] = (0.1, 3.0)


@dataclass(frozen=True)
class BehaviorGrid:
    beta: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        for name, arr in (("beta", self.beta), ("theta", self.theta)):
            if arr.ndim != 1 or arr.size == 0 or np.any(np.diff(arr) <= 0):
                raise ValueError(f"{name} bin centers must be a strictly increasing 1-d array")

    @classmethod
    def from_config(cls, cfg: GridConfig) -> BehaviorGrid:
        lo, hi = cfg.beta_range
        beta = np.linspace(lo, hi, cfg.beta_bins) if cfg.beta_bins > 1 else np.array([(lo + hi) / 2])
        theta = np.linspace(0.0, 1.0, cfg.theta_bins) if cfg.theta_bins > 1 else np.array([0.5])
        return cls(beta, theta)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.beta.size, self.theta.size)

    @property
    def size(self) -> int:
        return self.beta.size * self.theta.size

    def nearest_theta(self, values) -> np.ndarray:
        """Index of the closest theta center; lower bin wins exact ties."""
        values = np.asarray(values, dtype=float)
        return np.abs(values[..., None] - self.theta).argmin(axis=-1)

    def theta_targets(self, delta_u: float, eta: float) -> np.ndarray:
        """Destination bin of each theta bin after a trust update of ``eta * delta_u``."""
        return self.nearest_theta(np.clip(self.theta + eta * delta_u, 0.0, 1.0))


@dataclass(frozen=True)
class BehaviorBelief:
    """Probability over (beta bin, theta bin); ``resets`` counts underflow resets."""

    p: np.ndarray
    resets: int = 0

    def marginal_beta(self) -> np.ndarray:
        return self.p.sum(axis=1)

    def marginal_theta(self) -> np.ndarray:
        return self.p.sum(axis=0)


def init_belief(grid: BehaviorGrid) -> BehaviorBelief:
    return BehaviorBelief(np.full(grid.shape, 1.0 / grid.size))


def likelihood_grid(
    grid: BehaviorGrid, s: int, suggestion: int | None, observed: int, cost: CostTable
) -> np.ndarray:
    """P(observed | cell) for every grid cell, under the true action costs."""
    legal = cost.space.legal(s)
    costs = cost.q[s, legal]
    obs = int(np.flatnonzero(legal == observed)[0])
    if suggestion is None:
        probs = boltzmann_probs(costs, grid.beta)[:, obs]
        return np.repeat(probs[:, None], grid.theta.size, axis=1)
    pos = int(np.flatnonzero(legal == suggestion)[0])
    return influenced_probs(costs, grid.beta[:, None], grid.theta[None, :], pos)[..., obs]


def likelihood(cell: tuple[float, float], s: int, suggestion: int | None, observed: int, cost: CostTable) -> float:
    beta, theta = cell
    grid = BehaviorGrid(np.array([beta]), np.array([theta]))
    return float(likelihood_grid(grid, s, suggestion, observed, cost)[0, 0])


def update(
    belief: BehaviorBelief,
    s: int,
    suggestion: int | None,
    observed: int,
    cost: CostTable,
    grid: BehaviorGrid,
) -> BehaviorBelief:
    """Bayes update on one observed action; resets to uniform on underflow."""
    post = belief.p * likelihood_grid(grid, s, suggestion, observed, cost)
    total = post.sum()
    if total < UNDERFLOW:
        log.warning("belief underflow at state %d (observed %d); resetting to uniform", s, observed)
        return BehaviorBelief(np.full(grid.shape, 1.0 / grid.size), belief.resets + 1)
    return BehaviorBelief(post / total, belief.resets)


def advance_theta(
    belief: BehaviorBelief,
    s: int,
    suggestion: int,
    cost: CostTable,
    grid: BehaviorGrid,
    eta: float,
    trust_form: TrustForm = "repaired",
) -> BehaviorBelief:
    """Shift theta mass as the robot's suggestion moves each hypothesis."""
    s_next = int(cost.space.succ[s, suggestion])
    targets = grid.theta_targets(trust_delta(cost.q, s, s_next, trust_form), eta)
    p = np.zeros_like(belief.p)
    for j, t in enumerate(targets):
        p[:, t] += belief.p[:, j]
    return BehaviorBelief(p, belief.resets)
