"""Simulated human workers: Boltzmann choice, suggestion uptake, and trust."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .domain import StateSpace
from .errors import ContractViolation
from .planner import CostTable, NoisyUtility, make_noisy_utility

TrustForm = Literal["repaired", "literal"]

# spawn-key purposes for per-human RNG streams
NOISE_STREAM = 0
ACTION_STREAM = 1


def boltzmann_probs(costs, beta) -> np.ndarray:
    """Softmax over ``-beta * costs`` along the last axis.

    ``beta`` broadcasts against ``costs[..., :-1]`` so a column of betas
    yields one distribution per row.
    """
    costs = np.asarray(costs, dtype=float)
    beta = np.asarray(beta, dtype=float)[..., None]
    logits = -beta * (costs - costs.min(axis=-1, keepdims=True))
    w = np.exp(logits)
    return w / w.sum(axis=-1, keepdims=True)


def influenced_probs(costs, beta, theta, suggested: int) -> np.ndarray:
    """Boltzmann weights rescaled by ``theta`` on the suggested action and
    ``1 - theta`` on the rest, then renormalized.

    ``beta`` and ``theta`` broadcast together. When every weight vanishes
    (``theta == 0`` and the suggestion is the only option) the plain
    Boltzmann distribution is returned.
    """
    costs = np.asarray(costs, dtype=float)
    beta = np.asarray(beta, dtype=float)
    theta = np.asarray(theta, dtype=float)
    beta, theta = np.broadcast_arrays(beta, theta)
    base = boltzmann_probs(costs, beta)
    scale = np.repeat((1.0 - theta)[..., None], costs.shape[-1], axis=-1)
    scale[..., suggested] = theta
    w = base * scale
    z = w.sum(axis=-1, keepdims=True)
    dead = z <= 0.0
    if np.any(dead):
        w = np.where(dead, base, w)
        z = np.where(dead, 1.0, z)
    return w / z


class ActionDist(NamedTuple):
    """Probabilities over global action ids, in canonical order."""

    actions: np.ndarray
    probs: np.ndarray


class PoolConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    beta_range: tuple[float, float] = (0.1, 3.0)
    theta_range: tuple[float, float] = (0.5, 0.95)
    sigma_range: tuple[float, float] = (0.1, 1.0)
    eta: float = Field(0.2, ge=0.0)
    pool_size: int = Field(12, ge=1)

    @model_validator(mode="after")
    def _check_ranges(self):
        for name, (lo, hi) in (
            ("beta_range", self.beta_range),
            ("theta_range", self.theta_range),
            ("sigma_range", self.sigma_range),
        ):
            if lo > hi:
                raise ValueError(f"{name}: low {lo} exceeds high {hi}")
            if lo < 0:
                raise ValueError(f"{name}: values must be non-negative")
        if self.theta_range[1] > 1.0:
            raise ValueError("theta_range must lie inside [0, 1]")
        return self


@dataclass(frozen=True)
class HumanProfile:
    beta: float
    theta: float
    utility: NoisyUtility
    eta: float = 0.2
    trust_form: TrustForm = "repaired"

    def __post_init__(self):
        if self.beta < 0:
            raise ContractViolation(f"beta must be >= 0, got {self.beta}")
        if not 0.0 <= self.theta <= 1.0:
            raise ContractViolation(f"theta must lie in [0, 1], got {self.theta}")
        if self.eta < 0:
            raise ContractViolation(f"eta must be >= 0, got {self.eta}")

    @property
    def sigma(self) -> float:
        return self.utility.sigma


def _legal(profile: HumanProfile, s: int) -> np.ndarray:
    return np.flatnonzero(np.isfinite(profile.utility.q[s]))


def action_distribution(profile: HumanProfile, s: int) -> ActionDist:
    """Unassisted choice at state index ``s`` under the private utility."""
    legal = _legal(profile, s)
    if legal.size == 0:
        raise ContractViolation(f"state {s} is terminal; no action to take")
    return ActionDist(legal, boltzmann_probs(profile.utility.q[s, legal], profile.beta))


def influenced_distribution(profile: HumanProfile, s: int, suggestion: int) -> ActionDist:
    legal = _legal(profile, s)
    pos = np.flatnonzero(legal == suggestion)
    if pos.size == 0:
        raise ContractViolation(f"suggested action {suggestion} is not legal in state {s}")
    probs = influenced_probs(profile.utility.q[s, legal], profile.beta, profile.theta, int(pos[0]))
    return ActionDist(legal, probs)


def trust_delta(q: np.ndarray, s: int, s_next: int, form: TrustForm = "repaired") -> float:
    """Perceived utility change of moving from ``s`` to ``s_next``.

    ``repaired`` scores a state by minus its cheapest action cost, so a step
    toward the goal is positive. ``literal`` uses the maximum action cost.
    Terminal states score zero under both.
    """

    def score(row):
        finite = row[np.isfinite(row)]
        if finite.size == 0:
            return 0.0
        return -float(finite.min()) if form == "repaired" else float(finite.max())

    return score(q[s_next]) - score(q[s])


def clamp01(value):
    return np.clip(value, 0.0, 1.0)


def update_influence(profile: HumanProfile, space: StateSpace, s: int, suggestion: int) -> float:
    """Influence after receiving ``suggestion`` at ``s``; the caller commits it."""
    s_next = int(space.succ[s, suggestion])
    if s_next < 0:
        raise ContractViolation(f"suggested action {suggestion} is not legal in state {s}")
    delta = trust_delta(profile.utility.q, s, s_next, profile.trust_form)
    return float(clamp01(profile.theta + profile.eta * delta))


def sample_action(dist: ActionDist, rng: np.random.Generator) -> int:
    """Inverse-CDF draw; returns a global action id."""
    u = rng.random()
    k = int(np.searchsorted(np.cumsum(dist.probs), u, side="right"))
    return int(dist.actions[min(k, len(dist.actions) - 1)])


def human_stream(seed: int, human: int, purpose: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(human, purpose))


def sample_pool(
    cfg: PoolConfig, cost: CostTable, seed: int, trust_form: TrustForm = "repaired"
) -> list[HumanProfile]:
    """Draw ``cfg.pool_size`` workers with uniform parameters and private noise."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    pool = []
    for n in range(cfg.pool_size):
        beta = rng.uniform(*cfg.beta_range)
        theta = rng.uniform(*cfg.theta_range)
        sigma = rng.uniform(*cfg.sigma_range)
        utility = make_noisy_utility(cost, sigma, human_stream(seed, n, NOISE_STREAM))
        pool.append(HumanProfile(float(beta), float(theta), utility, cfg.eta, trust_form))
    return pool
