"""Robot controllers: greedy attention switching and two baselines."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .assist import NOOP, AssistPolicy, Heuristic, RewardConfig, expected_values
from .belief import BehaviorBelief
from .errors import ContractViolation
from .planner import CostTable

MISTAKE_TOL = 1e-9


@dataclass
class RobotState:
    """``location`` is a worker index, or ``None`` while docked.

    Leaving the dock is free; only moves between workers are charged.
    """

    location: int | None = None


@dataclass(frozen=True)
class Idle:
    pass


@dataclass(frozen=True)
class Assist:
    worker: int
    action: int  # global human action id


RobotDecision = Union[Idle, Assist]
IDLE = Idle()


@dataclass(frozen=True)
class WorkerScore:
    worker: int
    r_pi: float
    r_phi: float
    relocation: float
    suggestion: int  # robot action id

    @property
    def gain(self) -> float:
        return self.r_pi - self.r_phi

    @property
    def net(self) -> float:
        return self.gain + self.relocation


def attention_scores(
    beliefs: Sequence[BehaviorBelief],
    xs: Sequence[int],
    robot: RobotState,
    policy: AssistPolicy,
    rewards: RewardConfig,
    heuristic: Heuristic = "qvalue",
) -> list[WorkerScore]:
    """Per-worker gain of following the worker's policy over leaving them alone."""
    terminal = policy.model.cost.space.terminal
    scores = []
    for k, (b, x) in enumerate(zip(beliefs, xs)):
        if terminal[x]:
            continue
        r_pi, r_phi, a = expected_values(policy, b, x, heuristic)
        move = 0.0 if robot.location in (None, k) else -rewards.move_cost
        scores.append(WorkerScore(k, r_pi, r_phi, move, a))
    return scores


def attention_step(
    beliefs: Sequence[BehaviorBelief],
    xs: Sequence[int],
    robot: RobotState,
    policy: AssistPolicy,
    rewards: RewardConfig,
    heuristic: Heuristic = "qvalue",
) -> RobotDecision:
    """Assist the worker with the largest net gain, or stay idle if none is positive."""
    scores = attention_scores(beliefs, xs, robot, policy, rewards, heuristic)
    if not scores:
        raise ContractViolation("every worker is already done")
    return select_worker(scores)


def select_worker(scores: Sequence[WorkerScore]) -> RobotDecision:
    """Greedy pick by gain plus relocation term; earlier workers win ties."""
    best = scores[0]
    for sc in scores[1:]:
        if sc.net > best.net:
            best = sc
    if best.net > 0 and best.suggestion != NOOP:
        return Assist(best.worker, best.suggestion - 1)
    return IDLE


def made_mistake(cost: CostTable, s_prev: int, action: int) -> bool:
    """Strictly suboptimal under the true action costs."""
    row = cost.q[s_prev]
    return bool(row[action] > row.min() + MISTAKE_TOL)


def reactive_step(
    xs: Sequence[int],
    robot: RobotState,
    cost: CostTable,
    last_actions: Sequence[tuple[int, int] | None],
) -> RobotDecision:
    """Correct a worker whose last action was a mistake.

    ``last_actions[k]`` is ``(previous state, action)`` or ``None`` when the
    worker did not act. The co-located worker is preferred, then the lowest
    index.
    """
    erring = [
        k
        for k, last in enumerate(last_actions)
        if last is not None and not cost.space.terminal[xs[k]] and made_mistake(cost, *last)
    ]
    if not erring:
        return IDLE
    k = robot.location if robot.location in erring else erring[0]
    return Assist(k, cost.greedy_action(xs[k]))


def none_step(*args, **kwargs) -> RobotDecision:
    return IDLE


def legal_suggestion(cost: CostTable, xs: Sequence[int], decision: RobotDecision) -> bool:
    if isinstance(decision, Idle):
        return True
    return 0 <= decision.worker < len(xs) and bool(np.isfinite(cost.q[xs[decision.worker], decision.action]))
