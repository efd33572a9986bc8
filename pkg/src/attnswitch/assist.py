"""Per-worker assistance POMDP and its QMDP solution.

Hidden state per worker is a (beta bin, theta bin) cell; the kit state is
observed. Robot action 0 is "no-op"; action ``1 + a`` suggests human action
``a``. Rewards are negative costs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .belief import BehaviorBelief, BehaviorGrid
from .cache import read_blob, write_blob
from .errors import ContractViolation, SolverError
from .human import TrustForm, boltzmann_probs, influenced_probs, trust_delta
from .planner import CostTable

NOOP = 0
Heuristic = Literal["qvalue", "one-step", "passive"]
_POLICY_MAGIC = b"ATSWPLCY"


class RewardConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    step_cost: float = Field(1.0, ge=0.0)
    intervention_cost: float = Field(0.1, ge=0.0)
    move_cost: float = Field(1.0, ge=0.0)


@dataclass(frozen=True)
class AssistModel:
    """Tabular MDP with padded sparse transitions.

    ``succ[s, a, l]`` and ``prob[s, a, l]`` list the successors of ``(s, a)``;
    padding entries carry zero probability. ``valid[s, a]`` is False for
    suggestions that are illegal in the kit state of ``s``.
    """

    succ: np.ndarray
    prob: np.ndarray
    reward: np.ndarray
    valid: np.ndarray
    gamma: float
    n_env: int = 0
    grid_shape: tuple[int, int] = (1, 1)
    cost: CostTable | None = None

    @property
    def n_states(self) -> int:
        return self.succ.shape[0]

    @property
    def n_actions(self) -> int:
        return self.succ.shape[1]

    def flat(self, env: int, i: int, j: int) -> int:
        nb, nt = self.grid_shape
        return (env * nb + i) * nt + j


def build_model(
    cost: CostTable,
    grid: BehaviorGrid,
    rewards: RewardConfig,
    gamma: float = 0.95,
    eta: float = 0.2,
    trust_form: TrustForm = "repaired",
) -> AssistModel:
    """One step: a suggestion first moves theta, the worker then acts, the kit advances."""
    if not 0.0 < gamma < 1.0:
        raise ContractViolation(f"gamma must lie in (0, 1), got {gamma}")
    space = cost.space
    nb, nt = grid.shape
    n_env, n_human = space.n_states, space.n_actions
    n_act = 1 + n_human
    width = max(1, int((space.succ >= 0).sum(axis=1).max()))

    succ = np.zeros((n_env, nb, nt, n_act, width), dtype=np.int64)
    prob = np.zeros((n_env, nb, nt, n_act, width))
    reward = np.zeros((n_env, nb, nt, n_act))
    valid = np.zeros((n_env, nb, nt, n_act), dtype=bool)

    ii = np.arange(nb)[:, None]
    jj = np.arange(nt)[None, :]
    for x in range(n_env):
        here = (x * nb + ii) * nt + jj
        if space.terminal[x]:
            succ[x, :, :, :, 0] = here[..., None]
            prob[x, :, :, :, 0] = 1.0
            valid[x] = True
            continue
        legal = space.legal(x)
        costs = cost.q[x, legal]
        nxt = space.succ[x, legal]
        n = legal.size

        p_free = boltzmann_probs(costs, grid.beta)
        succ[x, :, :, NOOP, :n] = (nxt[None, None, :] * nb + ii[..., None]) * nt + jj[..., None]
        prob[x, :, :, NOOP, :n] = p_free[:, None, :]
        reward[x, :, :, NOOP] = -rewards.step_cost
        valid[x, :, :, NOOP] = True

        for pos, a in enumerate(legal):
            targets = grid.theta_targets(trust_delta(cost.q, x, int(nxt[pos]), trust_form), eta)
            thetas = grid.theta[targets]
            p = influenced_probs(costs, grid.beta[:, None], thetas[None, :], pos)
            tj = targets[None, :, None]
            succ[x, :, :, 1 + a, :n] = (nxt[None, None, :] * nb + ii[..., None]) * nt + tj
            prob[x, :, :, 1 + a, :n] = p
            reward[x, :, :, 1 + a] = -rewards.step_cost - rewards.intervention_cost
            valid[x, :, :, 1 + a] = True

        # illegal suggestions mirror the no-op row so every row stays a distribution
        bad = np.setdiff1d(np.arange(n_human), legal) + 1
        succ[x][..., bad, :] = succ[x][..., NOOP, None, :]
        prob[x][..., bad, :] = prob[x][..., NOOP, None, :]
        reward[x][..., bad] = -rewards.step_cost

    n = n_env * nb * nt
    arrays = (
        succ.reshape(n, n_act, width),
        prob.reshape(n, n_act, width),
        reward.reshape(n, n_act),
        valid.reshape(n, n_act),
    )
    for arr in arrays:
        arr.setflags(write=False)
    return AssistModel(*arrays, gamma=gamma, n_env=n_env, grid_shape=(nb, nt), cost=cost)


@dataclass(frozen=True)
class AssistPolicy:
    """``passive`` holds the value of never assisting, per state."""

    model: AssistModel
    qvalues: np.ndarray
    values: np.ndarray
    residual: float
    passive: np.ndarray

    def env_qvalues(self, env: int) -> np.ndarray:
        """Q-values of every hidden cell at kit state ``env``, shape (nb, nt, A)."""
        nb, nt = self.model.grid_shape
        return self.qvalues.reshape(-1, nb, nt, self.model.n_actions)[env]

    def belief_qvalues(self, belief: BehaviorBelief | np.ndarray, env: int) -> np.ndarray:
        p = belief.p if isinstance(belief, BehaviorBelief) else np.asarray(belief)
        q = self.env_qvalues(env)
        ok = np.isfinite(q[0, 0])
        # unavailable actions are -inf in every cell; keep 0 * -inf out of the sum
        qb = np.tensordot(p, np.where(ok, q, 0.0), axes=([0, 1], [0, 1]))
        return np.where(ok, qb, -np.inf)

    def act(self, belief: BehaviorBelief | np.ndarray, env: int) -> int:
        """Belief-weighted argmax; the lowest action id wins ties (no-op first)."""
        return int(np.argmax(self.belief_qvalues(belief, env)))


def _backup(model: AssistModel, v: np.ndarray) -> np.ndarray:
    q = model.reward + model.gamma * np.einsum("sal,sal->sa", model.prob, v[model.succ])
    return np.where(model.valid, q, -np.inf)


def passive_values(model: AssistModel, tol: float = 1e-9, max_iter: int = 100_000) -> np.ndarray:
    """Evaluate the policy that always plays no-op."""
    v = np.zeros(model.n_states)
    r, p, succ = model.reward[:, NOOP], model.prob[:, NOOP], model.succ[:, NOOP]
    for _ in range(max_iter):
        v_new = r + model.gamma * np.einsum("sl,sl->s", p, v[succ])
        done = np.abs(v_new - v).max() < tol
        v = v_new
        if done:
            break
    return v


def solve_qmdp(model: AssistModel, tol: float = 1e-9, max_iter: int = 100_000) -> AssistPolicy:
    """Value iteration on the fully observed MDP until the Bellman residual is below ``tol``."""
    if tol <= 0:
        raise ContractViolation(f"tol must be positive, got {tol}")
    v = np.zeros(model.n_states)
    diff = np.inf
    for _ in range(max_iter):
        v_new = _backup(model, v).max(axis=1)
        diff = float(np.abs(v_new - v).max())
        v = v_new
        if diff < tol:
            break
    q = _backup(model, v)
    v_final = q.max(axis=1)
    residual = float(np.abs(v_final - v).max())
    if residual >= tol:
        raise SolverError(f"value iteration did not converge: residual {residual:.3e} after {max_iter} sweeps")
    vp = passive_values(model, tol, max_iter)
    for arr in (q, v, vp):
        arr.setflags(write=False)
    return AssistPolicy(model, q, v, residual, vp)


def expected_values(
    policy: AssistPolicy, belief: BehaviorBelief, env: int, heuristic: Heuristic = "qvalue"
) -> tuple[float, float, int]:
    """(value with the policy's suggestion, value without it, suggestion).

    ``qvalue`` compares the suggestion against a no-op this step followed by
    the policy. ``one-step`` scores only the immediate reward of each action.
    ``passive`` compares against never assisting this worker again.
    """
    a = policy.act(belief, env)
    if heuristic in ("qvalue", "passive"):
        qb = policy.belief_qvalues(belief, env)
        if heuristic == "passive":
            nb, nt = policy.model.grid_shape
            base = float(np.sum(belief.p * policy.passive.reshape(-1, nb, nt)[env]))
            return float(qb[a]), base if a != NOOP else float(qb[a]), a
        return float(qb[a]), float(qb[NOOP]), a
    if heuristic != "one-step":
        raise ValueError(f"unknown heuristic {heuristic!r}")
    nb, nt = policy.model.grid_shape
    r = policy.model.reward.reshape(-1, nb, nt, policy.model.n_actions)[env]
    rb = np.tensordot(belief.p, r, axes=([0, 1], [0, 1]))
    return float(rb[a]), float(rb[NOOP]), a


def policy_key(cost: CostTable, grid: BehaviorGrid, rewards: RewardConfig, gamma: float,
               tol: float, eta: float, trust_form: str) -> str:
    blob = json.dumps(
        {
            "instance": cost.space.inst.content_hash(),
            "beta": grid.beta.tolist(),
            "theta": grid.theta.tolist(),
            "rewards": rewards.model_dump(),
            "gamma": gamma,
            "tol": tol,
            "eta": eta,
            "trust_form": trust_form,
        },
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()


def save_policy(path: str | Path, policy: AssistPolicy, key: str) -> None:
    write_blob(path, _POLICY_MAGIC, key, {"qvalues": policy.qvalues, "values": policy.values,
                                         "passive": policy.passive, "residual": np.array(policy.residual)})


def load_policy(path: str | Path, model: AssistModel, key: str) -> AssistPolicy:
    _, arrays = read_blob(path, _POLICY_MAGIC, key)
    q, v = arrays["qvalues"], arrays["values"]
    if q.shape != (model.n_states, model.n_actions):
        raise SolverError(f"cached policy shape {q.shape} does not match the model")
    return AssistPolicy(model, q, v, float(arrays["residual"]), arrays["passive"])


def scaling_table(n_env: int, n_cells: int, ks=range(1, 7)) -> list[dict[str, int]]:
    """State counts solved by the per-worker decomposition versus the joint model."""
    rows = []
    for k in ks:
        factored = k * n_env * n_cells
        joint = (n_env * n_cells) ** k
        rows.append({"K": k, "factored": factored, "joint": joint})
    return rows
