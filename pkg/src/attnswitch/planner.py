"""Exact cost-to-go over the kit domain and per-human noisy utilities.

Costs count human actions, so lower is better. Every action costs 1.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cache import read_blob, write_blob
from .domain import KitInstance, StateSpace, build_state_space
from .errors import ContractViolation, SolverError

_COST_MAGIC = b"ATSWCOST"


@dataclass(frozen=True)
class CostTable:
    """Optimal remaining human actions ``v`` and action costs ``q``.

    ``q[s, a] = 1 + v[succ[s, a]]`` for legal ``a`` and ``inf`` otherwise.
    """

    space: StateSpace
    v: np.ndarray
    q: np.ndarray

    def greedy_action(self, s: int) -> int:
        """Lowest-cost legal action, first in canonical order on ties."""
        return int(np.argmin(self.q[s]))


@dataclass(frozen=True)
class NoisyUtility:
    """A human's private, frozen misestimate of the action costs."""

    q: np.ndarray
    sigma: float
    seed: int

    def perceived_value(self, s: int) -> float:
        """Perceived utility ``-min_a q(s, a)``; zero at terminal states."""
        row = self.q[s]
        finite = row[np.isfinite(row)]
        return 0.0 if finite.size == 0 else -float(finite.min())


def _freeze(*arrays: np.ndarray) -> None:
    for arr in arrays:
        arr.setflags(write=False)


def solve_cost_to_go(inst_or_space: KitInstance | StateSpace) -> CostTable:
    """Backward breadth-first search from the terminal states."""
    space = inst_or_space if isinstance(inst_or_space, StateSpace) else build_state_space(inst_or_space)
    n = space.n_states
    preds: list[list[int]] = [[] for _ in range(n)]
    for s, t in zip(*np.nonzero(space.succ >= 0)):
        preds[space.succ[s, t]].append(int(s))

    v = np.full(n, np.inf)
    queue = deque(np.flatnonzero(space.terminal).tolist())
    v[list(queue)] = 0.0
    while queue:
        s = queue.popleft()
        for p in preds[s]:
            if v[p] == np.inf:
                v[p] = v[s] + 1.0
                queue.append(p)
    if not np.all(np.isfinite(v)):
        bad = int(np.flatnonzero(~np.isfinite(v))[0])
        raise SolverError(f"goal unreachable from state {space.states[bad]}")

    legal = space.succ >= 0
    q = np.where(legal, 1.0 + v[np.where(legal, space.succ, 0)], np.inf)
    _freeze(v, q)
    return CostTable(space, v, q)


def make_noisy_utility(cost: CostTable, sigma: float, seed: int | np.random.SeedSequence) -> NoisyUtility:
    """Add frozen zero-mean Gaussian noise to every legal (state, action) cost."""
    if sigma < 0:
        raise ContractViolation(f"sigma must be non-negative, got {sigma}")
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, 1.0, size=cost.q.shape) * sigma
    q = np.where(np.isfinite(cost.q), cost.q + noise, np.inf)
    _freeze(q)
    plain_seed = seed if isinstance(seed, int) else int(seed.generate_state(1)[0])
    return NoisyUtility(q, float(sigma), plain_seed)


def save_cost_table(path: str | Path, cost: CostTable) -> None:
    write_blob(path, _COST_MAGIC, cost.space.inst.content_hash(), {"v": cost.v, "q": cost.q})


def load_cost_table(path: str | Path, inst_or_space: KitInstance | StateSpace) -> CostTable:
    space = inst_or_space if isinstance(inst_or_space, StateSpace) else build_state_space(inst_or_space)
    _, arrays = read_blob(path, _COST_MAGIC, space.inst.content_hash())
    v, q = arrays["v"], arrays["q"]
    _freeze(v, q)
    return CostTable(space, v, q)
