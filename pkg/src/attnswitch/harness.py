"""Seeded episodes, experiment sweeps, and result aggregation."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Any, Iterable, Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import belief as bf
from .assist import (
    AssistPolicy,
    Heuristic,
    RewardConfig,
    build_model,
    load_policy,
    policy_key,
    save_policy,
    solve_qmdp,
)
from .belief import BehaviorGrid, GridConfig
from .domain import KitInstance, StateSpace, build_state_space, instance_from_document, load_instance
from .errors import CacheError, ConfigError, ContractViolation
from .human import (
    ACTION_STREAM,
    NOISE_STREAM,
    HumanProfile,
    PoolConfig,
    TrustForm,
    action_distribution,
    human_stream,
    influenced_distribution,
    sample_action,
    sample_pool,
    update_influence,
)
from .planner import CostTable, make_noisy_utility, solve_cost_to_go
from .policies import IDLE, Assist, RobotState, attention_step, none_step, reactive_step

log = logging.getLogger(__name__)

PolicyName = Literal["attention", "reactive", "none"]
POLICIES: tuple[str, ...] = ("attention", "reactive", "none")

CSV_HEADER = (
    "run_id,K,policy,seed,worker_id,beta,theta0,sigma,human_actions,"
    "interventions,relocations,steps,completed,discounted_return"
).split(",")

# behaviour bands used to categorise workers
LOW_BETA = (0.1, 0.5)
HIGH_BETA = (2.0, 2.5)
LOW_THETA = (0.5, 0.55)
HIGH_THETA = (0.8, 0.9)
CATEGORY_CELLS = {
    "lowbeta_hightheta": (LOW_BETA, HIGH_THETA),
    "lowbeta_lowtheta": (LOW_BETA, LOW_THETA),
    "highbeta_hightheta": (HIGH_BETA, HIGH_THETA),
    "highbeta_lowtheta": (HIGH_BETA, LOW_THETA),
}


# -- configuration -------------------------------------------------------------


class SweepGrid(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    ks: tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    repetitions: int = Field(6, ge=1)
    trials: int = Field(5, ge=1)

    @model_validator(mode="after")
    def _positive(self):
        if not self.ks or min(self.ks) < 1:
            raise ValueError("ks must be a non-empty list of worker counts >= 1")
        return self


class Seeds(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    master: int = Field(0, ge=0)
    pool: int = Field(0, ge=0)


class ExperimentConfig(BaseModel):
    """Everything needed to reproduce a sweep.

    ``instance`` is a path (relative to the config file) or an inline
    instance document. ``experiment="categories"`` replaces pool sampling
    with teams of four, one worker per behaviour cell.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    instance: str | dict[str, Any] | None = None
    pool: PoolConfig = PoolConfig()
    grid: GridConfig = GridConfig()
    rewards: RewardConfig = RewardConfig()
    gamma: float = Field(0.95, gt=0.0, lt=1.0)
    tol: float = Field(1e-9, gt=0.0)
    heuristic: Heuristic = "qvalue"
    trust_form: TrustForm = "repaired"
    step_cap: int = Field(500, ge=1)
    seeds: Seeds = Seeds()
    sweep: SweepGrid = SweepGrid()
    policies: tuple[PolicyName, ...] = POLICIES
    experiment: Literal["pool", "categories"] = "pool"


def load_config(path: str | Path) -> tuple[ExperimentConfig, KitInstance]:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return cfg, resolve_instance(cfg, path.parent)


def resolve_instance(cfg: ExperimentConfig, base: Path = Path(".")) -> KitInstance:
    from .domain import canonical_instance

    if cfg.instance is None:
        return canonical_instance()
    if isinstance(cfg.instance, dict):
        return instance_from_document(cfg.instance)
    p = Path(cfg.instance)
    return load_instance(p if p.is_absolute() else base / p)


# -- planning context ------------------------------------------------------------


@dataclass(frozen=True)
class PlanningContext:
    """Solved artifacts shared read-only by every episode on one instance."""

    space: StateSpace
    cost: CostTable
    grid: BehaviorGrid
    rewards: RewardConfig
    gamma: float
    eta: float
    trust_form: TrustForm
    policy: AssistPolicy
    key: str


@lru_cache(maxsize=8)
def _context(inst_json: str, grid_cfg: GridConfig, rewards: RewardConfig, gamma: float, tol: float,
             eta: float, trust_form: str, cache_path: str | None) -> PlanningContext:
    inst = instance_from_document(json.loads(inst_json))
    space = build_state_space(inst)
    cost = solve_cost_to_go(space)
    grid = BehaviorGrid.from_config(grid_cfg)
    model = build_model(cost, grid, rewards, gamma, eta, trust_form)
    key = policy_key(cost, grid, rewards, gamma, tol, eta, trust_form)
    policy = None
    if cache_path and Path(cache_path).exists():
        try:
            policy = load_policy(cache_path, model, key)
        except CacheError as exc:
            log.info("ignoring policy cache: %s", exc)
    if policy is None:
        policy = solve_qmdp(model, tol)
        if cache_path:
            save_policy(cache_path, policy, key)
    return PlanningContext(space, cost, grid, rewards, gamma, eta, trust_form, policy, key)


def planning_context(
    inst: KitInstance,
    grid: GridConfig = GridConfig(),
    rewards: RewardConfig = RewardConfig(),
    gamma: float = 0.95,
    tol: float = 1e-9,
    eta: float = 0.2,
    trust_form: TrustForm = "repaired",
    cache_path: str | Path | None = None,
) -> PlanningContext:
    """Build (or reuse) the cost table and the shared per-worker policy."""
    doc = json.dumps(inst.to_document(), sort_keys=True)
    return _context(doc, grid, rewards, gamma, tol, eta, trust_form,
                    str(cache_path) if cache_path else None)


def context_for(cfg: ExperimentConfig, inst: KitInstance, cache_path=None) -> PlanningContext:
    return planning_context(inst, cfg.grid, cfg.rewards, cfg.gamma, cfg.tol, cfg.pool.eta,
                            cfg.trust_form, cache_path)


# -- episodes ----------------------------------------------------------------


@dataclass(frozen=True)
class EpisodeConfig:
    context: PlanningContext
    profiles: tuple[HumanProfile, ...]
    policy: PolicyName = "attention"
    heuristic: Heuristic = "qvalue"
    seed: int = 0
    step_cap: int = 500
    worker_ids: tuple[int, ...] | None = None
    robot_start: int | None = None
    initial_belief: np.ndarray | None = field(default=None, compare=False)  # robot prior; uniform if None

    def __post_init__(self):
        if not self.profiles:
            raise ContractViolation("an episode needs at least one worker")
        if self.initial_belief is not None:
            p = np.asarray(self.initial_belief, dtype=float)
            if p.shape != self.context.grid.shape or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
                raise ContractViolation("initial belief must be a distribution over the behaviour grid")
        if self.step_cap <= 0:
            raise ContractViolation("step cap must be positive")
        if self.policy not in POLICIES:
            raise ContractViolation(f"unknown policy {self.policy!r}")

    @property
    def k(self) -> int:
        return len(self.profiles)


@dataclass(frozen=True)
class RunRecord:
    policy: str
    seed: int
    worker_ids: tuple[int, ...]
    betas: tuple[float, ...]
    theta0: tuple[float, ...]
    sigmas: tuple[float, ...]
    human_actions: tuple[int, ...]
    interventions: tuple[int, ...]
    relocations: int
    steps: int
    discounted_return: float
    completed: bool
    run_id: int = 0
    belief_resets: int = 0
    tag: str = ""

    @property
    def k(self) -> int:
        return len(self.human_actions)

    @property
    def total_actions(self) -> int:
        return sum(self.human_actions)

    @property
    def total_interventions(self) -> int:
        return sum(self.interventions)


def _decision_json(decision, space: StateSpace):
    if isinstance(decision, Assist):
        return {"assist": decision.worker, "action": str(space.inst.actions[decision.action])}
    return {"assist": None}


def run_episode(cfg: EpisodeConfig, trace: list[dict] | None = None, trace_beliefs: bool = False) -> RunRecord:
    """Simulate one episode; every worker acts each step until all kits are done."""
    ctx = cfg.context
    space, cost, grid, rewards = ctx.space, ctx.cost, ctx.grid, ctx.rewards
    k_workers = cfg.k
    rngs = [np.random.default_rng(human_stream(cfg.seed, k, ACTION_STREAM)) for k in range(k_workers)]
    profiles = list(cfg.profiles)
    xs = [space.initial] * k_workers
    prior = bf.init_belief(grid) if cfg.initial_belief is None else bf.BehaviorBelief(np.asarray(cfg.initial_belief, float))
    beliefs = [prior] * k_workers
    last: list[tuple[int, int] | None] = [None] * k_workers
    robot = RobotState(cfg.robot_start if cfg.robot_start is None or cfg.robot_start < k_workers else None)
    actions = [0] * k_workers
    interventions = [0] * k_workers
    relocations = 0
    ret = 0.0
    tracking = cfg.policy == "attention"

    t = 0
    while t < cfg.step_cap and not all(space.terminal[x] for x in xs):
        if cfg.policy == "attention":
            decision = attention_step(beliefs, xs, robot, ctx.policy, rewards, cfg.heuristic)
        elif cfg.policy == "reactive":
            decision = reactive_step(xs, robot, cost, last)
        else:
            decision = none_step()

        reward = 0.0
        suggested = None
        if isinstance(decision, Assist):
            k, a = decision.worker, decision.action
            if robot.location is not None and robot.location != k:
                relocations += 1
                reward -= rewards.move_cost
            robot.location = k
            reward -= rewards.intervention_cost
            interventions[k] += 1
            profiles[k] = replace(profiles[k], theta=update_influence(profiles[k], space, xs[k], a))
            if tracking:
                beliefs[k] = bf.advance_theta(beliefs[k], xs[k], a, cost, grid, ctx.eta, ctx.trust_form)
            suggested = (k, a)

        chosen: list[int | None] = [None] * k_workers
        for k in range(k_workers):
            if space.terminal[xs[k]]:
                last[k] = None
                continue
            if suggested is not None and suggested[0] == k:
                dist = influenced_distribution(profiles[k], xs[k], suggested[1])
            else:
                dist = action_distribution(profiles[k], xs[k])
            chosen[k] = sample_action(dist, rngs[k])
            actions[k] += 1
            reward -= rewards.step_cost

        for k, a in enumerate(chosen):
            if a is None:
                continue
            if tracking:
                sug = suggested[1] if suggested is not None and suggested[0] == k else None
                beliefs[k] = bf.update(beliefs[k], xs[k], sug, a, cost, grid)
            last[k] = (xs[k], a)
            xs[k] = int(space.succ[xs[k], a])

        ret += ctx.gamma**t * reward
        if trace is not None:
            row = {
                "t": t,
                "decision": _decision_json(decision, space),
                "actions": [None if a is None else str(space.inst.actions[a]) for a in chosen],
                "states": [str(space.states[x]) for x in xs],
                "theta": [p.theta for p in profiles],
                "reward": reward,
            }
            if trace_beliefs and tracking:
                row["beliefs"] = [b.p.round(6).tolist() for b in beliefs]
            trace.append(row)
        t += 1

    return RunRecord(
        policy=cfg.policy,
        seed=cfg.seed,
        worker_ids=cfg.worker_ids if cfg.worker_ids is not None else tuple(range(k_workers)),
        betas=tuple(p.beta for p in cfg.profiles),
        theta0=tuple(p.theta for p in cfg.profiles),
        sigmas=tuple(p.sigma for p in cfg.profiles),
        human_actions=tuple(actions),
        interventions=tuple(interventions),
        relocations=relocations,
        steps=t,
        discounted_return=ret,
        completed=all(space.terminal[x] for x in xs),
        belief_resets=sum(b.resets for b in beliefs),
    )


# -- sweeps ------------------------------------------------------------------


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def sweep(cfg: ExperimentConfig, inst: KitInstance, cache_path=None) -> list[RunRecord]:
    """Matched-seed comparison of the configured policies.

    For each worker count and repetition a team is drawn from the pool without
    replacement; each trial then runs every policy with the same seed, so the
    policies face identical humans and identical random draws.
    """
    if cfg.experiment == "categories":
        return category_sweep(cfg, inst, cache_path)
    ctx = context_for(cfg, inst, cache_path)
    pool = sample_pool(cfg.pool, ctx.cost, cfg.seeds.pool, cfg.trust_form)
    too_big = [k for k in cfg.sweep.ks if k > len(pool)]
    if too_big:
        raise ConfigError(f"worker counts {too_big} exceed the pool size {len(pool)}")

    records = []
    for k in cfg.sweep.ks:
        for rep in range(cfg.sweep.repetitions):
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seeds.master, k, rep]))
            ids = tuple(int(i) for i in rng.choice(len(pool), size=k, replace=False))
            team = tuple(pool[i] for i in ids)
            for trial in range(cfg.sweep.trials):
                seed = _derive_seed(cfg.seeds.master, k, rep, trial)
                for name in cfg.policies:
                    ep = EpisodeConfig(ctx, team, name, cfg.heuristic, seed, cfg.step_cap, ids)
                    records.append(replace(run_episode(ep), run_id=len(records)))
    return records


def category_team(cfg: ExperimentConfig, cost: CostTable, seed: int) -> tuple[HumanProfile, ...]:
    """One worker from each behaviour cell, in ``CATEGORY_CELLS`` order."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    team = []
    for n, (beta_band, theta_band) in enumerate(CATEGORY_CELLS.values()):
        beta = float(rng.uniform(*beta_band))
        theta = float(rng.uniform(*theta_band))
        sigma = float(rng.uniform(*cfg.pool.sigma_range))
        utility = make_noisy_utility(cost, sigma, human_stream(seed, n, NOISE_STREAM))
        team.append(HumanProfile(beta, theta, utility, cfg.pool.eta, cfg.trust_form))
    return tuple(team)


def category_sweep(cfg: ExperimentConfig, inst: KitInstance, cache_path=None) -> list[RunRecord]:
    """Teams of four drawn from the behaviour bands; ``repetitions * trials`` runs per policy."""
    ctx = context_for(cfg, inst, cache_path)
    names = tuple(CATEGORY_CELLS)
    records = []
    for rep in range(cfg.sweep.repetitions):
        team = category_team(cfg, ctx.cost, _derive_seed(cfg.seeds.pool, rep))
        for trial in range(cfg.sweep.trials):
            seed = _derive_seed(cfg.seeds.master, len(team), rep, trial)
            for name in cfg.policies:
                ep = EpisodeConfig(ctx, team, name, cfg.heuristic, seed, cfg.step_cap, tuple(range(len(team))))
                rec = replace(run_episode(ep), run_id=len(records), tag=",".join(names))
                records.append(rec)
    return records


# -- output and aggregation ---------------------------------------------------


def _fmt(x: float) -> str:
    return format(x, ".10g")


def record_rows(rec: RunRecord) -> Iterable[list[str]]:
    for n in range(rec.k):
        yield [
            str(rec.run_id), str(rec.k), rec.policy, str(rec.seed), str(rec.worker_ids[n]),
            _fmt(rec.betas[n]), _fmt(rec.theta0[n]), _fmt(rec.sigmas[n]),
            str(rec.human_actions[n]), str(rec.interventions[n]), str(rec.relocations),
            str(rec.steps), str(int(rec.completed)), _fmt(rec.discounted_return),
        ]


def records_to_csv(records: Sequence[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for rec in records:
        w.writerows(record_rows(rec))
    return buf.getvalue()


def records_from_csv(text: str) -> list[RunRecord]:
    """Rebuild run records from the per-worker rows written by ``records_to_csv``."""
    rows = list(csv.DictReader(io.StringIO(text)))
    if rows and list(rows[0]) != CSV_HEADER:
        raise ConfigError(f"unexpected CSV header {list(rows[0])}")
    by_run: dict[int, list[dict]] = {}
    for row in rows:
        by_run.setdefault(int(row["run_id"]), []).append(row)
    out = []
    for run_id, group in by_run.items():
        first = group[0]
        out.append(RunRecord(
            policy=first["policy"],
            seed=int(first["seed"]),
            worker_ids=tuple(int(r["worker_id"]) for r in group),
            betas=tuple(float(r["beta"]) for r in group),
            theta0=tuple(float(r["theta0"]) for r in group),
            sigmas=tuple(float(r["sigma"]) for r in group),
            human_actions=tuple(int(r["human_actions"]) for r in group),
            interventions=tuple(int(r["interventions"]) for r in group),
            relocations=int(first["relocations"]),
            steps=int(first["steps"]),
            discounted_return=float(first["discounted_return"]),
            completed=bool(int(first["completed"])),
            run_id=run_id,
        ))
    return out


@dataclass
class SummaryRow:
    k: int
    policy: str
    runs: int
    actions_mean: float
    actions_std: float
    interventions_mean: float
    interventions_std: float
    relocations_mean: float
    completed_frac: float


@dataclass
class Summary:
    rows: list[SummaryRow]
    reductions: list[dict[str, Any]] = field(default_factory=list)
    categories: list[dict[str, Any]] = field(default_factory=list)

    def lookup(self, k: int, policy: str) -> SummaryRow | None:
        for row in self.rows:
            if row.k == k and row.policy == policy:
                return row
        return None


def reduction(baseline: float, value: float) -> float:
    """Percentage reduction of ``value`` relative to ``baseline``."""
    return 100.0 * (baseline - value) / baseline if baseline else math.nan


def _in_band(v: float, band: tuple[float, float]) -> bool:
    return band[0] <= v <= band[1]


def behaviour_category(beta: float, theta: float) -> list[str]:
    cats = []
    if _in_band(beta, LOW_BETA):
        cats.append("low_expertise")
    if _in_band(beta, HIGH_BETA):
        cats.append("high_expertise")
    if _in_band(theta, LOW_THETA):
        cats.append("low_influence")
    if _in_band(theta, HIGH_THETA):
        cats.append("high_influence")
    for name, (bb, tb) in CATEGORY_CELLS.items():
        if _in_band(beta, bb) and _in_band(theta, tb):
            cats.append(name)
    return cats


def aggregate(records: Sequence[RunRecord]) -> Summary:
    """Per (K, policy) means and sample standard deviations (ddof 0 for one run)."""
    if not records:
        raise ContractViolation("cannot aggregate an empty record list")
    groups: dict[tuple[int, str], list[RunRecord]] = {}
    for rec in records:
        groups.setdefault((rec.k, rec.policy), []).append(rec)

    def stats(vals):
        arr = np.asarray(vals, dtype=float)
        return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else 0.0

    rows = []
    for (k, policy), recs in sorted(groups.items(), key=lambda kv: (kv[0][0], POLICIES.index(kv[0][1]))):
        am, asd = stats([r.total_actions for r in recs])
        im, isd = stats([r.total_interventions for r in recs])
        rows.append(SummaryRow(k, policy, len(recs), am, asd, im, isd,
                               float(np.mean([r.relocations for r in recs])),
                               float(np.mean([r.completed for r in recs]))))
    summary = Summary(rows)

    for k in sorted({r.k for r in rows}):
        att, rea, non = (summary.lookup(k, p) for p in POLICIES)
        entry: dict[str, Any] = {"K": k}
        if att and non:
            entry["actions_vs_none_pct"] = reduction(non.actions_mean, att.actions_mean)
        if att and rea:
            entry["actions_vs_reactive_pct"] = reduction(rea.actions_mean, att.actions_mean)
            entry["interventions_vs_reactive_pct"] = reduction(rea.interventions_mean, att.interventions_mean)
        if len(entry) > 1:
            summary.reductions.append(entry)

    per_cat: dict[tuple[str, str], list[int]] = {}
    for rec in records:
        for n in range(rec.k):
            for cat in behaviour_category(rec.betas[n], rec.theta0[n]):
                per_cat.setdefault((cat, rec.policy), []).append(rec.interventions[n])
    for (cat, policy), vals in sorted(per_cat.items()):
        summary.categories.append({"category": cat, "policy": policy, "workers": len(vals),
                                   "interventions_mean": float(np.mean(vals))})
    return summary


def summary_to_csv(summary: Summary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["K", "policy", "runs", "actions_mean", "actions_std", "interventions_mean",
                "interventions_std", "relocations_mean", "completed_frac"])
    for r in summary.rows:
        w.writerow([r.k, r.policy, r.runs, _fmt(r.actions_mean), _fmt(r.actions_std),
                    _fmt(r.interventions_mean), _fmt(r.interventions_std),
                    _fmt(r.relocations_mean), _fmt(r.completed_frac)])
    return buf.getvalue()


def write_sweep(records: Sequence[RunRecord], out: str | Path) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "runs.csv").write_text(records_to_csv(records))
    (out / "summary.csv").write_text(summary_to_csv(aggregate(records)))


def write_trace(trace: Sequence[dict], path: str | Path) -> None:
    with open(path, "w") as fh:
        for row in trace:
            fh.write(json.dumps(row) + "\n")
