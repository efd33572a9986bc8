"""Planning and simulation for one robot assisting several kitting workers."""

from .assist import AssistModel, AssistPolicy, RewardConfig, build_model, expected_values, solve_qmdp
from .belief import BehaviorBelief, BehaviorGrid, GridConfig, advance_theta, init_belief, likelihood, update
from .domain import (
    HumanAction,
    KitInstance,
    KitState,
    build_state_space,
    canonical_instance,
    enumerate_states,
    is_terminal,
    legal_actions,
    parse_instance,
    transition,
)
from .harness import ExperimentConfig, EpisodeConfig, RunRecord, aggregate, planning_context, run_episode, sweep
from .human import HumanProfile, PoolConfig, action_distribution, influenced_distribution, sample_pool
from .planner import CostTable, NoisyUtility, make_noisy_utility, solve_cost_to_go
from .policies import Assist, Idle, RobotState, attention_step, none_step, reactive_step

__version__ = "0.1.0"
