import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attnswitch.assist import (
    NOOP,
    AssistModel,
    RewardConfig,
    build_model,
    expected_values,
    load_policy,
    passive_values,
    policy_key,
    save_policy,
    scaling_table,
    solve_qmdp,
)
from attnswitch.belief import BehaviorBelief, BehaviorGrid, GridConfig, init_belief
from attnswitch.domain import HumanAction, KitState
from attnswitch.errors import CacheError, ContractViolation, SolverError

import oracles


@pytest.fixture(scope="module")
def model(ctx):
    return ctx.policy.model


@pytest.fixture(scope="module")
def policy(ctx):
    return ctx.policy


def point_mass(shape, i, j):
    p = np.zeros(shape)
    p[i, j] = 1.0
    return BehaviorBelief(p)


def chain(gamma=0.95, p_done=0.5):
    """Active state 0 moves to terminal state 1 with probability ``p_done``."""
    succ = np.array([[[1, 0]], [[1, 1]]])
    prob = np.array([[[p_done, 1 - p_done]], [[1.0, 0.0]]])
    reward = np.array([[-1.0], [0.0]])
    valid = np.ones((2, 1), dtype=bool)
    return AssistModel(succ, prob, reward, valid, gamma)


def test_model_shape(model, ctx):
    assert model.n_states == 108 * 50
    assert model.n_actions == 9
    assert model.flat(3, 2, 7) == (3 * 5 + 2) * 10 + 7


def test_rows_are_distributions(model):
    assert np.allclose(model.prob.sum(axis=2), 1.0, atol=1e-12)
    assert np.all(model.prob >= 0)
    assert np.all(model.reward <= 0)


def test_terminal_cells_absorb(model, ctx):
    x = int(np.flatnonzero(ctx.space.terminal)[0])
    for i in range(5):
        for j in range(10):
            s = model.flat(x, i, j)
            assert np.all(model.succ[s, :, 0] == s)
            assert np.all(model.prob[s, :, 0] == 1.0)
            assert np.all(model.reward[s] == 0.0)


def test_zero_expertise_noop_is_uniform(ctx):
    g = BehaviorGrid(np.array([0.0, 1.0]), np.array([0.5]))
    m = build_model(ctx.cost, g, RewardConfig())
    x = ctx.space.index[KitState("C1", (1, 0, 0, 0))]
    s = m.flat(x, 0, 0)
    targets = {m.flat(int(y), 0, 0) for y in ctx.space.succ[x, ctx.space.legal(x)]}
    live = m.prob[s, NOOP] > 0
    assert set(m.succ[s, NOOP][live].tolist()) == targets
    assert np.allclose(m.prob[s, NOOP][live], 1 / 3)


def test_suggestion_moves_to_nearest_theta_bin(model, ctx):
    grid = ctx.grid
    x = ctx.space.initial
    fetch = ctx.space.action_id(HumanAction.fetch("C1"))
    for j, theta in enumerate(grid.theta):
        expect = int(np.argmin(np.abs(grid.theta - min(1.0, theta + 0.2))))
        s = model.flat(x, 2, j)
        live = model.prob[s, 1 + fetch] > 0
        got = {int(t) % 10 for t in model.succ[s, 1 + fetch][live]}
        assert got == {expect}


def test_illegal_suggestions_are_masked(model, policy, ctx):
    x = ctx.space.initial
    place = ctx.space.action_id(HumanAction.place("bolt"))
    s = model.flat(x, 0, 0)
    assert not model.valid[s, 1 + place]
    assert policy.qvalues[s, 1 + place] == -np.inf
    qb = policy.belief_qvalues(init_belief(ctx.grid), x)
    assert qb[1 + place] == -np.inf
    assert np.all(np.isfinite(qb[model.valid[s]]))


def test_gamma_must_be_a_discount(ctx):
    with pytest.raises(ContractViolation):
        build_model(ctx.cost, ctx.grid, RewardConfig(), gamma=1.0)


# solver

def test_chain_closed_form():
    pol = solve_qmdp(chain())
    assert pol.values[0] == pytest.approx(-1 / (1 - 0.95 / 2), abs=1e-9)
    assert pol.values[0] == pytest.approx(-1.9048, abs=1e-4)
    assert pol.values[1] == 0.0


def test_all_terminal_model_is_zero():
    succ = np.array([[[0]], [[1]]])
    m = AssistModel(succ, np.ones((2, 1, 1)), np.zeros((2, 1)), np.ones((2, 1), dtype=bool), 0.9)
    pol = solve_qmdp(m)
    assert np.all(pol.qvalues == 0.0)


def test_nonpositive_tolerance_is_rejected():
    with pytest.raises(ContractViolation):
        solve_qmdp(chain(), tol=0.0)


def test_non_convergence_is_reported():
    with pytest.raises(SolverError, match="residual"):
        solve_qmdp(chain(gamma=0.999, p_done=0.001), tol=1e-12, max_iter=3)


def test_residual_below_tolerance(policy, model):
    assert policy.residual < 1e-9
    q = model.reward + model.gamma * np.einsum("sal,sal->sa", model.prob, policy.values[model.succ])
    q = np.where(model.valid, q, -np.inf)
    assert np.abs(q.max(axis=1) - policy.values).max() < 1e-9


def test_matches_exact_policy_iteration(policy, ctx):
    P, R, valid = oracles.exact_assist_mdp(ctx.cost, ctx.grid.beta.tolist(), ctx.grid.theta.tolist(), 1.0, 0.1, 0.2)
    v, q = oracles.policy_iteration(P, R, valid, 0.95)
    assert np.array_equal(valid, policy.model.valid)
    assert np.abs(v - policy.values).max() < 1e-8
    chosen = np.argmax(policy.qvalues, axis=1)
    # ties aside, the chosen action is optimal under the exact values
    assert np.all(q[np.arange(len(v)), chosen] >= q.max(axis=1) - 1e-8)
    # and point-mass beliefs reproduce the MDP choice
    nb, nt = ctx.grid.shape
    for x in range(ctx.space.n_states):
        for i in range(nb):
            for j in range(nt):
                assert policy.act(point_mass((nb, nt), i, j), x) == chosen[policy.model.flat(x, i, j)]


def test_passive_values_evaluate_noop(policy, model):
    vp = policy.passive
    q0 = model.reward[:, NOOP] + model.gamma * np.einsum("sl,sl->s", model.prob[:, NOOP], vp[model.succ[:, NOOP]])
    assert np.abs(q0 - vp).max() < 1e-8
    assert np.all(vp <= policy.values + 1e-9)
    assert np.allclose(passive_values(chain()), solve_qmdp(chain()).values)


def _solve_with_cost(ctx, c):
    return solve_qmdp(build_model(ctx.cost, ctx.grid, RewardConfig(intervention_cost=c)))


def test_intervention_cost_never_raises_values(ctx):
    pols = [_solve_with_cost(ctx, c) for c in (0.0, 0.1, 0.5, 2.0)]
    for lo, hi in zip(pols, pols[1:]):
        ok = lo.model.valid
        assert np.all(hi.qvalues[ok] <= lo.qvalues[ok] + 1e-9)
        assert np.all(hi.values <= lo.values + 1e-9)


def test_intervention_cost_lowers_suggestions_at_fixed_continuation(ctx):
    v = ctx.policy.values
    gaps = []
    for c in (0.0, 0.1, 0.5, 2.0):
        m = build_model(ctx.cost, ctx.grid, RewardConfig(intervention_cost=c))
        q = m.reward + m.gamma * np.einsum("sal,sal->sa", m.prob, v[m.succ])
        gaps.append(np.where(m.valid, q - q[:, :1], -np.inf))
    for lo, hi in zip(gaps, gaps[1:]):
        ok = np.isfinite(lo)
        assert np.all(hi[ok] <= lo[ok] + 1e-12)


def test_solved_suggestion_gap_can_grow_with_intervention_cost(ctx):
    # once later help is charged, a suggestion that raises influence now is
    # worth more relative to waiting; the re-solved gap is not monotone
    free, paid = _solve_with_cost(ctx, 0.0), _solve_with_cost(ctx, 0.1)
    ok = free.model.valid
    gap_free = np.where(ok, free.qvalues - free.qvalues[:, :1], 0.0)
    gap_paid = np.where(ok, paid.qvalues - paid.qvalues[:, :1], 0.0)
    assert (gap_paid - gap_free).max() > 1e-3


# expected values

def test_terminal_expected_values(policy, ctx):
    x = int(np.flatnonzero(ctx.space.terminal)[0])
    for h in ("qvalue", "one-step", "passive"):
        assert expected_values(policy, init_belief(ctx.grid), x, h) == (0.0, 0.0, NOOP)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 107), st.integers(0, 2**31), st.sampled_from(["qvalue", "one-step", "passive"]))
def test_expected_value_properties(policy, ctx, x, seed, heuristic):
    p = np.random.default_rng(seed).dirichlet(np.ones(ctx.grid.size) * 0.3).reshape(ctx.grid.shape)
    r_pi, r_phi, a = expected_values(policy, BehaviorBelief(p), x, heuristic)
    if a == NOOP:
        assert r_pi == r_phi
    if heuristic == "qvalue":
        assert r_pi >= r_phi
    if heuristic == "one-step" and a != NOOP:
        assert r_pi - r_phi == pytest.approx(-0.1)
    assert policy.model.valid[policy.model.flat(x, 0, 0), a]


def test_unknown_heuristic(policy, ctx):
    with pytest.raises(ValueError):
        expected_values(policy, init_belief(ctx.grid), ctx.space.initial, "psychic")


# caching and scaling

def test_policy_cache_round_trip(policy, ctx, tmp_path):
    key = policy_key(ctx.cost, ctx.grid, ctx.rewards, 0.95, 1e-9, 0.2, "repaired")
    path = tmp_path / "policy.bin"
    save_policy(path, policy, key)
    again = load_policy(path, policy.model, key)
    assert np.array_equal(again.qvalues, policy.qvalues)
    assert np.array_equal(again.passive, policy.passive)
    other = policy_key(ctx.cost, ctx.grid, RewardConfig(move_cost=2.0), 0.95, 1e-9, 0.2, "repaired")
    with pytest.raises(CacheError):
        load_policy(path, policy.model, other)


def test_scaling_counts():
    rows = scaling_table(108, 50)
    assert [r["factored"] for r in rows] == [k * 108 * 50 for k in range(1, 7)]
    assert [r["joint"] for r in rows] == [(108 * 50) ** k for k in range(1, 7)]
    assert rows[3]["joint"] / rows[3]["factored"] > 1e6


def test_small_grid_changes_counts(ctx):
    g = BehaviorGrid.from_config(GridConfig(beta_bins=2, theta_bins=3))
    assert build_model(ctx.cost, g, RewardConfig()).n_states == 108 * 6
