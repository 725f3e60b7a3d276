import numpy as np
import pytest

from conftest import FIXTURES
from oracles import brute_force_welfare, series_value
from dgroves import read_environment, solve
from dgroves.env import random_environment
from dgroves.mdp import IterationLimitError, evaluate_policy, greedy, solve_efficient, solve_excluded, solve_mdp


def test_e2_welfare_matches_brute_force(e2, e2_solved):
    np.testing.assert_allclose(e2_solved.welfare, brute_force_welfare(e2), atol=1e-9)
    assert e2_solved.policy.tolist() == [0, 1, 1, 1]


def test_random_welfare_matches_brute_force():
    rng = np.random.default_rng(1)
    for delta in (0.0, 0.5, 0.9):
        for _ in range(6):
            env = random_environment(rng, 2, max_types=2, max_actions=3, discount=delta)
            policy, w, _ = solve_efficient(env)
            np.testing.assert_allclose(w, brute_force_welfare(env), atol=1e-9)


def test_single_state_closed_form():
    env = read_environment(FIXTURES / "single_state.json")
    policy, w, _ = solve_efficient(env)
    assert policy.tolist() == [0]  # stay: 0.7 beats go: 0.6
    assert w[0] == pytest.approx(0.7 / 0.1, abs=1e-9)


def test_static_case_is_myopic():
    env = random_environment(np.random.default_rng(2), 3, discount=0.0)
    policy, w, report = solve_efficient(env)
    np.testing.assert_array_equal(w, env.welfare_reward.max(axis=1))
    assert report.iterations <= 3  # one step, one exact polish, one confirmation


def test_value_decomposition(fixture_env):
    env, sol = fixture_env
    for i in range(env.n_players):
        np.testing.assert_allclose(sol.values[i] + sol.others[i], sol.welfare, atol=1e-9)


def test_evaluate_policy_matches_series(e2, e2_solved):
    chain = e2.transition[e2_solved.policy, np.arange(e2.n_states)]
    for i in range(2):
        flow = e2.player_reward(i)[np.arange(e2.n_states), e2_solved.policy]
        np.testing.assert_allclose(e2_solved.values[i], series_value(chain, flow, e2.discount), atol=1e-12)
        np.testing.assert_allclose(evaluate_policy(e2, e2_solved.policy, flow), e2_solved.values[i], atol=1e-12)


def test_greedy_ties_go_low():
    q = np.array([[1.0, 1.0 + 1e-14, 0.5], [0.0, 2.0, 2.0]])
    assert greedy(q).tolist() == [0, 1]


def test_iteration_limit():
    rng = np.random.default_rng(4)
    env = random_environment(rng, 2, discount=0.9)
    with pytest.raises(IterationLimitError) as info:
        solve_efficient(env, tol=1e-14, max_iter=3)
    assert info.value.iterations == 3


def test_solve_rejects_bad_tol(e2):
    with pytest.raises(ValueError):
        solve_efficient(e2, tol=0.0)


def test_policy_iteration_agrees_with_value_iteration():
    rng = np.random.default_rng(5)
    env = random_environment(rng, 2, discount=0.9)
    trans = np.transpose(env.transition, (1, 0, 2))
    p1, v1, _ = solve_mdp(env.welfare_reward, trans, env.discount)
    p2, v2, rep = solve_mdp(env.welfare_reward, trans, env.discount,
                            init=np.zeros(env.n_states, dtype=np.int64), method="policy-iteration")
    np.testing.assert_allclose(v1, v2, atol=1e-9)
    assert rep.method == "policy-iteration"


def test_excluded_welfare(e2):
    _, w_ex, _ = solve_excluded(e2, 0)
    # player 2 alone: L prefers 0, H prefers 1
    assert w_ex.shape == (2,)
    assert w_ex[0] < w_ex[1]


def test_solve_report_has_no_timing_by_default(e2_solved):
    assert "wall_time" not in e2_solved.report.to_dict()
    assert e2_solved.report.residual <= 1e-10
