import numpy as np
import pytest

from oracles import one_shot_gains
from dgroves import build_custom, build_pivot, build_team, from_transfers, solve
from dgroves.deviate import (
    VARIANTS,
    best_response_value,
    compare_consistent,
    consistent_monte_carlo,
    consistent_values,
    coupled_chain,
    default_horizon,
    extract_phi,
    gain_table,
    one_shot_gain,
    simulate_consistent,
    verify_ic,
)
from dgroves.env import random_environment, reduced_environment
from dgroves.groves import bump_transfers


@pytest.fixture(scope="module")
def corrupted(e2, e2_solved):
    team = build_team(e2, e2_solved)
    return from_transfers(e2, e2_solved, bump_transfers(e2, team.transfers, "1", "H", 0.1), kind="corrupted")


def test_gain_table_matches_loops(fixture_env):
    env, sol = fixture_env
    for mech in (build_team(env, sol), build_pivot(env, sol)):
        for i in range(env.n_players):
            np.testing.assert_allclose(gain_table(mech, i), one_shot_gains(mech, i), atol=1e-12)


def test_groves_mechanisms_pass(fixture_env):
    env, sol = fixture_env
    for mech in (build_team(env, sol), build_pivot(env, sol)):
        result = verify_ic(mech)
        assert result["passed"] and result["max_gain"] <= 1e-8


def test_corrupted_witness(corrupted, e2):
    result = verify_ic(corrupted, full=True)
    assert not result["passed"]
    w = result["witness"]
    assert (w["player"], w["state"], w["report"]) == ("1", "H,H", "L")
    assert w["gain"] == pytest.approx(0.1, abs=1e-9)
    g = one_shot_gain(corrupted, "1", "H,H", "L")
    assert g.gain == pytest.approx(w["gain"], abs=1e-15)
    assert result["gains"]["1"]["H,H"]["H"] == 0.0


def test_verify_ic_rejects_bad_tol(e2, e2_solved):
    with pytest.raises(ValueError):
        verify_ic(build_team(e2, e2_solved), tol=0)


def test_best_response_matches_payoff_for_groves(fixture_env):
    env, sol = fixture_env
    mech = build_pivot(env, sol)
    for i in range(env.n_players):
        br = best_response_value(mech, i)
        np.testing.assert_allclose(br.value, mech.payoffs[i], atol=1e-8)
        assert br.truthful_optimal


def test_best_response_detects_corruption(corrupted):
    br = best_response_value(corrupted, "1")
    assert br.gap > 0.1 and not br.truthful_optimal
    one_shot = np.max(gain_table(corrupted, 0))
    assert br.gap >= one_shot - 1e-12  # a full deviation is at least as good as one period of it


def test_default_horizon(e2):
    T = default_horizon(e2)
    tail = lambda t: e2.discount ** t * e2.n_players * e2.bound / (1 - e2.discount)
    assert tail(T) <= 1e-6 < tail(T - 1)


@pytest.mark.parametrize("variant", VARIANTS)
def test_coupled_chain_is_stochastic(e2, e2_solved, variant):
    P, act, act_true = coupled_chain(e2, e2_solved.policy, 0, variant)
    np.testing.assert_allclose(P.sum(axis=-1), 1.0, atol=1e-12)


@pytest.mark.parametrize("variant", VARIANTS)
def test_consistent_diagonal_reproduces_truthful(fixture_env, variant):
    env, sol = fixture_env
    mech = build_pivot(env, sol)
    for i in range(env.n_players):
        cv = consistent_values(mech, i, variant)
        own, others = env.split(i)
        np.testing.assert_allclose(cv.own_values[own, own, others], sol.values[i], atol=1e-9)
        np.testing.assert_allclose(cv.others_values[own, others], sol.others[i], atol=1e-9)
        np.testing.assert_allclose(cv.transfers[own, others], mech.total_transfers[i], atol=1e-9)
        np.testing.assert_allclose(cv.utility[own, own, others], mech.payoffs[i], atol=1e-9)


def test_consistent_phi_is_report_free_for_groves(e2, e2_solved):
    for mech in (build_team(e2, e2_solved), build_pivot(e2, e2_solved)):
        for i in range(2):
            cv = consistent_values(mech, i)
            phi = cv.transfers + cv.others_values
            assert np.ptp(phi, axis=0).max() <= 1e-9


def test_consistent_monte_carlo_against_exact(e2, e2_solved):
    mech = build_pivot(e2, e2_solved)
    cmp = compare_consistent(mech, 0, seed=5, n_paths=20_000)
    assert cmp["agree"]
    assert len(cmp["rows"]) == e2.n_states * e2.sizes[0]


def test_single_path_reproducible(e2, e2_solved):
    mech = build_team(e2, e2_solved)
    a = simulate_consistent(mech, "1", "H,L", "L", seed=4, horizon=12)
    b = simulate_consistent(mech, "1", "H,L", "L", seed=4, horizon=12)
    assert a.own_value == b.own_value and np.array_equal(a.true_types, b.true_types)
    assert a.reports[0] == 0 and a.true_types[0] == 1
    assert len(a.actions) == 12


def test_truthful_path_keeps_report_equal_to_type(e2, e2_solved):
    path = simulate_consistent(build_team(e2, e2_solved), "2", "L,H", "H", seed=1, horizon=30)
    assert np.array_equal(path.true_types, path.reports)


def test_monte_carlo_is_seed_deterministic(e2, e2_solved):
    mech = build_team(e2, e2_solved)
    a = consistent_monte_carlo(mech, 0, 0, 1, seed=8, n_paths=500)
    b = consistent_monte_carlo(mech, 0, 0, 1, seed=8, n_paths=500)
    assert a == b


def test_bad_horizon(e2, e2_solved):
    with pytest.raises(ValueError):
        simulate_consistent(build_team(e2, e2_solved), 0, 0, 0, horizon=0)


def test_extract_phi_groves_and_corrupted(e2, e2_solved, corrupted):
    assert extract_phi(e2, e2_solved, build_team(e2, e2_solved).transfers).max_score <= 1e-9
    pivot = build_pivot(e2, e2_solved)
    ext = extract_phi(e2, e2_solved, pivot.transfers)
    assert ext.is_groves()
    _, w_ex_1 = None, pivot.rules[0].total
    np.testing.assert_allclose(ext.tables[0][0], w_ex_1, atol=1e-9)
    bad = extract_phi(e2, e2_solved, corrupted.transfers)
    assert bad.max_score >= 0.04 and not bad.is_groves()


def test_custom_random_mechanisms_are_ic():
    rng = np.random.default_rng(21)
    for _ in range(10):
        env = random_environment(rng, int(rng.integers(1, 4)), discount=float(rng.choice([0.0, 0.5, 0.9])))
        sol = solve(env)
        rules = [(rng.normal(size=reduced_environment(env, i).n_states),
                  rng.integers(0, env.n_actions, size=reduced_environment(env, i).n_states))
                 for i in range(env.n_players)]
        assert verify_ic(build_custom(env, sol, rules))["passed"]
