"""Property-based checks over random environments."""

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from dgroves import build_custom, build_pivot, build_team, solve, verify_ic
from dgroves.deviate import best_response_value, extract_phi
from dgroves.env import couple_rows, dumps, load_environment, random_environment, reduced_environment

envs = st.builds(
    lambda seed, n, delta: random_environment(np.random.default_rng(seed), n, discount=delta),
    st.integers(0, 2**32 - 1), st.integers(1, 3), st.sampled_from([0.0, 0.5, 0.9]),
)
SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@SETTINGS
@given(envs)
def test_round_trip(env):
    assert dumps(load_environment(dumps(env))) == dumps(env)


@SETTINGS
@given(envs, st.integers(0, 1000))
def test_groves_family_is_ic(env, seed):
    sol = solve(env)
    rng = np.random.default_rng(seed)
    rules = []
    for i in range(env.n_players):
        m = reduced_environment(env, i).n_states
        rules.append((rng.normal(size=m), rng.integers(0, env.n_actions, size=m)))
    for mech in (build_team(env, sol), build_pivot(env, sol), build_custom(env, sol, rules)):
        assert verify_ic(mech)["passed"]
        assert extract_phi(env, sol, mech.transfers).is_groves()
        for i in range(env.n_players):
            np.testing.assert_allclose(sol.values[i] + sol.others[i], sol.welfare, atol=1e-9)


@SETTINGS
@given(envs)
def test_best_response_is_truthful_for_pivot(env):
    mech = build_pivot(env, solve(env))
    for i in range(env.n_players):
        assert best_response_value(mech, i).truthful_optimal


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_coupling_marginals(m, seed):
    rng = np.random.default_rng(seed)
    p, q = rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(m))
    joint = couple_rows(p, q)
    assert np.all(joint >= 0)
    np.testing.assert_allclose(joint.sum(axis=1), p, atol=1e-12)
    np.testing.assert_allclose(joint.sum(axis=0), q, atol=1e-12)
