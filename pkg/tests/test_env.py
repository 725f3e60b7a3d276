import json

import numpy as np
import pytest

from conftest import BAD_FIXTURES, FIXTURES
from dgroves.env import (
    Environment,
    NoiseStream,
    ParseError,
    ValidationError,
    couple_rows,
    coupling_kernel,
    dumps,
    inverse_cdf,
    load_environment,
    random_environment,
    read_environment,
    reduced_environment,
    to_document,
)


def test_e2_shape_and_ordering(e2):
    assert e2.n_players == 2 and e2.sizes == (2, 2) and e2.n_states == 4
    assert e2.state_labels == ("L,L", "L,H", "H,L", "H,H")
    assert e2.bound == 2.0
    assert e2.discount == 0.5


def test_product_kernel(e2):
    # P((H,H) | (L,H), a=1) = p1(H|L,1) * p2(H|H,1)
    s, t = e2.state_index(["L", "H"]), e2.state_index(["H", "H"])
    assert e2.transition[1, s, t] == pytest.approx(0.4 * 0.8, abs=1e-15)
    np.testing.assert_allclose(e2.transition.sum(axis=-1), 1.0, atol=1e-12)


def test_welfare_reward_table(e2):
    s = e2.state_index(["H", "L"])
    assert e2.welfare_reward[s, 1] == pytest.approx(2.0 - 1.5)
    assert e2.welfare_reward[s, 0] == 0.0


def test_round_trip_is_idempotent(e2):
    text = dumps(e2)
    again = load_environment(text)
    assert dumps(again) == text
    assert again.digest == e2.digest


def test_tiny_row_drift_is_renormalized():
    doc = json.loads((FIXTURES / "E2.json").read_text())
    doc["players"][0]["transition"]["L"]["0"] = [0.8, 0.2 + 5e-11]
    env = load_environment(doc)
    assert env.kernel[0][0, 0].sum() == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("name", BAD_FIXTURES)
def test_bad_fixtures_raise(name):
    with pytest.raises((ParseError, ValidationError)):
        read_environment(FIXTURES / "bad" / name)


def test_validation_names_offender():
    with pytest.raises(ValidationError, match=r"player 1, type H, action 1"):
        read_environment(FIXTURES / "bad" / "row_sum.json")
    with pytest.raises(ValidationError, match="discount"):
        read_environment(FIXTURES / "bad" / "discount.json")


def test_reduced_environment(e2):
    red = reduced_environment(e2, 0)
    assert red.players == ("2",) and red.n_states == 2
    empty = reduced_environment(reduced_environment(e2, 0), 0)
    assert empty.n_players == 0 and empty.n_states == 1


def test_to_document_keys(e2):
    doc = to_document(e2)
    assert set(doc) == {"discount", "actions", "players"}


def test_coupling_example():
    q = couple_rows(np.array([0.3, 0.7]), np.array([0.6, 0.4]))
    np.testing.assert_allclose(q, [[0.3, 0.0], [0.3, 0.4]], atol=1e-15)


def test_coupling_marginals_random():
    rng = np.random.default_rng(3)
    for _ in range(50):
        m = int(rng.integers(1, 6))
        p, r = rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(m))
        q = couple_rows(p, r)
        np.testing.assert_allclose(q.sum(axis=1), p, atol=1e-12)
        np.testing.assert_allclose(q.sum(axis=0), r, atol=1e-12)


def test_coupling_identical_rows_is_diagonal():
    p = np.array([0.2, 0.5, 0.3])
    np.testing.assert_allclose(couple_rows(p, p), np.diag(p), atol=1e-15)


def test_coupling_draws_match_joint_law():
    p, r = np.array([0.3, 0.7]), np.array([0.6, 0.4])
    u = NoiseStream(7).draws(0, 1, 1_000_000)
    x = np.count_nonzero(np.cumsum(p)[:-1][None, :] <= u[:, None], axis=1)
    y = np.count_nonzero(np.cumsum(r)[:-1][None, :] <= u[:, None], axis=1)
    freq = np.zeros((2, 2))
    np.add.at(freq, (x, y), 1.0)
    freq /= u.size
    target = couple_rows(p, r)
    se = np.sqrt(target * (1 - target) / u.size)
    assert np.all(np.abs(freq - target) <= 4 * se + 1e-12)


def test_inverse_cdf_edges():
    row = np.array([0.25, 0.0, 0.75])
    assert inverse_cdf(row, 0.0) == 0
    assert inverse_cdf(row, 0.2499) == 0
    assert inverse_cdf(row, 0.25) == 2  # zero-mass type is never drawn
    assert inverse_cdf(row, 0.9999999) == 2


def test_coupling_kernel_shape(e2):
    ck = coupling_kernel(e2, "1", "1")
    assert ck.q.shape == (2, 2, 2, 2)
    np.testing.assert_allclose(ck.q.sum(axis=(2, 3)), 1.0, atol=1e-12)


def test_noise_stream_reproducible_and_independent():
    a = NoiseStream(11).draws(1, 3, 5)
    b = NoiseStream(11).draws(1, 3, 5)
    c = NoiseStream(11).draws(1, 4, 5)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert np.all((a >= 0) & (a < 1))


def test_random_environment_valid():
    rng = np.random.default_rng(0)
    for n in (1, 2, 3):
        env = random_environment(rng, n, discount=0.9)
        assert isinstance(env, Environment) and env.n_players == n
        np.testing.assert_allclose(env.transition.sum(axis=-1), 1.0, atol=1e-12)


def test_arrays_are_frozen(e2):
    with pytest.raises(ValueError):
        e2.valuation[0][0, 0] = 5.0
