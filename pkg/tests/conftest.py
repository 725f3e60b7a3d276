from pathlib import Path

import pytest

from dgroves import read_environment, solve

FIXTURES = Path(__file__).parent / "fixtures"
ENV_FIXTURES = ["E2.json", "E3.json", "single_state.json"]
CORRUPT_FIXTURES = ["E2_corrupt_bump.json", "E2_corrupt_pivot.json", "E2_corrupt_both.json"]
BAD_FIXTURES = sorted(p.name for p in (FIXTURES / "bad").glob("*.json"))


@pytest.fixture(scope="session")
def e2():
    return read_environment(FIXTURES / "E2.json")


@pytest.fixture(scope="session")
def e2_solved(e2):
    return solve(e2)


@pytest.fixture(scope="session", params=ENV_FIXTURES)
def fixture_env(request):
    env = read_environment(FIXTURES / request.param)
    return env, solve(env)
