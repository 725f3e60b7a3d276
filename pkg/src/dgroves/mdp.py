"""Discounted dynamic programming on finite joint state spaces.

Policies are integer arrays over joint states and value functions are float
arrays over the same index; see :attr:`dgroves.env.Environment.profiles` for
the state ordering.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .env import Environment, reduced_environment

DIRECT_SOLVE_LIMIT = 4096
TIE_RTOL = 1e-12


class IterationLimitError(RuntimeError):
    def __init__(self, iterations, residual, tol):
        super().__init__(f"no convergence after {iterations} iterations: residual {residual:.3e} > tol {tol:.3e}")
        self.iterations = iterations
        self.residual = residual
        self.tol = tol


@dataclass
class SolveReport:
    iterations: int
    residual: float
    tol: float
    wall_time: float = field(default=0.0, compare=False)
    method: str = "value-iteration"

    def to_dict(self, timing=False):
        out = {"iterations": self.iterations, "residual": self.residual, "tol": self.tol, "method": self.method}
        if timing:
            out["wall_time"] = self.wall_time
        return out


@dataclass(frozen=True, eq=False)
class EfficientSolution:
    """Outcome-efficient policy with the total value functions it induces."""

    env: Environment
    policy: np.ndarray
    welfare: np.ndarray
    values: tuple[np.ndarray, ...]
    others: tuple[np.ndarray, ...]
    report: SolveReport


def greedy(q: np.ndarray) -> np.ndarray:
    """Row-wise argmax with near-ties resolved to the lowest index."""
    best = q.max(axis=1, keepdims=True)
    ok = q >= best - TIE_RTOL * (1.0 + np.abs(best))
    return np.argmax(ok, axis=1)


def _chain(trans: np.ndarray, policy: np.ndarray) -> np.ndarray:
    """Rows of an ``(S, K, S)`` transition array selected by a policy."""
    return trans[np.arange(trans.shape[0]), policy]


def solve_linear(chain: np.ndarray, reward: np.ndarray, discount: float, tol: float = 1e-12,
                 max_iter: int = 1_000_000) -> np.ndarray:
    """Fixed point of ``F = reward + discount * chain @ F``."""
    n = reward.shape[0]
    if discount == 0.0:
        return np.array(reward, dtype=float)
    if n <= DIRECT_SOLVE_LIMIT:
        return scipy.linalg.solve(np.eye(n) - discount * chain, reward)
    value = np.array(reward, dtype=float)
    for _ in range(max_iter):
        nxt = reward + discount * (chain @ value)
        if np.max(np.abs(nxt - value)) <= tol * (1.0 + np.max(np.abs(nxt))):
            return nxt
        value = nxt
    raise IterationLimitError(max_iter, float(np.max(np.abs(nxt - value))), tol)


def solve_mdp(reward: np.ndarray, trans: np.ndarray, discount: float, tol: float = 1e-10,
              max_iter: int = 1_000_000, init: np.ndarray | None = None, method: str = "value-iteration"):
    """Maximize discounted reward for ``reward[s, k]`` and ``trans[s, k, s']``.

    Value iteration runs until the sup-norm Bellman residual drops below
    ``tol``; the greedy policy is then evaluated exactly and kept once it is
    greedy with respect to its own value.  ``method="policy-iteration"``
    skips straight to Howard improvement steps from ``init`` (read as a
    policy when integer-valued, as a value function otherwise).
    """
    t0 = time.perf_counter()
    n_states = reward.shape[0]
    states = np.arange(n_states)
    if init is not None and np.asarray(init).dtype.kind in "iu":
        policy, value = np.asarray(init, dtype=np.int64), np.zeros(n_states)
    else:
        policy, value = None, np.zeros(n_states) if init is None else np.array(init, dtype=float)
    howard = method == "policy-iteration"
    exact_for = None
    last_step = None
    residual = np.inf
    for it in range(1, max_iter + 1):
        if howard and policy is not None and exact_for is not policy:
            value = solve_linear(_chain(trans, policy), reward[states, policy], discount)
            exact_for = policy
        q = reward + discount * (trans @ value)
        target = q.max(axis=1)
        residual = float(np.max(np.abs(target - value))) if n_states else 0.0
        if residual <= tol:
            candidate = greedy(q)
            if exact_for is not None and np.array_equal(candidate, exact_for):
                return candidate, value, SolveReport(it, residual, tol, time.perf_counter() - t0, method)
            value = solve_linear(_chain(trans, candidate), reward[states, candidate], discount)
            policy = exact_for = candidate
            last_step = None
            continue
        if howard:
            policy = greedy(q)
            continue
        step = residual
        if last_step is not None:
            # sup-norm contraction of the Bellman operator
            assert step <= discount * last_step * (1 + 1e-9) + 1e-12 * (1 + np.max(np.abs(target))), (
                f"value iteration failed to contract: {step} > {discount} * {last_step}"
            )
        last_step = step
        value = target
        exact_for = None
    raise IterationLimitError(max_iter, residual, tol)


def _state_action_trans(env: Environment) -> np.ndarray:
    return np.ascontiguousarray(np.transpose(env.transition, (1, 0, 2)))


def solve_efficient(env: Environment, tol: float = 1e-10, max_iter: int = 1_000_000):
    """Outcome-efficient policy ``a*`` and total welfare ``W``.

    Returns ``(policy, welfare, report)``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    return solve_mdp(env.welfare_reward, _state_action_trans(env), env.discount, tol, max_iter)


def evaluate_policy(env: Environment, policy: np.ndarray, reward: np.ndarray) -> np.ndarray:
    """Discounted value of ``reward`` along the chain induced by ``policy``.

    ``reward`` is either an ``(S, A)`` state-action table or an ``(S,)``
    table already evaluated at the policy's action.
    """
    policy = np.asarray(policy, dtype=np.int64)
    states = np.arange(env.n_states)
    reward = np.asarray(reward, dtype=float)
    flow = reward[states, policy] if reward.ndim == 2 else reward
    chain = env.transition[policy, states]
    return solve_linear(chain, flow, env.discount)


def solve_excluded(env: Environment, i, tol: float = 1e-10, max_iter: int = 1_000_000):
    """Efficient policy and welfare ``W_{-i}`` of the environment without player ``i``."""
    return solve_efficient(reduced_environment(env, i), tol, max_iter)


def solve(env: Environment, tol: float = 1e-10, max_iter: int = 1_000_000) -> EfficientSolution:
    """``a*``, ``W`` and every player's ``V_i`` and ``V_{-i}``."""
    policy, welfare, report = solve_efficient(env, tol, max_iter)
    values = tuple(evaluate_policy(env, policy, env.player_reward(i)) for i in range(env.n_players))
    others = tuple(evaluate_policy(env, policy, env.others_reward(i)) for i in range(env.n_players))
    return EfficientSolution(env, policy, welfare, values, others, report)
