"""Incentive audits and consistent deviations.

A consistent deviation starts from a misreport ``bar`` and keeps reporting
the type a truthful process started at ``bar`` would have reached, driven by
the same uniform draws as the true type.  Coupled quantities are indexed
``[true_type, reported_type, others_profile]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .env import Environment, NoiseStream, couple_rows, reduced_environment
from .groves import Mechanism
from .mdp import EfficientSolution, SolveReport, evaluate_policy, solve_linear, solve_mdp

VARIANTS = ("actual-action", "paper-literal")


@dataclass(frozen=True)
class DeviationGain:
    player: int
    state: int
    report: int
    gain: float


def _report_index(env, i, report):
    if isinstance(report, (int, np.integer)):
        return int(report)
    return env.type_sets[i].index(str(report))


def _state(env, state):
    if isinstance(state, (int, np.integer)):
        return int(state)
    return env.state_index(state)


def gain_table(mech: Mechanism, i: int) -> np.ndarray:
    """``(S, m_i)`` one-shot gains from reporting each type once, then truthfully."""
    env = mech.env
    own, _ = env.split(i)
    swap = env.replace_type(i)
    acts = mech.policy[swap]
    states = np.arange(env.n_states)
    payoff = mech.payoffs[i]
    flow = env.valuation[i][own[:, None], acts] - mech.transfers[i][swap]
    cont = (env.transition @ payoff)[acts, states[:, None]]
    gains = flow + env.discount * cont - payoff[:, None]
    gains[states, own] = 0.0
    return gains


def one_shot_gain(mech: Mechanism, i, state, report) -> DeviationGain:
    env = mech.env
    i = env.player_index(i)
    s = _state(env, state)
    r = _report_index(env, i, report)
    return DeviationGain(i, s, r, float(gain_table(mech, i)[s, r]))


def verify_ic(mech: Mechanism, tol: float = 1e-8, full: bool = False) -> dict:
    """Exhaustive one-shot deviation scan over players, states and reports."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    env = mech.env
    worst = None
    per_player = {}
    table = {}
    for i, name in enumerate(env.players):
        gains = gain_table(mech, i)
        s, r = np.unravel_index(int(np.argmax(gains)), gains.shape)
        g = float(gains[s, r])
        per_player[name] = g
        if worst is None or g > worst["gain"]:
            worst = {"player": name, "state": env.state_labels[s], "report": env.type_sets[i][r], "gain": g}
        if full:
            table[name] = {
                env.state_labels[k]: {env.type_sets[i][x]: float(gains[k, x]) for x in range(gains.shape[1])}
                for k in range(env.n_states)
            }
    max_gain = worst["gain"] if worst else 0.0
    out = {
        "passed": bool(max_gain <= tol),
        "tol": tol,
        "max_gain": max_gain,
        "witness": worst,
        "max_gain_by_player": per_player,
    }
    if full:
        out["gains"] = table
    return out


@dataclass(frozen=True, eq=False)
class BestResponse:
    player: int
    value: np.ndarray
    policy: np.ndarray  # optimal report per joint state
    truthful: np.ndarray
    report: SolveReport

    @property
    def gap(self) -> float:
        return float(np.max(self.value - self.truthful))

    @property
    def truthful_optimal(self) -> bool:
        return self.gap <= 1e-8


def best_response_value(mech: Mechanism, i, tol: float = 1e-10, max_iter: int = 1_000_000) -> BestResponse:
    """Deviator's optimal value when opponents report truthfully.

    States are joint true profiles, choices are reports of player ``i``; the
    true profile moves under the action the reports induce.
    """
    env = mech.env
    i = env.player_index(i)
    own, _ = env.split(i)
    swap = env.replace_type(i)
    acts = mech.policy[swap]
    states = np.arange(env.n_states)
    reward = env.valuation[i][own[:, None], acts] - mech.transfers[i][swap]
    trans = env.transition[acts, states[:, None], :]
    policy, value, report = solve_mdp(reward, trans, env.discount, tol, max_iter, init=own.copy(),
                                      method="policy-iteration")
    return BestResponse(i, value, policy, mech.payoffs[i], report)


def default_horizon(env: Environment, target: float = 1e-6) -> int:
    """Smallest ``T >= 1`` with ``delta**T * n * C / (1 - delta) <= target``."""
    delta, scale = env.discount, env.n_players * env.bound / (1.0 - env.discount)
    if delta == 0.0 or scale <= target:
        return 1
    return max(1, math.ceil(math.log(target / scale) / math.log(delta)))


# -- consistent deviations: exact ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConsistentValues:
    player: int
    variant: str
    own_values: np.ndarray     # V_i^C[x, y, o]
    others_values: np.ndarray  # V_{-i}^C[y, o]
    transfers: np.ndarray      # Z_i^C[y, o]

    @property
    def utility(self) -> np.ndarray:  # U_i^C[x, y, o]
        return self.own_values - self.transfers[None, :, :]

    @property
    def welfare(self) -> np.ndarray:  # W^C[x, y, o]
        return self.own_values + self.others_values[None, :, :]


def joint_map(env: Environment, i: int) -> np.ndarray:
    """``(m_i, S_{-i})`` table of joint indices."""
    own, others = env.split(i)
    m = env.sizes[i]
    out = np.empty((m, env.n_states // m), dtype=np.int64)
    out[own, others] = np.arange(env.n_states)
    return out


def coupled_chain(env: Environment, policy: np.ndarray, i: int, variant: str = "actual-action"):
    """Transition matrix and actions on the ``(true, reported, others)`` space.

    Returns ``(P, act, act_true)`` with ``P`` of shape ``(m*m*So, m*m*So)``;
    ``act[x, y, o]`` is the implemented action and ``act_true`` the action
    that drives the true type.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    red = reduced_environment(env, i)
    jm = joint_map(env, i)
    m, so = jm.shape
    k = env.kernel[i]
    act = np.broadcast_to(policy[jm][None, :, :], (m, m, so))
    act_true = act if variant == "actual-action" else np.broadcast_to(policy[jm][:, None, :], (m, m, so))
    cache = {}
    size = m * m * so
    P = np.zeros((size, size))
    for x in range(m):
        for y in range(m):
            for o in range(so):
                a, ax = int(act[x, y, o]), int(act_true[x, y, o])
                key = (x, ax, y, a)
                pair = cache.get(key)
                if pair is None:
                    pair = cache[key] = couple_rows(k[x, ax], k[y, a])
                row = (x * m + y) * so + o
                P[row] = np.multiply.outer(pair, red.transition[a, o]).ravel()
    return P, act, act_true


def consistent_values(mech: Mechanism, i, variant: str = "actual-action") -> ConsistentValues:
    """Solve ``V_i^C`` on the coupled chain; ``V_{-i}^C`` and ``Z_i^C`` on the report chain."""
    env = mech.env
    i = env.player_index(i)
    P, act, _ = coupled_chain(env, mech.policy, i, variant)
    m, so = env.sizes[i], env.n_states // env.sizes[i]
    x_idx = np.broadcast_to(np.arange(m)[:, None, None], act.shape)
    reward = env.valuation[i][x_idx, act].ravel()
    own = solve_linear(P, reward, env.discount).reshape(m, m, so)
    jm = joint_map(env, i)
    others = mech.solution.others[i][jm]
    transfers = mech.total_transfers[i][jm]
    return ConsistentValues(i, variant, own, others, transfers)


# -- consistent deviations: simulation ----------------------------------------------


@dataclass(frozen=True, eq=False)
class ConsistentTrajectory:
    player: int
    state: int
    report: int
    seed: int
    horizon: int
    variant: str
    true_types: np.ndarray
    reports: np.ndarray
    others: np.ndarray   # (T, n) full profile with player i's entry = true type
    actions: np.ndarray
    flow_values: np.ndarray
    flow_transfers: np.ndarray
    own_value: float     # V_i^D truncated at the horizon
    others_value: float  # V_{-i}^D
    transfer_total: float  # Z_i^D
    tail_bound: float


class _PathEngine:
    """Vectorized consistent-deviation paths for one player of a mechanism."""

    def __init__(self, mech: Mechanism, i: int, variant: str):
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        env = mech.env
        self.env, self.mech, self.i, self.variant = env, mech, i, variant
        self.cum = [np.ascontiguousarray(np.cumsum(k, axis=-1)) for k in env.kernel]
        self.strides = np.array([int(np.prod(env.sizes[j + 1:], dtype=np.int64)) for j in range(env.n_players)],
                                dtype=np.int64)
        self.others_reward = env.others_reward(i)

    def run(self, state: int, report: int, seed: int, n_paths: int, horizon: int, record: bool = False):
        env, i, delta = self.env, self.i, self.env.discount
        policy = self.mech.policy
        z = self.mech.transfers[i]
        noise = NoiseStream(seed)
        prof = np.repeat(env.profiles[state][None, :].astype(np.int64), n_paths, axis=0)
        x = prof[:, i].copy()
        y = np.full(n_paths, report, dtype=np.int64)
        own_acc = np.zeros(n_paths)
        oth_acc = np.zeros(n_paths)
        z_acc = np.zeros(n_paths)
        log = [] if record else None
        nxt = np.empty(n_paths, dtype=np.int64)
        weight = 1.0
        for t in range(horizon):
            prof[:, i] = y
            joint = prof @ self.strides
            a = policy[joint]
            if self.variant == "actual-action":
                ax = a
            else:
                prof[:, i] = x
                ax = policy[prof @ self.strides]
            own_acc += weight * env.valuation[i][x, a]
            oth_acc += weight * self.others_reward[joint, a]
            z_acc += weight * z[joint]
            if record:
                log.append((x[0], y[0], prof[0].copy(), a[0], env.valuation[i][x[0], a[0]], z[joint[0]]))
            if t + 1 == horizon:
                break
            u = noise.draws(i, t + 1, n_paths)
            kernels.advance(self.cum[i], x, ax, u, nxt)
            x = nxt.copy()
            kernels.advance(self.cum[i], y, a, u, nxt)
            y = nxt.copy()
            for j in range(env.n_players):
                if j != i:
                    kernels.advance(self.cum[j], np.ascontiguousarray(prof[:, j]), a,
                                    noise.draws(j, t + 1, n_paths), nxt)
                    prof[:, j] = nxt
            weight *= delta
        return own_acc, oth_acc, z_acc, log

    def tail_bounds(self, horizon: int):
        env, i = self.env, self.i
        delta = env.discount
        factor = delta ** horizon / (1.0 - delta)
        own_c = float(np.abs(env.valuation[i]).max())
        oth_c = float(sum(np.abs(env.valuation[j]).max() for j in range(env.n_players) if j != i))
        z_c = float(np.abs(self.mech.transfers[i]).max())
        return factor * own_c, factor * oth_c, factor * z_c


def simulate_consistent(mech: Mechanism, i, state, report, seed: int = 0, horizon: int | None = None,
                        variant: str = "actual-action") -> ConsistentTrajectory:
    """One consistent-deviation path truncated at ``horizon`` periods."""
    env = mech.env
    i = env.player_index(i)
    s = _state(env, state)
    r = _report_index(env, i, report)
    horizon = default_horizon(env) if horizon is None else int(horizon)
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    engine = _PathEngine(mech, i, variant)
    own, oth, zz, log = engine.run(s, r, seed, 1, horizon, record=True)
    prof = np.array([row[2] for row in log], dtype=np.int64)
    prof[:, i] = [row[0] for row in log]
    return ConsistentTrajectory(
        player=i, state=s, report=r, seed=seed, horizon=horizon, variant=variant,
        true_types=np.array([row[0] for row in log]),
        reports=np.array([row[1] for row in log]),
        others=prof,
        actions=np.array([row[3] for row in log]),
        flow_values=np.array([row[4] for row in log]),
        flow_transfers=np.array([row[5] for row in log]),
        own_value=float(own[0]), others_value=float(oth[0]), transfer_total=float(zz[0]),
        tail_bound=engine.tail_bounds(horizon)[0],
    )


def consistent_monte_carlo(mech: Mechanism, i, state, report, seed: int = 0, n_paths: int = 100_000,
                           horizon: int | None = None, variant: str = "actual-action") -> dict:
    """Path averages of ``V_i^D``, ``V_{-i}^D`` and ``Z_i^D`` with standard errors and tail bounds."""
    env = mech.env
    i = env.player_index(i)
    s = _state(env, state)
    r = _report_index(env, i, report)
    horizon = default_horizon(env) if horizon is None else int(horizon)
    engine = _PathEngine(mech, i, variant)
    own, oth, zz, _ = engine.run(s, r, seed, n_paths, horizon)
    tails = engine.tail_bounds(horizon)
    out = {"seed": seed, "paths": n_paths, "horizon": horizon, "variant": variant}
    for name, sample, tail in zip(("own", "others", "transfers"), (own, oth, zz), tails):
        out[name] = {
            "mean": float(sample.mean()),
            "se": float(sample.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else float("nan"),
            "tail": tail,
        }
    return out


def compare_consistent(mech: Mechanism, i, seed: int = 0, n_paths: int = 100_000, horizon: int | None = None,
                       variant: str = "actual-action", k_se: float = 3.0) -> dict:
    """Linear-solve versus Monte Carlo agreement for every ``(state, report)`` pair of player ``i``."""
    env = mech.env
    i = env.player_index(i)
    exact = consistent_values(mech, i, variant)
    own_idx, others_idx = env.split(i)
    rows = []
    ok = True
    for s in range(env.n_states):
        x, o = own_idx[s], others_idx[s]
        for r in range(env.sizes[i]):
            mc = consistent_monte_carlo(mech, i, s, r, seed, n_paths, horizon, variant)
            targets = {
                "own": exact.own_values[x, r, o],
                "others": exact.others_values[r, o],
                "transfers": exact.transfers[r, o],
            }
            row = {"state": env.state_labels[s], "report": env.type_sets[i][r]}
            for name, target in targets.items():
                est = mc[name]
                err = abs(est["mean"] - target)
                bound = k_se * est["se"] + est["tail"]
                agree = bool(err <= bound)
                ok &= agree
                row[name] = {"exact": float(target), "mc": est["mean"], "se": est["se"], "tail": est["tail"],
                             "abs_error": err, "agree": agree}
            rows.append(row)
    return {"player": env.players[i], "variant": variant, "seed": seed, "paths": n_paths,
            "horizon": default_horizon(env) if horizon is None else horizon, "agree": ok, "rows": rows}


# -- distribution-rule extraction ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PhiExtraction:
    tables: tuple[np.ndarray, ...]   # Phi_i^C[reported_type, others_profile]
    scores: tuple[np.ndarray, ...]   # per others_profile spread over reported types

    @property
    def max_score(self) -> float:
        return float(max((s.max() for s in self.scores if s.size), default=0.0))

    def is_groves(self, tol: float = 1e-9) -> bool:
        return self.max_score <= tol


def extract_phi(env: Environment, solved: EfficientSolution, transfers) -> PhiExtraction:
    """``Phi_i^C = Z_i^C + V_{-i}^C`` on the report chain and its spread over player ``i``'s report."""
    tables, scores = [], []
    for i in range(env.n_players):
        z = np.asarray(transfers[i], dtype=float)
        z_total = evaluate_policy(env, solved.policy, z)
        phi = (z_total + solved.others[i])[joint_map(env, i)]
        tables.append(phi)
        scores.append(phi.max(axis=0) - phi.min(axis=0))
    return PhiExtraction(tuple(tables), tuple(scores))
