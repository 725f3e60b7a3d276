"""Dynamic Groves mechanisms: team, pivot and custom distribution rules.

Every per-player table is indexed like the solution it came from: joint
tables by joint state, distribution tables by the reduced state of
:func:`dgroves.env.reduced_environment` (the other players' profile).
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .env import Environment, reduced_environment
from .mdp import EfficientSolution, evaluate_policy, solve_excluded

IDENTITY_TOL = 1e-9


class MechanismError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DistributionRule:
    flow: np.ndarray       # phi_i over the other players' profiles
    decision: np.ndarray   # hat a_i over the other players' profiles
    total: np.ndarray      # Phi_i, discounted accumulation of flow along decision


@dataclass(frozen=True, eq=False)
class Mechanism:
    """Efficient policy plus per-player transfer and payoff tables.

    ``rules`` is ``None`` for mechanisms assembled from arbitrary flow
    transfers; those carry no Groves guarantees.
    """

    solution: EfficientSolution
    kind: str
    transfers: tuple[np.ndarray, ...]        # z_i over joint states
    total_transfers: tuple[np.ndarray, ...]  # Z_i
    payoffs: tuple[np.ndarray, ...]          # Y_i (= U_i, truthful total payoff)
    flow_payoffs: tuple[np.ndarray, ...]     # y_i
    rules: tuple[DistributionRule, ...] | None = None

    @property
    def env(self) -> Environment:
        return self.solution.env

    @property
    def policy(self) -> np.ndarray:
        return self.solution.policy

    @property
    def welfare(self) -> np.ndarray:
        return self.solution.welfare

    @property
    def is_groves(self) -> bool:
        return self.rules is not None

    def others_total(self, i: int) -> np.ndarray:
        """``Phi_i`` lifted to joint states."""
        _, others = self.env.split(i)
        return self.rules[i].total[others]


def _distribution_total(env: Environment, i: int, flow: np.ndarray, decision: np.ndarray) -> np.ndarray:
    red = reduced_environment(env, i)
    return evaluate_policy(red, decision, np.asarray(flow, dtype=float))


def _check(name, lhs, rhs, tol=IDENTITY_TOL):
    gap = float(np.max(np.abs(lhs - rhs))) if np.size(lhs) else 0.0
    if not gap <= tol:
        raise MechanismError(f"identity {name} violated by {gap:.3e}")


def build_custom(env: Environment, solved: EfficientSolution, rules: Sequence, kind: str = "custom") -> Mechanism:
    """Groves mechanism from per-player ``(flow, decision)`` distribution rules.

    ``decision`` may be ``None``, meaning the constant first action.
    """
    if len(rules) != env.n_players:
        raise MechanismError(f"need {env.n_players} distribution rules, got {len(rules)}")
    delta = env.discount
    states = np.arange(env.n_states)
    a_star = solved.policy
    dist, z_all, big_z, big_y, small_y = [], [], [], [], []
    for i, (flow, decision) in enumerate(rules):
        red = reduced_environment(env, i)
        flow = np.asarray(flow, dtype=float).reshape(red.n_states)
        if decision is None:
            decision = np.zeros(red.n_states, dtype=np.int64)
        decision = np.asarray(decision, dtype=np.int64).reshape(red.n_states)
        if np.any((decision < 0) | (decision >= env.n_actions)):
            raise MechanismError(f"player {env.players[i]}: decision rule names an unknown action")
        if not np.all(np.isfinite(flow)):
            raise MechanismError(f"player {env.players[i]}: non-finite distribution rule")
        total = _distribution_total(env, i, flow, decision)
        resid = total - flow - delta * (red.transition[decision, np.arange(red.n_states)] @ total)
        assert np.max(np.abs(resid), initial=0.0) <= 1e-12 * (1 + np.max(np.abs(total), initial=0.0))

        _, others = env.split(i)
        # reduced-state continuation of Phi_i under hat a_i and under the implemented action
        cont_ref = red.transition[decision, np.arange(red.n_states)] @ total
        cont_act = np.einsum("ask,k->as", red.transition, total)[a_star, others]
        z = (flow[others] - env.others_reward(i)[states, a_star]
             + delta * (cont_ref[others] - cont_act))

        phi_joint = total[others]
        Z = -solved.others[i] + phi_joint
        Y = solved.welfare - phi_joint
        y = Y - delta * (env.transition[a_star, states] @ Y)

        _check(f"Y_{i} = V_i - Z_i*", Y, solved.values[i] - Z)
        _check(f"z_{i}* = v_i - y_i", z, env.player_reward(i)[states, a_star] - y)
        dist.append(DistributionRule(flow, decision, total))
        z_all.append(z)
        big_z.append(Z)
        big_y.append(Y)
        small_y.append(y)
    return Mechanism(solved, kind, tuple(z_all), tuple(big_z), tuple(big_y), tuple(small_y), tuple(dist))


def build_team(env: Environment, solved: EfficientSolution) -> Mechanism:
    rules = []
    for i in range(env.n_players):
        m = reduced_environment(env, i).n_states
        rules.append((np.zeros(m), np.zeros(m, dtype=np.int64)))
    return build_custom(env, solved, rules, kind="team")


def build_pivot(env: Environment, solved: EfficientSolution, excluded: Sequence | None = None,
                tol: float = 1e-10) -> Mechanism:
    """Dynamic pivot mechanism; ``excluded[i]`` is ``(a*_{-i}, W_{-i})`` from :func:`solve_excluded`."""
    if excluded is None:
        excluded = [solve_excluded(env, i, tol)[:2] for i in range(env.n_players)]
    rules = []
    for i, (policy_ex, _) in enumerate(excluded):
        red = reduced_environment(env, i)
        policy_ex = np.asarray(policy_ex, dtype=np.int64)
        flow = red.welfare_reward[np.arange(red.n_states), policy_ex]
        rules.append((flow, policy_ex))
    mech = build_custom(env, solved, rules, kind="pivot")
    for i, (_, w_ex) in enumerate(excluded):
        _check(f"Phi_{i} = W_-{i}", mech.rules[i].total, np.asarray(w_ex))
    return mech


def from_transfers(env: Environment, solved: EfficientSolution, transfers: Sequence, kind: str = "transfers") -> Mechanism:
    """Mechanism that charges arbitrary flow transfers ``z_i`` along ``a*``."""
    if len(transfers) != env.n_players:
        raise MechanismError(f"need {env.n_players} transfer tables, got {len(transfers)}")
    states = np.arange(env.n_states)
    zs, big_z, big_y, small_y = [], [], [], []
    for i, z in enumerate(transfers):
        z = np.asarray(z, dtype=float).reshape(env.n_states)
        if not np.all(np.isfinite(z)):
            raise MechanismError(f"player {env.players[i]}: non-finite transfer")
        Z = evaluate_policy(env, solved.policy, z)
        zs.append(z)
        big_z.append(Z)
        big_y.append(solved.values[i] - Z)
        small_y.append(env.player_reward(i)[states, solved.policy] - z)
    return Mechanism(solved, kind, tuple(zs), tuple(big_z), tuple(big_y), tuple(small_y), None)


def bump_transfers(env: Environment, transfers: Sequence, player, type_label, amount: float) -> list[np.ndarray]:
    """Copy of ``transfers`` with ``amount`` added whenever ``player`` has ``type_label``."""
    i = env.player_index(player)
    t = type_label if isinstance(type_label, (int, np.integer)) else env.type_sets[i].index(str(type_label))
    out = [np.array(z, dtype=float) for z in transfers]
    out[i] = out[i] + amount * (env.profiles[:, i] == t)
    return out


# -- reports and documents -------------------------------------------------------


def transfer_report(mech: Mechanism) -> dict:
    """Per-state table of flow/total transfers, payoffs and the budget column."""
    env = mech.env
    budget = np.sum(mech.transfers, axis=0) if env.n_players else np.zeros(env.n_states)
    rows = []
    for s, label in enumerate(env.state_labels):
        row = {"state": label, "action": env.actions[mech.policy[s]], "welfare": float(mech.welfare[s])}
        for i, name in enumerate(env.players):
            row[f"z[{name}]"] = float(mech.transfers[i][s])
            row[f"Z[{name}]"] = float(mech.total_transfers[i][s])
            row[f"Y[{name}]"] = float(mech.payoffs[i][s])
        row["budget"] = float(budget[s])
        rows.append(row)
    extremes = {}
    for col in [c for c in rows[0] if c not in ("state", "action")] if rows else []:
        vals = np.array([r[col] for r in rows])
        extremes[col] = {
            "min": float(vals.min()), "argmin": rows[int(vals.argmin())]["state"],
            "max": float(vals.max()), "argmax": rows[int(vals.argmax())]["state"],
        }
    return {
        "kind": mech.kind,
        "groves": mech.is_groves,
        "rows": rows,
        "extremes": extremes,
        "budget_deficit_states": [r["state"] for r in rows if r["budget"] < 0],
    }


def to_document(mech: Mechanism) -> dict:
    env = mech.env
    players = []
    for i, name in enumerate(env.players):
        entry = {
            "name": name,
            "V": mech.solution.values[i].tolist(),
            "V_others": mech.solution.others[i].tolist(),
            "z": mech.transfers[i].tolist(),
            "Z": mech.total_transfers[i].tolist(),
            "Y": mech.payoffs[i].tolist(),
            "y": mech.flow_payoffs[i].tolist(),
        }
        if mech.rules is not None:
            rule = mech.rules[i]
            red = reduced_environment(env, i)
            entry["others_states"] = list(red.state_labels)
            entry["flow"] = rule.flow.tolist()
            entry["decision"] = [env.actions[a] for a in rule.decision]
            entry["Phi"] = rule.total.tolist()
        players.append(entry)
    return {
        "environment_digest": env.digest,
        "kind": mech.kind,
        "states": list(env.state_labels),
        "policy": [env.actions[a] for a in mech.policy],
        "W": mech.welfare.tolist(),
        "players": players,
    }


def from_document(doc: Mapping, env: Environment, solved: EfficientSolution) -> Mechanism:
    """Rebuild a mechanism written by :func:`to_document` against its environment."""
    if doc.get("environment_digest") != env.digest:
        raise MechanismError("mechanism document was built for a different environment")
    policy = np.array([env.action_index(a) for a in doc["policy"]])
    if not np.array_equal(policy, solved.policy):
        raise MechanismError("mechanism policy differs from the efficient policy of this environment")
    players = doc["players"]
    if all("flow" in p for p in players):
        rules = [(p["flow"], [env.action_index(a) for a in p["decision"]]) for p in players]
        return build_custom(env, solved, rules, kind=doc.get("kind", "custom"))
    return from_transfers(env, solved, [p["z"] for p in players], kind=doc.get("kind", "transfers"))


def rules_from_document(doc: Mapping, env: Environment) -> list:
    """Parse a custom distribution-rule document.

    ``{"players": {name: {"flow": {others_label: number}, "decision": {others_label: action}}}}``;
    ``decision`` is optional and defaults to the first action.
    """
    spec = doc.get("players")
    if not isinstance(spec, Mapping):
        raise MechanismError("rules document needs a 'players' object keyed by player name")
    rules = []
    for i, name in enumerate(env.players):
        if name not in spec:
            raise MechanismError(f"rules: missing player {name}")
        red = reduced_environment(env, i)
        entry = spec[name]
        flow_doc = entry.get("flow", {})
        flow = np.zeros(red.n_states)
        decision = np.zeros(red.n_states, dtype=np.int64)
        for k, label in enumerate(red.state_labels):
            if label not in flow_doc:
                raise MechanismError(f"rules: player {name} flow is missing others-profile '{label}'")
            flow[k] = float(flow_doc[label])
            if "decision" in entry:
                if label not in entry["decision"]:
                    raise MechanismError(f"rules: player {name} decision is missing others-profile '{label}'")
                decision[k] = env.action_index(entry["decision"][label])
        rules.append((flow, decision))
    return rules


def transfers_from_document(doc: Mapping, env: Environment, solved: EfficientSolution) -> list[np.ndarray]:
    """Parse a flow-transfer document.

    Either a full table ``{"transfers": {name: {state_label: number}}}`` or a
    base mechanism with bumps ``{"base": "team", "bumps": [{"player", "type", "amount"}]}``.
    """
    if "transfers" in doc:
        table = doc["transfers"]
        out = []
        for name in env.players:
            if name not in table:
                raise MechanismError(f"transfers: missing player {name}")
            row = table[name]
            z = np.empty(env.n_states)
            for s, label in enumerate(env.state_labels):
                if label not in row:
                    raise MechanismError(f"transfers: player {name} is missing state '{label}'")
                z[s] = float(row[label])
            out.append(z)
        return out
    base = doc.get("base")
    if base not in ("team", "pivot"):
        raise MechanismError("transfers document needs 'transfers' or a 'base' of team|pivot")
    mech = build_team(env, solved) if base == "team" else build_pivot(env, solved)
    out = list(mech.transfers)
    for bump in doc.get("bumps", []):
        out = bump_transfers(env, out, bump["player"], bump["type"], float(bump["amount"]))
    return out
