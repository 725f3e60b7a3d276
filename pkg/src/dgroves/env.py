"""Finite Markovian environments.

An :class:`Environment` holds, for every player, a finite ordered type set, a
valuation table ``v_i[type, action]`` and a transition kernel
``p_i[type, action, next_type]``.  The joint kernel is the product of the
per-player kernels.  Joint states are enumerated row-major over the player
order, so the last player's type varies fastest.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

ROW_TOL = 1e-12
RENORMALIZE_TOL = 1e-9


class EnvironmentFileError(ValueError):
    """Base class for environment document problems."""


class ParseError(EnvironmentFileError):
    pass


class ValidationError(EnvironmentFileError):
    pass


def _frozen(arr, dtype=float):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Environment:
    players: tuple[str, ...]
    type_sets: tuple[tuple[str, ...], ...]
    actions: tuple[str, ...]
    valuation: tuple[np.ndarray, ...]
    kernel: tuple[np.ndarray, ...]
    discount: float

    def __post_init__(self):
        object.__setattr__(self, "players", tuple(str(p) for p in self.players))
        object.__setattr__(self, "type_sets", tuple(tuple(str(t) for t in ts) for ts in self.type_sets))
        object.__setattr__(self, "actions", tuple(str(a) for a in self.actions))
        object.__setattr__(self, "valuation", tuple(_frozen(v) for v in self.valuation))
        object.__setattr__(self, "kernel", tuple(_frozen(k) for k in self.kernel))
        object.__setattr__(self, "discount", float(self.discount))
        self._validate()

    def _validate(self):
        n = len(self.players)
        if len(set(self.players)) != n:
            raise ValidationError("player names must be unique")
        if not (len(self.type_sets) == len(self.valuation) == len(self.kernel) == n):
            raise ValidationError("type_sets, valuation and kernel need one entry per player")
        if not self.actions:
            raise ValidationError("actions: at least one action is required")
        if len(set(self.actions)) != len(self.actions):
            raise ValidationError("actions: labels must be unique")
        if not (math.isfinite(self.discount) and 0.0 <= self.discount < 1.0):
            raise ValidationError(f"discount: need 0 <= discount < 1, got {self.discount!r}")
        n_act = len(self.actions)
        for name, types, v, k in zip(self.players, self.type_sets, self.valuation, self.kernel):
            m = len(types)
            if m == 0:
                raise ValidationError(f"player {name}: empty type set")
            if len(set(types)) != m:
                raise ValidationError(f"player {name}: type labels must be unique")
            if v.shape != (m, n_act):
                raise ValidationError(f"player {name}: valuation shape {v.shape}, expected {(m, n_act)}")
            if k.shape != (m, n_act, m):
                raise ValidationError(f"player {name}: kernel shape {k.shape}, expected {(m, n_act, m)}")
            if not np.all(np.isfinite(v)):
                raise ValidationError(f"player {name}: non-finite valuation entry")
            for x in range(m):
                for a in range(n_act):
                    row = k[x, a]
                    where = f"player {name}, type {types[x]}, action {self.actions[a]}"
                    if not np.all(np.isfinite(row)) or np.any(row < 0):
                        raise ValidationError(f"{where}: transition row has negative or non-finite entries")
                    if abs(row.sum() - 1.0) > ROW_TOL:
                        raise ValidationError(f"{where}: transition row sums to {float(row.sum())!r}, not 1")

    # -- sizes -----------------------------------------------------------
    @property
    def n_players(self) -> int:
        return len(self.players)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(t) for t in self.type_sets)

    @property
    def n_states(self) -> int:
        return int(np.prod(self.sizes, dtype=np.int64)) if self.sizes else 1

    @property
    def bound(self) -> float:
        """``C = max |v_i(type, action)|`` over all players (0 for no players)."""
        if not self.valuation:
            return 0.0
        return float(max(np.abs(v).max() for v in self.valuation))

    def player_index(self, player) -> int:
        if isinstance(player, (int, np.integer)) and not isinstance(player, bool):
            if not 0 <= player < self.n_players:
                raise IndexError(f"player index {player} out of range")
            return int(player)
        try:
            return self.players.index(str(player))
        except ValueError:
            raise KeyError(f"unknown player {player!r}") from None

    def action_index(self, action) -> int:
        if isinstance(action, (int, np.integer)) and not isinstance(action, bool):
            if not 0 <= action < self.n_actions:
                raise IndexError(f"action index {action} out of range")
            return int(action)
        return self.actions.index(str(action))

    # -- joint state machinery ----------------------------------------------
    @cached_property
    def profiles(self) -> np.ndarray:
        """``(S, n)`` array of type indices, one row per joint state."""
        if self.n_players == 0:
            return _frozen(np.zeros((1, 0)), dtype=np.int64)
        grids = np.indices(self.sizes).reshape(self.n_players, -1).T
        return _frozen(grids, dtype=np.int64)

    @cached_property
    def state_labels(self) -> tuple[str, ...]:
        return tuple(
            ",".join(self.type_sets[j][t] for j, t in enumerate(row)) for row in self.profiles
        )

    def state_index(self, profile: Sequence) -> int:
        """Joint index of a profile given as type indices, type labels or a state label."""
        if isinstance(profile, str):
            try:
                return self.state_labels.index(profile)
            except ValueError:
                raise ValueError(f"unknown state label {profile!r}") from None
        if len(profile) != self.n_players:
            raise ValueError(f"profile needs {self.n_players} entries")
        idx = []
        for j, t in enumerate(profile):
            if isinstance(t, (int, np.integer)):
                idx.append(int(t))
            else:
                idx.append(self.type_sets[j].index(str(t)))
        if not idx:
            return 0
        return int(np.ravel_multi_index(idx, self.sizes))

    def player_reward(self, i: int) -> np.ndarray:
        """``(S, A)`` table of ``v_i(theta_i, a)``."""
        return self.valuation[i][self.profiles[:, i]]

    def others_reward(self, i: int) -> np.ndarray:
        """``(S, A)`` table of ``sum_{j != i} v_j(theta_j, a)``."""
        out = np.zeros((self.n_states, self.n_actions))
        for j in range(self.n_players):
            if j != i:
                out += self.player_reward(j)
        return out

    @cached_property
    def welfare_reward(self) -> np.ndarray:
        out = np.zeros((self.n_states, self.n_actions))
        for j in range(self.n_players):
            out += self.player_reward(j)
        out.setflags(write=False)
        return out

    @cached_property
    def transition(self) -> np.ndarray:
        """``(A, S, S)`` product kernel."""
        mats = np.ones((self.n_actions, 1, 1))
        for k in self.kernel:
            mats = np.stack([np.kron(mats[a], k[:, a, :]) for a in range(self.n_actions)])
        mats.setflags(write=False)
        return mats

    def split(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Own type index and reduced-state index (over the other players) per joint state."""
        own = self.profiles[:, i]
        rest = np.delete(self.profiles, i, axis=1)
        sizes = tuple(s for j, s in enumerate(self.sizes) if j != i)
        if sizes:
            others = np.ravel_multi_index(tuple(rest.T), sizes)
        else:
            others = np.zeros(self.n_states, dtype=np.int64)
        return own.astype(np.int64), np.asarray(others, dtype=np.int64)

    def replace_type(self, i: int) -> np.ndarray:
        """``(S, m_i)`` joint indices with player ``i``'s type replaced by each report."""
        stride = int(np.prod(self.sizes[i + 1:], dtype=np.int64))
        own = self.profiles[:, i]
        base = np.arange(self.n_states) - own * stride
        return base[:, None] + stride * np.arange(self.sizes[i])[None, :]

    @cached_property
    def digest(self) -> str:
        text = json.dumps(to_document(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


# -- documents -----------------------------------------------------------------


def _number(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{where}: expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(f"{where}: non-finite number")
    return value


def _string_list(value, where):
    if not isinstance(value, list) or not value:
        raise ValidationError(f"{where}: expected a non-empty array of strings")
    for v in value:
        if not isinstance(v, str):
            raise ValidationError(f"{where}: expected strings, got {v!r}")
    if len(set(value)) != len(value):
        raise ValidationError(f"{where}: duplicate labels")
    return value


def _normalized_row(row, where):
    arr = np.asarray(row, dtype=float)
    if np.any(arr < 0):
        raise ValidationError(f"{where}: negative transition probability")
    total = arr.sum()
    gap = abs(total - 1.0)
    if gap > RENORMALIZE_TOL:
        raise ValidationError(f"{where}: transition row sums to {float(total)!r}, not 1")
    if gap > ROW_TOL:
        arr = arr / total
    return arr


def load_environment(document) -> Environment:
    """Build a validated :class:`Environment` from JSON text or an already-parsed mapping."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed environment document: {exc}") from exc
    if not isinstance(document, Mapping):
        raise ParseError("environment document must be a JSON object")
    for key in ("discount", "actions", "players"):
        if key not in document:
            raise ValidationError(f"missing field '{key}'")
    discount = _number(document["discount"], "discount")
    if not 0.0 <= discount < 1.0:
        raise ValidationError(f"discount: need 0 <= discount < 1, got {discount!r}")
    actions = _string_list(document["actions"], "actions")
    players = document["players"]
    if not isinstance(players, list) or not players:
        raise ValidationError("players: expected a non-empty array")

    names, type_sets, valuations, kernels = [], [], [], []
    for pos, player in enumerate(players):
        if not isinstance(player, Mapping):
            raise ValidationError(f"players[{pos}]: expected an object")
        name = player.get("name")
        if not isinstance(name, str):
            raise ValidationError(f"players[{pos}].name: expected a string")
        label = f"player {name}"
        types = _string_list(player.get("types"), f"{label}.types")
        val_doc = player.get("valuation")
        tr_doc = player.get("transition")
        if not isinstance(val_doc, Mapping):
            raise ValidationError(f"{label}.valuation: expected a map type -> action -> number")
        if not isinstance(tr_doc, Mapping):
            raise ValidationError(f"{label}.transition: expected a map type -> action -> array")
        extra = (set(val_doc) | set(tr_doc)) - set(types)
        if extra:
            raise ValidationError(f"{label}: unknown type labels {sorted(extra)}")
        v = np.empty((len(types), len(actions)))
        k = np.empty((len(types), len(actions), len(types)))
        for x, t in enumerate(types):
            vrow = val_doc.get(t)
            trow = tr_doc.get(t)
            if not isinstance(vrow, Mapping):
                raise ValidationError(f"{label}, type {t}: missing valuation row")
            if not isinstance(trow, Mapping):
                raise ValidationError(f"{label}, type {t}: missing transition row")
            if set(vrow) != set(actions):
                raise ValidationError(f"{label}, type {t}: valuation must cover exactly the actions {actions}")
            if set(trow) != set(actions):
                raise ValidationError(f"{label}, type {t}: transition must cover exactly the actions {actions}")
            for a, act in enumerate(actions):
                v[x, a] = _number(vrow[act], f"{label}, type {t}, action {act}: valuation")
                probs = trow[act]
                where = f"{label}, type {t}, action {act}"
                if not isinstance(probs, list) or len(probs) != len(types):
                    raise ValidationError(f"{where}: transition row needs {len(types)} entries (ragged table)")
                k[x, a] = _normalized_row([_number(p, where) for p in probs], where)
        names.append(name)
        type_sets.append(types)
        valuations.append(v)
        kernels.append(k)
    if len(set(names)) != len(names):
        raise ValidationError("players: names must be unique")
    return Environment(names, type_sets, actions, valuations, kernels, discount)


def read_environment(path) -> Environment:
    text = Path(path).read_text()
    try:
        return load_environment(text)
    except EnvironmentFileError as exc:
        raise type(exc)(f"{path}: {exc}") from exc


def to_document(env: Environment) -> dict:
    players = []
    for name, types, v, k in zip(env.players, env.type_sets, env.valuation, env.kernel):
        players.append(
            {
                "name": name,
                "types": list(types),
                "valuation": {t: {a: float(v[x, j]) for j, a in enumerate(env.actions)} for x, t in enumerate(types)},
                "transition": {
                    t: {a: [float(p) for p in k[x, j]] for j, a in enumerate(env.actions)}
                    for x, t in enumerate(types)
                },
            }
        )
    return {"discount": env.discount, "actions": list(env.actions), "players": players}


def dumps(env: Environment) -> str:
    return json.dumps(to_document(env), indent=2)


# -- derived environments -----------------------------------------------------


def reduced_environment(env: Environment, excluded) -> Environment:
    """The environment with one player deleted (same actions and discount)."""
    i = env.player_index(excluded)
    keep = [j for j in range(env.n_players) if j != i]
    return Environment(
        [env.players[j] for j in keep],
        [env.type_sets[j] for j in keep],
        env.actions,
        [env.valuation[j] for j in keep],
        [env.kernel[j] for j in keep],
        env.discount,
    )


def random_environment(rng: np.random.Generator, n_players: int, max_types: int = 4,
                       max_actions: int = 3, discount: float = 0.5, scale: float = 1.0) -> Environment:
    """Random valid environment; kernels get occasional zero entries."""
    n_act = int(rng.integers(1, max_actions + 1))
    names, types, vals, kers = [], [], [], []
    for j in range(n_players):
        m = int(rng.integers(1, max_types + 1))
        names.append(str(j + 1))
        types.append([f"t{x}" for x in range(m)])
        vals.append(rng.uniform(-scale, scale, size=(m, n_act)))
        k = rng.dirichlet(np.ones(m), size=(m, n_act))
        if m > 1:
            mask = rng.random((m, n_act, m)) < 0.25
            mask[..., 0] = False
            k = np.where(mask, 0.0, k)
            k /= k.sum(axis=-1, keepdims=True)
        kers.append(k)
    return Environment(names, types, [f"a{a}" for a in range(n_act)], vals, kers, discount)


# -- noise representation -------------------------------------------------------


def _edges(row: np.ndarray) -> np.ndarray:
    """CDF breakpoints ``[0, F_0, ..., F_{m-2}, 1]`` with the last forced to 1."""
    cum = np.cumsum(row)
    edges = np.concatenate(([0.0], cum[:-1], [1.0]))
    return np.maximum.accumulate(np.minimum(edges, 1.0))


def inverse_cdf(row: np.ndarray, u: float) -> int:
    """Smallest index ``k`` with ``u < F_k``; the last index absorbs rounding slack."""
    cum = np.cumsum(row)[:-1]
    return int(np.count_nonzero(cum <= u))


def couple_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Joint law of ``(F_p^{-1}(U), F_q^{-1}(U))`` for a single uniform ``U``."""
    ep, eq = _edges(np.asarray(p, float)), _edges(np.asarray(q, float))
    lo = np.maximum(ep[:-1, None], eq[None, :-1])
    hi = np.minimum(ep[1:, None], eq[None, 1:])
    return np.clip(hi - lo, 0.0, None)


@dataclass(frozen=True, eq=False)
class CoupledKernel:
    """``q[x, y, x', y']`` for one player and action under a shared uniform draw."""

    player: int
    action: int
    q: np.ndarray

    def row(self, x: int, y: int) -> np.ndarray:
        return self.q[x, y]


def coupling_kernel(env: Environment, i, a) -> CoupledKernel:
    i = env.player_index(i)
    a = env.action_index(a)
    k = env.kernel[i][:, a, :]
    m = k.shape[0]
    q = np.empty((m, m, m, m))
    for x in range(m):
        for y in range(m):
            q[x, y] = couple_rows(k[x], k[y])
    return CoupledKernel(i, a, _frozen(q))


@dataclass(frozen=True)
class NoiseStream:
    """Per-(player, period) uniform draws on [0, 1), reproducible from a 64-bit seed.

    Each (player, period) pair owns an independent child of the root seed
    sequence, so draws never depend on the order in which they are requested.
    """

    seed: int = 0

    def draws(self, player: int, period: int, size: int) -> np.ndarray:
        ss = np.random.SeedSequence(int(self.seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(int(player), int(period)))
        return np.random.Generator(np.random.PCG64(ss)).random(size)
