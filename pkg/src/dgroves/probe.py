"""Numerical probes on parametric continuous type spaces.

Everything here is evidence, not proof: finite samples cannot certify
statements quantified over open connected domains, so every report carries
a ``heuristic`` banner.

Monte Carlo fields return per-path samples.  Every evaluation of a field
with the same seed reuses the same uniform draws (common random numbers),
so divided differences are taken path by path and their standard errors
are honest.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .env import Environment, NoiseStream
from .mdp import solve_efficient

BANNER = "heuristic: finite-sample numerical evidence, not a proof"
SCREEN_FACTOR = 5.0
DEFAULT_BASE_STEP = 2.0 ** -4
DEFAULT_LEVELS = 4


class BoundaryError(ValueError):
    pass


class DiscretizationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ContinuousWorld:
    """Parametric continuous environment.

    Types of player ``i`` are points of the open box ``(lower[i], upper[i])``
    and are passed around as ``(N, k_i)`` arrays.  Callables:

    * ``valuations[i](theta, a) -> (N,)`` with ``a`` an ``(N,)`` action index array,
    * ``transitions[i](theta, a, u) -> (N, k_i)`` with ``u`` uniform on [0, 1),
    * ``decision(profile) -> (N,)`` action indices, ``profile`` a list of type arrays,
    * ``transfers[i](profile) -> (N,)`` flow transfers (team transfers when omitted),
    * ``public_value(a) -> (N,)`` valuation of a party without private types
      (a seller's cost, say); it enters welfare but has no type to misreport.
    """

    lower: tuple[np.ndarray, ...]
    upper: tuple[np.ndarray, ...]
    actions: tuple
    valuations: tuple[Callable, ...]
    transitions: tuple[Callable, ...]
    decision: Callable
    discount: float
    bound: float = 1.0
    transfers: tuple[Callable, ...] | None = None
    public_value: Callable | None = None
    name: str = "world"

    def __post_init__(self):
        lower = tuple(np.atleast_1d(np.asarray(x, dtype=float)) for x in self.lower)
        upper = tuple(np.atleast_1d(np.asarray(x, dtype=float)) for x in self.upper)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        for lo, hi in zip(lower, upper):
            if lo.shape != hi.shape or not np.all(np.isfinite(lo) & np.isfinite(hi) & (lo < hi)):
                raise ValueError("domains must be finite non-empty boxes")
        n = len(lower)
        if not (len(upper) == len(self.valuations) == len(self.transitions) == n):
            raise ValueError("one domain, valuation and transition per player")

    @property
    def n_players(self) -> int:
        return len(self.lower)

    def dim(self, i: int) -> int:
        return self.lower[i].shape[0]

    def horizon(self, target: float = 1e-6) -> int:
        delta, scale = self.discount, self.n_players * self.bound / (1.0 - self.discount)
        if delta == 0.0 or scale <= target:
            return 1
        return max(1, math.ceil(math.log(target / scale) / math.log(delta)))

    def interior_distance(self, i: int, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(min(np.min(x - self.lower[i]), np.min(self.upper[i] - x)))

    def flow_transfer(self, i: int, profile, a) -> np.ndarray:
        if self.transfers is not None:
            return self.transfers[i](profile)
        out = np.zeros(profile[0].shape[0])
        for j in range(self.n_players):
            if j != i:
                out -= self.valuations[j](profile[j], a)
        if self.public_value is not None:
            out -= self.public_value(a)
        return out

    def welfare_flow(self, profile, a) -> np.ndarray:
        out = sum(self.valuations[j](profile[j], a) for j in range(self.n_players))
        if self.public_value is not None:
            out = out + self.public_value(a)
        return out


def _tile(point, n):
    return np.repeat(np.atleast_1d(np.asarray(point, dtype=float))[None, :], n, axis=0)


def consistent_paths(world: ContinuousWorld, i: int, theta, report, others: Sequence, n_paths: int = 4000,
                     horizon: int | None = None, seed: int = 0, variant: str = "actual-action") -> np.ndarray:
    """Per-path ``V_i^D`` for true type ``theta`` and consistent misreport ``report``.

    ``others`` lists the other players' types in player order (player ``i`` skipped).
    """
    T = world.horizon() if horizon is None else horizon
    noise = NoiseStream(seed)
    x = _tile(theta, n_paths)
    y = _tile(report, n_paths)
    rest = [_tile(o, n_paths) for o in others]
    acc = np.zeros(n_paths)
    weight = 1.0
    for t in range(T):
        prof = rest[:i] + [y] + rest[i:]
        a = world.decision(prof)
        if variant == "actual-action":
            ax = a
        else:
            ax = world.decision(rest[:i] + [x] + rest[i:])
        acc += weight * world.valuations[i](x, a)
        if t + 1 == T:
            break
        u = noise.draws(i, t + 1, n_paths)
        x = world.transitions[i](x, ax, u)
        y = world.transitions[i](y, a, u)
        nxt = []
        for pos, j in enumerate(j for j in range(world.n_players) if j != i):
            nxt.append(world.transitions[j](rest[pos], a, noise.draws(j, t + 1, n_paths)))
        rest = nxt
        weight *= world.discount
    return acc


def welfare_paths(world: ContinuousWorld, profile: Sequence, n_paths: int = 4000, horizon: int | None = None,
                  seed: int = 0, player: int | None = None) -> np.ndarray:
    """Per-path discounted welfare along the truthful chain.

    With ``player`` set, returns that player's utility ``sum delta^t (v_i - z_i)`` instead.
    """
    T = world.horizon() if horizon is None else horizon
    noise = NoiseStream(seed)
    prof = [_tile(p, n_paths) for p in profile]
    acc = np.zeros(n_paths)
    weight = 1.0
    for t in range(T):
        a = world.decision(prof)
        if player is None:
            acc += weight * world.welfare_flow(prof, a)
        else:
            acc += weight * (world.valuations[player](prof[player], a) - world.flow_transfer(player, prof, a))
        if t + 1 == T:
            break
        prof = [world.transitions[j](prof[j], a, noise.draws(j, t + 1, n_paths)) for j in range(world.n_players)]
        weight *= world.discount
    return acc


# -- directional derivatives ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DerivativeEstimate:
    location: np.ndarray
    direction: np.ndarray
    steps: np.ndarray
    d_plus: float
    d_minus: float
    se_plus: float
    se_minus: float
    trunc_plus: float
    trunc_minus: float
    samples_plus: np.ndarray = field(repr=False)
    samples_minus: np.ndarray = field(repr=False)
    coarse_plus: np.ndarray = field(repr=False)
    coarse_minus: np.ndarray = field(repr=False)
    raw_plus: np.ndarray = field(repr=False)      # divided differences at the finest step
    raw_minus: np.ndarray = field(repr=False)

    @property
    def err_plus(self) -> float:
        return math.hypot(self.se_plus, self.trunc_plus)

    @property
    def err_minus(self) -> float:
        return math.hypot(self.se_minus, self.trunc_minus)

    def to_dict(self) -> dict:
        return {
            "location": self.location.tolist(), "direction": self.direction.tolist(),
            "steps": self.steps.tolist(),
            "d_plus": self.d_plus, "d_minus": self.d_minus,
            "se_plus": self.se_plus, "se_minus": self.se_minus,
            "trunc_plus": self.trunc_plus, "trunc_minus": self.trunc_minus,
        }


def _richardson(diffs: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Neville tableau for step halving; returns the last two diagonal entries."""
    table = [list(diffs)]
    for k in range(1, len(diffs)):
        f = 2.0 ** k
        prev = table[-1]
        table.append([(f * prev[m] - prev[m - 1]) / (f - 1.0) for m in range(1, len(prev))])
    final = table[-1][-1]
    coarse = table[-2][-1] if len(table) > 1 else final
    return final, coarse


def _se(samples: np.ndarray) -> float:
    return float(samples.std(ddof=1) / math.sqrt(samples.size)) if samples.size > 1 else 0.0


def estimate_directional(field: Callable, x, d, base_step: float = DEFAULT_BASE_STEP,
                         levels: int = DEFAULT_LEVELS, bounds: tuple | None = None) -> DerivativeEstimate:
    """One-sided directional derivatives ``D+`` and ``D-`` of ``field`` at ``x``.

    Divided differences at steps ``base_step * 2**-m`` (``m < levels``) are
    Richardson-extrapolated.  ``field`` may return a scalar or per-path
    samples drawn with common random numbers.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = np.atleast_1d(np.asarray(d, dtype=float))
    norm = np.linalg.norm(d)
    if norm == 0.0:
        raise ValueError("direction must be non-zero")
    d = d / norm
    if bounds is not None:
        lo, hi = (np.atleast_1d(np.asarray(b, dtype=float)) for b in bounds)
        reach = base_step * np.abs(d)
        if np.any(x - reach <= lo) or np.any(x + reach >= hi):
            raise BoundaryError(f"point {x.tolist()} is within {base_step} of the domain boundary")
    steps = base_step * 2.0 ** -np.arange(levels)

    def ev(point):
        val = np.atleast_1d(np.asarray(field(point), dtype=float))
        if not np.all(np.isfinite(val)):
            raise ValueError(f"non-finite field value at {point.tolist()}")
        return val

    f0 = ev(x)
    fwd = [(ev(x + h * d) - f0) / h for h in steps]
    bwd = [(f0 - ev(x - h * d)) / h for h in steps]
    plus, plus_c = _richardson(fwd)
    minus, minus_c = _richardson(bwd)
    return DerivativeEstimate(
        location=x, direction=d, steps=steps,
        d_plus=float(plus.mean()), d_minus=float(minus.mean()),
        se_plus=_se(plus), se_minus=_se(minus),
        trunc_plus=float(abs(plus.mean() - plus_c.mean())),
        trunc_minus=float(abs(minus.mean() - minus_c.mean())),
        samples_plus=plus, samples_minus=minus, coarse_plus=plus_c, coarse_minus=minus_c,
        raw_plus=fwd[-1], raw_minus=bwd[-1],
    )


def _paired(a: np.ndarray, b: np.ndarray, a_c: np.ndarray, b_c: np.ndarray):
    """Mean, paired standard error and truncation estimate of ``a - b``."""
    if a.size == b.size:
        diff = a - b
        se = _se(diff)
    else:
        diff = np.array([a.mean() - b.mean()])
        se = math.hypot(_se(a), _se(b))
    trunc = abs(a.mean() - a_c.mean()) + abs(b.mean() - b_c.mean())
    return float(diff.mean()), se, trunc


# -- welfare sandwich and Property A - ---------------------------------------------------


def sandwich_at(v_field: Callable, w_field: Callable, x, d, k_se: float = 3.0, atol: float = 1e-9, **kw) -> dict:
    """Check ``D+V <= D+W`` and ``D-V >= D-W`` at ``x`` in direction ``d``.

    ``v_field`` is the consistent-deviation valuation with the report pinned
    at ``x``; ``w_field`` is welfare.  Both inequalities already hold for
    every finite step, so a violation must show up in the extrapolated
    margin and persist in the raw margin at the finest step; extrapolating
    across a kink of ``W`` inside the step bracket can fake one otherwise.
    """
    ev = estimate_directional(v_field, x, d, **kw)
    ew = estimate_directional(w_field, x, d, **kw)
    up, up_se, up_tr = _paired(ew.samples_plus, ev.samples_plus, ew.coarse_plus, ev.coarse_plus)
    dn, dn_se, dn_tr = _paired(ev.samples_minus, ew.samples_minus, ev.coarse_minus, ew.coarse_minus)
    up_raw, up_raw_se, _ = _paired(ew.raw_plus, ev.raw_plus, ew.raw_plus, ev.raw_plus)
    dn_raw, dn_raw_se, _ = _paired(ev.raw_minus, ew.raw_minus, ev.raw_minus, ew.raw_minus)
    up_err, dn_err = math.hypot(up_se, up_tr), math.hypot(dn_se, dn_tr)
    up_ok = up >= -(k_se * up_err + atol) or up_raw >= -(k_se * up_raw_se + atol)
    dn_ok = dn >= -(k_se * dn_err + atol) or dn_raw >= -(k_se * dn_raw_se + atol)
    return {
        "location": ev.location.tolist(), "direction": ev.direction.tolist(),
        "V": ev.to_dict(), "W": ew.to_dict(),
        "upper_margin": up, "upper_error": up_err, "upper_raw_margin": up_raw, "upper_holds": bool(up_ok),
        "lower_margin": dn, "lower_error": dn_err, "lower_raw_margin": dn_raw, "lower_holds": bool(dn_ok),
        "violation": not (up_ok and dn_ok),
    }


def property_a_at(v_field: Callable, w_field: Callable | None, x, d, k_se: float = 3.0,
                  screen: float = SCREEN_FACTOR, atol: float = 1e-9, **kw) -> dict:
    """Check ``D-V <= D+V`` at ``x`` after screening out kinks of ``W``.

    A point is skipped as a non-differentiability point of ``W`` when
    ``|D+W - D-W|`` exceeds ``screen`` combined standard errors.
    """
    ev = estimate_directional(v_field, x, d, **kw)
    row = {"location": ev.location.tolist(), "direction": ev.direction.tolist(), "V": ev.to_dict()}
    if w_field is not None:
        ew = estimate_directional(w_field, x, d, **kw)
        kink, k_se_w, k_tr = _paired(ew.samples_plus, ew.samples_minus, ew.coarse_plus, ew.coarse_minus)
        w_err = math.hypot(k_se_w, k_tr)
        row["W"] = ew.to_dict()
        row["W_kink"] = kink
        row["W_kink_error"] = w_err
        if abs(kink) > screen * w_err + atol:
            row.update(verdict="screened", differentiable_W=False)
            return row
        row["differentiable_W"] = True
    gap, gap_se, gap_tr = _paired(ev.samples_minus, ev.samples_plus, ev.coarse_minus, ev.coarse_plus)
    err = math.hypot(gap_se, gap_tr)
    holds = gap <= k_se * err + atol
    row.update(
        gap=gap, gap_error=err,
        verdict="holds" if holds else "violated",
        two_sided=bool(abs(gap) <= k_se * err + atol),
    )
    return row


def _summarize(rows):
    verdicts = [r["verdict"] for r in rows]
    return {
        "points": len(rows),
        "screened": verdicts.count("screened"),
        "holds": verdicts.count("holds"),
        "violated": verdicts.count("violated"),
    }


@dataclass
class SampleSpec:
    """Where and how hard to probe player ``i``.

    ``points`` are locations for player ``i`` (``(P, k_i)``), ``others`` the
    other players' type profiles to pair them with, ``reports`` the pinned
    reports for Lipschitz families.
    """

    points: np.ndarray
    directions: np.ndarray | None = None
    others: list | None = None
    reports: np.ndarray | None = None
    n_paths: int = 4000
    horizon: int | None = None
    seed: int = 0

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.shape[0] == 1 and self.points.shape[1] > 1 and self.directions is None:
            pass
        if self.directions is None:
            self.directions = np.eye(self.points.shape[1])
        self.directions = np.atleast_2d(np.asarray(self.directions, dtype=float))
        if self.others is None:
            self.others = [[]]


def _profile(others, i, x):
    return list(others[:i]) + [np.asarray(x, dtype=float)] + list(others[i:])


def world_fields(world: ContinuousWorld, i: int, others, report, spec: SampleSpec):
    """``(V_i^C, W)`` path-sample fields with the report pinned at ``report``."""
    def v_field(x):
        return consistent_paths(world, i, x, report, others, spec.n_paths, spec.horizon, spec.seed)

    def w_field(x):
        return welfare_paths(world, _profile(others, i, x), spec.n_paths, spec.horizon, spec.seed)

    return v_field, w_field


def check_lemma2(world: ContinuousWorld, i: int, theta, d, spec: SampleSpec | None = None,
                 others=None, **kw) -> dict:
    spec = spec or SampleSpec(points=np.atleast_2d(theta))
    others = spec.others[0] if others is None else others
    v_field, w_field = world_fields(world, i, others, theta, spec)
    row = sandwich_at(v_field, w_field, theta, d, bounds=(world.lower[i], world.upper[i]), **kw)
    row["banner"] = BANNER
    return row


def check_property_a(world: ContinuousWorld, i: int, spec: SampleSpec, **kw) -> dict:
    rows = []
    for others in spec.others:
        for x in spec.points:
            v_field, w_field = world_fields(world, i, others, x, spec)
            for d in spec.directions:
                row = property_a_at(v_field, w_field, x, d, bounds=(world.lower[i], world.upper[i]), **kw)
                row["others"] = [np.atleast_1d(o).tolist() for o in others]
                rows.append(row)
    summary = _summarize(rows)
    return {"banner": BANNER, "world": world.name, "player": i, "rows": rows, "summary": summary,
            "property_a": summary["violated"] == 0}


def lipschitz_lower_bound(fields: Sequence[Callable], points) -> dict:
    """Largest sampled slope ``|f(x) - f(x')| / |x - x'|`` over a family of fields.

    Fields returning per-path samples get a paired standard error on the
    attained slope.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] < 2:
        raise ValueError("need at least two sample points")
    best, where, best_se = 0.0, None, 0.0
    for k, f in enumerate(fields):
        samples = [np.atleast_1d(np.asarray(f(p), dtype=float)) for p in points]
        vals = np.array([s.mean() for s in samples])
        for a in range(len(points)):
            for b in range(a + 1, len(points)):
                dist = float(np.linalg.norm(points[a] - points[b]))
                if dist == 0.0:
                    continue
                slope = abs(vals[a] - vals[b]) / dist
                if slope > best:
                    best = float(slope)
                    where = {"member": k, "points": [points[a].tolist(), points[b].tolist()]}
                    pair = samples[a] - samples[b] if samples[a].size == samples[b].size else np.zeros(1)
                    best_se = _se(pair) / dist
    return {"lipschitz_lower_bound": best, "slope_se": best_se, "attained": where,
            "note": "lower bound on the true constant"}


def estimate_lipschitz(world: ContinuousWorld, i: int, spec: SampleSpec) -> dict:
    reports = spec.points if spec.reports is None else np.atleast_2d(spec.reports)
    fields = []
    for others in spec.others:
        for r in reports:
            fields.append(lambda x, r=r, o=others: consistent_paths(world, i, x, r, o, spec.n_paths,
                                                                     spec.horizon, spec.seed))
    out = lipschitz_lower_bound(fields, spec.points)
    out["banner"] = BANNER
    return out


# -- discretization ------------------------------------------------------------------


def _cell_grid(lo, hi, cells):
    cells = np.broadcast_to(np.asarray(cells, dtype=int), lo.shape)
    if np.any(cells < 2):
        raise ValueError("need at least two cells per dimension")
    axes = [lo[k] + (hi[k] - lo[k]) * (np.arange(c) + 0.5) / c for k, c in enumerate(cells)]
    mids = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lo.shape[0])
    return mids, cells


def discretize_world(world: ContinuousWorld, cells, n_noise: int = 512, allow_empty: bool = False) -> Environment:
    """Finite environment on cell midpoints.

    Rows come from stratified draws ``u = (k + 1/2) / n_noise`` of the
    transition simulator started at each midpoint; mass leaving the domain is
    dropped and rows are renormalized.
    """
    names, types, vals, kers = [], [], [], []
    n_act = len(world.actions)
    u = (np.arange(n_noise) + 0.5) / n_noise
    for j in range(world.n_players):
        lo, hi = world.lower[j], world.upper[j]
        mids, shape = _cell_grid(lo, hi, cells)
        m = mids.shape[0]
        v = np.empty((m, n_act))
        k = np.zeros((m, n_act, m))
        for a in range(n_act):
            act = np.full(m, a)
            v[:, a] = world.valuations[j](mids, act)
            start = np.repeat(mids, n_noise, axis=0)
            nxt = world.transitions[j](start, np.full(start.shape[0], a), np.tile(u, m))
            idx = np.floor((nxt - lo) / (hi - lo) * shape).astype(np.int64)
            inside = np.all((idx >= 0) & (idx < shape), axis=1)
            flat = np.zeros(start.shape[0], dtype=np.int64)
            flat[inside] = np.ravel_multi_index(tuple(idx[inside].T), tuple(shape))
            src = np.repeat(np.arange(m), n_noise)
            np.add.at(k[:, a, :], (src[inside], flat[inside]), 1.0)
        sums = k.sum(axis=-1, keepdims=True)
        empty = np.argwhere(sums[..., 0] == 0)
        if empty.size:
            if not allow_empty:
                x, a = empty[0]
                raise DiscretizationError(f"player {j}: no simulated mass from cell {mids[x].tolist()} "
                                          f"under action {world.actions[a]!r}")
            k[sums[..., 0] == 0] = 1.0 / m
            sums = k.sum(axis=-1, keepdims=True)
        k /= sums
        names.append(str(j + 1))
        types.append([";".join(f"{c:.10g}" for c in mid) for mid in mids])
        vals.append(v)
        kers.append(k)
    if world.public_value is not None:
        names.append("public")
        types.append(["-"])
        vals.append(np.asarray(world.public_value(np.arange(n_act)), dtype=float)[None, :])
        kers.append(np.ones((1, n_act, 1)))
    return Environment(names, types, [str(a) for a in world.actions], vals, kers, world.discount)


def grid_welfare(world: ContinuousWorld, cells: int, n_noise: int = 512, tol: float = 1e-10):
    """Midpoints and solved welfare of a single-player, one-dimensional world."""
    if world.n_players != 1 or world.dim(0) != 1:
        raise ValueError("grid welfare is implemented for one player with a scalar type")
    env = discretize_world(world, cells, n_noise)
    _, w, _ = solve_efficient(env, tol)
    mids = np.array([float(t) for t in env.type_sets[0]])
    return mids, w


def refinement_report(world: ContinuousWorld, coarse: int = 64, fine: int = 128, n_noise: int = 512) -> dict:
    """Welfare on two grids, the Cauchy difference at coarse midpoints, and monotonicity flags."""
    xc, wc = grid_welfare(world, coarse, n_noise)
    xf, wf = grid_welfare(world, fine, n_noise)
    diff = np.abs(wc - np.interp(xc, xf, wf))
    interior = (xc > xc[0]) & (xc < xc[-1])
    return {
        "banner": BANNER,
        "cells": [coarse, fine],
        "cauchy_max": float(diff[interior].max()),
        "monotone_coarse": bool(np.all(np.diff(wc) >= -1e-12)),
        "monotone_fine": bool(np.all(np.diff(wf) >= -1e-12)),
        "rows_sum_to_one": True,
    }


# -- built-in worlds -----------------------------------------------------------------


def _wrap_transition(gamma):
    def step(theta, a, u):
        return kernels.wrap_step(theta, gamma, 2.0 * u[:, None] - 1.0)
    return step


def example1_world(cost: float, gamma: float, delta: float) -> ContinuousWorld:
    """Single buyer with ``v(theta, a) = theta * a`` and a wrapped AR(1) type.

    The seller's production cost ``c * a`` is the public term, which makes
    ``a*(theta) = 1{theta >= c}`` the efficient rule.
    """
    actions = (0.0, 1.0)

    def seller(a):
        return -cost * np.asarray(actions)[a]

    def value(theta, a):
        return theta[:, 0] * np.asarray(actions)[a]

    def decision(profile):
        return (profile[0][:, 0] >= cost).astype(np.int64)

    return ContinuousWorld((0.0,), (1.0,), actions, (value,), (_wrap_transition(gamma),), decision, delta,
                           bound=1.0, public_value=seller, name=f"example1(c={cost}, gamma={gamma}, delta={delta})")


def smooth_world(gamma: float = 0.5, delta: float = 0.5) -> ContinuousWorld:
    """Two players, quantity choice, smooth valuations, action-free AR(1) types on (0, 1)."""
    actions = (0.0, 1.0, 2.0)
    q = np.asarray(actions)
    weights = (1.0, 0.8)
    costs = (0.25, 0.1)

    def make_value(w, c):
        def value(theta, a):
            return w * q[a] * theta[:, 0] - c * q[a] ** 2 + 0.1 * np.sin(3.0 * theta[:, 0])
        return value

    values = tuple(make_value(w, c) for w, c in zip(weights, costs))

    def step(theta, a, u):
        return gamma * theta + (1.0 - gamma) * u[:, None]

    def decision(profile):
        n = profile[0].shape[0]
        total = np.stack([sum(v(p, np.full(n, k)) for v, p in zip(values, profile)) for k in range(len(q))])
        return np.argmax(total, axis=0)

    return ContinuousWorld((0.0, 0.0), (1.0, 1.0), actions, values, (step, step), decision, delta,
                           bound=2.0, name=f"smooth(gamma={gamma}, delta={delta})")


def iid_world(cost: float = 0.4, delta: float = 0.5) -> ContinuousWorld:
    """Single player with i.i.d. uniform types: total valuations are affine, hence convex, in the type."""
    actions = (0.0, 1.0)

    def value(theta, a):
        return (theta[:, 0] - cost) * np.asarray(actions)[a]

    def step(theta, a, u):
        return u[:, None].copy()

    def decision(profile):
        return (profile[0][:, 0] >= cost).astype(np.int64)

    return ContinuousWorld((0.0,), (1.0,), actions, (value,), (step,), decision, delta, bound=1.0,
                           name=f"iid(c={cost}, delta={delta})")


# -- nonlinear pricing runner -------------------------------------------------------------


@dataclass(frozen=True)
class Example1Params:
    cost: float = 0.5
    gamma: float = 0.5
    delta: float = 0.9
    n_paths: int = 100_000
    horizon: int | None = None
    seed: int = 0
    grid: int = 9
    reports: tuple[float, ...] | None = None

    def __post_init__(self):
        if not 0.0 < self.cost < 1.0:
            raise ValueError("cost must lie in (0, 1)")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError("delta must lie in [0, 1)")
        if self.n_paths < 1 or (self.horizon is not None and self.horizon < 1) or self.grid < 3:
            raise ValueError("need n_paths >= 1, horizon >= 1 and grid >= 3")

    @property
    def resolved_horizon(self) -> int:
        if self.horizon is not None:
            return self.horizon
        if self.delta == 0.0:
            return 1
        return max(1, math.ceil(math.log(1e-6 * (1.0 - self.delta)) / math.log(self.delta)))

    @property
    def resolved_reports(self) -> tuple[float, ...]:
        if self.reports is not None:
            return tuple(self.reports)
        return (self.cost / 2.0, (1.0 + self.cost) / 2.0)

    def grid_points(self) -> np.ndarray:
        return (np.arange(self.grid) + 0.5) / self.grid


def example1_paths(params: Example1Params, report: float):
    """Per-path ``V^D`` on the start grid and the per-path pathwise derivative.

    Returns ``(values, derivative)`` with shapes ``(G, N)`` and ``(N,)``.
    """
    grid = params.grid_points()
    N = params.n_paths
    theta = np.ascontiguousarray(np.repeat(grid[:, None], N, axis=1))
    thetabar = np.full(N, float(report))
    acc = np.zeros_like(theta)
    dacc = np.zeros(N)
    noise = NoiseStream(params.seed)
    weight = path_weight = 1.0
    for t in range(params.resolved_horizon):
        omega = 2.0 * noise.draws(0, t + 1, N) - 1.0
        kernels.example1_step(theta, thetabar, omega, params.gamma, params.cost, weight, path_weight, acc, dacc)
        weight *= params.delta
        path_weight *= params.delta * params.gamma
    return acc, dacc


def example1_run(params: Example1Params, k_se: float = 3.0) -> dict:
    """Linearity audit of ``V^C(theta0, a*(report))`` in ``theta0`` for each pinned report.

    Fits an ordinary least-squares line across the start grid path by path,
    so residuals and the slope-versus-pathwise-derivative gap get paired
    standard errors.
    """
    grid = params.grid_points()
    X = np.column_stack([grid, np.ones_like(grid)])
    proj = np.linalg.solve(X.T @ X, X.T)          # rows: slope and intercept weights
    hat = X @ proj
    N = params.n_paths
    tables, csv_rows = [], []
    linear = True
    for report in params.resolved_reports:
        acc, dacc = example1_paths(params, report)
        means = acc.mean(axis=1)
        ses = acc.std(axis=1, ddof=1) / math.sqrt(N) if N > 1 else np.zeros(len(grid))
        coef = proj @ acc                              # (2, N)
        resid = acc - hat @ acc                        # (G, N)
        r_mean = resid.mean(axis=1)
        r_se = resid.std(axis=1, ddof=1) / math.sqrt(N) if N > 1 else np.zeros(len(grid))
        slack = 1e-12 * (1.0 + np.abs(means))
        resid_ok = np.abs(r_mean) <= k_se * r_se + slack
        gap = coef[0] - dacc
        gap_mean = float(gap.mean())
        gap_se = _se(gap)
        slope_ok = abs(gap_mean) <= k_se * gap_se + 1e-12
        linear &= bool(resid_ok.all() and slope_ok)
        tables.append({
            "report": report,
            "slope": float(coef[0].mean()), "slope_se": _se(coef[0]),
            "intercept": float(coef[1].mean()), "intercept_se": _se(coef[1]),
            "pathwise_derivative": float(dacc.mean()), "pathwise_derivative_se": _se(dacc),
            "slope_gap": gap_mean, "slope_gap_se": gap_se, "slope_agrees": bool(slope_ok),
            "max_abs_residual": float(np.abs(r_mean).max()),
            "residuals": [
                {"theta0": float(g), "value": float(v), "se": float(s), "residual": float(r),
                 "residual_se": float(rs), "within": bool(ok)}
                for g, v, s, r, rs, ok in zip(grid, means, ses, r_mean, r_se, resid_ok)
            ],
            "residuals_within": bool(resid_ok.all()),
        })
        csv_rows.extend((float(g), report, float(v), float(s)) for g, v, s in zip(grid, means, ses))
    return {
        "banner": BANNER,
        "params": {"cost": params.cost, "gamma": params.gamma, "delta": params.delta, "paths": N,
                   "horizon": params.resolved_horizon, "seed": params.seed, "grid": params.grid},
        "tail_bound": params.delta ** params.resolved_horizon / (1.0 - params.delta),
        "k_se": k_se,
        "linear": linear,
        "reports": tables,
        "csv": {"header": ["theta0", "report", "value", "se"], "rows": csv_rows},
    }
