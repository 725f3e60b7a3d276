"""Command-line front end: load, solve, build a mechanism, audit, probe.

Exit codes: 0 success, 1 audit failure, 2 input error.  Reports are JSON
with sorted keys and no timing data, so identical invocations produce
identical bytes.  ``--out`` also writes a CSV extract next to the report.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, probe
from .deviate import VARIANTS, best_response_value, compare_consistent, extract_phi, verify_ic
from .env import EnvironmentFileError, read_environment, reduced_environment
from .groves import (
    MechanismError,
    build_custom,
    build_pivot,
    build_team,
    from_transfers,
    rules_from_document,
    to_document,
    transfer_report,
    transfers_from_document,
)
from .mdp import IterationLimitError, solve

OK, AUDIT_FAILURE, INPUT_ERROR = 0, 1, 2
IDENTITY_TOL, IC_TOL = 1e-9, 1e-8


class InputError(Exception):
    pass


def _read_json(path: str, what: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InputError(f"{what} file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _load(args):
    try:
        env = read_environment(args.environment)
    except FileNotFoundError:
        raise InputError(f"environment file not found: {args.environment}") from None
    except EnvironmentFileError as exc:
        msg = str(exc)
        raise InputError(msg if args.environment in msg else f"{args.environment}: {msg}") from None
    return env, solve(env, min(args.tol or IDENTITY_TOL, 1e-10), args.max_iters)


def _mechanism(args, env, solved):
    try:
        if args.transfers:
            doc = _read_json(args.transfers, "transfers")
            return from_transfers(env, solved, transfers_from_document(doc, env, solved), kind="transfers")
        if args.kind == "custom":
            if not args.rules:
                raise InputError("--kind custom needs --rules FILE")
            return build_custom(env, solved, rules_from_document(_read_json(args.rules, "rules"), env))
        if args.rules:
            raise InputError("--rules is only meaningful with --kind custom")
        return build_pivot(env, solved) if args.kind == "pivot" else build_team(env, solved)
    except (MechanismError, KeyError, TypeError, ValueError) as exc:
        source = args.transfers or args.rules or args.environment
        raise InputError(f"{source}: {exc}") from None


def _players(args, env):
    if args.player is None:
        return list(range(env.n_players))
    try:
        return [env.player_index(args.player)]
    except (KeyError, ValueError, IndexError):
        raise InputError(f"unknown player {args.player!r}; players are {list(env.players)}") from None


# -- subcommands: each returns (report, csv_rows, passed) ------------------------------


def cmd_solve(args):
    env, solved = _load(args)
    rows = []
    for s, label in enumerate(env.state_labels):
        row = {"state": label, "action": env.actions[solved.policy[s]], "W": float(solved.welfare[s])}
        for i, name in enumerate(env.players):
            row[f"V[{name}]"] = float(solved.values[i][s])
            row[f"V_others[{name}]"] = float(solved.others[i][s])
        rows.append(row)
    report = {
        "environment_digest": env.digest,
        "policy": [env.actions[a] for a in solved.policy],
        "W": solved.welfare.tolist(),
        "states": list(env.state_labels),
        "solver": solved.report.to_dict(),
        "table": rows,
    }
    return report, rows, True


def cmd_mechanism(args):
    env, solved = _load(args)
    mech = _mechanism(args, env, solved)
    summary = transfer_report(mech)
    return {"mechanism": to_document(mech), "transfer_report": summary}, summary["rows"], True


def cmd_verify_ic(args):
    env, solved = _load(args)
    mech = _mechanism(args, env, solved)
    result = verify_ic(mech, args.tol or IC_TOL, full=args.full)
    result["kind"] = mech.kind
    rows = []
    if args.full:
        for name, table in result["gains"].items():
            for state, gains in table.items():
                rows.extend({"player": name, "state": state, "report": r, "gain": g} for r, g in gains.items())
    return result, rows, result["passed"]


def cmd_best_response(args):
    env, solved = _load(args)
    mech = _mechanism(args, env, solved)
    tol = args.tol or IC_TOL
    players, rows, passed = {}, [], True
    for i in _players(args, env):
        br = best_response_value(mech, i, max_iter=args.max_iters)
        diff = float(np.max(np.abs(br.value - br.truthful)))
        ok = diff <= tol
        passed &= ok
        name = env.players[i]
        players[name] = {"gap": br.gap, "max_abs_difference": diff, "truthful_optimal": ok,
                         "iterations": br.report.iterations}
        for s, label in enumerate(env.state_labels):
            rows.append({"player": name, "state": label, "best_response": float(br.value[s]),
                         "truthful": float(br.truthful[s]), "report": env.type_sets[i][br.policy[s]]})
    return {"kind": mech.kind, "tol": tol, "players": players, "passed": passed}, rows, passed


def cmd_deviate(args):
    env, solved = _load(args)
    mech = _mechanism(args, env, solved)
    results, rows, passed = [], [], True
    for i in _players(args, env):
        cmp = compare_consistent(mech, i, args.seed, args.paths, args.horizon, args.variant)
        passed &= cmp["agree"]
        results.append(cmp)
        for r in cmp["rows"]:
            for name in ("own", "others", "transfers"):
                rows.append({"player": cmp["player"], "state": r["state"], "report": r["report"], "quantity": name,
                             **r[name]})
    return {"kind": mech.kind, "comparisons": results, "agree": passed}, rows, passed


def cmd_extract_phi(args):
    env, solved = _load(args)
    mech = _mechanism(args, env, solved)
    ext = extract_phi(env, solved, mech.transfers)
    tol = args.tol or IDENTITY_TOL
    players, rows = {}, []
    for i, name in enumerate(env.players):
        red = reduced_environment(env, i)
        score = ext.scores[i]
        players[name] = {"max_score": float(score.max()) if score.size else 0.0,
                         "scores": dict(zip(red.state_labels, map(float, score)))}
        for r, rlabel in enumerate(env.type_sets[i]):
            for o, olabel in enumerate(red.state_labels):
                rows.append({"player": name, "report": rlabel, "others": olabel, "Phi": float(ext.tables[i][r, o])})
    groves = ext.is_groves(tol)
    report = {"kind": mech.kind, "tol": tol, "max_score": ext.max_score, "groves": groves, "players": players}
    return report, rows, groves


def _world(args):
    cost = 0.5 if args.cost is None else args.cost
    gamma = 0.5 if args.gamma is None else args.gamma
    delta = (0.9 if args.world == "example1" else 0.5) if args.delta is None else args.delta
    if args.world == "example1":
        return probe.example1_world(cost, gamma, delta)
    if args.world == "smooth":
        return probe.smooth_world(gamma, delta)
    return probe.iid_world(cost, delta)


def cmd_probe(args):
    try:
        world = _world(args)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    i = 0 if args.player is None else int(args.player)
    if not 0 <= i < world.n_players:
        raise InputError(f"player index {i} out of range for world {args.world}")
    n = args.grid or 5
    margin = 2.0 * probe.DEFAULT_BASE_STEP
    lo, hi = world.lower[i][0] + margin, world.upper[i][0] - margin
    points = np.linspace(lo, hi, n)[:, None] * np.ones(world.dim(i))
    others = [[np.full(world.dim(j), 0.5) for j in range(world.n_players) if j != i]]
    spec = probe.SampleSpec(points=points, others=others, n_paths=args.paths or 4000, horizon=args.horizon,
                            seed=args.seed)
    prop = probe.check_property_a(world, i, spec)
    lemma = [probe.check_lemma2(world, i, x, spec.directions[0], spec) for x in points]
    lip = probe.estimate_lipschitz(world, i, spec)
    passed = prop["property_a"] and not any(r["violation"] for r in lemma)
    rows = [{"location": r["location"][0], "direction": r["direction"][0], "verdict": r["verdict"],
             "D_plus": r["V"]["d_plus"], "D_minus": r["V"]["d_minus"],
             "err_plus": float(np.hypot(r["V"]["se_plus"], r["V"]["trunc_plus"])),
             "err_minus": float(np.hypot(r["V"]["se_minus"], r["V"]["trunc_minus"]))} for r in prop["rows"]]
    for r in lemma:
        r.pop("banner", None)
    report = {"banner": probe.BANNER, "world": world.name, "player": i, "property_a": prop, "sandwich": lemma,
              "lipschitz": lip, "passed": passed}
    return report, rows, passed


def cmd_example1(args):
    try:
        params = probe.Example1Params(
            cost=0.5 if args.cost is None else args.cost,
            gamma=0.5 if args.gamma is None else args.gamma,
            delta=0.9 if args.delta is None else args.delta,
            n_paths=args.paths or 100_000, horizon=args.horizon, seed=args.seed, grid=args.grid or 9,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None
    report = probe.example1_run(params)
    table = report.pop("csv")
    rows = [dict(zip(table["header"], r)) for r in table["rows"]]
    return report, rows, report["linear"]


COMMANDS = {
    "solve": (cmd_solve, "solve the efficient policy and total value functions"),
    "mechanism": (cmd_mechanism, "build a mechanism and its transfer report"),
    "verify-ic": (cmd_verify_ic, "exhaustive one-shot incentive-compatibility audit"),
    "best-response": (cmd_best_response, "deviator's best-response value against truthful payoffs"),
    "deviate": (cmd_deviate, "consistent-deviation values, exact versus Monte Carlo"),
    "extract-phi": (cmd_extract_phi, "recover the distribution rule and test its report-independence"),
    "probe": (cmd_probe, "Property A, welfare-sandwich and Lipschitz probes on a continuous world"),
    "example1": (cmd_example1, "linearity audit of the nonlinear-pricing world"),
}
NEEDS_ENV = {"solve", "mechanism", "verify-ic", "best-response", "deviate", "extract-phi"}


def _positive(kind):
    def parse(text):
        value = kind(text)
        if value <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return value
    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dgroves", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        if name in NEEDS_ENV:
            p.add_argument("environment", help="environment JSON file")
            p.add_argument("--kind", choices=("team", "pivot", "custom"), default="team")
            p.add_argument("--rules", help="custom distribution-rule JSON (with --kind custom)")
            p.add_argument("--transfers", help="flow-transfer JSON, overrides --kind")
            p.add_argument("--variant", choices=VARIANTS, default="actual-action")
        else:
            p.add_argument("--world", choices=("example1", "smooth", "iid"), default="example1")
            p.add_argument("--gamma", type=float)
            p.add_argument("--cost", type=float)
            p.add_argument("--delta", type=float)
            p.add_argument("--grid", type=_positive(int), help="number of sample points")
        p.add_argument("--player", help="player name (index for probe worlds); default all")
        p.add_argument("--tol", type=_positive(float), help="default 1e-9 for identities, 1e-8 for IC")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--max-iters", type=_positive(int), default=1_000_000)
        p.add_argument("--paths", type=_positive(int))
        p.add_argument("--horizon", type=_positive(int))
        p.add_argument("--full", action="store_true", help="include complete tables")
        p.add_argument("--out", help="write the JSON report here and a CSV extract beside it")
    return parser


def _csv_text(rows) -> str:
    buf = io.StringIO()
    if rows:
        header = list(rows[0])
        for r in rows[1:]:
            header += [k for k in r if k not in header]
        writer = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return OK if exc.code == 0 else INPUT_ERROR
    func = COMMANDS[args.command][0]
    config = {k: v for k, v in sorted(vars(args).items())}
    try:
        report, rows, passed = func(args)
    except InputError as exc:
        print(f"dgroves {args.command}: {exc}", file=sys.stderr)
        return INPUT_ERROR
    except IterationLimitError as exc:
        print(f"dgroves {args.command}: {exc}", file=sys.stderr)
        return INPUT_ERROR
    document = {"command": args.command, "config": config, "version": __version__, "passed": bool(passed),
                "report": report}
    text = json.dumps(document, sort_keys=True, indent=2) + "\n"
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8", newline="\n")
        out.with_suffix(".csv").write_text(_csv_text(rows), encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)
    if not passed:
        print(f"dgroves {args.command}: audit failed", file=sys.stderr)
    return OK if passed else AUDIT_FAILURE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
