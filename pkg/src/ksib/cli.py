"""Command-line front end: simulate | realdata | infer.

``simulate`` runs the synthetic replication grid and writes the export
files; ``realdata`` replays a binary-label CSV as a two-arm bandit;
``infer`` recomputes every inference quantity for one (arm, t) from an
audit log alone and prints JSON to stdout.  Human-readable progress goes
to stderr so stdout stays machine-readable.

All randomness flows from a single ``--seed``; per-replication streams are
split from it, so reruns are byte-identical.  ``KSIB_THREADS`` provides the
``--threads`` default.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from .environment import ReplayEnv, load_csv
from .errors import ConfigError, KsibError
from .harness import (Scenario, TrajectoryLog, aggregate, export,
                      inference_snapshot, np_cis_at, run_scenario)
from .index_inference import marginal_rows
from .numerics import Rng
from .policy import EpsilonGreedyPolicy
from .score_features import EmpiricalWhiteningScore

REALDATA_INFERENCE_TIMES = (200, 300, 400, 500, 600, 700, 800, 900)


def _default_threads() -> int:
    env = os.environ.get("KSIB_THREADS", "1")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _scenario_from_args(args) -> Scenario:
    fields = {f.name for f in dataclasses.fields(Scenario)}
    values = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(raw) - fields)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        values.update(raw)
    for name in ("d", "sigma", "reps", "seed", "T", "T0", "zeta", "gamma",
                 "alpha", "lambda_beta", "level"):
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    if "inference_times" in values:
        values["inference_times"] = tuple(values["inference_times"])
    scenario = Scenario(**values)
    scenario.validate()
    return scenario


def _write_audit(log: TrajectoryLog, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TrajectoryLog.header(log.dim))
        writer.writerows(log.to_rows())


def read_audit(path: str) -> TrajectoryLog:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise ConfigError(f"{path}: empty log")
    return TrajectoryLog.from_rows(rows[0], rows[1:])


def cmd_simulate(args) -> int:
    scenario = _scenario_from_args(args)
    threads = args.threads or _default_threads()
    print(f"simulate: {scenario.scenario_id} reps={scenario.reps} "
          f"threads={threads}", file=sys.stderr)
    records = run_scenario(scenario, threads=threads)
    table = aggregate(records, scenario)
    export(table, args.out)
    if args.audit_reps:
        from .harness import run_trajectory
        os.makedirs(args.out, exist_ok=True)
        for rep in range(min(args.audit_reps, scenario.reps)):
            log, _, _, _ = run_trajectory(scenario, rep)
            _write_audit(log, os.path.join(args.out, f"rounds_rep{rep}.csv"))
    failed = table.diagnostics["failed"]
    print(f"done: {scenario.reps - failed}/{scenario.reps} replications, "
          f"exports in {args.out}", file=sys.stderr)
    return 0


def cmd_realdata(args) -> int:
    table = load_csv(args.csv, args.label_col,
                     args.feature_cols.split(",") if args.feature_cols else None)
    horizon = args.T
    times = tuple(t for t in REALDATA_INFERENCE_TIMES if args.T0 < t <= horizon)
    scenario = Scenario(d=table.features.shape[1], sigma=0.0, T=horizon,
                        T0=args.T0, reps=args.perms, seed=args.seed,
                        inference_times=times, score="empirical")
    os.makedirs(args.out, exist_ok=True)
    master = Rng(args.seed)
    summary_rows = []
    marg_rows = []
    for perm in range(args.perms):
        env = ReplayEnv(table, seed=master.split(perm).seed, horizon=horizon)
        policy = EpsilonGreedyPolicy(scenario.policy_config(),
                                     EmpiricalWhiteningScore(scenario.d),
                                     master.split(10_000 + perm))
        T = horizon
        contexts = np.empty((T, scenario.d))
        greedy = np.empty(T, dtype=int)
        arm = np.empty(T, dtype=int)
        prop = np.empty(T)
        reward = np.empty(T)
        eps = np.empty(T)
        labels = np.empty(T, dtype=int)
        for i in range(T):
            x, rewards_all = env.draw_round()
            rec = policy.step(x, lambda a: rewards_all[a])
            contexts[i], greedy[i], arm[i] = x, rec.greedy_arm, rec.arm
            prop[i], reward[i], eps[i] = rec.propensity, rec.reward, rec.epsilon
            labels[i] = int(rewards_all[1])
            if rec.t in set(times):
                policy.force_refit()
        log = TrajectoryLog(contexts, greedy, arm, prop, reward, eps)
        if args.audit:
            _write_audit(log, os.path.join(args.out, f"rounds_perm{perm}.csv"))
        accuracy = float(np.mean(reward))
        base = max(float(np.mean(labels == 0)), float(np.mean(labels == 1)))
        # regret proxy vs the best fixed arm in hindsight, averaged per round
        regret_proxy = base - accuracy
        summary_rows.append({"perm": perm, "accuracy": accuracy,
                             "best_fixed_arm_accuracy": base,
                             "avg_regret_proxy": regret_proxy})
        for t in times:
            for a in range(2):
                try:
                    snap = inference_snapshot(log, t, a, scenario)
                except KsibError:
                    continue
                marg_rows.extend(marginal_rows(perm, a, t, snap.report))
    with open(os.path.join(args.out, "realdata_summary.json"), "w",
              encoding="utf-8") as fh:
        json.dump({"rows": summary_rows,
                   "config": dataclasses.asdict(scenario)}, fh,
                  sort_keys=True, indent=2)
        fh.write("\n")
    with open(os.path.join(args.out, "realdata_marginals.csv"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write("rep,arm,t,coord,center,lo,hi,covered\n")
        for row in marg_rows:
            fh.write(",".join(str(row[c]) for c in
                              ("rep", "arm", "t", "coord", "center", "lo",
                               "hi", "covered")) + "\n")
    mean_acc = float(np.mean([r["accuracy"] for r in summary_rows]))
    print(f"realdata: {args.perms} permutations, mean accuracy {mean_acc:.3f}",
          file=sys.stderr)
    return 0


def cmd_infer(args) -> int:
    log = read_audit(args.log)
    overrides = {}
    if args.score:
        overrides["score"] = args.score
    scenario = Scenario(d=log.dim, T=max(log.rounds, args.t + 1),
                        T0=args.T0, inference_times=(args.t,), **overrides)
    snap = inference_snapshot(log, args.t, args.arm, scenario)
    report = snap.report
    out = {
        "arm": args.arm,
        "t": args.t,
        "beta_hat": [float(v) for v in snap.estimate.beta_hat],
        "direction": [float(v) for v in report.direction],
        "canonical_direction": [float(v) for v in snap.direction],
        "ellipsoid_radius2": report.ellipsoid_radius2,
        "marginal_half_widths": [float(v) for v in report.marginal_half_widths],
        "level": report.level,
        "r_tilde": snap.r_tilde,
        "gram_lambda_min": float(np.linalg.eigvalsh(
            snap.estimate.gram)[0]),
    }
    if args.context:
        x = np.array([float(v) for v in args.context.split(",")])
    elif args.t < log.rounds:
        x = log.contexts[args.t]
    else:
        x = None
    if x is not None:
        if x.size != log.dim:
            raise ConfigError(f"context needs {log.dim} coordinates")
        clt, band = np_cis_at(snap, x, scenario)
        out["pointwise"] = {
            ci.method: {"u": ci.u, "center": ci.center, "lo": ci.lo,
                        "hi": ci.hi, "half_width": ci.half_width}
            for ci in (clt, band)}
    json.dump(out, sys.stdout, sort_keys=True, indent=2)
    sys.stdout.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ksib",
        description="Kernel single-index bandit simulations and inference")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the synthetic replication grid")
    sim.add_argument("--config", help="JSON config file (strict keys)")
    sim.add_argument("--d", type=int)
    sim.add_argument("--sigma", type=float)
    sim.add_argument("--reps", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--T", type=int)
    sim.add_argument("--T0", type=int)
    sim.add_argument("--zeta", type=float)
    sim.add_argument("--gamma", type=float)
    sim.add_argument("--alpha", type=float)
    sim.add_argument("--lambda-beta", dest="lambda_beta", type=float)
    sim.add_argument("--level", type=float)
    sim.add_argument("--out", required=True)
    sim.add_argument("--threads", type=int, default=None)
    sim.add_argument("--audit-reps", type=int, default=0,
                     help="also write per-round audit CSVs for this many reps")
    sim.set_defaults(func=cmd_simulate)

    real = sub.add_parser("realdata", help="replay a binary-label CSV")
    real.add_argument("--csv", required=True)
    real.add_argument("--label-col", required=True)
    real.add_argument("--feature-cols", default=None,
                      help="comma-separated column names (default: all others)")
    real.add_argument("--perms", type=int, default=40)
    real.add_argument("--seed", type=int, default=0)
    real.add_argument("--T", type=int, default=1000)
    real.add_argument("--T0", type=int, default=20)
    real.add_argument("--out", required=True)
    real.add_argument("--audit", action="store_true")
    real.set_defaults(func=cmd_realdata)

    inf = sub.add_parser("infer", help="recompute inference from an audit log")
    inf.add_argument("--log", required=True)
    inf.add_argument("--arm", type=int, required=True)
    inf.add_argument("--t", type=int, required=True)
    inf.add_argument("--T0", type=int, default=50)
    inf.add_argument("--context", default=None,
                     help="comma-separated evaluation context")
    inf.add_argument("--score", choices=("known", "empirical"), default=None)
    inf.set_defaults(func=cmd_infer)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (KsibError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
