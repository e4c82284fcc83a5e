"""``viewsim`` command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

from . import experiments
from .agents import TrainStats, train_agent
from .config import ConfigError, RunConfig, load_config
from .dataset import generate_lld, read_lld, split_train_eval, write_lld
from .predictors import load_model, save_model, train_bid_model, train_logistic
from .sim import collect_random_rollouts, read_transitions, write_transitions

VIEW_MODEL_FILE = "view_model.csv"
BID_MODEL_FILE = "bid_model.csv"
METRICS_FILE = "metrics.csv"
FAILED_MARKER = "FAILED"


class UsageError(Exception):
    pass


def _config(path) -> RunConfig:
    return RunConfig() if path is None else load_config(path)


def _parent(path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)


def cmd_gen_data(args) -> None:
    if args.config is None:
        raise UsageError("gen-data needs --config")
    cfg = load_config(args.config)
    table = generate_lld(cfg.generator)
    _parent(args.out)
    write_lld(table, args.out)
    print(f"records={len(table)} view_rate={table.view_rate():.6f}")


def cmd_train_predictors(args) -> None:
    cfg = _config(args.config)
    table = read_lld(args.data)
    train, held_out = split_train_eval(table, cfg.experiment.split_fraction)
    view_model = train_logistic(train, cfg.predictors)
    bid_model = train_bid_model(train, cfg.predictors)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_model(view_model, out / VIEW_MODEL_FILE)
    save_model(bid_model, out / BID_MODEL_FILE)
    m = experiments.predictor_metrics(view_model, bid_model, held_out)
    (out / METRICS_FILE).write_text(f"auc,bid_rmse\n{m['auc']:.6f},{m['bid_rmse']:.3f}\n", encoding="utf-8")
    print(f"auc={m['auc']:.6f} bid_rmse={m['bid_rmse']:.3f}")


def cmd_rollouts(args) -> None:
    cfg = _config(args.config)
    table = read_lld(args.data)
    train, held_out = split_train_eval(table, cfg.experiment.split_fraction)
    models = Path(args.models)
    view_model = load_model(models / VIEW_MODEL_FILE)
    bid_model = load_model(models / BID_MODEL_FILE)
    market, _ = experiments.build_markets(train, held_out, view_model, bid_model, cfg.sim, cfg.generator.seed)
    seed = cfg.seeds[0] if args.seed is None else args.seed
    samples = collect_random_rollouts(market, cfg.sim, args.episodes, seed=seed)
    _parent(args.out)
    write_transitions(samples, args.out)
    print(f"transitions={len(samples)} episodes={args.episodes}")


def cmd_train_agent(args) -> None:
    cfg = _config(args.config)
    spec = cfg.agent(args.algo)
    seed = cfg.seeds[0] if args.seed is None else args.seed
    transitions = read_transitions(args.transitions)
    stats = TrainStats()
    policy = train_agent(transitions, replace(spec.config, seed=seed), stats)
    _parent(args.out)
    policy.save(args.out)
    print(f"algo={args.algo} final_loss={stats.final_loss:.6g}")


def cmd_run_experiment(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / FAILED_MARKER
    if marker.exists():
        marker.unlink()
    try:
        summary = experiments.run_experiment(args.name, cfg, out)
    except Exception as exc:
        marker.write_text(f"{type(exc).__name__}: {exc}\n", encoding="utf-8")
        raise
    print(f"{args.name}: wrote {out}")
    for key, value in summary.items():
        if isinstance(value, (bool, int, float, str)):
            print(f"  {key}={value}")
    return 0


def _series(path: Path, key_cols, x_col, y_col, out: Path, prefix: str) -> int:
    curves = {}
    with path.open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = "_".join(row[c] for c in key_cols)
            curves.setdefault(key, []).append((row[x_col], row[y_col]))
    for key, points in sorted(curves.items()):
        lines = [f"# {x_col} {y_col}"] + [f"{x} {y}" for x, y in points]
        (out / f"{prefix}_{key}.dat").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return len(curves)


def cmd_plot_data(args) -> None:
    src = Path(args.input)
    if not src.is_dir():
        raise UsageError(f"input directory not found: {src}")
    out = Path(args.out) if args.out else src / "plot"
    out.mkdir(parents=True, exist_ok=True)
    n = 0
    if (src / "rewards.csv").exists():
        with (src / "rewards.csv").open(encoding="utf-8") as fh:
            first = fh.readline().strip().split(",")[0]
        n += _series(src / "rewards.csv", [first, "seed"], "interval", "reward", out, "reward")
    if (src / "viewability_timeline.csv").exists():
        n += _series(src / "viewability_timeline.csv", ["arm", "seed"], "interval", "viewability", out, "viewability")
        n += _series(src / "viewability_timeline.csv", ["arm", "seed"], "interval", "goal", out, "goal")
    for name in ("tune_trace.csv", "random_trace.csv"):
        if (src / name).exists():
            n += _series(src / name, [], "eval_index", "reward", out, name.split("_")[0])
    print(f"series={n} dir={out}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="viewsim", description="Offline viewability-control laboratory.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic impression log")
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train-predictors", help="fit the view and bid models on the training half")
    t.add_argument("--data", required=True)
    t.add_argument("--out-dir", required=True)
    t.add_argument("--config")
    t.set_defaults(func=cmd_train_predictors)

    r = sub.add_parser("rollouts", help="random-threshold episodes on the training half")
    r.add_argument("--data", required=True)
    r.add_argument("--models", required=True)
    r.add_argument("--episodes", type=int, required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--config")
    r.add_argument("--seed", type=int)
    r.set_defaults(func=cmd_rollouts)

    a = sub.add_parser("train-agent", help="train an offline RL agent on a transition log")
    a.add_argument("--algo", required=True, choices=["dqn10", "dqn20", "ddpg", "td3"])
    a.add_argument("--transitions", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--config")
    a.add_argument("--seed", type=int)
    a.set_defaults(func=cmd_train_agent)

    e = sub.add_parser("run-experiment", help="run one of the experiment drivers")
    e.add_argument("name", choices=experiments.EXPERIMENTS)
    e.add_argument("--config", required=True)
    e.add_argument("--out-dir", required=True)
    e.set_defaults(func=cmd_run_experiment)

    d = sub.add_parser("plot-data", help="write gnuplot-ready series files")
    d.add_argument("--in", dest="input", required=True)
    d.add_argument("--out")
    d.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        rc = args.func(args)
    except (UsageError, ConfigError) as exc:
        parser.print_usage(sys.stderr)
        print(f"viewsim {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"viewsim {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
