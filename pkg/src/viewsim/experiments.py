"""Experiment drivers behind ``viewsim run-experiment``.

Each driver takes a :class:`RunConfig` and an output directory, writes its
CSV reports there and returns a JSON-ready summary of headline numbers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .agents import AgentConfig, TrainedPolicy, compare_algorithms, train_agent
from .bayesopt import ParamSpace, tune
from .config import RunConfig
from .controllers import (PidPolicy, check_goal_reaching, check_stability_at_goal, rationality_sweep)
from .csvio import fmt_float, write_rows
from .dataset import LldTable, generate_lld, split_train_eval
from .envmodel import GreedyPolicy, alpha_mean_positive, alpha_median, alpha_samples
from .predictors import LinearModel, auc, bid_prices, predict_proba, train_bid_model, train_logistic
from .sim import Market, SimConfig, collect_random_rollouts, control_observations, episode_seed, run_episode

REWARDS_HEADER = ("policy", "seed", "interval", "reward")
TIMELINE_HEADER = ("seed", "interval", "arm", "goal", "threshold", "viewability", "reward")
EXPERIMENTS = ("compare-algos", "baselines", "rl-vs-pid", "sanity", "tune")


@dataclass
class Setup:
    train: LldTable
    eval: LldTable
    view_model: LinearModel
    bid_model: LinearModel
    train_market: Market
    eval_market: Market


def predictor_metrics(view_model: LinearModel, bid_model: LinearModel, held_out: LldTable) -> dict:
    rmse = float(np.sqrt(np.mean((bid_prices(bid_model, held_out) - held_out.cost_micros) ** 2)))
    return {"auc": auc(predict_proba(view_model, held_out), held_out.viewed), "bid_rmse": rmse}


def build_markets(train: LldTable, eval_: LldTable, view_model, bid_model, sim: SimConfig, seed: int):
    noise = sim.bid_time_noise
    return (Market(train, view_model, bid_model, noise, [seed, 1]),
            Market(eval_, view_model, bid_model, noise, [seed, 2]))


def prepare(cfg: RunConfig) -> Setup:
    table = generate_lld(cfg.generator)
    train, eval_ = split_train_eval(table, cfg.experiment.split_fraction)
    view_model = train_logistic(train, cfg.predictors)
    bid_model = train_bid_model(train, cfg.predictors)
    tm, em = build_markets(train, eval_, view_model, bid_model, cfg.sim, cfg.generator.seed)
    return Setup(train, eval_, view_model, bid_model, tm, em)


def _eval_config(sim: SimConfig) -> SimConfig:
    return replace(sim, rollout_goal_range=None)


def _agent(cfg: RunConfig, name: str, seed: int) -> AgentConfig:
    return replace(cfg.agent(name).config, seed=seed)


def write_summary(out_dir, summary: dict) -> None:
    text = json.dumps(summary, indent=2, sort_keys=True)
    Path(out_dir, "summary.json").write_text(text + "\n", encoding="utf-8")


def compare_algos(cfg: RunConfig, out_dir: Path) -> dict:
    setup = prepare(cfg)
    exp = cfg.experiment
    comp = compare_algorithms(setup.train_market, setup.eval_market, cfg.sim,
                              [(s.name, s.config) for s in cfg.agents], list(cfg.seeds),
                              exp.rollout_episodes, exp.eval_episodes)
    comp.write_csv(out_dir / "rewards.csv")
    finals = comp.mean_finals()
    random_final = finals.pop("random")
    summary = {"mean_final_reward": finals, "random_mean_final_reward": random_final,
               "all_beat_random_by_0.1": all(v >= random_final + 0.1 for v in finals.values())}
    if "td3" in finals:
        summary["td3_within_0.02_of_best"] = all(finals["td3"] >= v - 0.02 for v in finals.values())
    return summary


def baselines(cfg: RunConfig, out_dir: Path) -> dict:
    """Greedy model-based baselines at several alphas against a TD3 policy."""
    setup = prepare(cfg)
    exp = cfg.experiment
    eval_cfg = _eval_config(cfg.sim)
    rows, per_seed, samples = [], {}, []
    for seed in cfg.seeds:
        reports = []
        transitions = collect_random_rollouts(setup.train_market, cfg.sim, exp.rollout_episodes, seed=seed,
                                              reports=reports)
        samples.extend(alpha_samples(o for r in reports for o in control_observations(r)))
        policies = {f"greedy_{a:g}": GreedyPolicy(a) for a in exp.baseline_alphas}
        policies["td3"] = train_agent(transitions, _agent(cfg, "td3", seed))
        rewards = {}
        for name, policy in policies.items():
            rewards[name] = run_episode(policy, setup.eval_market, eval_cfg, seed=seed).rewards
            rows.extend((name, seed, i, fmt_float(r)) for i, r in enumerate(rewards[name]))
        quarter = max(1, len(rewards["td3"]) // 4)
        greedy = [f"greedy_{a:g}" for a in exp.baseline_alphas]
        cum = {k: np.cumsum(v) for k, v in rewards.items()}
        entry = {
            "first_quarter_reward": {k: float(v[:quarter].sum()) for k, v in rewards.items()},
            "total_reward": {k: float(v.sum()) for k, v in rewards.items()},
            "final_reward": {k: float(v[-1]) for k, v in rewards.items()},
        }
        if len(greedy) >= 2:
            gap = cum[greedy[0]] - cum[greedy[1]]
            entry["cumulative_gap_min_after_first"] = float(gap[1:].min()) if gap.size > 1 else None
            entry["cumulative_gap_final"] = float(gap[-1])
        per_seed[str(seed)] = entry
    write_rows(out_dir / "rewards.csv", REWARDS_HEADER, rows)
    summary = {"realized_alpha_median": alpha_median(samples),
               "realized_alpha_mean_positive": alpha_mean_positive(samples),
               "per_seed": per_seed}
    if len(exp.baseline_alphas) >= 2:
        summary["first_alpha_leads_every_interval_after_first"] = all(
            e["cumulative_gap_min_after_first"] is not None and e["cumulative_gap_min_after_first"] > 0
            for e in per_seed.values())
    summary["td3_leads_first_quarter"] = all(
        all(e["first_quarter_reward"]["td3"] > v for k, v in e["first_quarter_reward"].items() if k != "td3")
        for e in per_seed.values())
    return summary


def goal_schedule(cfg: RunConfig):
    changes = sorted(cfg.experiment.goal_changes)

    def goal_at(i: int) -> float:
        goal = cfg.sim.goal
        for start, g in changes:
            if i >= start:
                goal = g
        return goal

    return goal_at


def first_entry(viewabilities, goals, start: int, band: float):
    """Intervals needed, counting from ``start``, until viewability is within ``band`` of the goal."""
    for i in range(start, len(viewabilities)):
        if abs(viewabilities[i] - goals[i]) <= band:
            return i - start + 1
    return None


def rl_vs_pid(cfg: RunConfig, out_dir: Path) -> dict:
    setup = prepare(cfg)
    exp = cfg.experiment
    per_interval = cfg.sim.n_per_day / cfg.sim.intervals_per_day
    long_cfg = replace(_eval_config(cfg.sim), intervals_per_day=exp.schedule_intervals,
                       n_per_day=int(round(per_interval * exp.schedule_intervals)))
    schedule = goal_schedule(cfg)
    goals = [schedule(i) for i in range(exp.schedule_intervals)]
    starts = [0] + [s for s, _ in sorted(exp.goal_changes) if s < exp.schedule_intervals]
    rows, per_seed = [], {}
    for seed in cfg.seeds:
        transitions = collect_random_rollouts(setup.train_market, cfg.sim, exp.rollout_episodes, seed=seed)
        arms = {"td3": train_agent(transitions, _agent(cfg, "td3", seed)), "pid": PidPolicy(cfg.pid)}
        entry = {}
        for arm, policy in arms.items():
            rep = run_episode(policy, setup.eval_market, long_cfg, seed=seed, goal_schedule=schedule)
            v = rep.viewabilities
            for r in rep.intervals:
                rows.append((seed, r.index, arm, fmt_float(r.goal), fmt_float(r.threshold),
                             fmt_float(r.measured_viewability), fmt_float(r.reward)))
            entry[arm] = {
                "intervals_to_band": [first_entry(v, goals, s, exp.goal_band) for s in starts],
                "mean_reward": float(rep.rewards.mean()),
                "last_quarter_mean_abs_error": float(np.mean(np.abs(v - goals)[-len(v) // 4:])),
            }
        per_seed[str(seed)] = entry
    write_rows(out_dir / "viewability_timeline.csv", TIMELINE_HEADER, rows)

    def fast(e):
        td3, pid = e["td3"]["intervals_to_band"][0], e["pid"]["intervals_to_band"][0]
        return td3 is not None and (pid is None or 3 * td3 <= pid)

    return {"segment_starts": starts, "per_seed": per_seed,
            "td3_reaches_band_in_third_of_pid_time": all(fast(e) for e in per_seed.values())}


def sanity(cfg: RunConfig, out_dir: Path) -> dict:
    if cfg.experiment.policy:
        policy = TrainedPolicy.load(cfg.experiment.policy)
        source = str(cfg.experiment.policy)
    else:
        setup = prepare(cfg)
        seed = cfg.seeds[0]
        transitions = collect_random_rollouts(setup.train_market, cfg.sim, cfg.experiment.rollout_episodes, seed=seed)
        policy = train_agent(transitions, _agent(cfg, "td3", seed))
        source = "td3 trained from config"
    report = rationality_sweep(policy)
    report.write_csv(out_dir / "sanity_report.csv")
    goals = (0.6, 0.7, 0.8)
    reaching = {f"{g:g}": check_goal_reaching(policy, g) for g in goals}
    return {
        "policy": source,
        "goal_reaching": {k: {"reached": r, "steps": s} for k, (r, s) in reaching.items()},
        "stable_at_goal": {f"{g:g}": check_stability_at_goal(policy, g) for g in goals},
        "sweep_pass_fraction": report.pass_fraction,
    }


def tuning_space(cfg: RunConfig) -> ParamSpace:
    base = ParamSpace.default()
    overrides = cfg.bayesopt.space
    unknown = set(overrides) - set(base.names)
    if unknown:
        raise ValueError(f"unknown tuning dimensions {sorted(unknown)}")
    dims = [replace(d, lo=overrides[d.name][0], hi=overrides[d.name][1]) if d.name in overrides else d
            for d in base.dims]
    return ParamSpace(dims)


def tuning_objective(cfg: RunConfig, setup: Setup, seed: int):
    """Day-level reward of an agent trained with the candidate hyperparameters."""
    transitions = collect_random_rollouts(setup.train_market, cfg.sim, cfg.experiment.rollout_episodes, seed=seed)
    base = _agent(cfg, cfg.bayesopt.algo, seed)
    eval_cfg = _eval_config(cfg.sim)
    day = episode_seed(seed, 20_000)

    def objective(point: dict) -> float:
        agent_cfg = replace(base, **point)
        policy = train_agent(transitions, agent_cfg)
        return run_episode(policy, setup.eval_market, eval_cfg, seed=day).day_reward

    return objective


def tune_experiment(cfg: RunConfig, out_dir: Path) -> dict:
    setup = prepare(cfg)
    bo = cfg.bayesopt
    seed = cfg.seeds[0]
    space = tuning_space(cfg)
    objective = tuning_objective(cfg, setup, seed)
    result = tune(objective, space, bo.budget, bo.init_points, seed, out_dir / "tune_trace.csv", bo.n_candidates)
    summary = {"best_point": result.best_point, "best_value": result.best_value,
               "evaluations": len(result.trace), "flagged": sum(e.flagged for e in result.trace)}
    if bo.random_search:
        rand = tune(objective, space, bo.budget, bo.budget, seed, out_dir / "random_trace.csv", bo.n_candidates)
        values = [e.value for e in rand.trace]
        summary["random_search_median"] = float(np.median(values))
        summary["random_search_best"] = float(np.max(values))
        summary["best_beats_random_median"] = result.best_value >= summary["random_search_median"]
    return summary


DRIVERS = {
    "compare-algos": compare_algos,
    "baselines": baselines,
    "rl-vs-pid": rl_vs_pid,
    "sanity": sanity,
    "tune": tune_experiment,
}


def run_experiment(name: str, cfg: RunConfig, out_dir) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {"experiment": name, **DRIVERS[name](cfg, out_dir)}
    write_summary(out_dir, summary)
    return summary
