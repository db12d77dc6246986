"""Command-line entry points: run / train / eval / attack-eval / bench / serve.

CSV schemas are part of the tool's contract and are asserted in tests:
  run, eval, attack-eval: episode,seed,return,length,termination,wall_clock_ms
  bench:                  n_hosts,episode,seed,steps,termination,wall_clock_ms
  train curve:            step,mean_eval_return,real_exfil_rate,fake_exfil_rate,concede_rate
Floats are written with repr() so identical runs produce identical bytes.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from typing import Callable, Optional

import numpy as np

from . import learn
from .config import ExperimentConfig, resolve_config
from .errors import DecoynetError
from .game import (
    EpisodeRecord,
    GameConfig,
    NoOp,
    ObservationMatrix,
    action_space_size,
    decode_action_index,
    episode_seed,
    play_episode,
)
from .netmodel import TopologySpec
from .wire import serve

EPISODE_CSV_HEADER = "episode,seed,return,length,termination,wall_clock_ms"
BENCH_CSV_HEADER = "n_hosts,episode,seed,steps,termination,wall_clock_ms"


def _episode_rows(records: list[EpisodeRecord]) -> list[str]:
    rows = [EPISODE_CSV_HEADER]
    for i, r in enumerate(records):
        rows.append(
            f"{i},{r.seed},{r.total_reward!r},{r.length},{r.termination},{r.wall_clock_ms!r}"
        )
    return rows


def _write(path: str, rows: list[str]) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")


def _policy_chooser(
    name: str, weights_path: Optional[str], config: GameConfig, seed: int
) -> tuple[Callable, Optional[Callable[[ObservationMatrix], np.ndarray]]]:
    """Returns (choose(obs, episode) -> BlueAction, optional deception probe)."""
    if name == "passive":
        return (lambda obs, ep: NoOp()), None
    if name == "random":
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0xAC7])))
        n = action_space_size(config.topology.n_hosts)

        def choose(obs, ep):
            return decode_action_index(int(rng.integers(n)), ep.base_host_ids)

        return choose, None
    if name == "trained":
        if not weights_path:
            raise DecoynetError("--policy trained needs --weights")
        policy = learn.Policy.load(weights_path)

        def choose(obs, ep):
            return decode_action_index(policy.greedy_index(obs), policy.host_ids)

        return choose, policy.action_distribution
    raise DecoynetError(f"unknown policy {name!r}; use passive, random, or trained")


def _cmd_run(args: argparse.Namespace) -> int:
    exp = resolve_config(args.config)
    config = exp.game if args.seed is None else replace(exp.game, seed=args.seed)
    records = []
    for i in range(args.episodes):
        cfg = replace(config, seed=episode_seed(config.seed, i))
        chooser, probe = _policy_chooser(args.policy, args.weights, cfg, cfg.seed)
        records.append(play_episode(cfg, chooser, policy_probe=probe))
    out = args.out or os.path.join(exp.out_dir, "run.csv")
    _write(out, _episode_rows(records))
    mean = sum(r.total_reward for r in records) / len(records)
    print(f"{args.episodes} episodes, mean return {mean:.4f}, wrote {out}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    exp = resolve_config(args.config)
    game = exp.game if args.seed is None else replace(exp.game, seed=args.seed)
    train_cfg = exp.train if args.seed is None else replace(exp.train, seed=args.seed)
    policy, curve = learn.train(game, train_cfg)
    curve_path = args.curve or os.path.join(exp.out_dir, "curve.csv")
    weights_path = args.weights or os.path.join(exp.out_dir, "weights.json")
    _write(curve_path, curve.csv_rows())
    os.makedirs(os.path.dirname(weights_path) or ".", exist_ok=True)
    policy.save(weights_path)
    last = curve.points[-1]
    print(
        f"trained {train_cfg.total_steps} steps; final eval mean return {last.mean_eval_return:.4f} "
        f"(real {last.real_exfil_rate:.3f}, fake {last.fake_exfil_rate:.3f}, "
        f"concede {last.concede_rate:.3f}); wrote {curve_path}, {weights_path}"
    )
    return 0


def _eval_common(args: argparse.Namespace, deceptive: bool) -> int:
    exp = resolve_config(args.config)
    config = exp.game if args.seed is None else replace(exp.game, seed=args.seed)
    if deceptive:
        config = replace(config, red_mode="deceptive")
    policy = learn.Policy.load(args.weights)
    summary = learn.evaluate(policy, config, args.episodes)
    out = args.out or os.path.join(exp.out_dir, "attack-eval.csv" if deceptive else "eval.csv")
    _write(out, _episode_rows(summary.records))
    rates = summary.termination_rates
    print(
        f"{summary.n_episodes} episodes vs {config.red_mode} red: mean return "
        f"{summary.mean_return:.4f}, mean length {summary.mean_length:.2f}, "
        f"real {rates['red_goal_achieved']:.3f}, fake {rates['red_believes_achieved']:.3f}, "
        f"conceded {rates['red_conceded']:.3f}, terminated {rates['blue_terminated']:.3f}, "
        f"timeout {rates['timeout']:.3f}; wrote {out}"
    )
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    return _eval_common(args, deceptive=False)


def _cmd_attack_eval(args: argparse.Namespace) -> int:
    return _eval_common(args, deceptive=True)


def _cmd_bench(args: argparse.Namespace) -> int:
    exp = resolve_config(args.config)
    sizes = args.sizes
    rows = [BENCH_CSV_HEADER]
    medians = {}
    for n_hosts in sizes:
        config = replace(
            exp.game,
            topology=replace(exp.game.topology, n_hosts=n_hosts),
            seed=exp.game.seed if args.seed is None else args.seed,
        )
        times = []
        for i in range(args.episodes):
            cfg = replace(config, seed=episode_seed(config.seed, i))
            rec = play_episode(cfg, lambda obs, ep: NoOp())
            times.append(rec.wall_clock_ms)
            rows.append(
                f"{n_hosts},{i},{rec.seed},{rec.length},{rec.termination},{rec.wall_clock_ms!r}"
            )
        medians[n_hosts] = float(np.median(times))
    out = args.out or os.path.join(exp.out_dir, "bench.csv")
    _write(out, rows)
    summary = ", ".join(f"{n}: {m:.2f}ms" for n, m in medians.items())
    print(f"median episode wall-clock by size -> {summary}; wrote {out}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    exp = resolve_config(args.config)
    config = exp.game if args.seed is None else replace(exp.game, seed=args.seed)
    return serve(config, transport=args.transport, host=args.host, port=args.port)


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _size_list(text: str) -> list[int]:
    try:
        sizes = [_positive_int(s) for s in text.split(",")]
    except argparse.ArgumentTypeError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated host counts, got {text!r}"
        ) from None
    return sizes


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="decoynet",
        description="Network-defense game simulator: honey-net defender vs scripted attackers.",
    )
    parser.add_argument("--config", help="YAML config path (default: $DECOYNET_CONFIG or built-ins)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="roll episodes under a fixed policy, write per-episode CSV")
    p_run.add_argument("--policy", default="passive", help="passive | random | trained")
    p_run.add_argument("--weights", help="weights file for --policy trained")
    p_run.add_argument("--episodes", type=_positive_int, default=100)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out", help="CSV path (default <out_dir>/run.csv)")
    p_run.set_defaults(fn=_cmd_run)

    p_train = sub.add_parser("train", help="train the linear Q defender, write curve + weights")
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--curve", help="curve CSV path (default <out_dir>/curve.csv)")
    p_train.add_argument("--weights", help="weights path (default <out_dir>/weights.json)")
    p_train.set_defaults(fn=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a weights file against the configured red")
    p_eval.add_argument("--weights", required=True)
    p_eval.add_argument("--episodes", type=_positive_int, default=200)
    p_eval.add_argument("--seed", type=int)
    p_eval.add_argument("--out", help="CSV path (default <out_dir>/eval.csv)")
    p_eval.set_defaults(fn=_cmd_eval)

    p_attack = sub.add_parser("attack-eval", help="evaluate a weights file against deceptive red")
    p_attack.add_argument("--weights", required=True)
    p_attack.add_argument("--episodes", type=_positive_int, default=200)
    p_attack.add_argument("--seed", type=int)
    p_attack.add_argument("--out", help="CSV path (default <out_dir>/attack-eval.csv)")
    p_attack.set_defaults(fn=_cmd_attack_eval)

    p_bench = sub.add_parser("bench", help="passive-blue wall-clock benchmark across network sizes")
    p_bench.add_argument("--sizes", type=_size_list, default="25,50,100,200")
    p_bench.add_argument("--episodes", type=_positive_int, default=100)
    p_bench.add_argument("--seed", type=int)
    p_bench.add_argument("--out", help="CSV path (default <out_dir>/bench.csv)")
    p_bench.set_defaults(fn=_cmd_bench)

    p_serve = sub.add_parser("serve", help="serve the wire protocol (stdio or tcp)")
    p_serve.add_argument("--transport", default="stdio", choices=("stdio", "tcp"))
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=0, help="0 picks a free port and announces it")
    p_serve.add_argument("--seed", type=int)
    p_serve.set_defaults(fn=_cmd_serve)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DecoynetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
