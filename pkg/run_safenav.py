"""
Command-line entry point.

    python run_safenav.py gen --suite traps --count 200 --seed 7 --out scenes/traps
    python run_safenav.py run --scenes scenes/traps --mask on --reselect on --seed 7 --report out.json
    python run_safenav.py compare --scenes scenes/traps --seed 7
    python run_safenav.py sweep | lidar | train | replay ...

Exit codes: 0 success, 2 configuration or usage error, 3 file IO error.
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from episode_runner import AgentConfig, replay_trace
from metrics import format_table, write_combined, write_report
from nav_config import CONFIG_FILE, ConfigError, GenerationError, ScenarioIOError, load_config
from scenarios import SUITES, generate_scenes, load_scene, load_scenes, save_scenes
from scorer_training import collect_samples, load_weights, save_weights, top1_agreement, train_scorer
from unified_runner import DEFAULT_DELTAS, unified_run

logger = logging.getLogger("safenav")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3


def on_off(value):
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def _common(parser):
    parser.add_argument("--config", default=CONFIG_FILE, help="configuration file (default: %(default)s)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    parser.add_argument("--quiet", action="store_true", help="no progress bars")


def _evaluation(parser, agent_flags=True):
    parser.add_argument("--scenes", required=True, help="scene file or directory")
    parser.add_argument("--delta", type=float)
    parser.add_argument("--k", type=int)
    parser.add_argument("--lidar", choices=("2d", "3d", "fused"))
    parser.add_argument("--sensor-height", type=float)
    parser.add_argument("--fused-height", type=float)
    parser.add_argument("--range-noise", type=float)
    parser.add_argument("--noise-spill", type=float)
    parser.add_argument("--heatmap-dir", help="recorded heatmaps, <scene id>-<decision>.txt; missing ones fall back to the oracle")
    parser.add_argument("--dynamic-p", type=float)
    parser.add_argument("--tryout", type=on_off)
    parser.add_argument("--report")
    parser.add_argument("--format", choices=("json", "csv"), default="json")
    parser.add_argument("--timing", action="store_true", help="add planner wall time columns")
    if agent_flags:
        parser.add_argument("--agent", choices=("safe", "baseline", "jps"), default="safe")
        parser.add_argument("--mask", type=on_off)
        parser.add_argument("--reselect", type=on_off)
        parser.add_argument("--scorer", choices=("oracle", "linear"))
        parser.add_argument("--weights")
        parser.add_argument("--traces", help="write one action trace per episode to this directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="run_safenav", description="Collision-aware waypoint navigation simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a scene suite")
    _common(gen)
    gen.add_argument("--suite", choices=sorted(SUITES), default="open")
    gen.add_argument("--count", type=int)
    gen.add_argument("--density", type=float)
    gen.add_argument("--out", required=True, help="output directory")

    run = sub.add_parser("run", help="evaluate one agent configuration")
    _common(run)
    _evaluation(run)

    compare = sub.add_parser("compare", help="mask x reselect matrix plus the JPS baseline")
    _common(compare)
    _evaluation(compare, agent_flags=False)

    sweep = sub.add_parser("sweep", help="evaluate a list of mask weights")
    _common(sweep)
    _evaluation(sweep, agent_flags=False)
    sweep.add_argument("--deltas", type=float, nargs="+", default=list(DEFAULT_DELTAS))

    lidar = sub.add_parser("lidar", help="2D / 3D / fused LiDAR ablation")
    _common(lidar)
    _evaluation(lidar, agent_flags=False)

    train = sub.add_parser("train", help="train the linear node scorer from oracle rollouts")
    _common(train)
    train.add_argument("--scenes", required=True)
    train.add_argument("--out", required=True, help="weights file")
    train.add_argument("--iterations", type=int)
    train.add_argument("--lambda1", type=float)
    train.add_argument("--lambda2", type=float)
    train.add_argument("--noise-spill", type=float)

    replay = sub.add_parser("replay", help="re-execute a saved action trace")
    _common(replay)
    replay.add_argument("--scene", required=True, help="scene file")
    replay.add_argument("--trace", required=True, help="trace file")
    return parser


def _overrides(args, command):
    """Agent keyword overrides from the evaluation flags"""
    values = {
        "delta": args.delta,
        "k": args.k,
        "sensor_height": args.sensor_height,
        "fused_height": args.fused_height,
        "range_noise": args.range_noise,
        "noise_spill": args.noise_spill,
        "tryout": args.tryout,
        "heatmap_dir": args.heatmap_dir,
    }
    if command != "lidar":
        values["lidar_mode"] = args.lidar
    if command == "run":
        values.update(mode=args.agent, mask=args.mask, reselect=args.reselect)
        if args.scorer == "linear" or args.weights:
            values["scorer"] = "linear"
            values["weights"] = tuple(load_weights(args.weights).weights) if args.weights else None
    return {k: v for k, v in values.items() if v is not None}


def cmd_gen(args, config):
    recipe = SUITES[args.suite]
    changes = {k: v for k, v in (("count", args.count), ("density", args.density)) if v is not None}
    if changes:
        recipe = replace(recipe, **changes)
    scenes = generate_scenes(recipe, args.seed, progress=not args.quiet)
    save_scenes(scenes, args.out)
    print(f"Wrote {len(scenes)} {recipe.name} scenes to {args.out}")
    return EXIT_OK


def cmd_evaluate(args, config):
    scenes = load_scenes(args.scenes)
    if args.heatmap_dir is not None and not Path(args.heatmap_dir).is_dir():
        raise ScenarioIOError(f"heatmap directory {args.heatmap_dir} does not exist")
    dynamic_p = config["harness"]["dynamic_p"] if args.dynamic_p is None else args.dynamic_p
    kwargs = dict(progress=not args.quiet, timing=args.timing, **_overrides(args, args.command))
    if args.command in ("run", "compare"):
        kwargs["dynamic_p"] = dynamic_p
    if args.command == "run" and args.traces:
        kwargs["traces_dir"] = args.traces
    if args.command == "sweep":
        kwargs["deltas"] = args.deltas
    reports = unified_run(scenes, config, args.seed, eval_mode=args.command, **kwargs)

    print(format_table(reports))
    if args.report:
        if args.command == "run":
            write_report(next(iter(reports.values())), args.report, args.format)
        else:
            write_combined(reports, args.report, args.format, {"command": args.command, "seed": args.seed})
        print(f"Report written to {args.report}")
    return EXIT_OK


def cmd_train(args, config):
    scenes = load_scenes(args.scenes)
    training = config["training"]
    planner = config["planner"]
    agent = AgentConfig.from_config(config, **({"noise_spill": args.noise_spill} if args.noise_spill is not None else {}))
    samples = collect_samples(scenes, agent, args.seed, training["samples_per_scene"], progress=not args.quiet)
    if not samples:
        raise ConfigError("no training samples could be collected from these scenes")
    scorer = train_scorer(
        samples,
        training["iterations"] if args.iterations is None else args.iterations,
        planner["lambda1"] if args.lambda1 is None else args.lambda1,
        planner["lambda2"] if args.lambda2 is None else args.lambda2,
    )
    save_weights(scorer, args.out)
    print(f"Trained on {len(samples)} samples, top-1 agreement {100 * top1_agreement(scorer, samples):.1f}%")
    print(f"Weights written to {args.out}")
    return EXIT_OK


def cmd_replay(args, config):
    scene = load_scene(args.scene)
    pose, actions = replay_trace(scene, args.trace)
    print(f"{len(actions)} actions replayed; final pose x={pose.x:.3f} y={pose.y:.3f} heading={pose.heading:.1f}")
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "run": cmd_evaluate,
    "compare": cmd_evaluate,
    "sweep": cmd_evaluate,
    "lidar": cmd_evaluate,
    "train": cmd_train,
    "replay": cmd_replay,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config)
        return COMMANDS[args.command](args, config)
    except (ConfigError, GenerationError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ScenarioIOError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
