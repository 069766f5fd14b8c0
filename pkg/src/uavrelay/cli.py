"""Command-line entry point: ``uavrelay <subcommand> [flags]``.

Exit codes: 0 success, 1 runtime failure, 2 usage error (bad flags or config).
"""

import argparse
import json
import statistics
import sys
from pathlib import Path

from .config import PRESETS, ConfigError, load_config
from .coverage import compute_coverage_map, write_coverage_csv
from .harness import pca_fidelity_report, paired_ordering, run_campaign, write_campaign, write_fidelity_csv
from .rl.agent import CLI_NAMES
from .world import Position3D, save_heightmap

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _triple(text):
    parts = text.split(",")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y,z numbers, got {text!r}") from None
    if len(values) != 3:
        raise argparse.ArgumentTypeError(f"expected 3 comma-separated values, got {len(values)}")
    return values


def _targets(text):
    out = []
    for p in text.split(","):
        try:
            t = float(p)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {p!r}") from None
        if not 0.0 < t <= 1.0:
            raise argparse.ArgumentTypeError(f"variance target {t} outside (0, 1]")
        out.append(t)
    return out


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _add_config(p):
    p.add_argument(
        "--config", default="desk",
        help=f"preset name ({', '.join(PRESETS)}) or path to a JSON config (default: desk)",
    )


def _add_seed(p, help_text="scenario seed (default: the config's campaign.seed_base)"):
    p.add_argument("--seed", type=int, default=None, help=help_text)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="uavrelay",
        description="Terrain-aware relay-UAV coverage simulation, PCA state compression and TD3 training.",
    )
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", required=True)

    p = sub.add_parser("terrain", help="generate a seeded terrain grid file")
    _add_config(p)
    _add_seed(p)
    p.add_argument("--out", required=True, help="output heightmap path")

    p = sub.add_parser("coverage", help="compute the coverage map for one UAV pose")
    _add_config(p)
    _add_seed(p)
    p.add_argument("--uav", type=_triple, required=True, metavar="X,Y,Z", help="UAV pose in metres")
    p.add_argument("--out", default=None, help="output CSV path (default: stdout)")

    p = sub.add_parser("pca", help="PCA fidelity sweep over variance targets")
    _add_config(p)
    _add_seed(p)
    p.add_argument(
        "--targets", type=_targets, default=None, metavar="T1,T2,...",
        help="variance targets in (0, 1] (default: config pca.fidelity_targets, 0.96,0.98,0.995)",
    )
    p.add_argument("--maps", type=_positive_int, default=None, help="batch size (default: pca.fidelity_maps)")
    p.add_argument("--out", required=True, help="output directory for pca_fidelity.csv")

    for name, help_text in (
        ("train", "train one agent kind over several seeded runs"),
        ("compare", "train every configured agent kind and compare convergence"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_config(p)
        if name == "train":
            p.add_argument("--agent", required=True, choices=sorted(CLI_NAMES), help="agent kind")
        p.add_argument("--runs", type=_positive_int, default=None, help="number of seeded runs")
        p.add_argument("--episodes", type=_positive_int, default=None, help="episodes per run")
        _add_seed(p, "base seed; run r uses seed+r (default: config campaign.seed_base)")
        p.add_argument("--parallel", type=_positive_int, default=None, help="worker processes")
        p.add_argument("--out", required=True, help="output directory")
    return parser


def _config(args):
    try:
        return load_config(args.config)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    except ConfigError as exc:
        raise UsageError(f"invalid config: {exc}") from None


def _seed(args, config):
    return config.campaign.seed_base if args.seed is None else args.seed


def cmd_terrain(args):
    config = _config(args)
    scenario = config.scenario.build(_seed(args, config))
    save_heightmap(scenario.terrain, args.out)
    print(f"wrote {args.out}", file=sys.stderr)


def cmd_coverage(args):
    config = _config(args)
    scenario = config.scenario.build(_seed(args, config))
    cmap = compute_coverage_map(scenario, Position3D(*args.uav), config.channel)
    if args.out is None:
        write_coverage_csv(cmap, sys.stdout)
    else:
        with open(args.out, "w") as fh:
            write_coverage_csv(cmap, fh)
        print(f"wrote {args.out}", file=sys.stderr)


def cmd_pca(args):
    config = _config(args)
    seed = _seed(args, config)
    scenario = config.scenario.build(seed)
    targets = args.targets or list(config.pca.fidelity_targets)
    n_maps = args.maps or config.pca.fidelity_maps
    rows = pca_fidelity_report(scenario, targets, config.channel, n_maps=n_maps, seed=seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_fidelity_csv(rows, out / "pca_fidelity.csv", out / "pca_fidelity_per_map.csv")
    for r in rows:
        print(
            f"target {r.target:g}: {r.n_components}/{r.rank} components "
            f"({100 * r.fraction_components:.1f}%), mean MAE {r.mean_mae:.3f} dB"
        )


def _campaign(args, agents):
    config = _config(args)
    changes = {"agents": agents}
    for flag, key in (("runs", "runs"), ("episodes", "episodes"), ("seed", "seed_base"), ("parallel", "parallel")):
        if getattr(args, flag) is not None:
            changes[key] = getattr(args, flag)
    try:
        config = config.replace(**changes)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    report = run_campaign(config)
    write_campaign(report, args.out)
    for kind, a in report.agents.items():
        print(
            f"{kind}: episodes-to-threshold {a.convergence.episode} "
            f"(per-run median {statistics.median(a.per_run_episodes):g}), "
            f"final mean reward {a.final_mean(min(50, a.curves.shape[1])):.4f}"
        )
    return report


def cmd_train(args):
    _campaign(args, (CLI_NAMES[args.agent],))


def cmd_compare(args):
    config = _config(args)
    report = _campaign(args, config.campaign.agents)
    if "E_TD3" in report.agents and "TD3" in report.agents:
        print(json.dumps(paired_ordering(report)))


COMMANDS = {
    "terrain": cmd_terrain,
    "coverage": cmd_coverage,
    "pca": cmd_pca,
    "train": cmd_train,
    "compare": cmd_compare,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"uavrelay {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, RuntimeError, OSError, FloatingPointError) as exc:
        print(f"uavrelay {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
