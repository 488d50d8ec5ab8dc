"""Command-line entry point: ``guidedpolicy <subcommand> [options]``.

Exit codes: 0 success, 2 usage error or unknown subcommand, 3 configuration
error (bad or missing config, missing upstream artifact), 4 stale checkpoint
(built under a different configuration or format version), 5 training
divergence, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from ..diffcore import RejectedInput, TrainingDivergence
from ..errors import ConfigurationError
from . import pipeline as pl
from .batch import batch_runs, read_curve
from .config import _parse, load_config
from .manifest import StaleArtifact
from .report import report

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_CONFIG, EXIT_STALE, EXIT_DIVERGED = 0, 1, 2, 3, 4, 5

log = logging.getLogger("guidedpolicy")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="guidedpolicy", description="Offline reward learning and dialogue policy training.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def stage(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("-c", "--config", help="INI config file (profile defaults otherwise)")
        sp.add_argument("--profile", choices=("desk", "paper-shape"))
        sp.add_argument("--seed", type=int, help="root seed (overrides [experiment] seed)")
        sp.add_argument("-o", "--output", help=f"output root (else ${pl.OUTPUT_ENV}, else config)")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value")
        return sp

    stage("gen-corpus", "generate the expert corpus and action catalog").add_argument(
        "--force", action="store_true")
    sp = stage("train-vae", "train the state VAE (or the plain autoencoder)")
    sp.add_argument("--kind", choices=("vae", "ae"), default="vae")
    sp.add_argument("--force", action="store_true")
    sp = stage("train-reward", "train the discriminator reward model")
    sp.add_argument("--kind", choices=("vae", "ae"), default="vae")
    sp.add_argument("--force", action="store_true")
    sp = stage("train-agent", "train a dialogue agent")
    sp.add_argument("--algo", choices=("dqn", "wdqn", "wdqn_keep", "ppo"))
    sp.add_argument("--reward", choices=("human", "gan_vae", "gan_ae"))
    sp.add_argument("--agent-seed", type=int, help="agent seed (default: root seed)")
    sp.add_argument("--seeds", help="comma-separated agent seeds for a batch run (or 'config')")
    sp.add_argument("--force", action="store_true")
    sp = stage("evaluate", "evaluate expert, random or a trained agent directory")
    sp.add_argument("policy", help="'expert', 'random' or an agent run directory")
    sp.add_argument("-n", "--episodes", type=int, default=500)
    sp = stage("transfer", "domain-holdout transfer experiment")
    sp.add_argument("--force", action="store_true")
    sp = sub.add_parser("report", help="results table and figure CSVs from run directories")
    sp.add_argument("runs", nargs="*", help="run directories (searched recursively)")
    sp.add_argument("-o", "--output", required=True, help="report directory")
    return p


def _overrides(args) -> dict:
    values: dict[str, dict] = {}
    for item in args.set:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigurationError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        section, name = key.split(".", 1)
        values.setdefault(section, {})[name] = _parse(raw)
    if args.profile:
        values.setdefault("experiment", {})["profile"] = args.profile
    if args.seed is not None:
        values.setdefault("experiment", {})["seed"] = args.seed
    return values


def _run(args) -> int:
    if args.command == "report":
        table = report(args.runs, args.output)
        print(json.dumps(table, indent=2))
        return EXIT_OK
    config = load_config(args.config, overrides=_overrides(args))
    root = pl.output_root(config, args.output)
    cmd = args.command
    if cmd == "gen-corpus":
        print(pl.gen_corpus(config, root, args.force))
    elif cmd == "train-vae":
        print(pl.train_vae_stage(config, root, args.kind, args.force))
    elif cmd == "train-reward":
        print(pl.train_reward_stage(config, root, args.kind, args.force))
    elif cmd == "train-agent":
        algo = args.algo or config.experiment.algo
        source = args.reward or config.experiment.reward_source
        if args.seeds:
            seeds = config.experiment.seeds if args.seeds == "config" else \
                [int(s) for s in args.seeds.split(",")]

            def runner(seed):
                pl.run_agent(config, root, algo, source, seed, args.force)
                return read_curve(os.path.join(pl.agent_dir(root, algo, source, seed), "curve.csv"))

            out = os.path.join(root, "batch", f"{algo}_{source}")
            res = batch_runs(config, seeds, out, runner, pl._hash(config, "agent", f"{algo}|{source}"))
            if not res["curves"]:
                raise ConfigurationError("every seed failed: " + "; ".join(res["failed"].values()))
            print(out)
        else:
            seed = config.experiment.seed if args.agent_seed is None else args.agent_seed
            pl.run_agent(config, root, algo, source, seed, args.force)
            print(pl.agent_dir(root, algo, source, seed))
    elif cmd == "evaluate":
        print(json.dumps(pl.evaluate_stage(config, root, args.policy, args.episodes), indent=2))
    elif cmd == "transfer":
        pl.transfer_stage(config, root, force=args.force)
        print(os.path.join(root, "transfer", f"s{config.experiment.seed}"))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except StaleArtifact as exc:
        log.error("stale checkpoint: %s", exc)
        return EXIT_STALE
    except (ConfigurationError, RejectedInput) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except TrainingDivergence as exc:
        log.error("training diverged: %s", exc)
        return EXIT_DIVERGED
    except Exception as exc:
        log.exception("unexpected error: %s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
