"""Command-line runner: ``qosim --scenario N [--scheduler K | --all-schedulers] --out DIR``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from . import __version__
from .metrics import (delay_csv, delivered_csv, drops_csv, drops_over_time, received_per_class,
                      summarize, summary_csv, time_average_delay)
from .model import ConfigError, TrafficKind
from .scenarios import (SCENARIO_SCHEDULERS, SCHEDULERS, ScenarioConfig, build_scenario, run_scenario,
                        set_override)

log = logging.getLogger("qosim")

OUTPUT_FILES = ("drops.csv", "delivered.csv", "delay.csv", "summary.csv", "manifest")
CLASSES = [k.value for k in TrafficKind]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qosim", description="Run a bottleneck QoS scenario and write CSV metrics.")
    p.add_argument("--scenario", type=int, choices=(1, 2, 3))
    which = p.add_mutually_exclusive_group()
    which.add_argument("--scheduler", choices=SCHEDULERS)
    which.add_argument("--all-schedulers", action="store_true",
                       help="one output subdirectory per scheduler of the scenario")
    p.add_argument("--rsvp", choices=("on", "off"), help="reservations (scenario 2)")
    p.add_argument("--seed", type=int)
    p.add_argument("--duration", type=float, help="simulated seconds")
    p.add_argument("--config", help="JSON scenario config; flags override its values")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--bucket", type=float, help="time-series bucket width in seconds")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"qosim {__version__}")
    return p


def load_config(args) -> ScenarioConfig:
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = ScenarioConfig.from_json(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        if args.scenario is not None and args.scenario != cfg.scenario:
            raise ConfigError(f"--scenario {args.scenario} contradicts config scenario {cfg.scenario}")
    elif args.scenario is None:
        raise UsageError("one of --scenario or --config is required")
    else:
        cfg = build_scenario(args.scenario)
    overrides = {}
    if args.scheduler:
        overrides["scheduler.kind"] = args.scheduler
    if args.rsvp:
        if cfg.scenario != 2:
            raise UsageError("--rsvp applies to scenario 2 only")
        overrides["rsvp.enabled"] = args.rsvp == "on"
    if args.seed is not None:
        overrides["run.seed"] = args.seed
    if args.duration is not None:
        overrides["run.duration_s"] = args.duration
    if args.bucket is not None:
        overrides["run.bucket_s"] = args.bucket
    for key, value in overrides.items():
        cfg = set_override(cfg, key, value)
    return cfg


def render(cfg: ScenarioConfig) -> dict:
    """Run one configuration and return ``{file name: text}``."""
    res = run_scenario(cfg)
    if res.in_flight + sum(1 for r in res.records if r.delivered or r.dropped) != res.emitted:
        raise RuntimeError("packet conservation violated")
    duration, bucket = cfg.run.duration_s, cfg.run.bucket_s
    records = res.records
    manifest = {
        "version": __version__,
        "scenario": cfg.scenario,
        "scheduler": cfg.scheduler.kind,
        "seed": cfg.run.seed,
        "emitted": res.emitted,
        "in_flight": res.in_flight,
        "events": res.events,
        "config": cfg.to_dict(),
    }
    return {
        "drops.csv": drops_csv(drops_over_time(records, bucket, duration)),
        "delivered.csv": delivered_csv({c: received_per_class(records, c, bucket, duration) for c in CLASSES}),
        "delay.csv": delay_csv({c: time_average_delay(records, c) for c in CLASSES}),
        "summary.csv": summary_csv(cfg.scheduler.kind, summarize(records, CLASSES)),
        "manifest": json.dumps(manifest, indent=2, sort_keys=True) + "\n",
    }


def write_outputs(files: dict, out: str) -> None:
    os.makedirs(out, exist_ok=True)
    for name, text in files.items():
        with open(os.path.join(out, name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def run_cli(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = load_config(args)
    except (UsageError, ConfigError) as exc:
        print(f"qosim: error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2
    except SystemExit as exc:
        # --help and --version
        return int(exc.code or 0)
    if args.all_schedulers:
        jobs = [(os.path.join(args.out, kind), set_override(cfg, "scheduler.kind", kind))
                for kind in SCENARIO_SCHEDULERS[cfg.scenario]]
    else:
        jobs = [(args.out, cfg)]
    try:
        for out, job in jobs:
            log.info("scenario %d scheduler %s seed %d -> %s",
                     job.scenario, job.scheduler.kind, job.run.seed, out)
            write_outputs(render(job), out)
    except (RuntimeError, AssertionError) as exc:
        print(f"qosim: invariant violated: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"qosim: cannot write output: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
