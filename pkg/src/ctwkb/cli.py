"""Command-line front end: ``ctwkb run | list-presets | validate-config | show-config | version``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .config import config_reference, dump_config, list_presets, load_config, preset_config
from .errors import ConfigError
from .runner import EXIT_OK, EXIT_VALIDATION, run


def _load(args):
    if args.config and args.preset:
        raise ConfigError("give either a config file or --preset, not both")
    if args.config:
        return load_config(args.config)
    if args.preset:
        return preset_config(args.preset)
    raise ConfigError("a config file or --preset is required")


def _add_source(p):
    p.add_argument("config", nargs="?", help="YAML run configuration")
    p.add_argument("--preset", help="use a named preset instead of a config file")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ctwkb", description="Complex-trajectory WKB wavepacket propagation.")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="run a configuration and write CSV, SVG and JSON outputs")
    _add_source(p)
    p.add_argument("-o", "--output-dir", help="output directory (overrides the config)")
    p.add_argument("-j", "--parallelism", type=int, help="worker processes, one final time per job")
    p.add_argument("--trace", action="store_true", help="also emit complex trajectories")

    sub.add_parser("list-presets", help="list named presets")

    p = sub.add_parser("validate-config", help="check a configuration without running it")
    _add_source(p)

    p = sub.add_parser("show-config", help="print the fully resolved configuration")
    _add_source(p)
    p.add_argument("--reference", action="store_true", help="print the documented defaults instead")

    sub.add_parser("version", help="print the version")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else (logging.INFO if args.verbose == 1 else logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    if args.verb == "version":
        print(f"ctwkb {__version__}")
        return EXIT_OK
    if args.verb == "list-presets":
        for name, desc in list_presets().items():
            print(f"{name:18s} {desc}")
        return EXIT_OK
    if args.verb == "show-config" and args.reference:
        sys.stdout.write(config_reference())
        return EXIT_OK
    try:
        cfg = _load(args)
        if args.verb == "run" and args.parallelism is not None and args.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.verb == "validate-config":
        print(f"ok: {cfg.name}, t_f={list(cfg.t_f)}, orders={list(cfg.orders)}, "
              f"{cfg.targets.points().size} targets")
        return EXIT_OK
    if args.verb == "show-config":
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK

    report = run(cfg, output_dir=args.output_dir, parallelism=args.parallelism, trace=args.trace)
    for job in report.jobs:
        errs = ", ".join(f"N={N}: {m['mean_rel_error']:.4g}" for N, m in job["metrics"].get("orders", {}).items()
                         if m.get("mean_rel_error") is not None)
        print(f"t_f={job['t_f']:g}: {job['status']}" + (f"; mean relative error {errs}" if errs else ""))
    for p in report.problems:
        print(f"  {p}", file=sys.stderr)
    print(f"{report.status}; outputs in {report.output_dir}")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
