"""Command line interface: cke {solve, verify, manufacture, green} <config>."""

from __future__ import annotations

import argparse
import sys

from . import runner
from .config import parse_config
from .errors import CkeError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cke",
        description="Continuity-method solver for coupled Kahler-Einstein "
                    "type Monge-Ampere systems.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, descr in (
            ("solve", "run the continuity path and write path.csv"),
            ("verify", "solve, then run uniqueness/spectrum/Bochner probes "
                       "on the final state"),
            ("manufacture", "emit a manufactured background and its exact "
                            "target"),
            ("green", "print the Green constant of the geometry")):
        p = sub.add_parser(name, help=descr)
        p.add_argument("config", help="path to the JSON run configuration")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config)
        if args.command == "solve":
            code, result = runner.run(cfg)
            print(f"status: {result.status.value} (t = {result.status_t:g})")
            if result.reason:
                print(f"reason: {result.reason}")
            print(f"outputs in {cfg.output_dir}")
            return code
        if args.command == "verify":
            code, report = runner.verify(cfg)
            print(f"status: {report['status']}")
            if "min_eig_L" in report:
                print("min_eig_L: %.17g" % report["min_eig_L"])
            if "uniqueness" in report:
                worst = max(p.distance for p in report["uniqueness"])
                print("uniqueness worst distance: %.17g" % worst)
            print(f"report in {cfg.output_dir}/verify_report.txt")
            return code
        if args.command == "manufacture":
            code, _payload = runner.manufacture(cfg)
            print(f"background.dat and target.dat written to "
                  f"{cfg.output_dir}")
            return code
        code, value = runner.green(cfg)
        print("%.17g" % value)
        return code
    except CkeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
