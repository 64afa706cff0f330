"""``bss-expand`` command line.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Dict, List, Optional

from bss_expand import pipeline
from bss_expand.config import build_config
from bss_expand.errors import ConfigError, PipelineError

log = logging.getLogger("bss_expand")

COMMANDS = ("clean", "cluster", "select", "graph", "detect", "report", "synth", "run")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value configuration file")
    common.add_argument("--out", dest="out_dir", help="output directory")
    common.add_argument("--locations", help="locations.csv input")
    common.add_argument("--rentals", help="rentals.csv input")
    common.add_argument("--seed", type=int)
    common.add_argument(
        "--granularity",
        nargs="+",
        choices=("t_null", "t_day", "t_hour"),
        help="temporal granularities to analyse",
    )
    common.add_argument("--strategy", choices=("aggregate", "bucket-similarity"), help="projection for every granularity")
    common.add_argument("--synth", action="store_true", default=None, help="generate synthetic input first (run only)")
    common.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any configuration key (repeatable)",
    )
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="bss-expand", description="Dockless bike-share station expansion and community analysis.")
    sub = p.add_subparsers(dest="command", required=True)
    help_text = {
        "clean": "parse and clean the Rental/Location tables",
        "cluster": "absorb near-station locations and run complete-linkage clustering",
        "select": "rank candidates, select new stations, reassign trips",
        "graph": "build the trip graphs per granularity",
        "detect": "Louvain community detection per granularity",
        "report": "community tables, temporal profiles, GeoJSON",
        "synth": "write a synthetic dataset (locations.csv, rentals.csv, truth.csv)",
        "run": "full pipeline",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=help_text[name])
    return p


def _overrides(ns: argparse.Namespace) -> Dict[str, object]:
    out: Dict[str, object] = {}
    for item in ns.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v
    for key in ("out_dir", "locations", "rentals", "seed", "strategy", "synth"):
        val = getattr(ns, key)
        if val is not None:
            out[key] = val
    if ns.granularity:
        out["granularities"] = tuple(ns.granularity)
    return out


def main(argv: Optional[List[str]] = None) -> int:
    ns = _parser().parse_args(argv)
    level = logging.WARNING - 10 * min(ns.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = build_config(ns.config, _overrides(ns))
        cmd = ns.command
        if cmd == "run":
            pipeline.run_pipeline(cfg)
        elif cmd == "synth":
            paths = pipeline.stage_synth(cfg, cfg.out)
            for p in paths.values():
                print(p)
        elif cmd == "clean":
            pipeline.stage_clean(cfg)
        elif cmd == "cluster":
            pipeline.stage_cluster(cfg)
        elif cmd == "select":
            pipeline.stage_select(cfg)
        elif cmd == "graph":
            pipeline.stage_graph(cfg)
        elif cmd == "detect":
            pipeline.stage_detect(cfg)
        elif cmd == "report":
            pipeline.stage_report(cfg)
    except PipelineError as exc:
        print(f"bss-expand: error: {exc}", file=sys.stderr)
        return exc.exit_code if exc.exit_code in (2, 3, 4) else 4
    except Exception as exc:  # anything unexpected is an internal fault
        print(f"bss-expand: internal error: {exc!r}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
