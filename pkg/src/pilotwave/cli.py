"""Command line: ``pilotwave run <config>`` and ``pilotwave list``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time
from pathlib import Path

from . import _backend
from .config import ConfigError, describe_experiments, parse_config
from .experiments import run

log = logging.getLogger("pilotwave")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pilotwave", description="Two-slit Bohmian trajectory experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by an INI config")
    r.add_argument("config", type=Path)
    r.add_argument("--seed", type=int, default=None, help="override ensemble.master_seed")
    r.add_argument("--workers", type=int, default=1, help="worker threads for ensemble evolution")
    r.add_argument("--out", type=Path, default=None, help="output root (beats PILOTWAVE_OUT and the config)")
    r.add_argument("--backend", choices=sorted(_backend.BACKENDS), default=None)
    r.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("list", help="list experiment names and their keys")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for line in describe_experiments():
            print(line)
        return 0

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        spec = parse_config(args.config.read_text(encoding="utf-8"))
        if args.seed is not None:
            spec = dataclasses.replace(spec, ensemble=dataclasses.replace(spec.ensemble, master_seed=args.seed))
    except (OSError, ConfigError, ValueError) as exc:
        print(f"pilotwave: config error: {exc}", file=sys.stderr)
        return 2

    out_root = args.out or (Path(os.environ["PILOTWAVE_OUT"]) if os.environ.get("PILOTWAVE_OUT") else None)
    started = time.perf_counter()
    try:
        passed, report = run(spec, out_root, workers=max(1, args.workers), backend=args.backend)
    except Exception as exc:  # noqa: BLE001 - any module failure is a failed run
        print(f"pilotwave: {spec.name} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for a in report["assertions"]:
        flag = "PASS" if a["passed"] else "FAIL"
        print(f"{flag} {spec.name}.{a['name']}: {a['value']} {a['op']} {a['threshold']}")
    log.info("%s finished in %.1fs (backend=%s)", spec.name, time.perf_counter() - started,
             args.backend or _backend.NAME)
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
