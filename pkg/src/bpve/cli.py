"""Command-line driver.

Exit codes: 0 all tolerances met, 1 a tolerance was violated, 2 configuration
or engine error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from bpve.environment import FamilyError
from bpve.exact import ExtinctionError, TruncationError
from bpve.experiments import (
    PRESETS,
    ExperimentConfig,
    ExperimentReport,
    apply_overrides,
    load_config,
    run,
)
from bpve.montecarlo import PopulationCapError

log = logging.getLogger("bpve")

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2

ENGINE_ERRORS = (TruncationError, ExtinctionError, PopulationCapError, FamilyError)


def _print_report(report: ExperimentReport) -> None:
    cols = report.columns
    print("  ".join(f"{c:>16}" for c in cols))
    for row in report.rows:
        cells = []
        for c in cols:
            v = row[c]
            cells.append(f"{v:>16.6g}" if isinstance(v, float) else f"{str(v):>16}")
        print("  ".join(cells))
    for c in report.checks:
        flag = "PASS" if c.passed else "FAIL"
        print(f"{flag}  {c.name}: value={c.value:.6g} threshold={c.threshold:.6g}")
    print(f"{report.config.label}: {'PASS' if report.passed else 'FAIL'} ({report.wall_time:.2f} s)")


def _execute(cfg: ExperimentConfig, out: str | None, timing: bool) -> int:
    report = run(cfg)
    _print_report(report)
    target = out or cfg.output
    if target:
        csv_path, json_path = report.write(target, timing=timing)
        log.info("wrote %s and %s", csv_path, json_path)
    return EXIT_OK if report.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bpve", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a JSON config")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("--out", help="directory for the CSV and JSON sidecar")
    p_run.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p_run.add_argument("--timing", action="store_true", help="record wall time in the JSON sidecar")

    p_list = sub.add_parser("list-presets", help="print the acceptance-criteria configs")
    p_list.add_argument("--write", metavar="DIR", help="also write each preset as DIR/<name>.json")

    p_id = sub.add_parser("identities", help="run the exact identity suite")
    p_id.add_argument("--max-k", type=int, default=12)
    p_id.add_argument("--out")

    for kind in ("yaglom", "immigration", "montecarlo-xcheck"):
        p = sub.add_parser(kind, help=f"run the {kind} preset (with overrides)")
        default = "immigration-q1" if kind == "immigration" else kind
        p.add_argument("--preset", default=default, choices=[k for k, v in PRESETS.items()
                                                              if v["experiment"] == kind])
        p.add_argument("--out")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--timing", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "list-presets":
            print(json.dumps(PRESETS, indent=2))
            if args.write:
                out = Path(args.write)
                out.mkdir(parents=True, exist_ok=True)
                for name, raw in PRESETS.items():
                    (out / f"{name}.json").write_text(json.dumps(raw, indent=2) + "\n", encoding="utf-8")
            return EXIT_OK
        if args.command == "run":
            cfg = load_config(args.config, args.override)
            return _execute(cfg, args.out, args.timing)
        if args.command == "identities":
            raw = apply_overrides(PRESETS["identities"], [f"max_k={args.max_k}"])
            return _execute(ExperimentConfig.model_validate(raw), args.out, False)
        raw = apply_overrides(PRESETS[args.preset], args.override)
        return _execute(ExperimentConfig.model_validate(raw), args.out, args.timing)
    except (ValidationError, json.JSONDecodeError, OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except ENGINE_ERRORS as exc:
        print(f"engine error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
