"""``bvc <experiment>`` command-line front end.

Exit codes: 0 when every gate of the experiment passes, 2 when a
stabilisation or acceptance gate fails, 1 on configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import EXPERIMENTS, ConfigError, load_config
from .experiments import run_experiment
from .output import emit_csv, emit_svg_plot

EXIT_PASS, EXIT_ERROR, EXIT_GATE = 0, 1, 2

log = logging.getLogger("bvc")


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors, so they must not collide with the gate code
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="bvc", description="Run one registered experiment and write its CSV report.")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", type=Path, help="flat key = value file")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", help="output directory (default: out)")
    ap.add_argument("--ladder", help="geometric:t_max,ratio,count or an explicit decreasing list")
    ap.add_argument("--rho", type=float)
    ap.add_argument("--trials", type=int)
    ap.add_argument("--workers", type=int, help="threads over trials; results do not depend on it")
    ap.add_argument("--no-plot", action="store_true", help="skip the SVG")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.experiment, seed=args.seed, out=args.out, ladder=args.ladder,
                          rho=args.rho, trials=args.trials, workers=args.workers)
        if args.no_plot:
            cfg = cfg.replace(plot=False)
        report = run_experiment(cfg)
        out = Path(cfg.out)
        emit_csv(report, out / f"{cfg.experiment}.csv")
        if cfg.plot:
            emit_svg_plot(report, out / f"{cfg.experiment}.svg")
    except (ConfigError, ValueError, OSError) as exc:
        print(f"bvc: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    log.info("wall time %.2f s", report.wall_time)
    status = "PASS" if report.passed else "GATE FAILED"
    print(f"{cfg.experiment}: {status} ({len(report.rows)} rows, {report.wall_time:.1f} s) -> {out}")
    return EXIT_PASS if report.passed else EXIT_GATE


if __name__ == "__main__":
    sys.exit(main())
