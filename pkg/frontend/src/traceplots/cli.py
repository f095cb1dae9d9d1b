"""Script entry point: traceplots --trace trace.csv [--report r.json] --out DIR."""

import argparse
import sys

from .render import PANELS, PlotJob, TraceColumnError, render


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="traceplots",
        description="render energy-trace panels as static images",
    )
    parser.add_argument("--trace", required=True, help="trace.csv path")
    parser.add_argument("--report", default=None, help="decay_report.json path")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--format", dest="fmt", choices=("png", "svg"), default="png")
    parser.add_argument(
        "--panels",
        default=",".join(PANELS),
        help="comma-separated subset of: " + ", ".join(PANELS),
    )
    args = parser.parse_args(argv)
    panels = tuple(p.strip() for p in args.panels.split(",") if p.strip())
    try:
        job = PlotJob(
            trace=args.trace,
            report=args.report,
            out_dir=args.out,
            fmt=args.fmt,
            panels=panels,
        )
        written = render(job)
    except (TraceColumnError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
