import argparse
import sys

from . import FigureSpec, SchemaError, render


def main(argv=None):
    ap = argparse.ArgumentParser(prog="figgen",
                                 description="plot estimator CSV logs")
    ap.add_argument("csv", help="estimator log file")
    ap.add_argument("--panels", default="terms,accumulated",
                    help="comma-separated panel list (terms, accumulated)")
    ap.add_argument("--out", default="fig.png", help="output image path")
    ap.add_argument("--log", action="store_true", dest="logy",
                    help="log-scale vertical axes")
    ap.add_argument("--omit-full", action="store_true",
                    help="drop the full estimate curve (exponential cases)")
    args = ap.parse_args(argv)
    spec = FigureSpec(csv_path=args.csv, out_path=args.out,
                      panels=tuple(p.strip() for p in args.panels.split(",") if p.strip()),
                      logy=args.logy, omit_full=args.omit_full)
    try:
        render(spec)
    except (SchemaError, OSError, ValueError) as exc:
        print(f"figgen: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
