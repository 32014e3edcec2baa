"""``hqs`` command line.

Exit codes: 0 success, 1 invariant failure, 2 configuration error,
3 resource ceiling exceeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_CEILING = 0, 1, 2, 3

log = logging.getLogger("hqs")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2 already; keep the message terse
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"hqs: error: {message}\n")


def _window(text: str) -> tuple[int, int]:
    try:
        a, b = (int(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("window must be t0:t1") from None
    return a, b


def _plan(model: str, lx: int, ly: int):
    from .circuits import surface_code_plan, trivial_plan
    from .experiments import ConfigError

    if model == "surface-code":
        if lx < 3 or lx % 2 == 0 or ly < 3:
            raise ConfigError("surface code needs odd lx >= 3 and ly >= 3")
        return surface_code_plan(lx, ly)
    if model == "trivial":
        if lx < 2 or ly < 1:
            raise ConfigError("trivial model needs lx >= 2 and ly >= 1")
        return trivial_plan(lx, ly)
    raise ConfigError(f"unknown model {model!r}")


def cmd_sweep(args) -> int:
    from .experiments import gnuplot_script, load_config, run_sweep

    config = load_config(args.config)
    out_path = args.out or config.output
    if out_path:
        with open(out_path, "w", newline="") as fh:
            res = run_sweep(config, jobs=args.jobs, out=fh)
        Path(out_path).with_suffix(".gp").write_text(gnuplot_script(out_path))
    else:
        res = run_sweep(config, jobs=args.jobs, out=sys.stdout)
    print(f"# fit C={res.C!r} slope={res.slope!r} residual={res.residual!r} "
          f"flags={','.join(res.flags) or '-'}", file=sys.stderr)
    return EXIT_OK


def cmd_fit(args) -> int:
    from .experiments import fit_bound

    try:
        fit = fit_bound(Path(args.csv).read_text(), delta=args.delta)
    except (OSError, ValueError) as exc:
        print(f"hqs: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"C={fit.C!r}\nslope={fit.slope!r}\nresidual={fit.residual!r}\nflags={','.join(fit.flags) or '-'}")
    return EXIT_OK


def cmd_mixing(args) -> int:
    from .experiments import ConfigError
    from .mixing import eta_series, fit_mixing

    plan = _plan(args.model, args.lx, args.ly or max(args.window[1], 3))
    t0, t1 = args.window
    if not 1 <= t0 <= t1 <= plan.ly:
        raise ConfigError(f"window {t0}:{t1} outside [1, {plan.ly}]")
    if not 1 <= args.ell <= args.lx:
        raise ConfigError("ell must lie in [1, lx]")
    windows = [(t0, t) for t in range(t0, t1 + 1)]
    series = eta_series(plan, [args.ell], windows, restarts=args.restarts, iterations=args.iterations)
    if len(windows) >= 3:
        sys.stdout.write(fit_mixing(series).to_text())
    else:
        print("ell,elapsed,lower,upper")
        for (ell, el), v in sorted(series.items()):
            print(f"{ell},{el},{v.lower!r},{v.upper!r}")
    return EXIT_OK


def cmd_size(args) -> int:
    from .experiments import load_config, size_independence

    table = size_independence(load_config(args.config))
    sys.stdout.write(table.to_text())
    return EXIT_OK


def cmd_verify(args) -> int:
    from .checks import SUITES, run_suite

    names = SUITES if args.suite == "all" else (args.suite,)
    ok = True
    for name in names:
        rep = run_suite(name, seed=args.seed)
        if args.json:
            print(json.dumps(rep.to_dict()))
        else:
            sys.stdout.write(rep.summary())
        ok &= rep.passed
    return EXIT_OK if ok else EXIT_FAIL


def cmd_export(args) -> int:
    from .circuits import HEADER, plan_to_text, transition_to_text
    from .experiments import ConfigError

    plan = _plan(args.model, args.lx, args.ly)
    if args.row == "all":
        sys.stdout.write(plan_to_text(plan))
        return EXIT_OK
    try:
        t = int(args.row)
    except ValueError:
        raise ConfigError("row must be an integer or 'all'") from None
    if not 1 <= t <= plan.ly:
        raise ConfigError(f"row {t} outside [1, {plan.ly}]")
    print(HEADER)
    print(transition_to_text(plan.transitions[t - 1]))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    from .checks import SUITES

    p = _Parser(prog="hqs", description="Noise stability of holographically prepared 2D states.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    s = sub.add_parser("sweep", help="deviation over an epsilon grid")
    s.add_argument("--config", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("fit", help="fit the bound constant to a sweep CSV")
    s.add_argument("csv")
    s.add_argument("--delta", type=float, default=0.0)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("mixing", help="eta intervals of bath windows and the mixing fit")
    s.add_argument("--model", required=True, choices=("surface-code", "trivial"))
    s.add_argument("--lx", type=int, required=True)
    s.add_argument("--ly", type=int)
    s.add_argument("--window", type=_window, required=True)
    s.add_argument("--ell", type=int, required=True)
    s.add_argument("--restarts", type=int, default=64)
    s.add_argument("--iterations", type=int, default=200)
    s.set_defaults(func=cmd_mixing)

    s = sub.add_parser("size-independence", help="deviation vs ly at fixed epsilon")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_size)

    s = sub.add_parser("verify", help="run an invariant battery")
    s.add_argument("--suite", required=True, choices=(*SUITES, "all"))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("export-circuit", help="print the text form of a transition or a whole plan")
    s.add_argument("--model", required=True, choices=("surface-code", "trivial"))
    s.add_argument("--lx", type=int, required=True)
    s.add_argument("--ly", type=int, default=4)
    s.add_argument("--row", required=True)
    s.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    from .experiments import ConfigError
    from .live import CeilingError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"hqs: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CeilingError as exc:
        print(f"hqs: resource ceiling: {exc}", file=sys.stderr)
        return EXIT_CEILING


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
