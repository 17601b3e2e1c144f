"""Command-line entry point: ``qpurify run|check|sweep|identity-test``."""

from __future__ import annotations

import argparse
import sys

from . import harness as h

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CHECK_FAILED = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="key=value config file (default: shipped config)")
    p.add_argument("--out", default="-", help="output path, '-' for stdout")
    p.add_argument("--tol", type=float, default=h.DEFAULT_TOL, help="pass/fail tolerance")
    p.add_argument("--seed", type=int, help="seed for randomized commands")
    p.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override a config entry (repeatable)",
    )
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qpurify", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _common()
    sub.add_parser("run", parents=[common], help="iterate the measurement map, one CSV row per step")
    sub.add_parser("check", parents=[common], help="oracle-equivalence checks")
    sw = sub.add_parser("sweep", parents=[common], help="parameter grid scan")
    sw.add_argument("--jobs", type=int, default=1, help="worker processes")
    it = sub.add_parser("identity-test", parents=[common], help="nested-sum identity check")
    it.add_argument("--l-max", type=int, default=4)
    it.add_argument("--k-max", type=int, default=15)
    it.add_argument("--trials", type=int, default=100)
    it.add_argument("--points", help="explicit points 're,im;re,im;...' (single case)")
    return parser


def _config(args) -> dict:
    cfg = h.parse_kv_text(h.load_config_text(args.config))
    cfg = h.merge_overrides(cfg, args.overrides)
    if args.seed is not None:
        cfg["seed"] = str(args.seed)
    return cfg


def _emit(text: str, out: str) -> None:
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _check(args) -> int:
    rc = h.build_run_config(_config(args))
    results = h.check(rc, tol=args.tol)
    lines = [
        f"{'PASS' if r.passed else 'FAIL'}  {r.name}: max deviation {r.deviation:.3e} (tol {r.tol:.1e})"
        for r in results
    ]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


def _identity(args) -> int:
    seed = 0 if args.seed is None else args.seed
    points = None
    if args.points:
        points = [h.parse_complex(t) for t in args.points.split(";") if t.strip()]
        if not points:
            raise h.ConfigError("--points is empty")
    rep = h.identity_test(args.l_max, args.k_max, args.trials, seed, args.tol, points)
    lines = [f"{'PASS' if rep.passed else 'FAIL'}  nested-sum identity: {rep.trials} case(s), "
             f"max relative deviation {rep.max_rel_dev:.3e} (tol {rep.tol:.1e})"]
    if points is not None:
        for ell, k, b, c, dev in rep.rows:
            lines.append(f"l={ell} k={k} brute={h.fmt(b.real)},{h.fmt(b.imag)} "
                         f"closed={h.fmt(c.real)},{h.fmt(c.imag)} dev={dev:.3e}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK if rep.passed else EXIT_CHECK_FAILED


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "run":
            _emit(h.run_csv(h.build_run_config(_config(args))), args.out)
            return EXIT_OK
        if args.command == "check":
            return _check(args)
        if args.command == "sweep":
            if args.jobs < 1:
                raise h.ConfigError("--jobs must be >= 1")
            sc = h.build_sweep_config(_config(args))
            _emit(h.sweep_csv(sc, jobs=args.jobs), args.out)
            return EXIT_OK
        return _identity(args)
    except (h.ConfigError, OSError) as exc:
        print(f"qpurify: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
