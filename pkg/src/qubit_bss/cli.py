"""Command-line interface: ``qubit-bss {generate,estimate,check-gradient,scan,version}``.

Exit codes: 0 success, 1 evaluation failure, 2 usage error, 3 dataset I/O
error, 4 config error, 5 no interior maximum (boundary-best result is still
printed).  Set ``QUBIT_BSS_LOG`` (e.g. ``INFO``) for log output on stderr.
"""

import argparse
import json
import logging
import os
import sys

from . import __version__, datagen, estimator, validation
from .errors import ConfigError, NoInteriorMaximum, QubitBSSError
from .io import (
    AUDIT_HEADER,
    SCAN_HEADER,
    DatasetIOError,
    audit_rows,
    load_config,
    parse_grid,
    read_dataset,
    scan_rows,
    write_dataset,
    write_rows,
)

EXIT_OK = 0
EXIT_EVAL = 1
EXIT_IO = 3
EXIT_CONFIG = 4
EXIT_NO_INTERIOR = 5

logger = logging.getLogger("qubit_bss")


def _err(msg):
    print(f"qubit-bss: {msg}", file=sys.stderr)


def cmd_generate(args):
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    data = datagen.generate(cfg.priors, cfg.v_true, cfg.n, seed)
    if cfg.noise_scale > 0:
        data = datagen.perturb(data, cfg.noise_scale, cfg.noise_seed)
    write_dataset(data, args.out, priors=cfg.priors)
    logger.info("wrote %d samples to %s", len(data), args.out)
    return EXIT_OK


def cmd_estimate(args):
    cfg = load_config(args.config)
    data = read_dataset(args.dataset)
    opts = cfg.search
    if args.gradient is not None:
        opts = estimator.with_gradient(opts, args.gradient)
    if args.allow_exclusion:
        opts = estimator.SearchOptions(**{**opts.__dict__, "allow_exclusion": True})
    try:
        result = estimator.estimate_v(data, cfg.priors, opts)
    except NoInteriorMaximum as exc:
        _err(str(exc))
        if exc.result is not None:
            print(json.dumps(exc.result.to_dict(), sort_keys=True))
        return EXIT_NO_INTERIOR
    print(json.dumps(result.to_dict(), sort_keys=True))
    return EXIT_OK


def _open_out(path):
    return open(path, "w", newline="") if path else sys.stdout


def cmd_check_gradient(args):
    cfg = load_config(args.config)
    data = read_dataset(args.dataset)
    tol = cfg.tolerances
    grid = validation.default_audit_grid() if args.grid is None else parse_grid(args.grid)
    usable = [
        v for v in grid
        if tol.fd_step < v < 1.0 - tol.fd_step and abs(v - 2.0**-0.5) > tol.critical_exclusion
    ]
    if len(usable) < len(grid):
        _err(f"warning: dropped {len(grid) - len(usable)} grid point(s) outside the valid audit range")
    reports = validation.gradient_audit(
        data, cfg.priors, usable, h=tol.fd_step, min_cos=tol.audit_min_cos, rel_floor=tol.rel_floor
    )
    fh = _open_out(args.out)
    try:
        write_rows(fh, AUDIT_HEADER, audit_rows(reports))
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_scan(args):
    cfg = load_config(args.config)
    data = read_dataset(args.dataset)
    grid = parse_grid(args.grid or "0.05:0.95:0.05")
    grid = [v for v in grid if 0.0 < v < 1.0]
    variant = args.gradient or cfg.search.gradient
    points = estimator.scan(data, cfg.priors, grid, variant, args.allow_exclusion or cfg.search.allow_exclusion)
    fh = _open_out(args.out)
    try:
        write_rows(fh, SCAN_HEADER, scan_rows(points))
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_version(args):
    print(__version__)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="qubit-bss", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("--config", help="JSON config (priors, v_true, n, seed)")
    p.add_argument("--out", required=True, help="dataset CSV path")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_generate)

    for name, func, help_ in (
        ("estimate", cmd_estimate, "maximum-likelihood estimate of v (JSON on stdout)"),
        ("check-gradient", cmd_check_gradient, "audit analytic gradients against finite differences"),
        ("scan", cmd_scan, "tabulate log-likelihood and gradient over a grid"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("dataset", help="dataset CSV")
        p.add_argument("--config", help="JSON config")
        if name != "estimate":
            p.add_argument("--grid", help='couplings as "lo:hi:step" (inclusive)')
            p.add_argument("--out", help="output CSV (default: stdout)")
        if name != "check-gradient":
            p.add_argument("--gradient", choices=("total", "partial-only"), help="gradient variant")
            p.add_argument("--allow-exclusion", action="store_true", help="drop near-singular samples")
        p.set_defaults(func=func)

    p = sub.add_parser("version", help="print the package version")
    p.set_defaults(func=cmd_version)
    return parser


def main(argv=None):
    level = os.environ.get("QUBIT_BSS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DatasetIOError as exc:
        _err(str(exc))
        return EXIT_IO
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    except OSError as exc:
        _err(str(exc))
        return EXIT_IO
    except QubitBSSError as exc:
        _err(str(exc))
        return EXIT_EVAL


if __name__ == "__main__":
    sys.exit(main())
