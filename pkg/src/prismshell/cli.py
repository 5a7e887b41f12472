"""Command line interface.

::

    prismshell run config.ini
    prismshell run --bench SLR --order 5 --thick-order 2 --linear
    prismshell bench SAP --order 3 --target-q 0.8
    prismshell converge SLR
    prismshell adapt SLR-H --cycles 4

``PRISMSHELL_OUT`` replaces the output directory of the configuration;
an explicit ``--out`` wins over both.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

from .benchmarks import GENERATORS, BenchmarkError, get_benchmark
from .config import ConfigError, RunConfig, read_config
from .shellgeom import GeometryError, MeshFormatError
from .solver import SolverError
from .studies import adapt_study, convergence_study, run_analysis

ENV_OUT = "PRISMSHELL_OUT"


def _add_overrides(p: argparse.ArgumentParser):
    g = p.add_argument_group("overrides")
    g.add_argument("--order", type=int, help="face order")
    g.add_argument("--thick-order", type=int, help="thickness order for both v and w")
    g.add_argument("--thick-order-v", type=int)
    g.add_argument("--thick-order-w", type=int)
    kind = g.add_mutually_exclusive_group()
    for k in ("linear", "newton", "arclength"):
        kind.add_argument(f"--{k}", dest="kind", action="store_const", const=k)
    g.add_argument("--target", "--target-q", "--target-p", dest="target", type=float,
                   help="final load (default: benchmark value)")
    g.add_argument("--ds0", type=float, help="initial arc length")
    g.add_argument("--max-steps", type=int)
    g.add_argument("--steps", type=int, help="load increments for --newton")
    g.add_argument("--symmetrize", action="store_true", default=None)
    g.add_argument("--vtk-every", type=int)
    g.add_argument("--refine", type=int, help="plotting subdivisions per element edge")
    g.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="benchmark generator parameter, e.g. n=8")
    g.add_argument("--out", help="output directory")


def _parse_param(text: str):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"--param expects KEY=VALUE, got {text!r}")
    try:
        return key.strip(), int(value)
    except ValueError:
        try:
            return key.strip(), float(value)
        except ValueError:
            raise ConfigError(f"--param {key} must be numeric") from None


def _apply(cfg: RunConfig, args) -> RunConfig:
    changes = {}
    if args.order is not None:
        changes["face"] = args.order
    if args.thick_order is not None:
        changes["thick_v"] = changes["thick_w"] = args.thick_order
    if args.thick_order_v is not None:
        changes["thick_v"] = args.thick_order_v
    if args.thick_order_w is not None:
        changes["thick_w"] = args.thick_order_w
    for name in ("kind", "target", "ds0", "max_steps", "steps", "symmetrize", "vtk_every",
                 "refine"):
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = value
    if args.param:
        changes["bench_params"] = dict(cfg.bench_params, **dict(map(_parse_param, args.param)))
    cfg = replace(cfg, **changes)
    env = os.environ.get(ENV_OUT)
    if env:
        cfg = replace(cfg, out_dir=env)
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    return cfg.validate()


def _bench_config(name: str, kind: str | None = None) -> RunConfig:
    prob = get_benchmark(name)
    if kind is None:
        kind = "arclength" if prob.nonlinear else "linear"
    return RunConfig(kind=kind, benchmark=prob.name, out_dir=f"prismshell_out/{prob.name}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prismshell",
                                 description="Hierarchical prism solid-shell analyses.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a configuration file")
    p.add_argument("config", nargs="?", help="INI configuration")
    p.add_argument("--bench", help="run a named benchmark instead of a file")
    _add_overrides(p)

    names = ", ".join(GENERATORS)
    p = sub.add_parser("bench", help=f"run a named benchmark ({names})")
    p.add_argument("name")
    _add_overrides(p)

    p = sub.add_parser("converge", help="uniform face-order sweep")
    p.add_argument("name")
    p.add_argument("--min-order", type=int, default=1)
    p.add_argument("--max-order", type=int, default=8)
    _add_overrides(p)

    p = sub.add_parser("adapt", help="adaptive p-refinement cycles")
    p.add_argument("name")
    p.add_argument("--cycles", type=int, default=4)
    _add_overrides(p)
    return ap


def _report(result_lines):
    for line in result_lines:
        print(line)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            if bool(args.config) == bool(args.bench):
                raise ConfigError("give either a config file or --bench NAME")
            cfg = read_config(args.config) if args.config else _bench_config(args.bench)
            cfg = _apply(cfg, args)
            return _dispatch(cfg)
        if args.command == "bench":
            return _dispatch(_apply(_bench_config(args.name), args))
        if args.command == "converge":
            cfg = replace(_bench_config(args.name, "convergence"),
                          min_order=args.min_order, max_order=args.max_order)
            return _dispatch(_apply(cfg, args))
        cfg = replace(_bench_config(args.name, "adapt"), face=2, cycles=args.cycles)
        return _dispatch(_apply(cfg, args))
    except (ConfigError, BenchmarkError, MeshFormatError, GeometryError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"prismshell: error: {msg}", file=sys.stderr)
        return 2
    except (SolverError, ValueError) as exc:
        print(f"prismshell: failed: {exc}", file=sys.stderr)
        return 1


def _dispatch(cfg: RunConfig) -> int:
    if cfg.kind == "convergence":
        rows = convergence_study(cfg)
        _report([f"order {r['order']}: dofs {r['dofs']} monitored {r['monitored']:.6g} "
                 f"energy error {r['energy_error']:.3e}" for r in rows])
    elif cfg.kind == "adapt":
        rows = adapt_study(cfg)
        _report([f"cycle {r['cycle']}: dofs {r['dofs']} orders {r['min_order']}-{r['max_order']} "
                 f"indicator {r['indicator']:.4e} monitored {r['monitored']:.6g}" for r in rows])
    else:
        res = run_analysis(cfg)
        _report([f"{k}: {v}" for k, v in res.summary.items()])
    print(f"output: {cfg.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
