"""Command line interface.

  fsi run <config>           forced/unforced single run (+ VTK snapshots)
  fsi energy-audit <config>  unforced run, verifies the exact energy identity
  fsi converge <config>      convergence matrix along the configured axis

Common flags: --out DIR, --threads N, --solver {direct,iterative},
--vtk-every K.  Exit code 0 iff all requested artifacts were written and no
acceptance-critical check failed.
"""

import argparse
import sys

from .config import parse_config
from .errors import ConfigurationError, DegenerateGeometryError, SolverError
from . import experiments


def _add_common(p):
    p.add_argument("config", help="path to a TOML-subset config file")
    p.add_argument("--out", default=None, help="output directory (default from config)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads for independent matrix cells")
    p.add_argument("--solver", choices=["direct", "iterative"], default=None)
    p.add_argument("--vtk-every", type=int, default=None, dest="vtk_every",
                   help="write a VTK snapshot every K steps")


def build_parser():
    ap = argparse.ArgumentParser(prog="fsi", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "energy-audit", "converge"):
        _add_common(sub.add_parser(name))
    return ap


def _load(args):
    cfg, spec = parse_config(args.config)
    overrides = {}
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.solver is not None:
        overrides["solver"] = args.solver
    if args.vtk_every is not None:
        overrides["vtk_every"] = args.vtk_every
    if overrides:
        cfg = cfg.replace(**overrides)
    if args.threads is not None:
        spec.threads = args.threads
    return cfg, spec


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg, spec = _load(args)
        if args.command == "run":
            if cfg.forcing != "none":
                res = experiments.run_experiment1(cfg)
            else:
                res = experiments.run_single(cfg)
        elif args.command == "energy-audit":
            res = experiments.run_energy_audit(cfg)
        else:
            if spec.kind != "convergence_matrix":
                raise ConfigurationError(
                    "converge needs a config with experiment = 'convergence_matrix'")
            res = experiments.run_convergence(cfg, spec)
    except (ConfigurationError, DegenerateGeometryError, SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for line in res.messages:
        print(line)
    for path in res.artifacts:
        print(f"wrote {path}")
    if res.rates:
        for name, info in sorted(res.rates.items()):
            slope = info["slope"]
            print(f"rate[{name}] = {slope:.2f}" if slope is not None
                  else f"rate[{name}] = n/a")
    return 0 if res.passed else 1


if __name__ == "__main__":
    sys.exit(main())
