"""``noisysplit`` command line.

Any config key can be overridden with ``--section.key value`` (or ``--section.key=value``);
flags win over the ``--config`` file, which wins over built-in defaults.
"""
from __future__ import annotations

import argparse
import os
import sys

from . import config as cfgmod
from . import experiments as ex
from .errors import ConfigError, NoisySplitError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DATA, EXIT_AUDIT = 0, 1, 2, 3, 4


def _common(p, suppress):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="flat key=value config file")
    p.add_argument("--seed", type=int, default=d, help="base seed; trial i uses seed + i")
    p.add_argument("--trials", type=int, default=d)
    p.add_argument("--out", default=d, help="output directory")
    p.add_argument("--quiet", action="store_true", default=d)


def build_parser():
    parser = argparse.ArgumentParser(prog="noisysplit", description=__doc__.splitlines()[0])
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    parent = argparse.ArgumentParser(add_help=False)
    _common(parent, suppress=True)

    sub.add_parser("gen-noise", parents=[parent], help="write noisy-label sidecars and audits")
    sub.add_parser("train", parents=[parent], help="seeded training trials + summary")
    sub.add_parser("ablate", parents=[parent], help="standard / pd-only / gamma-only / full")
    p = sub.add_parser("sweep-c2", parents=[parent], help="power-schedule exponent sweep")
    p.add_argument("--grid", help="comma-separated c2 values (default: sweep.c2_grid)")
    p = sub.add_parser("schedules", parents=[parent], help="compare beta2 families")
    p.add_argument("--families", help="comma-separated subset of constant,linear,power,exponential,step")
    p = sub.add_parser("dump-features", parents=[parent], help="penultimate-layer features of the test set")
    p.add_argument("--checkpoint", help=".npz checkpoint written by train")
    p.add_argument("--output", help="CSV path (default: <out>/features.csv)")
    return parser


def parse_overrides(tokens):
    """``--a.b v`` / ``--a.b=v`` pairs into a dict of raw strings."""
    out, i = {}, 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or len(tok) == 2:
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ConfigError(f"flag {tok} needs a value")
            val = tokens[i + 1]
            i += 2
        if key not in cfgmod.SCHEMA:
            raise ConfigError(f"unknown option --{key}")
        out[key] = val
    return out


def resolve_config(args, extra):
    overrides = parse_overrides(extra)
    if args.seed is not None:
        overrides["experiment.seed"] = str(args.seed)
    if args.trials is not None:
        overrides["experiment.trials"] = str(args.trials)
    if args.out is not None:
        overrides["experiment.out"] = args.out
    cfg = cfgmod.load(args.config, overrides)
    ex.trial_seeds(cfg)  # validates trials >= 1
    return cfg


def run(argv=None):
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    for name in ("config", "seed", "trials", "out", "quiet"):
        if not hasattr(args, name):
            setattr(args, name, None)
    cfg = resolve_config(args, extra)
    log = None if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    out = cfg["experiment.out"]
    cmd = args.command

    if cmd == "gen-noise":
        ex.cmd_gen_noise(cfg, out, log)
    elif cmd == "train":
        rs = ex.cmd_train(cfg, out, log)
        _say(args, f"best test accuracy {rs.summary['best_test_acc']['cell']} -> {out}/summary.json")
    elif cmd == "ablate":
        rows, _ = ex.cmd_ablate(cfg, out, log)
        for r in rows:
            _say(args, f"{r[0]:<11} {r[4]}")
    elif cmd == "sweep-c2":
        grid = None
        if args.grid:
            grid = cfgmod.parse_value("sweep.c2_grid", args.grid)
        sel, _ = ex.cmd_sweep_c2(cfg, out, grid, log)
        _say(args, f"selected c2 = {sel['best_c2']:g}")
    elif cmd == "schedules":
        fams = cfgmod.parse_value("schedules.families", args.families) if args.families else None
        rows, _ = ex.cmd_schedules(cfg, out, fams, log)
        for r in rows:
            _say(args, f"{r[0]:<12} {r[5]}")
    elif cmd == "dump-features":
        path = args.output or os.path.join(out, "features.csv")
        feats = ex.cmd_dump_features(cfg, path, args.checkpoint)
        _say(args, f"wrote {feats.shape[0]} x {feats.shape[1]} features to {path}")
    return EXIT_OK


def _say(args, msg):
    if not args.quiet:
        print(msg)


def main(argv=None):
    try:
        return run(argv)
    except NoisySplitError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except ArithmeticError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
