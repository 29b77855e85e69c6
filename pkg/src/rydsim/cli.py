"""Command line entry point.

    rydsim <preset|run> --config FILE --out DIR [--seed N] [--threads K]

``run`` requires a config file; a preset name loads its template and
overlays the config file on top when one is given.  ``rydsim presets``
lists the available pipelines.  Exit codes: 0 success, 2 invalid
configuration (message names the field), 3 numerical failure.

RYDSIM_THREADS sets the worker count when --threads is absent.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .propagate import NumericalError
from .runner import ConfigError, merge_config, preset_config, presets, run


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rydsim",
        description="Rydberg-array Ising dynamics pipelines")
    p.add_argument("target", help="preset name, 'run', or 'presets'")
    p.add_argument("--config", help="JSON config file (required for 'run')")
    p.add_argument("--out", help="output directory (required except 'presets')")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int,
                   help="worker count (default: RYDSIM_THREADS or 1)")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.target == "presets":
            for name in presets():
                print(name)
            return 0

        if args.target == "run":
            if not args.config:
                raise ConfigError("config: 'run' needs --config")
            base = {}
        else:
            base = preset_config(args.target)

        overlay = {}
        if args.config:
            try:
                with open(args.config) as fh:
                    overlay = json.load(fh)
            except OSError as exc:
                raise ConfigError(f"config: cannot read {args.config}: {exc}")
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config: invalid JSON: {exc}")
        cfg = merge_config(base, overlay)

        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.threads is not None:
            cfg["threads"] = args.threads
        elif os.environ.get("RYDSIM_THREADS"):
            cfg["threads"] = int(os.environ["RYDSIM_THREADS"])

        if not args.out:
            raise ConfigError("out: an output directory is required")
        summary = run(cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
