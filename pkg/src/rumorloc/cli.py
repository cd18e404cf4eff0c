"""Command-line entry point: ``rumorloc recover`` and ``rumorloc localize``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

from .diffusion import load_cascade
from .errors import RumorLocError
from .experiments import (ExperimentConfig, build_networks, emit_csv, run_localization_experiment,
                          run_recovery_experiment, summarize, write_rows)

log = logging.getLogger("rumorloc")

LIST_FIELDS = {"sensor_pcts": float, "missing_rates": float, "methods": str}
PAIR_FIELDS = {"mean_range", "var_range"}
# flag spellings accepted as config-file keys
KEY_ALIASES = {"sensor_pct": "sensor_pcts", "missing": "missing_rates", "method": "methods"}


class UsageError(Exception):
    pass


def _split(text, cast):
    try:
        return [cast(p.strip()) for p in str(text).split(",") if p.strip()]
    except ValueError:
        raise UsageError(f"cannot parse list {text!r}") from None


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def coerce(key: str, value):
    """Convert a raw string to the type of ``ExperimentConfig.<key>``."""
    ftypes = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
    if key not in ftypes:
        raise UsageError(f"unknown setting {key!r}")
    if key in LIST_FIELDS:
        return value if isinstance(value, list) else _split(value, LIST_FIELDS[key])
    if key in PAIR_FIELDS:
        pair = value if isinstance(value, (list, tuple)) else _split(value, float)
        if len(pair) != 2:
            raise UsageError(f"{key} needs two values 'lo,hi'")
        return tuple(pair)
    if key == "network_params":
        return value if isinstance(value, dict) else parse_params(_split(value, str))
    t = ftypes[key]
    try:
        if t.startswith("bool"):
            return _bool(value)
        if t.startswith("int"):
            return None if str(value).lower() == "none" else int(value)
        if t.startswith("float"):
            return float(value)
    except ValueError:
        raise UsageError(f"bad value for {key}: {value!r}") from None
    return None if t.startswith("str | None") and str(value).lower() == "none" else str(value)


def parse_params(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"network parameter {item!r} is not key=value")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = int(v) if v.strip().lstrip("-").isdigit() else float(v)
        except ValueError:
            raise UsageError(f"network parameter {item!r} is not numeric") from None
    return out


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` comments and blank lines are ignored."""
    settings = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        key = KEY_ALIASES.get(key, key)
        settings[key] = coerce(key, value)
    return settings


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file; command-line flags override it")
    common.add_argument("--network", help="family (barabasi_albert, watts_strogatz, tree, two_clique) "
                                          "or an edge-list file")
    common.add_argument("--nodes", type=int)
    common.add_argument("--network-param", action="append", metavar="KEY=VALUE",
                        help="family parameter such as m=2, k=4, p=0.1 (repeatable)")
    common.add_argument("--networks", type=int, help="independent synthetic networks, trials round-robin")
    common.add_argument("--sensor-pct", help="comma list of sensor percentages of the node count")
    common.add_argument("--missing", help="comma list of missing rates in [0, 1]")
    common.add_argument("--mode", choices=("sporadic", "burst"))
    common.add_argument("--method", help="comma list from cs, dn, dn-renewal, none")
    common.add_argument("--basis", choices=("dct", "identity", "haar", "pca"))
    common.add_argument("--trials", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--k2", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--out", help="CSV path (default: standard output)")
    common.add_argument("--append", action="store_true", help="append rows to an existing CSV")
    common.add_argument("--timing", action="store_true", help="add a wall_time column (not reproducible)")
    common.add_argument("--summary", action="store_true", help="print per-cell means to standard error")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="rumorloc", description="Rumor source localization experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("recover", parents=[common], help="recovery error on masked observations")
    loc = sub.add_parser("localize", parents=[common], help="hop distance of the estimated source")
    loc.add_argument("--cascade", action="append", metavar="FILE",
                     help="localize a recorded cascade instead of simulating (repeatable)")
    return parser


def make_config(args) -> ExperimentConfig:
    settings = read_config(args.config) if args.config else {}
    flags = {
        "network": args.network, "nodes": args.nodes, "networks": args.networks,
        "sensor_pcts": args.sensor_pct, "missing_rates": args.missing, "mode": args.mode,
        "methods": args.method, "basis": args.basis, "trials": args.trials, "seed": args.seed,
        "k2": args.k2, "workers": args.workers, "out": args.out,
    }
    for key, value in flags.items():
        if value is not None:
            settings[key] = coerce(key, value)
    if args.network_param:
        settings["network_params"] = {**settings.get("network_params", {}), **parse_params(args.network_param)}
    try:
        return ExperimentConfig(**settings)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _print_summary(records):
    for m in summarize(records):
        mse = "-" if m.recovery_mse is None else f"{m.recovery_mse:.6g}"
        dist = "-" if m.source_distance is None else f"{m.source_distance:.4g}"
        print(f"{m.experiment} pct={m.sensor_pct:g} missing={m.missing_rate:g} method={m.method} "
              f"trials={m.trials} failed={m.failed} mse={mse} distance={dist}", file=sys.stderr)


def run(args) -> int:
    cfg = make_config(args)
    cascades = None
    if getattr(args, "cascade", None):
        cascades = []
        for path in args.cascade:
            try:
                with open(path) as fh:
                    c = load_cascade(fh)
            except OSError as exc:
                raise RumorLocError(f"cannot read cascade {path}: {exc}") from None
            for w in c.warnings:
                log.warning("%s: %s", path, w)
            cascades.append(c)

    networks = build_networks(cfg)
    if args.command == "recover":
        stream = run_recovery_experiment(cfg, networks)
    else:
        stream = run_localization_experiment(cfg, networks, cascades)

    kept = []

    def tee(rows):
        for r in rows:
            kept.append(r)
            yield r

    if cfg.out:
        emit_csv(tee(stream), cfg.out, append=args.append, timing=args.timing)
    else:
        write_rows(sys.stdout, tee(stream), args.timing)
    if args.summary:
        _print_summary(kept)
    failed = sum(r.status != "ok" for r in kept)
    if failed:
        log.warning("%d of %d trials failed; see the status column", failed, len(kept))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except BrokenPipeError:
        # reader went away (e.g. piped into head); stop quietly
        sys.stdout = open(os.devnull, "w")
        return 0
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"rumorloc: error: {exc}", file=sys.stderr)
        return 2
    except (RumorLocError, OSError, ValueError) as exc:
        print(f"rumorloc: fatal: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
