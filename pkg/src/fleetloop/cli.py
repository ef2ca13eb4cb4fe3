"""Command-line entry point: ``fleetloop {serve,simulate,replay,train,stats}``.

Exit codes: 0 success, 1 check failure or runtime error, 2 usage or
configuration error. Any option left unset on the command line is read from
``FLEETLOOP_<OPTION>`` (``--theta-y`` becomes ``FLEETLOOP_THETA_Y``).

The backend config is a JSON object::

    {"endpoint": "127.0.0.1:7878", "db": "situations.jsonl", "store": "params.json"}

Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from .conditions import BASIC, ConditionKey, all_conditions

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2
ENV_PREFIX = "FLEETLOOP_"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


# ---------------------------------------------------------------- config


def _backend_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    p = Path(path)
    try:
        with open(p, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must be a JSON object")
    unknown = set(data) - {"endpoint", "db", "store", "history"}
    if unknown:
        raise UsageError(f"config {path}: unknown keys {sorted(unknown)}")
    for key in ("db", "store", "history"):
        if key in data:
            data[key] = str((p.parent / data[key]).resolve())
    return data


def _open_backend(cfg: dict):
    from .backend import Backend, ParameterStore, SituationDatabase

    try:
        db = SituationDatabase(cfg.get("db"))
        store = ParameterStore(cfg.get("store"), cfg.get("history"))
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot open backend storage: {exc}") from None
    return Backend(db, store)


def _watchdog_config(base: dict, args, tick_rate: float):
    from .watchdog import WatchdogConfig

    fields = dict(base)
    fields["tick_rate"] = tick_rate
    for name in ("theta_x", "theta_y", "horizon"):
        value = getattr(args, name, None)
        if value is not None:
            fields[name] = value
    try:
        return WatchdogConfig(**fields)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad watchdog config: {exc}") from None


def _condition(text: str):
    if text.upper() == "BASIC":
        return BASIC
    try:
        return ConditionKey.parse(text)
    except (KeyError, ValueError):
        raise UsageError(f"bad condition key {text!r}, expected e.g. RAIN/HIGHWAY_120") from None


# ---------------------------------------------------------------- commands


def cmd_serve(args) -> int:
    from .backend import BackendServer, parse_endpoint

    cfg = _backend_config(args.config)
    endpoint = args.endpoint or cfg.get("endpoint", "127.0.0.1:7878")
    try:
        address = parse_endpoint(endpoint)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    backend = _open_backend(cfg)
    try:
        server = BackendServer(address, backend)
    except OSError as exc:
        raise UsageError(f"cannot bind {endpoint}: {exc}") from None

    def _stop(signum, frame):
        raise KeyboardInterrupt

    signal.signal(signal.SIGTERM, _stop)
    print(f"listening on {server.endpoint} ({len(backend.db)} records)", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .backend import BackendClient
    from .sim import BackendUnreachable, load_run_config, run_fleet, write_log

    if not args.scenario:
        raise UsageError("--scenario is required")
    if bool(args.endpoint) == bool(args.in_process):
        raise UsageError("give exactly one of --endpoint or --in-process")
    try:
        scenario, channel, wd = load_run_config(args.scenario)
    except (OSError, json.JSONDecodeError, TypeError, ValueError, KeyError) as exc:
        raise UsageError(f"bad scenario {args.scenario}: {exc}") from None
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    wd_cfg = _watchdog_config(wd, args, scenario.tick_rate)
    out = Path(args.out or "fleetloop-run")

    if args.in_process:
        backend = _open_backend(_backend_config(args.config))
    else:
        try:
            backend = BackendClient(args.endpoint)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        except OSError as exc:
            print(f"backend unreachable at {args.endpoint}: {exc}", file=sys.stderr)
            return EXIT_CHECK
    try:
        log = run_fleet(scenario, channel, backend, wd_cfg)
    except BackendUnreachable as exc:
        print(f"backend unreachable: {exc}", file=sys.stderr)
        return EXIT_CHECK
    finally:
        if hasattr(backend, "close"):
            backend.close()
    info = write_log(log, out)
    print(f"wrote {out}: {info['triggered']} triggered, {info['delivered']} delivered, "
          f"{info['dropped']} dropped")
    for name, c in info["conditions"].items():
        print(f"  {name:<22} expiries={c['expiries']:<7d} triggers={c['triggers']:<6d} "
              f"mean_e_x={c['mean_e_x']:.4f} mean_e_y={c['mean_e_y']:.4f}")
    return EXIT_OK


def cmd_replay(args) -> int:
    from .sim import IncompleteLog, diff_packages, read_log, replay
    from .watchdog import read_trigger_csv

    log_dir = Path(args.log_dir)
    try:
        log = read_log(log_dir)
        live = read_trigger_csv(log_dir / "triggered.csv")
    except FileNotFoundError as exc:
        print(f"incomplete log: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except KeyError as exc:
        print(f"triggered.csv: missing column {exc.args[0]}", file=sys.stderr)
        return EXIT_CHECK
    except ValueError as exc:
        print(f"unreadable log: {exc}", file=sys.stderr)
        return EXIT_CHECK
    logged = log.watchdog
    cfg = _watchdog_config(logged.to_dict(), args, logged.tick_rate)
    if cfg.horizon != logged.horizon or cfg.insert_every != logged.insert_every:
        print("note: horizon differs from the logged run; live samples are not comparable")
    elif cfg.theta_x >= logged.theta_x and cfg.theta_y >= logged.theta_y:
        # stricter thresholds select a subset of the logged triggers
        live = [r for r in live if r.e_x > cfg.theta_x or r.e_y > cfg.theta_y]
    else:
        print("note: thresholds looser than the logged run; extra oracle samples are expected")
    try:
        oracle = replay(log, cfg)
    except IncompleteLog as exc:
        print(f"incomplete log: {exc}", file=sys.stderr)
        return EXIT_CHECK
    diff = diff_packages(live, oracle)
    print(f"live {len(live)} samples, oracle {len(oracle)} samples "
          f"(theta_x={cfg.theta_x}, theta_y={cfg.theta_y}, horizon={cfg.horizon})")
    if diff.identical:
        print("identical")
        return EXIT_OK
    for label, keys in (("missing from live log", diff.missing), ("not confirmed by oracle", diff.extra),
                        ("value mismatch", diff.mismatched)):
        for vid, t, tid in keys:
            print(f"{label}: vehicle={vid} target={tid} timestamp={t!r}")
    return EXIT_CHECK


def cmd_train(args) -> int:
    from .backend import NotEnoughData, train_cycle

    if args.endpoint:
        raise UsageError("train works on the store and database files; pass --config")
    if not args.config:
        raise UsageError("--config is required")
    if bool(args.condition) == bool(args.all):
        raise UsageError("give exactly one of --condition or --all")
    cfg = _backend_config(args.config)
    if "db" not in cfg or "store" not in cfg:
        raise UsageError("config needs both 'db' and 'store' paths")
    backend = _open_backend(cfg)
    keys = all_conditions() if args.all else [_condition(args.condition)]
    print(f"{'condition':<22} {'records':>7} {'before':>9} {'after':>9}  result")
    for key in keys:
        name = "BASIC" if key is BASIC else str(key)
        try:
            report = train_cycle(backend.db, backend.store, key)
        except NotEnoughData as exc:
            print(f"{name:<22} {'':>7} {'':>9} {'':>9}  not enough data ({exc})")
            continue
        own = "BASIC" if key is BASIC else str(key)
        before = report.before.get(own, float("nan"))
        after = report.after.get(own, float("nan"))
        verdict = f"accepted v{report.candidate.version}" if report.accepted else "rejected"
        detail = f": {report.reason}" if report.reason else ""
        print(f"{name:<22} {report.n_records:>7d} {before:>9.4f} {after:>9.4f}  {verdict}{detail}")
    return EXIT_OK


def cmd_stats(args) -> int:
    from .stats import HistogramSpec, SchemaError, histogram, read_channel

    lo, hi = (args.range if args.range else (None, None))
    try:
        spec = HistogramSpec.for_channel(args.channel or "a_lat", args.bin_width or 0.5, lo, hi)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        values = read_channel(args.csv, spec.channel)
    except SchemaError as exc:
        print(f"{args.csv}: missing column {exc.args[0]}", file=sys.stderr)
        return EXIT_CHECK
    except (OSError, ValueError) as exc:
        print(f"{args.csv}: {exc}", file=sys.stderr)
        return EXIT_CHECK
    hist = histogram(values, spec)
    print(f"{spec.channel} histogram, {len(values)} rows, bin width {spec.bin_width}")
    print(f"{'bin_lo':>10} {'bin_hi':>10} {'count':>8}")
    for b_lo, b_hi, c in hist.rows():
        print(f"{b_lo:>10.4g} {b_hi:>10.4g} {c:>8d}")
    print(f"out of range: {hist.out_of_range}")
    if args.out:
        hist.write_csv(args.out)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fleetloop", description="Fleet-learning loop for vehicle motion prediction.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def thresholds(sp):
        sp.add_argument("--theta-x", type=float, help="longitudinal trigger threshold [m]")
        sp.add_argument("--theta-y", type=float, help="lateral trigger threshold [m]")
        sp.add_argument("--horizon", type=float, help="prediction horizon [s]")

    sp = sub.add_parser("serve", help="run the backend service")
    sp.add_argument("--config", help="backend JSON config")
    sp.add_argument("--endpoint", help="host:port to bind (overrides the config)")
    sp.set_defaults(func=cmd_serve)

    sp = sub.add_parser("simulate", help="run a fleet scenario and write CSV logs")
    sp.add_argument("--scenario", help="scenario JSON file")
    sp.add_argument("--endpoint", help="backend host:port")
    sp.add_argument("--in-process", action="store_true", help="use an in-process backend")
    sp.add_argument("--config", help="backend JSON config for --in-process storage")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--seed", type=int, help="override the scenario seed")
    thresholds(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("replay", help="recompute triggers from a log and diff them")
    sp.add_argument("log_dir")
    thresholds(sp)
    sp.set_defaults(func=cmd_replay)

    sp = sub.add_parser("train", help="fit and gate condition parameter sets")
    sp.add_argument("--config", help="backend JSON config with db and store paths")
    sp.add_argument("--endpoint", help=argparse.SUPPRESS)
    sp.add_argument("--condition", help="condition key such as RAIN/HIGHWAY_120, or BASIC")
    sp.add_argument("--all", action="store_true", help="every condition key")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("stats", help="histogram one channel of a triggered-sample CSV")
    sp.add_argument("csv")
    sp.add_argument("--channel", choices=["a_lon", "a_lat", "e_x", "e_y"])
    sp.add_argument("--bin-width", type=float)
    sp.add_argument("--range", type=float, nargs=2, metavar=("MIN", "MAX"))
    sp.add_argument("--out", help="write bin_lo,bin_hi,count CSV here")
    sp.set_defaults(func=cmd_stats)
    return p


def _apply_env(parser: argparse.ArgumentParser, args: argparse.Namespace, environ) -> None:
    """Fill options left unset on the command line from FLEETLOOP_* variables."""
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    chosen = sub.choices[args.command]
    for action in chosen._actions:
        if not action.option_strings or action.dest == "help":
            continue
        env = ENV_PREFIX + action.dest.upper()
        if env not in environ:
            continue
        current = getattr(args, action.dest, None)
        raw = environ[env]
        if isinstance(action, argparse._StoreTrueAction):
            if not current:
                setattr(args, action.dest, raw.strip().lower() in ("1", "true", "yes", "on"))
            continue
        if current is not None:
            continue
        try:
            if action.nargs:
                value = [action.type(v) if action.type else v for v in raw.split()]
            else:
                value = action.type(raw) if action.type else raw
        except ValueError:
            raise UsageError(f"{env}={raw!r} is not a valid value") from None
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"{env}={raw!r} is not one of {list(action.choices)}")
        setattr(args, action.dest, value)


def main(argv=None, environ=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _apply_env(parser, args, os.environ if environ is None else environ)
        return args.func(args)
    except UsageError as exc:
        print(f"fleetloop {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
