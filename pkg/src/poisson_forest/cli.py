"""``poisson-forest`` command line.

Exit codes: 0 success, 1 I/O failure, 2 usage or validation error, 3 an
experiment verdict failed.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .experiments import EXPERIMENTS, ExperimentConfig, Outcome, run_experiment
from .forest import build_forest, format_forest, parse_forest_links
from .point_process import (Boundary, PointFileError, ValidationError, Window, load_points,
                            palm_version, parse_points, sample_poisson, format_points)
from .succession import enumerate_line, format_succession
from .walks import eta_slice, format_slice, format_trajectory, trajectory

log = logging.getLogger("poisson_forest")

EXIT_IO = 1
EXIT_USAGE = 2
EXIT_FAILED = 3

VERSION_LINE = f"generator=poisson-forest {__version__}"


class UsageError(Exception):
    pass


def _time_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected t0:t1, got {text!r}") from None


def _extent(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a side or comma-separated sides, got {text!r}") from None


def _knob_value(text: str):
    parts = [p.strip() for p in text.split(",")]
    values = []
    for p in parts:
        for cast in (int, float):
            try:
                values.append(cast(p))
                break
            except ValueError:
                continue
        else:
            values.append(p)
    return tuple(values) if len(values) > 1 else values[0]


def _key_value(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip().replace("-", "_"), _knob_value(value.strip())


def read_config(path: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


# defaults are applied after the config file so that flags > config > defaults
DEFAULTS = {
    "sample": dict(d=2, boundary="periodic", seed=0, palm=False),
    "forest": dict(time_guard=0.0),
    "succession": dict(back=0, forward=0, time_guard=0.0),
    "walk": dict(time_guard=0.0),
    "experiment": dict(d=2, rate=1.0, boundary="periodic", seed=0, format="csv"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poisson-forest",
                                     description="Poisson forests, succession lines and coalescing walks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(p, needs_input=True):
        if needs_input:
            p.add_argument("-i", "--input", help="point file (or forest file)")
        p.add_argument("-o", "--output", help="output path, '-' for stdout")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int, help="parallel replicas (default: all cores)")
        p.add_argument("--config", help="flat key=value file; flags take precedence")
        p.add_argument("-v", "--verbose", action="count", default=0)

    p = sub.add_parser("sample", help="sample a Poisson point process")
    common(p, needs_input=False)
    p.add_argument("--d", type=int)
    p.add_argument("--rate", type=float)
    p.add_argument("--space", type=_extent, help="side, or comma-separated sides")
    p.add_argument("--time", type=_time_range, help="t0:t1")
    p.add_argument("--boundary", choices=[b.value for b in Boundary])
    p.add_argument("--palm", action="store_const", const=True, help="insert the origin with id 0")

    p = sub.add_parser("forest", help="build the forest of a point file")
    common(p)
    p.add_argument("--time-guard", type=float, help="flag points this close to the bottom of the window")

    p = sub.add_parser("succession", help="enumerate the succession line around an anchor")
    common(p)
    p.add_argument("--anchor", type=int)
    p.add_argument("--back", type=int)
    p.add_argument("--forward", type=int)
    p.add_argument("--time-guard", type=float)

    p = sub.add_parser("walk", help="walk trajectory or a time slice of all walkers")
    common(p)
    p.add_argument("--id", dest="walker", type=int, help="walker born at this point")
    p.add_argument("--t-max", type=float, help="trajectory horizon (default: top of window)")
    p.add_argument("--slice", type=float, help="positions of all walkers at this time")
    p.add_argument("--time-guard", type=float)

    p = sub.add_parser("experiment", help=f"run an experiment: {', '.join(EXPERIMENTS)}")
    common(p, needs_input=False)
    p.add_argument("name", metavar="NAME")
    p.add_argument("--d", type=int)
    p.add_argument("--rate", type=float)
    p.add_argument("--space", type=float)
    p.add_argument("--duration", type=float)
    p.add_argument("--boundary", choices=[b.value for b in Boundary])
    p.add_argument("--replicas", type=int)
    p.add_argument("--set", dest="knobs", action="append", type=_key_value, default=[],
                   metavar="KEY=VALUE", help="experiment knob, e.g. t_grid=250,500,1000")
    p.add_argument("--format", choices=["csv", "jsonl"])
    return parser


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def merge_config(parser: argparse.ArgumentParser, args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset flags from ``--config``, then from the defaults."""
    sub = _subparser(parser, args.command)
    types = {a.dest: a for a in sub._actions}
    knobs = dict(args.knobs) if hasattr(args, "knobs") else None
    if args.config:
        for key, raw in read_config(args.config).items():
            action = types.get(key)
            if action is None or key in ("config", "help"):
                if knobs is None or key in ("config", "help"):
                    raise UsageError(f"unknown config key {key!r}")
                if key not in knobs:
                    knobs[key] = _knob_value(raw)
                continue
            if key == "verbose" or getattr(args, key) is not None:
                continue
            if action.const is True:
                value = raw.lower() in ("1", "true", "yes")
            else:
                try:
                    value = action.type(raw) if action.type else raw
                except (argparse.ArgumentTypeError, ValueError) as exc:
                    raise UsageError(f"config key {key}: {exc}") from None
                if action.choices and value not in action.choices:
                    raise UsageError(f"config key {key}: {value!r} not in {list(action.choices)}")
            setattr(args, key, value)
    for key, value in {"output": "-", **DEFAULTS[args.command]}.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    if knobs is not None:
        args.knobs = knobs
    return args


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8", newline="\n")


def _read(path: str | None) -> str:
    if not path:
        raise UsageError("missing -i/--input")
    return Path(path).read_text(encoding="utf-8")


def _load_forest(path: str, time_guard: float):
    """Forest of a point file, or of the points behind a forest file."""
    text = _read(path)
    lines = text.split("\n", 2)
    if len(lines) > 1 and lines[1].startswith("# forest "):
        meta = {}
        for line in text.splitlines()[2:]:
            if not line.startswith("# "):
                break
            key, _, value = line[2:].partition("=")
            meta[key] = value
        source = meta.get("source")
        if source is None:
            raise PointFileError("forest file has no source line", 2)
        candidates = [Path(source), Path(path).parent / source]
        src = next((c for c in candidates if c.exists()), None)
        if src is None:
            raise FileNotFoundError(f"points behind the forest file not found: {source}")
        guard = float(meta.get("time_guard", time_guard))
        forest = build_forest(load_points(src), time_guard=guard)
        expected = parse_forest_links(text)
        if expected != parse_forest_links(format_forest(forest)):
            raise ValidationError(f"forest file {path} does not match the points in {source}")
        return forest, [f"source={source}", f"time_guard={guard!r}"]
    sample = parse_points(text)
    return build_forest(sample, time_guard=time_guard), [f"source={path}", f"time_guard={time_guard!r}"]


def cmd_sample(args) -> int:
    if args.rate is None:
        raise UsageError("missing --rate")
    if args.space is None or args.time is None:
        raise UsageError("missing --space or --time")
    k = args.d - 1
    extent = args.space * k if len(args.space) == 1 else args.space
    window = Window(args.d, tuple(extent), args.time[0], args.time[1], Boundary(args.boundary))
    sample = sample_poisson(args.rate, window, args.seed)
    if args.palm:
        sample = palm_version(sample)
    _write(args.output, format_points(sample, [VERSION_LINE]))
    return 0


def cmd_forest(args) -> int:
    forest, meta = _load_forest(args.input, args.time_guard)
    _write(args.output, format_forest(forest, [VERSION_LINE, *meta]))
    return 0


def cmd_succession(args) -> int:
    if args.anchor is None:
        raise UsageError("missing --anchor")
    forest, meta = _load_forest(args.input, args.time_guard)
    labels = enumerate_line(args.anchor, forest, args.back, args.forward)
    header = [VERSION_LINE, *meta, f"back={args.back} forward={args.forward}"]
    _write(args.output, format_succession(labels, forest, header))
    return 0


def cmd_walk(args) -> int:
    if (args.walker is None) == (args.slice is None):
        raise UsageError("give exactly one of --id or --slice")
    forest, meta = _load_forest(args.input, args.time_guard)
    sample = forest.sample
    head = [sample.header(), f"# {VERSION_LINE}", *(f"# {m}" for m in meta)]
    if args.walker is not None:
        t_max = sample.window.time_hi if args.t_max is None else args.t_max
        traj = trajectory(args.walker, forest, t_max)
        head.append(f"# walk id={args.walker} t_max={t_max!r} jumps={len(traj.jump_times)}")
        body = format_trajectory(args.walker, traj)
    else:
        cfg = eta_slice(forest, args.slice)
        head.append(f"# slice t={args.slice!r} walkers={cfg.walker_count}")
        body = format_slice(cfg)
    _write(args.output, "\n".join(head) + "\n" + body)
    return 0


def cmd_experiment(args) -> int:
    if args.name not in EXPERIMENTS:
        print(f"poisson-forest: unknown experiment {args.name!r}; available: "
              f"{', '.join(EXPERIMENTS)}", file=sys.stderr)
        return EXIT_USAGE
    cfg = ExperimentConfig(d=args.d, rate=args.rate, space=args.space, duration=args.duration,
                           boundary=Boundary(args.boundary), replicas=args.replicas, seed=args.seed,
                           knobs=dict(args.knobs))
    workers = args.workers if args.workers else (os.cpu_count() or 1)
    report = run_experiment(args.name, cfg, workers)
    report.params["version"] = __version__
    if args.format == "jsonl":
        text = report.to_jsonl()
    else:
        params = " ".join(f"{k}={_plain(v)}" for k, v in report.params.items())
        text = f"# experiment={report.name} {params}\n" + report.to_csv()
    _write(args.output, text)
    for line in report.summary_lines():
        log.info(line)
    log.info("%s: %s in %.1fs", report.name, report.outcome.value, report.runtime)
    return EXIT_FAILED if report.outcome is Outcome.FAILED else 0


def _plain(v) -> str:
    if isinstance(v, (list, tuple)):
        return ",".join(str(x) for x in v)
    return str(v)


COMMANDS = {"sample": cmd_sample, "forest": cmd_forest, "succession": cmd_succession,
            "walk": cmd_walk, "experiment": cmd_experiment}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    sub = _subparser(parser, args.command)
    try:
        args = merge_config(parser, args)
        return COMMANDS[args.command](args)
    except (UsageError, ValidationError) as exc:
        sub.print_usage(sys.stderr)
        print(f"poisson-forest {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PointFileError, OSError) as exc:
        print(f"poisson-forest {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
