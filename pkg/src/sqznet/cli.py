"""Command-line front end.

Exit codes: 0 success, 1 netlist/configuration/topology errors, 2 I/O
errors, 3 physics errors (OPA at or above threshold, invalid spectra).
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, TextIO

import numpy as np

from .analysis import balance_input_splitter, optical_suppression
from .components import LEAKAGE_CONVENTIONS, ParameterError, ThresholdError
from .core import ConsistencyError, DomainError, FrequencyGrid, SpectrumResult, SqznetError
from .netlist import NetlistError, UNITS, load
from .network import FREQ, Network, NetworkError, default_threads, evaluate, sweep
from .scenarios import SCENARIOS, scenario

log = logging.getLogger("sqznet")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_PHYSICS = 0, 1, 2, 3
CSV_HEADER = "# sqznet v1\nfrequency_hz,v_plus,v_minus,v_theta,db_plus,db_minus\n"
DEFAULT_FMIN, DEFAULT_FMAX, DEFAULT_POINTS = 220e3, 2.1e6, 400


class ConfigError(SqznetError):
    pass


@dataclass
class RunConfig:
    scenario: Optional[str] = None
    input: Optional[Path] = None
    fmin: float = DEFAULT_FMIN
    fmax: float = DEFAULT_FMAX
    points: int = DEFAULT_POINTS
    spacing: str = "log"
    output: Optional[Path] = None
    overrides: dict = field(default_factory=dict)
    convention: str = "one-minus-v"
    threads: int = 1
    verbosity: int = 0

    def validate(self):
        if not (self.fmin > 0):
            raise ConfigError(f"--fmin must be > 0, got {self.fmin:g}")
        if not (self.fmin < self.fmax):
            raise ConfigError(f"--fmin ({self.fmin:g}) must be smaller than --fmax ({self.fmax:g})")
        if self.points < 2:
            raise ConfigError("--points must be at least 2")
        if self.threads < 1:
            raise ConfigError("--threads must be >= 1")

    def grid(self) -> FrequencyGrid:
        self.validate()
        make = FrequencyGrid.log_hz if self.spacing == "log" else FrequencyGrid.linear_hz
        return make(self.fmin, self.fmax, self.points)


# ---------------------------------------------------------------------------
# Value parsing
# ---------------------------------------------------------------------------


def parse_quantity(text: str) -> tuple:
    """``"900 kHz"`` -> ``(900000.0, "kHz")``; ``"-0.5"`` -> ``(-0.5, None)``."""
    s = text.strip()
    unit = None
    for u in sorted(UNITS, key=len, reverse=True):
        if s.endswith(u):
            unit, s = u, s[: -len(u)].strip()
            break
    try:
        value = float(s)
    except ValueError:
        raise ConfigError(f"cannot read a number from '{text}'") from None
    if not math.isfinite(value):
        raise ConfigError(f"'{text}' is not finite")
    return value * (UNITS[unit] if unit else 1.0), unit


def parse_hz(text: str) -> float:
    return parse_quantity(text)[0]


def _override_value(net: Network, key: str, text: str) -> float:
    cname, _, pkey = key.partition(".")
    try:
        spec = net.component(cname).spec.param(pkey)
    except NetworkError:
        spec = None
    if spec is None:
        raise ConfigError(f"unknown override key '{key}'")
    value, unit = parse_quantity(text)
    if spec.unit == FREQ:
        return value * 2 * math.pi
    if unit is not None:
        raise ConfigError(f"'{key}' is not a frequency; unit '{unit}' not allowed")
    return value


def parse_overrides(net: Network, items) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got '{item}'")
        key = key.strip()
        out[key] = _override_value(net, key, value)
    return out


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def load_network(args) -> Network:
    if args.scenario:
        if args.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario '{args.scenario}' "
                              f"(available: {', '.join(SCENARIOS)})")
        net = scenario(args.scenario)
    else:
        data = Path(args.input).read_bytes()
        diags: list = []
        net = load(data, diags)
        for d in diags:
            print(f"{args.input}:{d}", file=sys.stderr)
    overrides = parse_overrides(net, args.set)
    if overrides:
        try:
            net = net.with_overrides(overrides)
        except KeyError as exc:
            raise ConfigError(exc.args[0]) from None
    return net


def config_from_args(args, net: Network | None = None) -> RunConfig:
    sw = net.sweep if net is not None else None
    cfg = RunConfig(
        scenario=args.scenario,
        input=Path(args.input) if args.input else None,
        fmin=sw.fmin if sw else DEFAULT_FMIN,
        fmax=sw.fmax if sw else DEFAULT_FMAX,
        points=sw.points if sw else DEFAULT_POINTS,
        spacing=sw.spacing if sw else "log",
        output=Path(args.output) if getattr(args, "output", None) else None,
        convention=args.leakage_convention,
        threads=args.threads or default_threads(),
        verbosity=args.verbose,
    )
    if args.fmin is not None:
        cfg.fmin = parse_hz(args.fmin)
    if args.fmax is not None:
        cfg.fmax = parse_hz(args.fmax)
    if args.points is not None:
        cfg.points = args.points
    if args.spacing is not None:
        cfg.spacing = args.spacing
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _g(x: float) -> str:
    return f"{x:.9g}"


def write_csv(result: SpectrumResult, fh: TextIO) -> None:
    fh.write(CSV_HEADER)
    hz = result.grid.hz
    dbp, dbm = result.db_plus, result.db_minus
    vt = result.v_theta
    for i in range(len(hz)):
        theta = "" if vt is None else _g(vt[i])
        fh.write(f"{_g(hz[i])},{_g(result.v_plus[i])},{_g(result.v_minus[i])},{theta},"
                 f"{_g(dbp[i])},{_g(dbm[i])}\n")


def squeezing_floor(freqs_hz: np.ndarray, v: np.ndarray) -> Optional[float]:
    """Lowest grid frequency above which every point has V < 1."""
    below = v < 1.0
    if not below[-1]:
        return None
    i = len(v) - 1
    while i > 0 and below[i - 1]:
        i -= 1
    return float(freqs_hz[i])


def summary_line(name: str, res: SpectrumResult) -> str:
    hz = res.grid.hz
    db = res.db_plus
    i = int(np.argmin(db))
    floor = squeezing_floor(hz, res.v_plus)
    floor_txt = "none" if floor is None else f"{floor:.6g} Hz"
    return (f"{name}: min {db[i]:.3f} dB at {hz[i]:.6g} Hz; squeezing floor {floor_txt}")


def _detector_path(base: Path, det: str) -> Path:
    return base.with_name(f"{base.stem}.{det}{base.suffix}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_scenarios(args, out: TextIO) -> int:
    for sid, info in SCENARIOS.items():
        print(f"{sid}\t{info.description}\t[{info.reproduces}]", file=out)
    return EXIT_OK


def cmd_run(args, out: TextIO) -> int:
    net = load_network(args)
    cfg = config_from_args(args, net)
    grid = cfg.grid()
    results = evaluate(net, grid, cfg.convention, cfg.threads)
    dets = list(net.detectors)
    if args.detector:
        if args.detector not in results:
            raise ConfigError(f"unknown detector '{args.detector}'")
        dets = [args.detector]
    report = out
    if cfg.output is None:
        report = sys.stderr
        for d in dets:
            if len(dets) > 1:
                out.write(f"# detector {d}\n")
            write_csv(results[d], out)
    else:
        for d in dets:
            path = cfg.output if len(dets) == 1 else _detector_path(cfg.output, d)
            with open(path, "w", newline="\n", encoding="utf-8") as fh:
                write_csv(results[d], fh)
            log.info("wrote %s", path)
    for d in dets:
        print(summary_line(d, results[d]), file=report)
    return EXIT_OK


def cmd_balance(args, out: TextIO) -> int:
    net = load_network(args)
    cfg = config_from_args(args, net)
    grid = cfg.grid()
    target_hz = parse_hz(args.target_freq)
    if target_hz < 0:
        raise ConfigError("--target-freq must be >= 0")
    res = balance_input_splitter(net, 2 * math.pi * target_hz, args.detector, grid,
                                 convention=cfg.convention)
    print(f"splitter {res.splitter}, detector {res.detector}", file=out)
    print(f"R* = {res.ratio:.6g}", file=out)
    print(f"residual leakage coefficient = {res.residual:.3e}", file=out)
    print(f"leakage reduction vs R={res.reference_ratio:g} at {target_hz:g} Hz: "
          f"{res.reduction_db:.1f} dB", file=out)
    if res.bandwidth_hz is None:
        msg = "suppression >= 40 dB: not reached on the grid"
        if res.suppression_db is not None and np.isfinite(res.suppression_db).any():
            j = int(np.nanargmax(np.where(np.isfinite(res.suppression_db), res.suppression_db, np.nan)))
            msg += f" (best {res.suppression_db[j]:.1f} dB at {res.grid_hz[j]:.6g} Hz)"
        print(msg, file=out)
    else:
        lo, hi = res.bandwidth_hz
        print(f"suppression >= 40 dB from {lo:.6g} Hz to {hi:.6g} Hz", file=out)
    arm = next((e.dst for e in sorted(net.edges) if e.src == res.splitter and e.src_port == "o1"), None)
    if arm is not None and "out" in net.component(arm).spec.outputs:
        balanced = net.with_overrides({f"{res.splitter}.ratio": res.ratio})
        sup = optical_suppression(balanced, [res.omega_target], res.detector, (arm, "out"),
                                  cfg.convention)[0]
        print(f"optical suppression ({cfg.convention}): {sup:.2f} dB", file=out)
    return EXIT_OK


def cmd_sweep(args, out: TextIO) -> int:
    net = load_network(args)
    cfg = config_from_args(args, net)
    grid = cfg.grid()
    values = [_override_value(net, args.param, v) for v in args.values.split(",") if v.strip()]
    try:
        runs = sweep(net, args.param, values, grid, cfg.convention, cfg.threads)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from None
    outdir = Path(args.output_dir) if args.output_dir else None
    if outdir is not None:
        outdir.mkdir(parents=True, exist_ok=True)
    print("index,value,detector,min_db,min_freq_hz,squeezing_floor_hz", file=out)
    for i, (value, results) in enumerate(zip(values, runs)):
        for d, res in results.items():
            hz, db = res.grid.hz, res.db_plus
            j = int(np.argmin(db))
            floor = squeezing_floor(hz, res.v_plus)
            print(f"{i},{_g(value)},{d},{_g(db[j])},{_g(hz[j])},{'' if floor is None else _g(floor)}",
                  file=out)
            if outdir is not None:
                with open(outdir / f"sweep_{i:03d}.{d}.csv", "w", newline="\n",
                          encoding="utf-8") as fh:
                    write_csv(res, fh)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, grid: bool = True):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", metavar="ID", help="built-in scenario id")
    src.add_argument("--input", metavar="FILE", help="netlist file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="parameter override, e.g. OPA1.upsilon_rate=-3e7 (repeatable)")
    p.add_argument("--fmin", metavar="HZ", help="lowest frequency (Hz, units allowed)")
    p.add_argument("--fmax", metavar="HZ", help="highest frequency (Hz, units allowed)")
    p.add_argument("--points", type=int, metavar="N")
    sp = p.add_mutually_exclusive_group()
    sp.add_argument("--log", dest="spacing", action="store_const", const="log")
    sp.add_argument("--lin", dest="spacing", action="store_const", const="lin")
    p.set_defaults(spacing=None)
    p.add_argument("--leakage-convention", choices=LEAKAGE_CONVENTIONS, default="one-minus-v")
    p.add_argument("--threads", type=int, metavar="N",
                   help="worker threads (default: number of CPUs)")
    p.add_argument("--detector", metavar="NAME")
    p.add_argument("-v", "--verbose", action="count", default=0)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sqznet", description="Quadrature noise spectra of linear "
                                                "quantum-optical networks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="evaluate detector spectra and write CSV")
    _common(p)
    p.add_argument("--output", metavar="FILE")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("balance", help="find the input splitter ratio that nulls laser noise")
    _common(p)
    p.add_argument("--target-freq", default="0", metavar="HZ")
    p.set_defaults(func=cmd_balance)

    p = sub.add_parser("sweep", help="evaluate once per value of one parameter")
    _common(p)
    p.add_argument("--param", required=True, metavar="COMPONENT.KEY")
    p.add_argument("--values", required=True, metavar="V1,V2,...")
    p.add_argument("--output-dir", metavar="DIR")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("scenarios", help="list built-in scenarios")
    p.set_defaults(func=cmd_scenarios)
    return parser


def main(argv=None, out: TextIO | None = None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * getattr(args, "verbose", 0),
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args, out)
    except NetlistError as exc:
        for d in exc.diagnostics:
            print(f"{getattr(args, 'input', '') or '<netlist>'}:{d}", file=sys.stderr)
        return EXIT_CONFIG
    except (ThresholdError, ConsistencyError, DomainError) as exc:
        print(f"sqznet: physics error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except (ConfigError, NetworkError, ParameterError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"sqznet: error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"sqznet: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
