"""Command-line interface.

Subcommands:
  schedule     build a delivery schedule and print it (optionally validated)
  solve        sample a channel, solve one slot's beamforming problem
  experiment   run a paired Monte Carlo sweep and write the summary CSV
  decode-demo  end-to-end placement/encode/decode check on random payloads

`experiment` accepts a config file of `key = value` lines (same keys as the
flags, '#' comments allowed); explicit flags override file values.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .beamforming import ScaSettings, build_slot_problem, sca_solve, write_trace
from .channel import CellModel, dump_channel, sample_channel, trial_rng
from .coded import ConfigurationError, SystemConfig, build_message_set
from .experiment import (ExperimentSpec, decode_demo, parse_scheme, run_experiment,
                         write_csv)
from .scheduling import format_schedule, validate_schedule


def _add_system_args(p: argparse.ArgumentParser):
    p.add_argument("--files", type=int, required=True, help="library size N")
    p.add_argument("--users", type=int, required=True, help="number of users K")
    p.add_argument("--cache", type=int, required=True, help="cache size M in files")
    p.add_argument("--antennas", type=int, default=1, help="transmit antennas")
    p.add_argument("--rate", type=float, default=1.0, help="per-file rate R in bits/s/Hz")


def _add_cell_args(p: argparse.ArgumentParser):
    p.add_argument("--radius-km", type=float, default=0.5)
    p.add_argument("--min-distance-km", type=float, default=0.01)
    p.add_argument("--noise-dbw", type=float, default=-134.0)
    p.add_argument("--amp-exponent", type=float, default=10.0,
                   help="path loss amplitude exponent (default 10; 20 is the conventional dB-to-amplitude map)")


def _system_config(args) -> SystemConfig:
    return SystemConfig(num_files=args.files, num_users=args.users,
                        cache_size=args.cache, num_antennas=args.antennas,
                        rate=args.rate,
                        noise_power_w=10.0 ** (getattr(args, "noise_dbw", -134.0) / 10.0))


def _cell_model(args) -> CellModel:
    return CellModel(radius_km=args.radius_km, min_distance_km=args.min_distance_km,
                     noise_power_dbw=args.noise_dbw,
                     pathloss_amplitude_exponent=args.amp_exponent)


def _build_schedule(args, cfg: SystemConfig):
    scheme = parse_scheme(args.scheme)
    return scheme.build(cfg, args.blocklengths, decode_limit=None)


def _cmd_schedule(args) -> int:
    cfg = _system_config(args)
    sched = _build_schedule(args, cfg)
    print(format_schedule(sched))
    if args.validate:
        report = validate_schedule(sched, build_message_set(cfg), cfg.per_message_rate)
        print(f"valid: slots={report.num_slots}"
              + (f" lower_bound={report.min_slots}" if report.min_slots else "")
              + f" max_decode={report.max_decode_count} multiplicity={report.message_multiplicity}")
    return 0


def _cmd_solve(args) -> int:
    cfg = _system_config(args)
    cell = _cell_model(args)
    sched = _build_schedule(args, cfg)
    if not 1 <= args.slot <= sched.num_slots:
        raise ValueError(f"slot {args.slot} out of range 1..{sched.num_slots}")
    slot = sched.slots[args.slot - 1]
    chan = sample_channel(cfg, cell, trial_rng(args.seed, args.trial))
    if args.dump_channel:
        dump_channel(chan, args.dump_channel)
    prob = build_slot_problem(slot, chan, cfg.noise_vector())
    sol = sca_solve(prob, ScaSettings())
    if args.trace:
        write_trace(sol.trace, args.trace)
    print(f"slot {args.slot}/{sched.num_slots}: messages={len(slot.messages)} "
          f"constraints={len(prob.constraints)}")
    print(f"status={sol.status} iterations={sol.iterations}")
    print(f"power_w={sol.power_w:.6e} ({10 * np.log10(sol.power_w):.2f} dBW)"
          if sol.power_w > 0 else f"power_w={sol.power_w:.6e}")
    print(f"min_margin={sol.min_margin:.3e} bits/s/Hz over {len(prob.constraints)} constraints")
    return 0 if sol.converged else 1


def _parse_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ValueError(f"{path}:{line_no}: expected key = value, got {line!r}")
            key, value = text.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


_EXPERIMENT_KEYS = {
    "files": int, "users": int, "cache": int, "antennas": int, "rate": float,
    "radius_km": float, "min_distance_km": float, "noise_dbw": float,
    "amp_exponent": float, "schemes": str, "sweep": str, "values": str,
    "trials": int, "seed": int, "blocklengths": str, "workers": int, "out": str,
}


def _cmd_experiment(args) -> int:
    if args.config:
        overrides = {k: v for k, v in vars(args).items() if v is not None}
        file_values = _parse_config_file(args.config)
        for key, raw in file_values.items():
            if key not in _EXPERIMENT_KEYS:
                raise ValueError(f"unknown config key {key!r}")
            if key not in overrides:
                setattr(args, key, _EXPERIMENT_KEYS[key](raw))
    missing = [k for k in ("files", "users", "cache") if getattr(args, k) is None]
    if missing:
        raise ValueError(f"missing required settings: {', '.join(missing)}")
    args.antennas = args.antennas if args.antennas is not None else 1
    args.rate = args.rate if args.rate is not None else 1.0
    for key, default in (("radius_km", 0.5), ("min_distance_km", 0.01),
                         ("noise_dbw", -134.0), ("amp_exponent", 10.0),
                         ("trials", 100), ("seed", 0), ("workers", 1),
                         ("blocklengths", "proportional"), ("sweep", "rate"),
                         ("schemes", "fs")):
        if getattr(args, key) is None:
            setattr(args, key, default)
    cfg = _system_config(args)
    cell = _cell_model(args)
    schemes = tuple(parse_scheme(tok) for tok in args.schemes.split(","))
    values = tuple(float(v) for v in args.values.split(",")) if args.values else ()
    spec = ExperimentSpec(config=cfg, cell=cell, schemes=schemes,
                          sweep_parameter=args.sweep, sweep_values=values,
                          trials=args.trials, master_seed=args.seed,
                          blocklength_mode=args.blocklengths)
    progress = None
    if args.progress:
        def progress(done, total):
            print(f"trial {done}/{total}", file=sys.stderr, flush=True)
    result = run_experiment(spec, workers=args.workers, progress=progress)
    if args.out:
        write_csv(result, args.out)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(result.to_csv())
    return 0


def _cmd_decode_demo(args) -> int:
    cfg = SystemConfig(num_files=args.files, num_users=args.users, cache_size=args.cache)
    demands = tuple(int(v) for v in args.demands.split(",")) if args.demands else None
    report = decode_demo(cfg, demands=demands, file_bytes=args.file_bytes, seed=args.seed)
    print(report.format())
    return 0 if report.all_ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cachebeam", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("schedule", help="build and print a delivery schedule")
    _add_system_args(p)
    p.add_argument("--scheme", default="greedy:1", help="fs | greedy:<s> | grouped:<g>")
    p.add_argument("--blocklengths", choices=("proportional", "equal"), default="proportional")
    p.add_argument("--validate", action="store_true", help="run invariant checks and print a summary")
    p.set_defaults(func=_cmd_schedule)

    p = sub.add_parser("solve", help="solve one slot's power minimization on a sampled channel")
    _add_system_args(p)
    _add_cell_args(p)
    p.add_argument("--scheme", default="fs", help="fs | greedy:<s> | grouped:<g>")
    p.add_argument("--blocklengths", choices=("proportional", "equal"), default="proportional")
    p.add_argument("--slot", type=int, default=1, help="1-based slot index within the schedule")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--trial", type=int, default=0, help="trial index within the seed's stream")
    p.add_argument("--trace", help="write per-iteration SCA trace CSV here")
    p.add_argument("--dump-channel", help="write the sampled channel as text here")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("experiment", help="run a Monte Carlo sweep and emit summary CSV")
    p.add_argument("--config", help="key = value file; flags override")
    p.add_argument("--files", type=int)
    p.add_argument("--users", type=int)
    p.add_argument("--cache", type=int)
    p.add_argument("--antennas", type=int)
    p.add_argument("--rate", type=float)
    p.add_argument("--radius-km", type=float, dest="radius_km")
    p.add_argument("--min-distance-km", type=float, dest="min_distance_km")
    p.add_argument("--noise-dbw", type=float, dest="noise_dbw")
    p.add_argument("--amp-exponent", type=float, dest="amp_exponent")
    p.add_argument("--schemes", help="comma list: fs,greedy:2,grouped:3 (default fs)")
    p.add_argument("--sweep", choices=("rate", "decode_limit"))
    p.add_argument("--values", help="comma list of sweep values")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--blocklengths", choices=("proportional", "equal"))
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("--progress", action="store_true")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("decode-demo", help="verify placement/encode/decode end to end")
    p.add_argument("--files", type=int, required=True)
    p.add_argument("--users", type=int, required=True)
    p.add_argument("--cache", type=int, required=True)
    p.add_argument("--demands", help="comma list of demanded file indices (default round-robin)")
    p.add_argument("--file-bytes", type=int, default=1200, dest="file_bytes")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_decode_demo)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
