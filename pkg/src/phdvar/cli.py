"""Command line experiment runner.

Subcommands: simulate, filter, sweep-pd, resolve, oracle-check, bench.
Exit codes: 0 success, 1 configuration error, 2 tolerance breach
(oracle-check), 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from .core import count_in_region, fov_region
from .experiments import (
    ConfigError,
    ExperimentConfig,
    aggregate_rows,
    detect_resolution_dip,
    run_benchmark,
    run_filter_experiment,
    run_oracle_check,
    run_resolution,
    write_agg_csv,
    write_rows_csv,
    _sibling_path,
)
from .simulation import generate_measurements, generate_truth

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_TOLERANCE = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    """Argument errors surface as ConfigError so they exit with code 1."""

    def error(self, message):
        raise ConfigError(message)


def _parse_seeds(text: str) -> tuple[int, ...]:
    """'5' means seeds 0..4; '3,7,9' means exactly those."""
    if "," in text:
        return tuple(int(s) for s in text.split(",") if s != "")
    return tuple(range(int(text)))


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(s) for s in text.split(",") if s != "")


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if getattr(args, "filter", None):
        overrides["filter"] = args.filter
    if getattr(args, "seeds", None):
        overrides["seeds"] = _parse_seeds(args.seeds)
    if getattr(args, "pd", None):
        overrides["pd"] = _parse_floats(args.pd)
    if getattr(args, "out", None):
        overrides["out"] = args.out
    if getattr(args, "sensor", None):
        overrides["sensor"] = args.sensor
    if getattr(args, "nmax", None) is not None:
        overrides["n_max"] = args.nmax
    if getattr(args, "particles_per_target", None) is not None:
        overrides["particles_per_target"] = args.particles_per_target
    if getattr(args, "json", False):
        overrides["json_mirror"] = True
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg


def _add_common(p):
    p.add_argument("--config", metavar="PATH", help="JSON config file")
    p.add_argument("--filter", choices=("phd", "cphd"))
    p.add_argument("--seeds", metavar="N|LIST", help="seed count or comma list")
    p.add_argument("--pd", metavar="LIST", help="detection probabilities, comma separated")
    p.add_argument("--out", metavar="PATH", help="output CSV path")
    p.add_argument("--sensor", choices=("superior", "inferior"))
    p.add_argument("--nmax", type=int, metavar="N")
    p.add_argument("--particles-per-target", dest="particles_per_target", type=int, metavar="N")
    p.add_argument("--json", action="store_true", help="also write a JSON mirror")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="phdvar", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write ground truth and measurements as CSV")
    _add_common(p)

    p = sub.add_parser("filter", help="run the filter over the scenario")
    _add_common(p)

    p = sub.add_parser("sweep-pd", help="run the filter for several detection probabilities")
    _add_common(p)

    p = sub.add_parser("resolve", help="variance over growing discs around a track")
    _add_common(p)
    p.add_argument("--times", default="51,55,59", metavar="LIST")
    p.add_argument("--radius-max", dest="radius_max", type=int, default=200)
    p.add_argument("--track", type=int, default=0, help="track index (0-based)")

    p = sub.add_parser("oracle-check", help="compare the filters to exact enumeration")
    _add_common(p)
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--check-seed", dest="check_seed", type=int, default=20140101)

    p = sub.add_parser("bench", help="measure update cost vs measurement count")
    _add_common(p)
    p.add_argument("--m-values", dest="m_values", default="8,16,32,64", metavar="LIST")
    p.add_argument("--repeats", type=int, default=7)
    return parser


def _cmd_simulate(args) -> int:
    cfg = _load_config(args)
    scenario = cfg.scenario(cfg.pd[0])
    seed = cfg.seeds[0]
    ss = np.random.SeedSequence(seed)
    truth_rng, meas_rng, _ = (np.random.default_rng(s) for s in ss.spawn(3))
    configs = generate_truth(scenario, truth_rng, cfg.process_noise_truth)
    lines = ["kind,t,idx,x,y,vx,vy,range,bearing"]
    for t in range(1, scenario.n_steps + 1):
        for i, s in enumerate(configs[t]):
            lines.append(f"truth,{t},{i},{s.x:.12g},{s.y:.12g},{s.vx:.12g},{s.vy:.12g},,")
        for i, z in enumerate(generate_measurements(configs[t], scenario, meas_rng)):
            lines.append(f"meas,{t},{i},,,,,{z.range:.12g},{z.bearing:.12g}")
    text = "\n".join(lines) + "\n"
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {cfg.out} ({len(lines) - 1} rows, seed {seed})")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_filter(args) -> int:
    cfg = _load_config(args)
    rows, agg = run_filter_experiment(cfg)
    print(f"{len(rows)} rows, {len(agg)} aggregate rows"
          + (f" -> {cfg.out}" if cfg.out else ""))
    if not cfg.out:
        for row in agg[:10]:
            print(row)
    return EXIT_OK


def _cmd_sweep_pd(args) -> int:
    cfg = _load_config(args)
    if len(cfg.pd) == 1 and not getattr(args, "pd", None):
        cfg = replace(cfg, pd=(0.95, 0.90, 0.85))
    rows, agg = run_filter_experiment(cfg)
    for p_d in cfg.pd:
        vals = [r["var"] for r in rows if r["pd"] == p_d]
        print(f"pd={p_d:.2f}: time-averaged variance {np.mean(vals):.4f} over {len(vals)} rows")
    if cfg.out:
        print(f"wrote {cfg.out}")
    return EXIT_OK


def _cmd_resolve(args) -> int:
    cfg = _load_config(args)
    times = tuple(int(t) for t in args.times.split(","))
    radii = tuple(range(1, args.radius_max + 1))
    rows = []
    for run, seed in enumerate(cfg.seeds):
        curves, _ = run_resolution(cfg, seed, times=times, radii=radii, track=args.track)
        for t in times:
            radii_arr, means, variances = curves[t]
            dip = detect_resolution_dip(radii_arr, means, variances)
            print(f"seed {seed} t={t}: isolating dip {'found' if dip else 'absent'}")
            for r, mu, var in zip(radii_arr, means, variances):
                rows.append(dict(run=run, seed=seed, t=t, filter=cfg.filter,
                                 region=f"track{args.track}_r{r:g}", pd=cfg.pd[0],
                                 mean=mu, var=var, true_count=-1))
    if cfg.out:
        write_rows_csv(cfg.out, rows)
        write_agg_csv(_sibling_path(cfg.out, "agg"), aggregate_rows(rows))
        print(f"wrote {cfg.out}")
    return EXIT_OK


def _cmd_oracle_check(args) -> int:
    cfg = _load_config(args)  # validates config early; check itself is self-contained
    report = run_oracle_check(instances=args.instances, seed=args.check_seed)
    print(f"{report.instances} instances in {report.elapsed:.1f}s")
    print(f"max CPHD deviation      {report.max_dev_cphd:.3e} (tol {report.tol_cphd:g})")
    print(f"max PHD deviation       {report.max_dev_phd:.3e} (tol {report.tol_phd:g})")
    print(f"max reduction deviation {report.max_dev_reduction:.3e} (tol {report.tol_phd:g})")
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            json.dump({
                "instances": report.instances,
                "max_dev_cphd": report.max_dev_cphd,
                "max_dev_phd": report.max_dev_phd,
                "max_dev_reduction": report.max_dev_reduction,
                "passed": report.passed,
            }, fh, indent=1)
            fh.write("\n")
    if not report.passed:
        print("TOLERANCE BREACH")
        return EXIT_TOLERANCE
    print("PASS")
    return EXIT_OK


def _cmd_bench(args) -> int:
    cfg = _load_config(args)
    m_values = [int(v) for v in args.m_values.split(",")]
    report = run_benchmark(m_values=m_values, repeats=args.repeats)
    print("m      PHD ms     CPHD ms")
    for m, tp, tc in zip(report.m_values, report.phd_seconds, report.cphd_seconds):
        print(f"{m:<6d} {tp * 1e3:<10.2f} {tc * 1e3:<10.2f}")
    print(f"fitted exponents: PHD {report.phd_exponent:.2f}, CPHD {report.cphd_exponent:.2f}")
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            json.dump({
                "m_values": report.m_values,
                "phd_seconds": report.phd_seconds,
                "cphd_seconds": report.cphd_seconds,
                "phd_exponent": report.phd_exponent,
                "cphd_exponent": report.cphd_exponent,
            }, fh, indent=1)
            fh.write("\n")
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "filter": _cmd_filter,
    "sweep-pd": _cmd_sweep_pd,
    "resolve": _cmd_resolve,
    "oracle-check": _cmd_oracle_check,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - exit-code contract
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
