"""Command-line front end.

Exit codes: 0 on success, 1 when a run fails at runtime (unreadable data,
numerical failure, unwritable output), 2 for usage and configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import CliConfig, load_config
from .errors import ConfigError, GsampError, ValidationError
from .experiment import (
    Dataset,
    TABLE1_COLUMNS,
    TABLE1_TOLERANCE,
    load_dataset,
    monte_carlo,
    prepare,
    random_stations,
    read_stations,
    run_grid,
    synthetic_benchmark,
    SynthSpec,
    write_dataset,
)
from .graph import build_knn_graph
from .report import format_table, ranked_rows, write_report
from .sampling import read_mask, write_mask

log = logging.getLogger("gsamp")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--stations", type=Path, help="stations CSV (id,lat,lon)")
    p.add_argument("--signal", type=Path, help="signal CSV, N rows by T columns")
    p.add_argument("--synthetic", action="store_true", help="use the synthetic bandlimited surrogate")
    p.add_argument("--mask", type=Path, help="pin the observed set to a 0/1 mask CSV line")


def _common_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key=value config file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gsamp", description="Adaptive message passing on time-varying graph signals.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="Monte-Carlo run for one noise setting")
    _common_args(run)
    _data_args(run)
    run.add_argument("--out", type=Path, required=True, help="output directory")
    run.add_argument("--log-scale", action="store_true", help="log-scale MSE axis in the chart")

    synth = sub.add_parser("synth", help="write a synthetic dataset")
    synth.add_argument("--config", type=Path, help="key=value config file (k, synthetic_* keys)")
    synth.add_argument("--nodes", type=int, help="number of stations")
    synth.add_argument("--steps", type=int, help="number of time steps T")
    synth.add_argument("--k", type=int, help="nearest neighbours per node")
    synth.add_argument("--seed", type=int, help="override the config seed")
    synth.add_argument("--out", type=Path, help="directory for stations.csv and signal.csv")
    synth.add_argument("--stations", type=Path, help="stations CSV path")
    synth.add_argument("--signal", type=Path, help="signal CSV path")

    table = sub.add_parser("table1", help="full grid of noise settings by estimators")
    _common_args(table)
    _data_args(table)
    table.add_argument("--out", type=Path, help="directory for table1.csv and metadata")

    mask = sub.add_parser("mask", help="emit the greedy observation mask as a CSV line")
    mask.add_argument("--config", type=Path, help="key=value config file")
    mask.add_argument("--seed", type=int, help="override the config seed")
    mask.add_argument("--stations", type=Path, help="stations CSV (id,lat,lon)")
    mask.add_argument("--synthetic", action="store_true", help="use synthetic station locations")
    mask.add_argument("--out", type=Path, required=True, help="mask CSV path")
    return parser


def _load_cfg(args) -> CliConfig:
    cfg = load_config(args.config) if args.config else CliConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, run=replace(cfg.run, seed=args.seed))
    if getattr(args, "threads", 1) < 1:
        raise ConfigError(["--threads must be >= 1"])
    return cfg


def _synthetic(cfg: CliConfig, n: int | None = None, T: int | None = None) -> Dataset:
    n = cfg.synthetic_nodes if n is None else n
    T = cfg.synthetic_steps if T is None else T
    spec = SynthSpec(bandwidth=cfg.run.bandwidth, amplitude=cfg.synthetic_amplitude)
    return synthetic_benchmark(n, T, cfg.run.k, cfg.run.seed, spec)


def _dataset(args, cfg: CliConfig) -> Dataset:
    if args.synthetic:
        if args.stations or args.signal:
            raise ConfigError(["--synthetic cannot be combined with --stations/--signal"])
        return _synthetic(cfg)
    if not (args.stations and args.signal):
        raise ConfigError(["give --stations and --signal, or --synthetic"])
    return load_dataset(args.stations, args.signal)


def _setup(args, cfg: CliConfig, ds: Dataset):
    mask = read_mask(args.mask) if args.mask else None
    if mask is not None and mask.n_nodes != ds.n_nodes:
        raise ValidationError(f"mask has {mask.n_nodes} entries, dataset has {ds.n_nodes} nodes")
    return prepare(cfg.run, ds, mask=mask)


def cmd_run(args) -> int:
    cfg = _load_cfg(args)
    ds = _dataset(args, cfg)
    setup = _setup(args, cfg, ds)
    report = monte_carlo(cfg.run, ds, setup, threads=args.threads)
    args.out.mkdir(parents=True, exist_ok=True)
    paths = write_report(
        report,
        args.out / "mse.csv",
        args.out / "mse.svg",
        summary_csv=args.out / "summary.csv",
        metadata_json=args.out / "metadata.json",
        log_scale=args.log_scale,
    )
    noise = cfg.run.noise
    title = f"{ds.name}: N={ds.n_nodes}, T={ds.n_steps}, alpha={noise.alpha:g}, gamma={noise.gamma:g}, R={cfg.run.trials}"
    print(format_table(ranked_rows(report.avg_mse, report.estimators), title))
    for name, events in report.diverged.items():
        if events:
            print(f"{name}: {len(events)} trial(s) diverged and were capped")
    for kind, p in paths.items():
        log.info("wrote %s: %s", kind, p)
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = _load_cfg(args)
    if args.k is not None:
        cfg = replace(cfg, run=replace(cfg.run, k=args.k))
    ds = _synthetic(cfg, args.nodes, args.steps)
    if args.out is None and not (args.stations and args.signal):
        raise ConfigError(["give --out, or both --stations and --signal"])
    stations = args.stations or args.out / "stations.csv"
    signal = args.signal or args.out / "signal.csv"
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
    write_dataset(ds, stations, signal)
    print(f"wrote {ds.n_nodes} stations to {stations} and a {ds.n_nodes}x{ds.n_steps} signal to {signal}")
    return EXIT_OK


def cmd_table1(args) -> int:
    cfg = _load_cfg(args)
    ds = _dataset(args, cfg)
    mask = read_mask(args.mask) if args.mask else None
    compare = ds.n_nodes == 197 and ds.n_steps == 95 and not args.synthetic
    grid = run_grid(cfg.run, ds, cfg.noise_grid, threads=args.threads, compare_targets=compare, mask=mask)
    out_rows = []
    for noise, report, rows in grid:
        marks = {r.estimator: m for r, (_, _, m) in zip(rows, ranked_rows(report.avg_mse, report.estimators))}
        mode = "LMS" if noise.alpha == 2.0 else "Sign"
        print(f"\nalpha={noise.alpha:g}, gamma={noise.gamma:g} (GSAMP runs in {mode} mode)")
        width = max(len(r.estimator) for r in rows)
        header = f"{'estimator':<{width}}  {'avg MSE':>12}"
        if compare:
            header += f"  {'target':>8}  {'dev':>7}"
        print(header)
        print("-" * len(header))
        for r in rows:
            line = f"{r.estimator:<{width}}  {r.avg_mse:>12.4g}"
            if compare and r.target is not None:
                line += f"  {r.target:>8g}  {r.deviation:>+7.1%}"
                if r.flagged:
                    line += "  DEVIATES"
            if marks[r.estimator]:
                line += f"  [{marks[r.estimator]}]"
            print(line)
            out_rows.append(
                [noise.alpha, noise.gamma, r.estimator, repr(r.avg_mse), r.rank, r.target, r.deviation, r.flagged]
            )
    if compare:
        flagged = sum(row[-1] for row in out_rows)
        print(f"\n{flagged} value(s) deviate from the reference by more than {TABLE1_TOLERANCE:.0%}")
    else:
        print("\nreference values apply only to a 197-station, 95-step dataset; no comparison made")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        with (args.out / "table1.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["alpha", "gamma", "estimator", "avg_mse", "rank", "target", "deviation", "flagged"])
            w.writerows(out_rows)
        meta = dict(grid[0][1].metadata)
        meta["noise_grid"] = [[p.alpha, p.gamma] for p in cfg.noise_grid]
        (args.out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    missing = [c for c in TABLE1_COLUMNS if c not in {e.name for e in cfg.run.estimators}]
    if compare and missing:
        log.warning("estimators without a reference column: %s", ", ".join(missing))
    return EXIT_OK


def cmd_mask(args) -> int:
    cfg = _load_cfg(args)
    if args.synthetic == bool(args.stations):
        raise ConfigError(["give exactly one of --stations or --synthetic"])
    if args.synthetic:
        pts = random_stations(cfg.synthetic_nodes, cfg.run.seed)
    else:
        pts = read_stations(args.stations)
    g = build_knn_graph(pts, cfg.run.k)
    placeholder = Dataset(coords=tuple(pts), signal=[[0.0, 0.0]] * len(pts), name="stations")
    setup = prepare(replace(cfg.run, estimators=()), placeholder, graph=g)
    write_mask(setup.mask, args.out)
    print(f"observed {int(setup.mask.observed.sum())} of {g.n_nodes} nodes; mask written to {args.out}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "synth": cmd_synth, "table1": cmd_table1, "mask": cmd_mask}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        for msg in exc.messages:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GsampError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
