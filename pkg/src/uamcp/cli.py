"""Command-line experiment runner: single runs, mode studies, and GS sweeps."""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .scenario import (MODES, ConfigError, ScenarioConfig, apply_overrides,
                       config_from_dict, config_to_dict, derive_mode_config,
                       load_config, preset_config)
from .simulation import run_simulation

GS_SWEEP_COUNTS = (0, 25, 36, 49, 64, 81, 100, 121, 144, 169, 196, 225)

STUDY_COLUMNS = ("ear_avg", "ear_max", "payload_min", "payload_avg", "payload_max",
                 "cbr_min", "cbr_avg", "cbr_max")


def _parse_set(values: list[str]) -> dict:
    overrides = {}
    for item in values:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, raw = item.partition("=")
        try:
            overrides[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            overrides[key.strip()] = raw
    return overrides


def _parse_seeds(args) -> list[int]:
    if args.seeds:
        lo, _, hi = args.seeds.partition("..")
        try:
            return list(range(int(lo), int(hi) + 1))
        except ValueError as exc:
            raise ConfigError(f"--seeds expects A..B, got {args.seeds!r}") from exc
    if args.seed is not None:
        return [args.seed]
    return []


def build_config(args) -> ScenarioConfig:
    """--config replaces the preset; --set then --seed refine the result."""
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        cfg = load_config(path.read_text(encoding="utf-8"))
    else:
        cfg = preset_config(args.preset)
    if args.set:
        cfg = apply_overrides(cfg, _parse_set(args.set))
    seeds = _parse_seeds(args)
    if len(seeds) == 1:
        cfg = replace(cfg, seed=seeds[0])
    return cfg


def _prepare_out(path: Path, force: bool) -> None:
    if path.exists() and any(path.iterdir()) and not force:
        raise ConfigError(f"output directory {path} is not empty (use --force)")
    path.mkdir(parents=True, exist_ok=True)


def _run_one(task: tuple) -> tuple:
    """Worker for parallel runs: one engine per process, nothing shared."""
    label, cfg_doc, out_dir = task
    cfg = config_from_dict(cfg_doc)
    result = run_simulation(cfg, out_dir=out_dir)
    return label, result.metrics.summarize()


def _run_many(tasks: list[tuple], jobs: int) -> dict:
    summaries = {}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for label, summary in pool.map(_run_one, tasks):
                summaries[label] = summary
                print(f"  done: {label}", file=sys.stderr)
    else:
        for task in tasks:
            label, summary = _run_one(task)
            summaries[label] = summary
            print(f"  done: {label}", file=sys.stderr)
    return summaries


def _study_row(summary: dict, kind: str) -> dict[str, float]:
    """One Table-style row; kind 'uas' or 'gs' (GS sub-row of central mode)."""
    if kind == "gs":
        ear = summary.get("ear_backend")
        payload = summary.get("payload_gs")
        cbr = summary.get("cbr_gs")
    else:
        ear = summary.get("ear_uas")
        payload = summary.get("payload_uas")
        cbr = summary.get("cbr_uas")
    row: dict[str, float] = {}
    row["ear_avg"], row["ear_max"] = (ear[0], ear[1]) if ear else (0.0, 0.0)
    if payload:
        row["payload_avg"], row["payload_max"], row["payload_min"] = payload
    else:
        row["payload_avg"] = row["payload_max"] = row["payload_min"] = 0.0
    if cbr:
        row["cbr_avg"], row["cbr_max"], row["cbr_min"] = cbr
    else:
        row["cbr_avg"] = row["cbr_max"] = row["cbr_min"] = 0.0
    return row


def _write_study_table(rows: dict[str, dict[str, float]], path: Path) -> None:
    lines = ["scenario," + ",".join(STUDY_COLUMNS)]
    for name, row in rows.items():
        lines.append(name + "," + ",".join(f"{row[c]:.6f}" for c in STUDY_COLUMNS))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _format_study_text(rows: dict[str, dict[str, float]]) -> str:
    header = f"{'scenario':<12}" + "".join(f"{c:>13}" for c in STUDY_COLUMNS)
    out = [header, "-" * len(header)]
    for name, row in rows.items():
        out.append(f"{name:<12}" + "".join(f"{row[c]:>13.4f}" for c in STUDY_COLUMNS))
    return "\n".join(out)


def cmd_run(args) -> int:
    cfg = build_config(args)
    out_dir = Path(args.out) / cfg.mode
    _prepare_out(out_dir, args.force)
    result = run_simulation(cfg, out_dir=out_dir)
    if args.plot:
        from .plotting import plot_ear
        plot_ear(out_dir / "ear.csv", out_dir / "ear.svg", title=cfg.mode)
    print(f"outputs written to {out_dir}")
    summary = result.metrics.summarize()
    if "ear_uas" in summary:
        print(f"avg EAR {100 * summary['ear_uas'][0]:.2f} %")
    return 0


def cmd_study(args) -> int:
    cfg = build_config(args)
    seeds = _parse_seeds(args) or [cfg.seed]
    out_root = Path(args.out)
    _prepare_out(out_root, args.force)
    tasks = []
    for seed in seeds:
        for mode in MODES:
            mode_cfg = replace(derive_mode_config(cfg, mode), seed=seed)
            sub = out_root / mode if len(seeds) == 1 else out_root / mode / f"seed{seed}"
            tasks.append(((mode, seed), config_to_dict(mode_cfg), sub))
    summaries = _run_many(tasks, args.jobs)

    per_seed_rows = {}
    for seed in seeds:
        rows: dict[str, dict[str, float]] = {}
        for mode in MODES:
            summary = summaries[(mode, seed)]
            label = "central_uas" if mode == "central" else mode
            rows[label] = _study_row(summary, "uas")
            if mode == "central":
                rows["central_gs"] = _study_row(summary, "gs")
        per_seed_rows[seed] = rows
        if len(seeds) > 1:
            _write_study_table(rows, out_root / f"study_seed{seed}.csv")

    mean_rows: dict[str, dict[str, float]] = {}
    for label in next(iter(per_seed_rows.values())):
        mean_rows[label] = {
            c: sum(per_seed_rows[s][label][c] for s in seeds) / len(seeds)
            for c in STUDY_COLUMNS
        }
    _write_study_table(mean_rows, out_root / "study.csv")
    text = _format_study_text(mean_rows)
    (out_root / "study.txt").write_text(text + "\n", encoding="utf-8")
    print(text)

    e = {label: mean_rows[label]["ear_avg"] for label in mean_rows}
    ordered = e["local"] < e["ca"] < e["cp"] and e["cp"] <= e["central_uas"]
    close = abs(e["ca_cp"] - e["cp"]) <= 0.05
    print(f"avg EAR ordering local<CA<CP<=central: {'OK' if ordered else 'VIOLATED'};"
          f" |CA&CP - CP| = {100 * abs(e['ca_cp'] - e['cp']):.2f} pp"
          f" ({'OK' if close else 'LARGE'})")
    return 0


def cmd_gs_sweep(args) -> int:
    cfg = build_config(args)
    if cfg.mode != "central":
        cfg = derive_mode_config(cfg, "central")
    seeds = _parse_seeds(args) or [cfg.seed]
    out_root = Path(args.out)
    _prepare_out(out_root, args.force)
    counts = GS_SWEEP_COUNTS if not args.gs_counts else tuple(
        int(x) for x in args.gs_counts.split(","))
    tasks = []
    for seed in seeds:
        for count in counts:
            dim = round(count ** 0.5)
            if dim * dim != count:
                raise ConfigError(f"gs count {count} is not a square number")
            if count == 0:
                point_cfg = derive_mode_config(cfg, "ca_cp")
            else:
                point_cfg = replace(cfg, gs_grid_dim=dim)
            point_cfg = replace(point_cfg, seed=seed)
            sub = (out_root / f"gs{count}" if len(seeds) == 1
                   else out_root / f"gs{count}" / f"seed{seed}")
            tasks.append(((count, seed), config_to_dict(point_cfg), sub))
    summaries = _run_many(tasks, args.jobs)

    lines = ["ground_stations,ear_uas_avg,ear_backend_avg,cbr_avg,"
             "messages_uas_avg,messages_gs_avg,messages_total"]
    for count in counts:
        acc: dict[str, list[float]] = {}
        for seed in seeds:
            s = summaries[(count, seed)]
            acc.setdefault("ear_uas", []).append(s["ear_uas"][0])
            if "ear_backend" in s:
                acc.setdefault("ear_backend", []).append(s["ear_backend"][0])
            acc.setdefault("cbr", []).append(s.get("cbr_uas", (0.0,))[0])
            m_uas = s.get("messages_uas", (0.0,))[0]
            m_gs = s.get("messages_gs", (0.0,))[0]
            acc.setdefault("m_uas", []).append(m_uas)
            acc.setdefault("m_gs", []).append(m_gs)
            n_gs = count
            total = (m_uas * cfg.n_uas + m_gs * n_gs) / (cfg.n_uas + n_gs)
            acc.setdefault("m_total", []).append(total)

        def mean(key: str) -> str:
            vals = acc.get(key)
            return f"{sum(vals) / len(vals):.6f}" if vals else ""

        lines.append(f"{count},{mean('ear_uas')},{mean('ear_backend')},{mean('cbr')},"
                     f"{mean('m_uas')},{mean('m_gs')},{mean('m_total')}")
    sweep_csv = out_root / "sweep.csv"
    sweep_csv.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"sweep table written to {sweep_csv}")
    if args.plot:
        from .plotting import plot_sweep
        plot_sweep(sweep_csv, out_root / "sweep.svg")
    return 0


def cmd_validate(args) -> int:
    cfg = build_config(args)
    print(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True))
    return 0


def cmd_plot(args) -> int:
    from .plotting import plot_ear, plot_sweep
    out_root = Path(args.out)
    made = []
    for ear_csv in sorted(out_root.rglob("ear.csv")):
        made.append(plot_ear(ear_csv, ear_csv.with_suffix(".svg"),
                             title=ear_csv.parent.name))
    sweep_csv = out_root / "sweep.csv"
    if sweep_csv.exists():
        made.append(plot_sweep(sweep_csv, out_root / "sweep.svg"))
    if not made:
        raise ConfigError(f"no ear.csv or sweep.csv found under {out_root}")
    for path in made:
        print(f"wrote {path}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uamcp",
        description="Cooperative-perception coordination simulator for UAM")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON scenario config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field (dotted keys, repeatable)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--seeds", default=None, metavar="A..B",
                       help="inclusive seed range for multi-seed commands")
        p.add_argument("--out", "-o", default="out", help="output directory")
        p.add_argument("--force", action="store_true",
                       help="allow writing into a non-empty output directory")
        p.add_argument("--plot", action="store_true", help="emit SVG plots")
        p.add_argument("--preset", choices=("paper", "small"), default="paper")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel worker processes for multi-run commands")

    p_run = sub.add_parser("run", help="run one scenario")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_study = sub.add_parser("study", help="run all five coordination modes")
    common(p_study)
    p_study.set_defaults(func=cmd_study)

    p_sweep = sub.add_parser("gs-sweep", help="sweep the ground-station count")
    common(p_sweep)
    p_sweep.add_argument("--gs-counts", default=None,
                         help="comma-separated square counts (default 0,25,...,225)")
    p_sweep.set_defaults(func=cmd_gs_sweep)

    p_val = sub.add_parser("validate", help="validate and print the config")
    common(p_val)
    p_val.set_defaults(func=cmd_validate)

    p_plot = sub.add_parser("plot", help="regenerate SVG plots from CSV outputs")
    common(p_plot)
    p_plot.set_defaults(func=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 2
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
