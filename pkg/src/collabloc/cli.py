"""Command line entry point: ``collabloc {gen-world,run,report,verify}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Mapping, Optional, Sequence

import yaml

from collabloc import io
from collabloc.errors import CollabLocError
from collabloc.overlay.config import topology_config
from collabloc.overlay.network import read_trace, verify_trace
from collabloc.overlay.topology import build_hierarchy, register_provider
from collabloc.regions import Level
from collabloc.sim.experiment import (
    DEFAULT_COVERAGE,
    DEFAULT_PROVIDERS,
    ExperimentSpec,
    provider_profiles,
    read_results,
    run_experiment,
    write_report,
)
from collabloc.sim.devices import populate_devices
from collabloc.sim.world import WorldConfig, generate_world

log = logging.getLogger("collabloc")

SEED_ENV = "COLLABLOC_SEED"
WORLD_KEYS = {"seed", "world", "providers", "coverage", "area_level"}


def _load_yaml(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, Mapping):
        raise CollabLocError(f"{path}: expected a mapping at top level")
    return dict(data)


def _seed_override(cfg: dict) -> dict:
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            cfg["seed"] = int(env)
        except ValueError:
            raise CollabLocError(f"{SEED_ENV} must be an integer, got {env!r}") from None
        log.info("seed overridden from %s: %s", SEED_ENV, cfg["seed"])
    return cfg


def cmd_gen_world(args) -> int:
    cfg = _seed_override(_load_yaml(args.config))
    unknown = set(cfg) - WORLD_KEYS - {"sweeps", "runs", "r1", "r2", "accept_threshold", "noisy_weight",
                                       "trace_runs", "workers"}
    if unknown:
        raise CollabLocError(f"unknown config keys {sorted(unknown)}")
    seed = int(cfg.get("seed", 0))
    world = generate_world(WorldConfig.from_dict(cfg.get("world") or {}))
    profiles = provider_profiles(world, int(cfg.get("providers", DEFAULT_PROVIDERS)),
                                 float(cfg.get("coverage", DEFAULT_COVERAGE)), seed)
    dbs = populate_devices(world, profiles, seed)
    level = Level.parse(cfg.get("area_level", "City"))

    out = Path(args.out)
    (out / "databases").mkdir(parents=True, exist_ok=True)
    for pid, db in dbs.items():
        io.dump_database(db, out / "databases" / f"{pid}.jsonl")
    overlay = build_hierarchy(world.topology, key_seed=seed)
    for i, prof in enumerate(profiles):
        register_provider(overlay, prof.device_id, world.towers[i % len(world.towers)], level)
    (out / "topology.yaml").write_text(yaml.safe_dump(topology_config(overlay), sort_keys=False), encoding="utf-8")
    summary = {
        "digest": world.digest(),
        "config": {**world.config.__dict__, "rooms_per_building": list(world.config.rooms_per_building)},
        "towers": world.towers,
        "places": [{"index": p.index, "building": p.label.building, "room": p.label.room, "tower": p.tower,
                    "room_type": p.room_type, "position": list(p.position)} for p in world.places],
        "access_points": [{"bssid": a.bssid, "position": list(a.position)} for a in world.aps],
        "test_places": world.test_places,
        "databases": {pid: len(db) for pid, db in dbs.items()},
    }
    (out / "world.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(f"world {summary['digest'][:12]}: {len(world.places)} places, {len(world.aps)} APs, "
          f"{len(dbs)} provider databases -> {out}")
    return 0


def cmd_run(args) -> int:
    cfg = _seed_override(_load_yaml(args.spec))
    if args.workers is not None:
        cfg["workers"] = args.workers
    spec = ExperimentSpec.from_dict(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "spec.yaml").write_text(yaml.safe_dump(spec.to_dict(), sort_keys=False), encoding="utf-8")
    start = time.perf_counter()
    report = run_experiment(spec, out)
    log.info("ran %d cells x %d runs in %.1f s", len(report.cells), spec.runs, time.perf_counter() - start)
    _print_report(report)
    return 0


def cmd_report(args) -> int:
    src = Path(args.inp)
    report = read_results(src)
    write_report(report, src / "report.csv")
    _print_report(report)
    return 0


def cmd_verify(args) -> int:
    src = Path(args.inp)
    files = sorted((src / "traces").glob("*.jsonl")) if (src / "traces").is_dir() else sorted(src.glob("*.jsonl"))
    if not files:
        print(f"no traces under {src}", file=sys.stderr)
        return 2
    bad = 0
    requests = 0
    for f in files:
        records = read_trace(f)
        requests += sum(1 for r in records if r["type"] == "request")
        for v in verify_trace(records):
            bad += 1
            print(f"{f.name}: {v}")
    print(f"{len(files)} traces, {requests} requests, {bad} violations")
    return 1 if bad else 0


def _print_report(report) -> None:
    print(f"{'cell':48s} {'room':>6s} {'+-':>6s} {'bldg':>6s} {'+-':>6s} {'r':>5s}")
    for s in report.cells:
        if s.status != "ok":
            print(f"{s.cell.cell_id:48s} {s.status}")
            continue
        print(f"{s.cell.cell_id:48s} {s.room_acc:6.3f} {s.room_hw:6.3f} {s.building_acc:6.3f} "
              f"{s.building_hw:6.3f} {s.mean_r:5.2f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="collabloc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-world", help="generate a world and the provider databases")
    p.add_argument("--config", required=True, help="YAML file with seed, world, providers, coverage")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_world)

    p = sub.add_parser("run", help="run an experiment sweep")
    p.add_argument("--spec", required=True, help="YAML experiment spec")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default from spec)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="aggregate results.csv into report.csv")
    p.add_argument("--in", dest="inp", required=True, help="directory written by 'run'")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("verify", help="check the privacy contract on event traces")
    p.add_argument("--in", dest="inp", required=True, help="directory holding traces")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CollabLocError, ValueError, OSError) as exc:
        print(f"collabloc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
