"""Accuracy sweeps over privacy and collaboration parameters.

Every run picks ``n`` of the simulated providers, registers only those in
a fresh desk overlay and routes one query per test place through it. Runs
use common random numbers: provider picks, query samples and provider
noise depend on ``(seed, run, ...)`` but never on the cell, so two cells
differing in one parameter are paired comparisons.
"""

from __future__ import annotations

import csv
import enum
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from collabloc.errors import InvalidArgument
from collabloc.fingerprint import LocalDatabase, LocationLabel
from collabloc.fusion import UtilityBook, accept_label
from collabloc.overlay.network import LocationRequest, OverlaySimulator, write_trace
from collabloc.overlay.topology import build_hierarchy, register_provider
from collabloc.privacy import LabelPool, PrivacyParams, TopK, generate_location_distribution
from collabloc.regions import Level
from collabloc.rng import stream
from collabloc.sim.devices import DeviceProfile, populate_devices, sample_nonempty
from collabloc.sim.world import World, WorldConfig, generate_world

RESULTS_HEADER = ["cell_id", "n", "k", "p1", "p2", "weighting", "classifier", "run",
                  "room_hit", "building_hit", "r_iters"]
REPORT_HEADER = ["cell_id", "n", "k", "p1", "p2", "weighting", "classifier", "n_noisy", "status", "runs",
                 "room_acc", "room_hw", "building_acc", "building_hw", "mean_r"]
WEIGHTINGS = ("uniform", "utility", "learned")
CLASSIFIERS = ("nfm", "mlr")
Z95 = 1.959963984540054

# provider population: four phones and three tablets
DEFAULT_PROVIDERS = 7
DEFAULT_COVERAGE = 0.8
DEVICE_GAINS_DB = (0.0, -2.0, 1.5, -1.0, 3.0, -3.0, 2.0)


class Score(enum.Enum):
    ROOM_HIT = "room-hit"
    BUILDING_HIT = "building-hit"
    MISS = "miss"
    NO_ANSWER = "no-answer"


def score(predicted: Optional[LocationLabel], truth: LocationLabel) -> Score:
    if predicted is None:
        return Score.NO_ANSWER
    if predicted == truth:
        return Score.ROOM_HIT
    if predicted.building == truth.building:
        return Score.BUILDING_HIT
    return Score.MISS


def theoretical_request_load(n_R: float, nreq_R: float, n_PMc: float) -> float:
    """Requests per Country PM per day when ``n_R`` requesters each send
    ``nreq_R`` requests a week, spread over ``n_PMc`` Country PMs."""
    if n_PMc <= 0:
        raise InvalidArgument("Country PM count must be positive")
    if n_R < 0 or nreq_R < 0:
        raise InvalidArgument("requester count and request rate must be non-negative")
    return n_R * nreq_R / (7.0 * n_PMc)


# --- specification ------------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    n: int
    k: int = 25
    p1: int = 0
    p2: float = 0.0
    weighting: str = "uniform"
    classifier: str = "nfm"
    n_noisy: Optional[int] = None  # None: every picked provider uses p2

    def __post_init__(self):
        if self.n < 1:
            raise InvalidArgument("n must be at least 1")
        if self.weighting not in WEIGHTINGS:
            raise InvalidArgument(f"unknown weighting {self.weighting!r}")
        if self.classifier not in CLASSIFIERS:
            raise InvalidArgument(f"unknown classifier {self.classifier!r}")
        if self.n_noisy is not None and not (0 <= self.n_noisy <= self.n):
            raise InvalidArgument("n_noisy must lie in [0, n]")
        PrivacyParams(self.p1, self.p2, self.k)

    @property
    def cell_id(self) -> str:
        cid = f"n{self.n}-k{self.k}-p1_{self.p1}-p2_{self.p2:g}-{self.weighting}-{self.classifier}"
        return cid if self.n_noisy is None else f"{cid}-noisy{self.n_noisy}"

    def noisy(self, position: int) -> bool:
        return self.n_noisy is None or position < self.n_noisy


def _grid(axes: Mapping) -> list[Cell]:
    known = {f for f in Cell.__dataclass_fields__}
    unknown = set(axes) - known - {"name"}
    if unknown:
        raise InvalidArgument(f"unknown grid axes {sorted(unknown)}")
    names = [k for k in axes if k != "name"]
    values = [v if isinstance(v, (list, tuple)) else [v] for v in (axes[k] for k in names)]
    return [Cell(**dict(zip(names, combo))) for combo in itertools.product(*values)]


@dataclass
class ExperimentSpec:
    """A union of parameter grids plus everything needed to rebuild the world.

    ``sweeps`` is a list of mappings from ``Cell`` field names to value
    lists; each mapping expands to its Cartesian product and duplicates
    across sweeps are run once.
    """

    sweeps: list[dict]
    runs: int = 48
    seed: int = 0
    world: WorldConfig = field(default_factory=WorldConfig)
    providers: int = DEFAULT_PROVIDERS
    coverage: float = DEFAULT_COVERAGE
    area_level: Level = Level.CITY
    r1: float = 0.8
    r2: float = 0.2
    accept_threshold: float = 0.0
    noisy_weight: float = 0.1
    trace_runs: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.runs < 2:
            raise InvalidArgument("at least two runs are needed for confidence intervals")
        if self.providers < 1:
            raise InvalidArgument("need at least one provider")
        if not (0.0 < self.coverage <= 1.0):
            raise InvalidArgument("coverage must lie in (0, 1]")
        if not (0.0 < self.noisy_weight <= 1.0):
            raise InvalidArgument("noisy_weight must lie in (0, 1]")
        self.area_level = Level.parse(self.area_level)
        if not self.sweeps:
            raise InvalidArgument("an experiment needs at least one sweep")

    @property
    def cells(self) -> list[Cell]:
        return list(dict.fromkeys(c for axes in self.sweeps for c in _grid(axes)))

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentSpec":
        d = dict(d)
        if "world" in d:
            d["world"] = WorldConfig.from_dict(d["world"] or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidArgument(f"unknown experiment keys {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["area_level"] = self.area_level.name
        d["world"]["rooms_per_building"] = list(self.world.rooms_per_building)
        return d


# --- simulated providers ------------------------------------------------------------

class SimProvider:
    """A provider answering from its local database through the LDG pipeline.

    The random stream for each answer is keyed on the query the experiment
    is currently serving, set through ``context``.
    """

    def __init__(self, provider_id: str, db: LocalDatabase, params: PrivacyParams, pool: LabelPool,
                 seed: int, classifier: str = "nfm", r1: float = 0.5, r2: float = 0.5):
        self.provider_id = provider_id
        self.db = db
        self.params = params
        self.pool = pool
        self.seed = seed
        self.classifier = classifier
        self.r1, self.r2 = r1, r2
        self.context: tuple = ()

    def answer(self, request: LocationRequest) -> Optional[TopK]:
        rng = stream(self.seed, "ldg", *self.context, self.provider_id)
        return generate_location_distribution(self.db, request.scan, request.features, self.params, self.pool,
                                              rng, self.r1, self.r2, self.classifier)


@dataclass
class Testbed:
    world: World
    profiles: list[DeviceProfile]
    requester: DeviceProfile
    databases: dict[str, LocalDatabase]
    pool: LabelPool


def provider_profiles(world: World, count: int, coverage: float, seed: int) -> list[DeviceProfile]:
    """``count`` providers, each visiting every place with probability ``coverage``."""
    profiles = []
    for i in range(count):
        rng = stream(seed, "coverage", i)
        visited = np.flatnonzero(rng.random(len(world.places)) < coverage)
        if len(visited) == 0:
            visited = np.array([int(rng.integers(len(world.places)))])
        profiles.append(DeviceProfile(f"P{i}", coverage=frozenset(int(v) for v in visited),
                                      gain_offset_db=DEVICE_GAINS_DB[i % len(DEVICE_GAINS_DB)]))
    return profiles


def build_testbed(spec: ExperimentSpec) -> Testbed:
    world = generate_world(spec.world)
    profiles = provider_profiles(world, spec.providers, spec.coverage, spec.seed)
    dbs = populate_devices(world, profiles, spec.seed)
    pool = world.label_pool(world.towers[0], spec.area_level)
    return Testbed(world, profiles, DeviceProfile("requester"), dbs, pool)


# --- running ------------------------------------------------------------------------

def picked_providers(spec: ExperimentSpec, run: int, n: int) -> list[int]:
    rng = stream(spec.seed, "pick", run, n)
    return [int(i) for i in rng.choice(spec.providers, size=n, replace=False)]


def run_cell(spec: ExperimentSpec, bed: Testbed, cell: Cell, run: int) -> tuple[dict, Optional[list]]:
    """One run of one cell: every test place is queried once.

    Returns the per-run scores and, for the first ``spec.trace_runs`` runs,
    the overlay event trace.
    """
    picks = picked_providers(spec, run, cell.n)
    overlay = build_hierarchy(bed.world.topology, key_seed=spec.seed)
    agents = {}
    book = UtilityBook()
    for pos, i in enumerate(picks):
        prof = bed.profiles[i]
        p2 = cell.p2 if cell.noisy(pos) else 0.0
        params = PrivacyParams(cell.p1, p2, cell.k, spec.area_level)
        home = bed.world.towers[i % len(bed.world.towers)]
        register_provider(overlay, prof.device_id, home, spec.area_level)
        agents[prof.device_id] = SimProvider(prof.device_id, bed.databases[prof.device_id], params, bed.pool,
                                             spec.seed, cell.classifier, spec.r1, spec.r2)
        if cell.weighting == "utility" and cell.n_noisy is not None and cell.noisy(pos) and p2 > 0:
            book.set_noise(prof.device_id, spec.noisy_weight)
    sim = OverlaySimulator(overlay, agents, l=cell.n, seed=int(stream(spec.seed, "overlay", run).integers(2**31)),
                           utilities=book, learn_utilities=cell.weighting == "learned")
    room = building = 0
    iters = []
    for t, place in enumerate(bed.world.test_places):
        q_rng = stream(spec.seed, "query", run, t)
        scan, features = sample_nonempty(bed.world, bed.requester, place, q_rng)
        for agent in agents.values():
            agent.context = (run, t)
        truth = bed.world.places[place]
        result = sim.route_request(bed.requester.device_id, scan, features, truth.tower,
                                   rng=stream(spec.seed, "route", run, t))
        predicted = None
        if result.distribution is not None:
            predicted = accept_label(result.distribution, spec.accept_threshold)
        s = score(predicted, truth.label)
        room += s is Score.ROOM_HIT
        building += s in (Score.ROOM_HIT, Score.BUILDING_HIT)
        iters.append(result.iterations)
    n_test = len(bed.world.test_places)
    scores = {"room_hit": room / n_test, "building_hit": building / n_test, "r_iters": float(np.mean(iters))}
    return scores, (sim.trace if run < spec.trace_runs else None)


_BED: Optional[Testbed] = None
_SPEC: Optional[ExperimentSpec] = None


def _init_worker(spec: ExperimentSpec) -> None:
    global _BED, _SPEC
    _SPEC = spec
    _BED = build_testbed(spec)


def _work(task: tuple[Cell, int]) -> tuple[dict, Optional[list]]:
    cell, run = task
    return run_cell(_SPEC, _BED, cell, run)


@dataclass
class CellSummary:
    cell: Cell
    status: str
    runs: int = 0
    room_acc: float = math.nan
    room_hw: float = math.nan
    building_acc: float = math.nan
    building_hw: float = math.nan
    mean_r: float = math.nan


@dataclass
class AccuracyReport:
    cells: list[CellSummary]
    rows: list[dict]
    traces: dict[tuple[str, int], list] = field(default_factory=dict, repr=False)

    def summary(self, cell_id: str) -> CellSummary:
        for s in self.cells:
            if s.cell.cell_id == cell_id:
                return s
        raise KeyError(cell_id)

    def samples(self, cell_id: str, metric: str = "room_hit") -> np.ndarray:
        return np.array([r[metric] for r in self.rows if r["cell_id"] == cell_id])


def mean_halfwidth(samples: Sequence[float]) -> tuple[float, float]:
    """Mean and normal-approximation 95% half-width."""
    x = np.asarray(samples, dtype=np.float64)
    if len(x) < 2:
        raise InvalidArgument("need at least two samples")
    return float(x.mean()), float(Z95 * x.std(ddof=1) / math.sqrt(len(x)))


def summarize(cells: Sequence[Cell], rows: Sequence[dict], skipped: Iterable[str] = ()) -> AccuracyReport:
    skipped = set(skipped)
    out = []
    for cell in cells:
        cid = cell.cell_id
        if cid in skipped:
            out.append(CellSummary(cell, "skipped"))
            continue
        mine = [r for r in rows if r["cell_id"] == cid]
        room_acc, room_hw = mean_halfwidth([r["room_hit"] for r in mine])
        bld_acc, bld_hw = mean_halfwidth([r["building_hit"] for r in mine])
        out.append(CellSummary(cell, "ok", len(mine), room_acc, room_hw, bld_acc, bld_hw,
                               float(np.mean([r["r_iters"] for r in mine]))))
    return AccuracyReport(out, list(rows))


def run_experiment(spec: ExperimentSpec, out_dir=None) -> AccuracyReport:
    """Run every feasible cell for ``spec.runs`` runs.

    Cells asking for more providers than exist are reported as skipped.
    With ``out_dir`` the raw ``results.csv``, ``cells.json`` and
    ``report.csv`` are written there.
    """
    cells = spec.cells
    feasible = [c for c in cells if c.n <= spec.providers]
    skipped = [c.cell_id for c in cells if c.n > spec.providers]
    tasks = [(c, run) for c in feasible for run in range(spec.runs)]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers, initializer=_init_worker, initargs=(spec,)) as pool:
            results = list(pool.map(_work, tasks, chunksize=max(1, len(tasks) // (8 * spec.workers))))
    else:
        bed = build_testbed(spec)
        results = [run_cell(spec, bed, c, run) for c, run in tasks]
    rows = []
    traces = {}
    for (cell, run), (res, trace) in zip(tasks, results):
        rows.append({"cell_id": cell.cell_id, "n": cell.n, "k": cell.k, "p1": cell.p1, "p2": cell.p2,
                     "weighting": cell.weighting, "classifier": cell.classifier, "run": run, **res})
        if trace is not None:
            traces[(cell.cell_id, run)] = trace
    report = summarize(cells, rows, skipped)
    report.traces = traces
    if out_dir is not None:
        write_results(report, cells, skipped, spec, out_dir)
    return report


# --- files --------------------------------------------------------------------------

def _fmt(v) -> str:
    return f"{v:.6f}" if isinstance(v, float) else str(v)


def _exact(v) -> str:
    # shortest round-trip text, so re-aggregating results.csv gives the same report
    return repr(v) if isinstance(v, float) else str(v)


def write_results(report: AccuracyReport, cells: Sequence[Cell], skipped: Iterable[str],
                  spec: ExperimentSpec, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "results.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for r in report.rows:
            w.writerow([_exact(r[h]) for h in RESULTS_HEADER])
    skipped = set(skipped)
    meta = {"seed": spec.seed, "runs": spec.runs, "cells": [
        {"cell_id": c.cell_id, **asdict(c), "status": "skipped" if c.cell_id in skipped else "ok"} for c in cells]}
    (out / "cells.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_report(report, out / "report.csv")
    if report.traces:
        tdir = out / "traces"
        tdir.mkdir(exist_ok=True)
        for (cid, run), trace in report.traces.items():
            write_trace(trace, tdir / f"{cid}-run{run}.jsonl")


def write_report(report: AccuracyReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for s in report.cells:
            c = s.cell
            w.writerow([c.cell_id, c.n, c.k, c.p1, _fmt(c.p2), c.weighting, c.classifier,
                        "" if c.n_noisy is None else c.n_noisy, s.status, s.runs,
                        *(_fmt(v) for v in (s.room_acc, s.room_hw, s.building_acc, s.building_hw, s.mean_r))])


def read_results(in_dir) -> AccuracyReport:
    """Rebuild a report from ``results.csv`` and ``cells.json``."""
    src = Path(in_dir)
    meta = json.loads((src / "cells.json").read_text(encoding="utf-8"))
    cells, skipped = [], []
    for c in meta["cells"]:
        cell = Cell(**{k: c[k] for k in Cell.__dataclass_fields__})
        cells.append(cell)
        if c["status"] == "skipped":
            skipped.append(cell.cell_id)
    rows = []
    with open(src / "results.csv", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RESULTS_HEADER:
            raise InvalidArgument(f"unexpected results header {reader.fieldnames}")
        for r in reader:
            rows.append({"cell_id": r["cell_id"], "n": int(r["n"]), "k": int(r["k"]), "p1": int(r["p1"]),
                         "p2": float(r["p2"]), "weighting": r["weighting"], "classifier": r["classifier"],
                         "run": int(r["run"]), "room_hit": float(r["room_hit"]),
                         "building_hit": float(r["building_hit"]), "r_iters": float(r["r_iters"])})
    return summarize(cells, rows, skipped)
