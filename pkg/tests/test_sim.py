import math

import numpy as np
import pytest

from collabloc.errors import GenerationError, InvalidArgument
from collabloc.fingerprint import Entry, LocalDatabase, LocationLabel, cosine_similarity, match_entries
from collabloc.overlay.collect import expected_iterations
from collabloc.regions import Level
from collabloc.sim.devices import DeviceProfile, populate_devices, sample_nonempty, sample_scan
from collabloc.sim.experiment import (
    RESULTS_HEADER,
    Cell,
    ExperimentSpec,
    Score,
    Testbed as Bed,
    mean_halfwidth,
    provider_profiles,
    read_results,
    run_cell,
    run_experiment,
    score,
)
from collabloc.sim.stats import argmax_position, non_decreasing, paired_greater_pvalue, strictly_decreasing
from collabloc.sim.world import AUDIBLE_DBM, WorldConfig, generate_world, path_loss_rssi

TINY = {"n_buildings": 6, "campus_buildings": 2, "public_labels_per_tower": 300, "test_places": 6, "seed": 11}


# --- world ------------------------------------------------------------------------

def test_default_world_scale():
    w = generate_world(WorldConfig())
    assert 45 <= len(w.places) <= 60
    assert len({p.label for p in w.places}) == len(w.places)
    assert all(len(w.audible(i)) >= 1 for i in range(len(w.places)))
    assert len(w.towers) == 2 and len(w.test_places) == 15


def test_path_loss_identity():
    assert path_loss_rssi(1.0, -40.0, 2.0) == -40.0
    assert path_loss_rssi(10.0, -40.0, 2.0) == pytest.approx(-60.0)
    assert path_loss_rssi(0.2, -40.0, 3.0) == -40.0


def test_world_determinism(tiny_world):
    again = generate_world(WorldConfig(**TINY))
    assert again.digest() == tiny_world.digest()
    other = generate_world(WorldConfig(**{**TINY, "seed": 12}))
    assert other.digest() != tiny_world.digest()


def test_world_validation():
    with pytest.raises(InvalidArgument):
        WorldConfig(n_buildings=0)
    with pytest.raises(InvalidArgument):
        WorldConfig(shadowing_db=-1)
    with pytest.raises(GenerationError):
        generate_world(WorldConfig(p0_dbm=-99.0, path_loss_exponent=6.0, shadowing_db=0.0))


def test_label_pool_scope(tiny_world):
    t0, t1 = tiny_world.towers
    local = tiny_world.label_pool(t0, Level.CELL_TOWER)
    city = tiny_world.label_pool(t0, Level.CITY)
    assert len(city) == len(tiny_world.places) + 2 * 300
    assert len(local) == len(tiny_world.places_in_tower(t0)) + 300
    assert all(tiny_world.places[i].label in local for i in tiny_world.places_in_tower(t0))


# --- devices ----------------------------------------------------------------------

def test_perfect_device_sees_ground_truth(tiny_world):
    dev = DeviceProfile("d", detection_prob=1.0, jitter_db=0.0)
    for place in range(len(tiny_world.places)):
        s, _ = sample_scan(tiny_world, dev, place, np.random.default_rng(place))
        idx = tiny_world.audible(place)
        truth = sorted(((tiny_world.aps[i].bssid, round(float(tiny_world.rssi[place, i]), 2)) for i in idx),
                       key=lambda p: (-p[1], p[0]))[:15]
        assert [(r.bssid, r.rssi_dbm) for r in s.readings] == truth


def test_same_place_similarity_calibration():
    world = generate_world(WorldConfig())
    dev = DeviceProfile("requester")
    rng = np.random.default_rng(2024)
    hits = 0
    for _ in range(1000):
        place = int(rng.integers(len(world.places)))
        a, _ = sample_nonempty(world, dev, place, rng)
        b, _ = sample_nonempty(world, dev, place, rng)
        hits += cosine_similarity(a, b) >= 0.05
    assert hits >= 950


def test_far_buildings_do_not_share_aps(tiny_world):
    dev = DeviceProfile("d")
    rng = np.random.default_rng(0)
    # the first building sits on the campus, the last one downtown 5 km away
    a = [p.index for p in tiny_world.places if p.building == 0][0]
    b = [p.index for p in tiny_world.places if p.building == 5][0]
    sa, _ = sample_nonempty(tiny_world, dev, a, rng)
    sb, _ = sample_nonempty(tiny_world, dev, b, rng)
    assert not (sa.bssids & sb.bssids)
    assert cosine_similarity(sa, sb) == 0.0


def test_sample_scan_errors(tiny_world):
    with pytest.raises(InvalidArgument):
        sample_scan(tiny_world, DeviceProfile("d"), 10_000, np.random.default_rng(0))
    with pytest.raises(InvalidArgument):
        DeviceProfile("d", detection_prob=0.0)
    muted = DeviceProfile("m", detection_prob=1e-9)
    with pytest.raises(InvalidArgument):
        sample_nonempty(tiny_world, muted, 0, np.random.default_rng(0), attempts=3)


def test_populate_devices(tiny_world):
    profiles = provider_profiles(tiny_world, 3, 1.0, seed=5)
    dbs = populate_devices(tiny_world, profiles, seed=5)
    again = populate_devices(tiny_world, profiles, seed=5)
    for pid, db in dbs.items():
        assert 1 <= len(db) <= len(tiny_world.places)
        assert [e.label for e in db] == [e.label for e in again[pid]]
        assert {e.label for e in db} <= {p.label for p in tiny_world.places}


def test_disjoint_coverage_zero_cross_similarity(tiny_world):
    campus = frozenset(p.index for p in tiny_world.places if p.building == 0)
    downtown = frozenset(p.index for p in tiny_world.places if p.building == 5)
    dbs = populate_devices(tiny_world, [DeviceProfile("a", coverage=campus), DeviceProfile("b", coverage=downtown)], 1)
    for e in dbs["a"]:
        assert match_entries(dbs["b"], e.scan) == []


# --- scoring and stats --------------------------------------------------------------

def test_score():
    t = LocationLabel("B1", "R1")
    assert score(t, t) is Score.ROOM_HIT
    assert score(LocationLabel("B1", "R2"), t) is Score.BUILDING_HIT
    assert score(LocationLabel("B2", "R1"), t) is Score.MISS
    assert score(None, t) is Score.NO_ANSWER


def test_mean_halfwidth():
    m, hw = mean_halfwidth([0.0, 1.0, 0.0, 1.0])
    assert m == 0.5
    assert hw == pytest.approx(1.959963984540054 * math.sqrt(1 / 3) / 2)
    with pytest.raises(InvalidArgument):
        mean_halfwidth([1.0])


def test_stats_helpers():
    assert non_decreasing([0.1, 0.2, 0.2]) and not non_decreasing([0.2, 0.1])
    assert non_decreasing([0.2, 0.19], slack=0.02)
    assert strictly_decreasing([3, 2, 1]) and not strictly_decreasing([3, 3])
    assert argmax_position([1, 5, 5, 2]) == 1
    assert paired_greater_pvalue([1, 1, 1], [0, 0, 0]) == 0.0
    assert paired_greater_pvalue([0, 0], [0, 0]) == 1.0
    rng = np.random.default_rng(0)
    a = rng.normal(1.0, 1.0, 48)
    assert paired_greater_pvalue(a, a - 0.5 + rng.normal(0, 0.1, 48)) < 0.01
    with pytest.raises(InvalidArgument):
        paired_greater_pvalue([1.0], [0.0])


# --- experiment --------------------------------------------------------------------

def test_cell_and_grid():
    c = Cell(n=3, k=10, p1=5, p2=0.25)
    assert c.cell_id == "n3-k10-p1_5-p2_0.25-uniform-nfm"
    assert Cell(n=7, n_noisy=2).cell_id.endswith("-noisy2")
    with pytest.raises(InvalidArgument):
        Cell(n=0)
    with pytest.raises(InvalidArgument):
        Cell(n=2, weighting="magic")
    with pytest.raises(InvalidArgument):
        Cell(n=2, n_noisy=3)
    spec = ExperimentSpec(sweeps=[{"name": "a", "n": [1, 2], "p2": 0.1}, {"n": 2, "p2": [0.1, 0.3]}], runs=2)
    assert [c.cell_id for c in spec.cells] == [Cell(n=1, p2=0.1).cell_id, Cell(n=2, p2=0.1).cell_id,
                                               Cell(n=2, p2=0.3).cell_id]
    with pytest.raises(InvalidArgument):
        ExperimentSpec(sweeps=[{"nn": 1}], runs=2).cells
    with pytest.raises(InvalidArgument):
        ExperimentSpec(sweeps=[{"n": 1}], runs=1)
    with pytest.raises(InvalidArgument):
        ExperimentSpec.from_dict({"sweeps": [{"n": 1}], "bogus": 2})
    d = ExperimentSpec(sweeps=[{"n": 1}], runs=2).to_dict()
    assert ExperimentSpec.from_dict(d) == ExperimentSpec(sweeps=[{"n": 1}], runs=2)


def tiny_spec(**kw):
    base = dict(sweeps=[{"n": [1, 3, 9], "p1": [0, 20], "p2": 0.2, "k": 10}], runs=3, seed=4,
                world=WorldConfig(**TINY), providers=4)
    base.update(kw)
    return ExperimentSpec(**base)


def test_oracle_world_is_perfect():
    world = generate_world(WorldConfig(**{**TINY, "shadowing_db": 0.0}))
    quiet = dict(detection_prob=1.0, jitter_db=0.0, sound_noise=0.0, cell_noise_db=0.0)
    everywhere = frozenset(range(len(world.places)))
    profiles = [DeviceProfile(f"P{i}", coverage=everywhere, **quiet) for i in range(4)]
    rng = np.random.default_rng(0)
    dbs = {}
    for prof in profiles:
        db = LocalDatabase()
        for i in sorted(everywhere):
            s, f = sample_scan(world, prof, i, rng)
            db.insert(Entry(s, f, world.places[i].label))
        dbs[prof.device_id] = db
    spec = ExperimentSpec(sweeps=[{"n": 4}], runs=2, world=world.config, providers=4)
    bed = Bed(world, profiles, DeviceProfile("requester", **quiet), dbs,
                  world.label_pool(world.towers[0], spec.area_level))
    for run in range(2):
        scores, _ = run_cell(spec, bed, Cell(n=4, p1=0, p2=0.0), run)
        assert scores["room_hit"] == 1.0 and scores["building_hit"] == 1.0


def test_run_experiment_outputs(tmp_path):
    spec = tiny_spec()
    a = run_experiment(spec, tmp_path / "a")
    run_experiment(spec, tmp_path / "b")
    for name in ("results.csv", "report.csv", "cells.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = (tmp_path / "a" / "results.csv").read_text().splitlines()[0]
    assert header == ",".join(RESULTS_HEADER)
    skipped = [s for s in a.cells if s.status == "skipped"]
    assert {s.cell.n for s in skipped} == {9}
    for s in a.cells:
        if s.status == "ok":
            assert s.building_acc >= s.room_acc and s.runs == 3
    again = read_results(tmp_path / "a")
    assert [(s.cell, s.status) for s in again.cells] == [(s.cell, s.status) for s in a.cells]
    for got, want in zip(again.cells, a.cells):
        if want.status == "ok":
            assert got.room_acc == pytest.approx(want.room_acc, abs=1e-6)
            assert got.room_hw == pytest.approx(want.room_hw, abs=1e-6)
    assert list((tmp_path / "a" / "traces").glob("*.jsonl"))


def test_parallel_workers_match_serial(tmp_path):
    spec = tiny_spec(sweeps=[{"n": [1, 3], "p2": 0.2, "k": 10}], runs=2)
    run_experiment(spec, tmp_path / "serial")
    spec.workers = 2
    run_experiment(spec, tmp_path / "parallel")
    assert (tmp_path / "serial" / "results.csv").read_bytes() == (tmp_path / "parallel" / "results.csv").read_bytes()


def test_mean_r_matches_collection_model():
    spec = tiny_spec(sweeps=[{"n": [1, 2, 4], "p2": 0.1, "k": 10}], runs=3)
    report = run_experiment(spec)
    from collabloc.sim.experiment import build_testbed

    bed = build_testbed(spec)
    # knowledge rate: chance a provider shares an AP with a fresh query
    rng = np.random.default_rng(0)
    known = total = 0
    for place in bed.world.test_places:
        s, _ = sample_nonempty(bed.world, bed.requester, place, rng)
        for db in bed.databases.values():
            known += bool(match_entries(db, s))
            total += 1
    knowledge = known / total
    for s in report.cells:
        predicted = expected_iterations(s.cell.n, s.cell.n, knowledge, np.random.default_rng(1), trials=400)
        assert abs(s.mean_r - predicted) <= 1.0


def test_utility_weighting_cells_run():
    spec = tiny_spec(sweeps=[{"n": 4, "p2": 0.4, "k": 10, "n_noisy": [1, 2],
                              "weighting": ["uniform", "utility", "learned"]}], runs=2)
    report = run_experiment(spec)
    assert all(s.status == "ok" for s in report.cells) and len(report.cells) == 6
