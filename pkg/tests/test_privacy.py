import hashlib
import json

import numpy as np
import pytest

from collabloc.classifier import LabelDistribution, two_step_classify
from collabloc.errors import InvalidArgument
from collabloc.fingerprint import Entry, LocalDatabase, LocationLabel
from collabloc.privacy import (
    LabelPool,
    PrivacyParams,
    add_decoys,
    generate_location_distribution,
    perturb,
    top_k,
)
from collabloc.regions import Level
from collabloc.sim.stats import paired_greater_pvalue
from conftest import feats, label, scan


def pool_of(n, prefix="P"):
    return LabelPool([LocationLabel(f"{prefix}{i:04d}", "Main") for i in range(n)])


def base_dist():
    return LabelDistribution({label("A"): 0.6, label("B"): 0.3, label("C"): 0.1})


def test_params_validation():
    with pytest.raises(InvalidArgument):
        PrivacyParams(p1=-1)
    with pytest.raises(InvalidArgument):
        PrivacyParams(p2=-0.1)
    with pytest.raises(InvalidArgument):
        PrivacyParams(k=0)
    assert PrivacyParams(area_level="City").area_level is Level.CITY


def test_decoys_identity_and_exhaustive():
    rng = np.random.default_rng(0)
    d = base_dist()
    assert dict(add_decoys(d, 0, pool_of(50), rng)) == dict(d)
    pool = pool_of(50)
    full = add_decoys(d, 50, pool, rng)
    assert set(full) == set(d) | set(pool.labels)


def test_decoys_count_and_zero_mass():
    d = base_dist()
    out = add_decoys(d, 400, pool_of(1000), np.random.default_rng(1))
    assert len(out) == len(d) + 400
    assert all(out[l] == 0.0 for l in out if l not in d)
    assert all(out[l] == d[l] for l in d)


def test_decoys_exclude_existing_support_and_short_pool():
    d = base_dist()
    pool = LabelPool([label("A"), label("B"), *pool_of(3).labels])
    out = add_decoys(d, 10, pool, np.random.default_rng(2))
    assert len(out) == 3 + 3
    out = add_decoys(d, 2, pool, np.random.default_rng(3))
    assert len(out) == 5 and dict(out)[label("A")] == 0.6


def test_decoys_uniform_without_replacement():
    pool = pool_of(20)
    counts = dict.fromkeys(pool.labels, 0)
    rng = np.random.default_rng(4)
    trials = 4000
    for _ in range(trials):
        picks = pool.sample_excluding(5, {pool.labels[0]}, rng)
        assert len(set(picks)) == 5 and pool.labels[0] not in picks
        for p in picks:
            counts[p] += 1
    expect = trials * 5 / 19
    freq = np.array([counts[l] for l in pool.labels[1:]])
    assert counts[pool.labels[0]] == 0
    # chi-square, 18 dof; 99.9% quantile is about 42.3
    assert float(((freq - expect) ** 2 / expect).sum()) < 42.3


def test_perturb_zero_noise_and_single_label():
    rng = np.random.default_rng(0)
    d = LabelDistribution({label("A"): 2.0, label("B"): 2.0})
    assert dict(perturb(d, 0.0, rng)) == {label("A"): 0.5, label("B"): 0.5}
    one = LabelDistribution({label("A"): 0.3})
    for p2 in (0.0, 0.5, 1e6):
        assert dict(perturb(one, p2, rng)) == {label("A"): 1.0}
    with pytest.raises(InvalidArgument):
        perturb(LabelDistribution(), 0.1, rng)


def test_perturb_support_and_normalization():
    rng = np.random.default_rng(1)
    d = add_decoys(base_dist(), 50, pool_of(200), rng)
    out = perturb(d, 0.3, rng)
    assert list(out) == list(d)
    assert out.is_normalized() and all(p >= 0 for p in out.values())


def test_perturb_all_clamped_is_uniform():
    class Negative:
        def normal(self, loc, scale, size):
            return np.full(size, -10.0)

    d = base_dist()
    out = perturb(d, 1.0, Negative())
    assert all(p == pytest.approx(1 / 3) for p in out.values())


def test_perturb_large_noise_approaches_uniform():
    labels = [label(f"L{i}") for i in range(10)]
    d = LabelDistribution({l: (0.9 if i == 0 else 0.1 / 9) for i, l in enumerate(labels)})
    rng = np.random.default_rng(7)
    mean = np.zeros(len(labels))
    trials = 1000
    for _ in range(trials):
        mean += np.array([perturb(d, 1e6, rng)[l] for l in labels])
    mean /= trials
    tv = 0.5 * np.abs(mean - 1 / len(labels)).sum()
    assert tv < 0.1


def test_top_k_cases():
    d = LabelDistribution({label("C"): 0.2, label("A"): 0.2, label("B"): 0.6})
    assert top_k(d, 10) == [(label("B"), 0.6), (label("A"), 0.2), (label("C"), 0.2)]
    assert top_k(d, 1) == [(label("B"), 0.6)]
    with pytest.raises(InvalidArgument):
        top_k(d, 0)


def test_top_k_matches_sort_oracle():
    rng = np.random.default_rng(8)
    d = add_decoys(base_dist(), 57, pool_of(500), rng)
    d = perturb(d, 0.2, rng)
    assert len(d) == 60
    oracle = sorted(d.items(), key=lambda kv: (-kv[1], kv[0].building, kv[0].room))[:25]
    got = top_k(d, 25)
    assert got == oracle
    # no renormalization after truncation
    assert sum(p for _, p in got) < 1.0


def ten_entry_db():
    db = LocalDatabase()
    for i in range(10):
        aps = {f"ap{i}": -45.0, f"ap{(i + 1) % 10}": -70.0}
        db.insert(Entry(scan(**aps), feats(300.0 + 100 * i, -70.0 - i), label(f"B{i // 2}", f"R{i % 2}")))
    return db


def test_ldg_na_when_no_shared_ap():
    db = ten_entry_db()
    out = generate_location_distribution(db, scan(zz=-40), feats(), PrivacyParams(5, 0.1, 5), pool_of(100),
                                         np.random.default_rng(0))
    assert out is None


def test_ldg_degenerates_to_sorted_two_step():
    db = ten_entry_db()
    q, f = scan(ap3=-45, ap4=-60), feats(600, -73)
    two = two_step_classify(db, q, f, 0.5, 0.5)
    out = generate_location_distribution(db, q, f, PrivacyParams(0, 0.0, 100), pool_of(100),
                                         np.random.default_rng(0))
    assert out == sorted(two.items(), key=lambda kv: (-kv[1], kv[0]))


# sha256 of the JSON-encoded output for the fixture below, pinned at first run
PINNED_LDG_DIGEST = "aae371055ca7c1de95940227f83ad87e53b4c50905856f5229610e6fc5518282"


def _pinned_output(seed):
    db = ten_entry_db()
    return generate_location_distribution(db, scan(ap3=-45, ap4=-60), feats(600, -73),
                                          PrivacyParams(40, 0.2, 10), pool_of(300),
                                          np.random.default_rng(seed), 0.8, 0.2)


def _digest(out):
    return hashlib.sha256(json.dumps([[l.building, l.room, p] for l, p in out]).encode()).hexdigest()


def test_ldg_bit_identical_under_seed():
    a, b = _pinned_output(123), _pinned_output(123)
    assert a == b
    assert _digest(a) == PINNED_LDG_DIGEST
    assert _pinned_output(124) != a


def test_ldg_output_shape_and_zero_mass_decoys():
    db = ten_entry_db()
    q, f = scan(ap3=-45, ap4=-60), feats(600, -73)
    rng = np.random.default_rng(5)
    for k in (1, 5, 25, 200):
        out = generate_location_distribution(db, q, f, PrivacyParams(30, 0.1, k), pool_of(300), rng)
        support = len(db.labels) + 30
        assert len(out) == min(k, support)
        assert all(0.0 <= p <= 1.0 for _, p in out)
    two = two_step_classify(db, q, f)
    enlarged = add_decoys(two, 30, pool_of(300), rng)
    assert all(enlarged[l] == 0.0 for l in enlarged if l not in two)


def true_label_masses(p2, trials=48):
    db = ten_entry_db()
    truth = label("B1", "R1")
    q, f = scan(ap3=-46, ap4=-68), feats(610, -73)
    masses = []
    for t in range(trials):
        out = generate_location_distribution(db, q, f, PrivacyParams(100, p2, 25), pool_of(1000),
                                             np.random.default_rng([t, 77]), 0.8, 0.2)
        masses.append(dict(out).get(truth, 0.0))
    return np.array(masses)


def test_true_label_mass_declines_with_p2():
    series = [true_label_masses(p2) for p2 in (0.0, 0.2, 0.4, 0.6)]
    means = [s.mean() for s in series]
    assert all(b <= a for a, b in zip(means, means[1:]))
    for lo, hi in zip(series, series[1:]):
        assert paired_greater_pvalue(lo, hi) < 0.05
