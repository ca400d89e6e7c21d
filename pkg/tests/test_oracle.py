import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial import cKDTree

from flexsum.aggregator import TightnessConfig, aggregate
from flexsum.ders import Battery, SwitchingLoad, WindInverter
from flexsum.oracle import (
    OracleCapExceeded,
    PointCloud,
    analytic_disk_sum,
    brute_force_msum,
    check_superset,
    check_tightness,
    ensemble_truth,
    sample_domain,
)


def as_set(points, nd=9):
    return {tuple(p) for p in np.round(points, nd).tolist()}


def test_sample_switching_is_exact():
    for delta in (0.01, 0.3, 5.0):
        assert as_set(sample_domain(SwitchingLoad(4, 0.3), delta).points) == {(0.0, 0.0), (4.0, 1.2)}


def test_sample_unit_disk():
    pts = as_set(sample_domain(Battery(1, 1), 0.5).points)
    assert {(0.0, 1.0), (0.0, -1.0), (1.0, 0.0), (-1.0, 0.0)} <= pts
    assert (1.0, 1.0) not in pts


def test_sample_wind_left_half_plane():
    cloud = sample_domain(WindInverter(2, 2.5, 2.6, 1.0, 0.1, 0.05), 0.05)
    assert cloud.points[:, 0].max() <= 1e-12
    assert cloud.points[:, 1].max() > 2.5 and cloud.points[:, 1].min() < -2.4


def test_two_on_off_clouds_sum_to_four_points():
    a = sample_domain(SwitchingLoad(1, 0.5), 0.1)
    b = sample_domain(SwitchingLoad(2, 0.5), 0.1)
    assert as_set(brute_force_msum([a, b]).points) == {(0, 0), (1, 0.5), (2, 1), (3, 1.5)}


def test_ten_on_off_at_most_1024():
    clouds = [sample_domain(SwitchingLoad(1 + 0.1 * i, 0.3), 0.01) for i in range(10)]
    assert len(brute_force_msum(clouds)) <= 1024


def test_two_unit_disks_within_triangle_bound():
    delta = 0.05
    c = sample_domain(Battery(1, 1), delta)
    s = brute_force_msum([c, c])
    assert np.all(np.hypot(*s.points.T) <= 2 + 2 * delta)


def naive_sum(a, b, delta):
    pts = (a[:, None, :] + b[None, :, :]).reshape(-1, 2)
    keys = np.round(pts / (delta / 10)).astype(np.int64)
    return {tuple(k) for k in np.unique(keys, axis=0).tolist()}


@pytest.mark.parametrize("specs, delta", [
    # dense lattice clouds: the image-convolution branch does the work
    ((Battery(1, 1.1), Battery(0.7, 0.8)), 0.05),
    # a second lattice translate from the wind idle box and a point piece
    ((WindInverter(1, 1.3, 1.35, 1.0, 0.07, 0.03), SwitchingLoad(0.33, 0.4)), 0.05),
    ((WindInverter(1, 1.3, 1.35, 1.0, 0.07, 0.03), Battery(0.5, 0.6)), 0.04),
])
def test_brute_force_equals_naive_enumeration(specs, delta):
    a, b = (sample_domain(s, delta) for s in specs)
    got = brute_force_msum([a, b])
    keys = {tuple(k) for k in np.round(got.points / (delta / 10)).astype(np.int64).tolist()}
    assert keys == naive_sum(a.points, b.points, delta)


def test_brute_force_points_decompose():
    delta = 0.1
    clouds = [sample_domain(s, delta) for s in (Battery(1, 1.2), WindInverter(1, 1.3, 1.3, 1.0, 0.05, 0.05))]
    s = brute_force_msum(clouds)
    rng = np.random.default_rng(0)
    pick = s.points[rng.choice(len(s), max(1, len(s) // 100), replace=False)]
    tree = cKDTree(clouds[1].points)
    for x in pick:
        d, _ = tree.query(x - clouds[0].points)
        assert d.min() < 1e-9


def test_deterministic():
    ders = [Battery(1, 1.2), WindInverter(1, 1.3, 1.3, 1.0, 0.05, 0.05)]
    np.testing.assert_array_equal(ensemble_truth(ders, 0.05).points, ensemble_truth(ders, 0.05).points)


def test_cap_refuses_with_estimate():
    with pytest.raises(OracleCapExceeded) as info:
        ensemble_truth([Battery(1, 1.2)] * 3, 0.02, cap=1000)
    assert info.value.estimate > 1000


def test_superset_examples():
    loads = [SwitchingLoad(1, 0.5), SwitchingLoad(2, 0.25)]
    res = aggregate(loads, TightnessConfig(0.1))
    assert check_superset(res, ensemble_truth(loads, 0.01)).ok
    eps = 0.1
    disks = [Battery(1, 1), Battery(0.8, 0.8)]
    res = aggregate(disks, TightnessConfig(eps))
    truth = ensemble_truth(disks, eps / 10)
    assert check_superset(res, truth).ok
    shrunk = res.blocks.blocks + [2 * eps, -2 * eps, 2 * eps, -2 * eps]
    shrunk = shrunk[(shrunk[:, 0] <= shrunk[:, 1]) & (shrunk[:, 2] <= shrunk[:, 3])]
    rep = check_superset(shrunk, truth)
    assert not rep.ok and rep.max_gap > 0


def test_tightness_examples():
    one = [SwitchingLoad(3, 0.2)]
    res = aggregate(one, TightnessConfig(0.1))
    assert check_tightness(res, ensemble_truth(one, 0.01), 0.1).worst == pytest.approx(0, abs=1e-12)
    eps = 0.2
    bat = [Battery(1.5, 1.8)]
    truth = ensemble_truth(bat, eps / 10)
    rep = check_tightness(aggregate(bat, TightnessConfig(eps)), truth, eps)
    assert rep.worst <= eps + truth.delta
    with pytest.raises(ValueError):
        check_tightness(res, ensemble_truth(one, 0.5), 0.1)


def test_disk_sum_membership():
    member = analytic_disk_sum([3, 4])
    assert member(7, 0) and not member(7.01, 0)
    assert analytic_disk_sum([2.5]).radius == 2.5
    with pytest.raises(ValueError):
        analytic_disk_sum([1, -1])


def test_three_unit_disks_cover_and_containment():
    eps = 0.1
    res = aggregate([Battery(1, 1)] * 3, TightnessConfig(eps))
    theta = np.deg2rad(np.arange(360))
    ring = 3 * np.column_stack((np.cos(theta), np.sin(theta)))
    assert res.blocks.contains(ring).all()
    _, _, cells = res.cells()
    corners = np.vstack([cells[:, [i, j]] for i in (0, 1) for j in (2, 3)])
    assert np.hypot(*corners.T).max() <= 3 + 2 * math.sqrt(2) * eps


@settings(max_examples=30)
@given(st.lists(st.tuples(st.floats(0.2, 5), st.floats(0.05, 0.6)), min_size=1, max_size=12))
def test_on_off_ensembles_have_no_violations(params):
    loads = [SwitchingLoad(p, g) for p, g in params]
    res = aggregate(loads, TightnessConfig(0.05))
    m = np.arange(1 << len(loads))[:, None] >> np.arange(len(loads)) & 1
    pts = np.column_stack((m @ [p for p, _ in params], m @ [p * g for p, g in params]))
    assert check_superset(res, PointCloud(pts, 0.005)).ok
