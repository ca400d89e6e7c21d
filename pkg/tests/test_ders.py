import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from flexsum.ders import (
    Battery,
    BoxDer,
    ParameterError,
    PvInverter,
    SwitchingLoad,
    WindInverter,
    bounds_of,
    der_from_dict,
    der_to_dict,
    discretize,
    domain_of,
)

pos = st.floats(0.2, 10, allow_nan=False)


@st.composite
def batteries(draw):
    p = draw(pos)
    return Battery(p, p * draw(st.floats(1.0, 1.5)))


@st.composite
def pvs(draw):
    p = draw(pos)
    return PvInverter(p, p * draw(st.floats(1.0, 1.5)))


@st.composite
def winds(draw):
    p = draw(pos)
    alpha = draw(st.floats(0.5, 2))
    s1 = math.sqrt(alpha) * p * draw(st.floats(1.01, 1.5))
    s2 = math.sqrt(alpha) * p * draw(st.floats(1.01, 1.5))
    p0 = p * draw(st.floats(0, 0.1))
    q0 = min(s1, s2) * draw(st.floats(0, 0.1))
    return WindInverter(p, s1, s2, alpha, p0, q0)


@st.composite
def boxes(draw):
    a, b = draw(st.floats(-5, 5)), draw(st.floats(-5, 5))
    return BoxDer(a, a + draw(st.floats(0, 5)), b, b + draw(st.floats(0, 5)))


continuous = st.one_of(batteries(), pvs(), winds(), boxes())
anything = st.one_of(continuous, st.builds(SwitchingLoad, pos, st.floats(0.01, 1)))


def sample_inside(spec, n, seed=0):
    """Rejection samples of the true domain plus each piece's boundary curves."""
    dom = domain_of(spec)
    b = bounds_of(dom)
    rng = np.random.default_rng(seed)
    p = rng.uniform(b.p_inf, b.p_sup, 4 * n)
    q = rng.uniform(b.q_inf, b.q_sup, 4 * n)
    keep = dom.contains(p, q)
    pts = [np.column_stack((p[keep], q[keep]))[:n]]
    for pc in dom.pieces:
        ps = np.linspace(pc.p_lo, pc.p_hi, 200)
        pts += [np.column_stack((ps, pc.q_lower(ps))), np.column_stack((ps, pc.q_upper(ps)))]
    return np.vstack(pts)


def test_battery_membership():
    dom = domain_of(Battery(5, 6))
    assert dom.contains(5, 0) and dom.contains(0, 6)
    assert not dom.contains(5, 4)


def test_switching_load_is_two_points():
    dom = domain_of(SwitchingLoad(4, 0.3))
    assert dom.is_discrete
    pts = sorted((pc.p_lo, float(pc.q_lower(np.array(pc.p_lo)))) for pc in dom.pieces)
    assert pts == [(0.0, 0.0), (4.0, pytest.approx(1.2))]


def test_wind_idle_box_collapses_to_origin():
    dom = domain_of(WindInverter(2, 2.5, 2.6, 1.0, 0.0, 0.0))
    idle = dom.pieces[0]
    assert idle.is_point
    assert idle.contains(0, 0) and not idle.contains(0, 0.01)


@pytest.mark.parametrize("spec, expected", [
    (Battery(5, 6), (-5, 5, -6, 6)),
    (SwitchingLoad(4, 0.3), (0, 4, 0, 1.2)),
    # dense sampling of the three pieces at p-step 1e-3
    (WindInverter(2, 2.5, 2.6, 1.0, 0.1, 0.05), (-2, 0, -2.497999199359, 2.598076211353)),
])
def test_bounds_examples(spec, expected):
    b = bounds_of(spec)
    np.testing.assert_allclose((b.p_inf, b.p_sup, b.q_inf, b.q_sup), expected, atol=1e-9)


@given(anything)
def test_bounds_agree_with_dense_sampling(spec):
    b = bounds_of(spec)
    pts = sample_inside(spec, 2000)
    assert pts[:, 0].min() >= b.p_inf - 1e-9 and pts[:, 0].max() <= b.p_sup + 1e-9
    assert pts[:, 1].min() >= b.q_inf - 1e-9 and pts[:, 1].max() <= b.q_sup + 1e-9
    # the extremes are attained up to the boundary sampling pitch
    slack = 0.02 * max(b.dp, b.dq, 1e-9) + 1e-9
    assert pts[:, 1].max() >= b.q_sup - slack and pts[:, 1].min() <= b.q_inf + slack


@pytest.mark.parametrize("bad", [
    lambda: Battery(5, 4),
    lambda: Battery(-1, 4),
    lambda: WindInverter(2, 1.9, 3, 1.0),
    lambda: WindInverter(2, 2.5, 2.6, 1.0, p0=2.0),
    lambda: PvInverter(3, 2),
    lambda: SwitchingLoad(0, 0.3),
    lambda: SwitchingLoad(1, -0.3),
    lambda: BoxDer(1, 0, 0, 1),
])
def test_invalid_parameters_rejected(bad):
    with pytest.raises(ParameterError):
        bad()


def test_switching_discretization_is_verbatim():
    u = discretize(SwitchingLoad(4, 0.3), 0.1, 0.1)
    assert sorted(map(tuple, u.blocks.round(12).tolist())) == [(0, 0, 0, 0), (4, 4, 1.2, 1.2)]


def test_unit_disk_single_column():
    u = discretize(Battery(1, 1), 2.0, 2.0)
    assert u.blocks.tolist() == [[-1.0, 1.0, -1.0, 1.0]]


def test_unit_disk_outer_column_enclosure():
    u = discretize(Battery(1, 1), 0.5, 2.0)
    col = u.blocks[np.isclose(u.blocks[:, 0], 0.5)]
    assert len(col) == 1
    # dense-sampled maximum of sqrt(1 - p^2) over [0.5, 1]
    np.testing.assert_allclose(col[0, 2:], [-0.866025403784, 0.866025403784], atol=1e-6)


def test_negative_width_rejected():
    with pytest.raises(ValueError):
        discretize(Battery(1, 1), -0.5, 0.5)
    with pytest.raises(ValueError):
        discretize(Battery(1, 1), 0.0, 0.5)


@given(continuous, st.floats(0.05, 2), st.floats(0.05, 2))
def test_discretization_covers_domain(spec, w_p, w_q):
    u = discretize(spec, w_p, w_q)
    pts = sample_inside(spec, 10_000)
    assert u.contains(pts).all()


@given(anything, st.floats(0.05, 2), st.floats(0.05, 2))
def test_discretization_width_bound_and_count(spec, w_p, w_q):
    u = discretize(spec, w_p, w_q)
    b = u.blocks
    assert np.all(b[:, 1] - b[:, 0] <= w_p + 1e-9)
    assert np.all(b[:, 3] - b[:, 2] <= w_q + 1e-9)
    limit = 0
    for pc in domain_of(spec).pieces:
        lo, hi = pc.q_enclosure(np.array([pc.p_lo]), np.array([pc.p_hi]))
        limit += max(1, math.ceil((pc.p_hi - pc.p_lo) / w_p - 1e-9)) * \
            max(1, math.ceil((hi[0] - lo[0]) / w_q - 1e-9))
    assert len(b) <= limit


@given(continuous, st.floats(0.05, 2), st.floats(0.05, 2))
def test_every_block_touches_domain(spec, w_p, w_q):
    dom = domain_of(spec)
    b = discretize(spec, w_p, w_q).blocks
    t = np.linspace(0, 1, 9)
    tp, tq = np.meshgrid(t, t)
    p = b[:, 0:1] + (b[:, 1] - b[:, 0])[:, None] * tp.ravel()
    q = b[:, 2:3] + (b[:, 3] - b[:, 2])[:, None] * tq.ravel()
    assert dom.contains(p, q, tol=1e-9).any(axis=1).all()


@given(anything)
def test_dict_round_trip(spec):
    assert der_from_dict(der_to_dict(spec)) == spec


def test_unknown_type():
    with pytest.raises(KeyError):
        der_from_dict({"type": "fusion", "p_max": 1})
