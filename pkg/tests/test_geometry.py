import numpy as np
import pytest
from hypothesis import given, strategies as st

from flexsum.geometry import (
    ContractViolation,
    IndexRange,
    Interval,
    PixelGrid,
    Rect,
    RectUnion,
    SumExtents,
    coalesce,
    grid_to_rect_union,
    mark_range,
    mark_ranges,
    msum_rect_unions,
    msum_rects,
    range_reduce,
    rasterize_block,
    rasterize_blocks,
    split_blocks,
)

coord = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
size = st.floats(0, 10, allow_nan=False, allow_infinity=False)


@st.composite
def rects(draw, lo=coord, ext=size):
    p, q = draw(lo), draw(lo)
    return Rect.from_bounds(p, p + draw(ext), q, q + draw(ext))


@st.composite
def unions(draw, max_size=5):
    return RectUnion.from_rects(draw(st.lists(rects(), min_size=1, max_size=max_size)))


def lattice(union: RectUnion, step=0.25):
    """Points of a regular lattice inside each member, corners included."""
    out = []
    for r in union:
        ps = np.unique(np.append(np.arange(r.p.lo, r.p.hi, step), r.p.hi))
        qs = np.unique(np.append(np.arange(r.q.lo, r.q.hi, step), r.q.hi))
        out.append(np.stack(np.meshgrid(ps, qs), -1).reshape(-1, 2))
    return np.vstack(out)


def test_interval_rejects_inverted():
    with pytest.raises(ValueError):
        Interval(1.0, 0.0)
    assert Interval(2.0, 2.0).width == 0


def test_msum_rects_endpoint_addition():
    r = msum_rects(Rect.from_bounds(1, 2, 3, 4), Rect.from_bounds(10, 20, 30, 40))
    assert r.as_tuple() == (11, 22, 33, 44)


@given(rects())
def test_origin_is_identity(r):
    assert msum_rects(Rect.point(0, 0), r) == r


def test_points_sum_to_point():
    assert msum_rects(Rect.point(1, 0.5), Rect.point(2, 1)) == Rect.point(3, 1.5)


def test_on_off_pair_closed_form():
    a = RectUnion.from_rects([Rect.point(0, 0), Rect.point(1, 0.5)])
    b = RectUnion.from_rects([Rect.point(0, 0), Rect.point(2, 1)])
    got = {tuple(r.as_tuple()) for r in msum_rect_unions(a, b)}
    assert got == {(0, 0, 0, 0), (1, 1, 0.5, 0.5), (2, 2, 1, 1), (3, 3, 1.5, 1.5)}


def test_empty_operand_annihilates():
    a = RectUnion.from_rects([Rect.from_bounds(0, 1, 0, 1)])
    assert len(msum_rect_unions(a, RectUnion.empty())) == 0
    assert len(msum_rect_unions(RectUnion.empty(), a)) == 0


def test_two_rect_unions_match_sampled_sum():
    a = RectUnion.from_rects([Rect.from_bounds(0, 1, 0, 0.5), Rect.from_bounds(2, 2.5, -1, 0)])
    b = RectUnion.from_rects([Rect.from_bounds(0, 0.3, 0, 0.3), Rect.from_bounds(-1, -0.5, 1, 1.2)])
    s = msum_rect_unions(a, b)
    assert len(s) == 4
    pa, pb = lattice(a, 0.01), lattice(b, 0.01)
    sums = (pa[:, None, :] + pb[None, ::7, :]).reshape(-1, 2)
    assert s.contains(sums).all()
    # and the other way round: every lattice point of the result is a sum
    pts = lattice(s, 0.05)
    lo = np.array([[r.p.lo, r.q.lo] for r in b])
    hi = np.array([[r.p.hi, r.q.hi] for r in b])
    ok = np.zeros(len(pts), bool)
    for r in a:
        for j in range(len(b)):
            ok |= np.all((pts >= lo[j] + [r.p.lo, r.q.lo] - 1e-9)
                         & (pts <= hi[j] + [r.p.hi, r.q.hi] + 1e-9), axis=1)
    assert ok.all()


@given(unions(4), unions(4))
def test_msum_commutes_as_point_sets(a, b):
    ab, ba = msum_rect_unions(a, b), msum_rect_unions(b, a)
    assert len(ab) == len(a) * len(b)
    assert ba.contains(lattice(ab, 1.0)).all()
    assert ab.contains(lattice(ba, 1.0)).all()


@given(unions(3), unions(3))
def test_msum_matches_pairwise_point_sums(a, b):
    s = msum_rect_unions(a, b)
    pa, pb = lattice(a, 2.0), lattice(b, 2.0)
    assert s.contains((pa[:, None, :] + pb[None, :, :]).reshape(-1, 2)).all()


def grid(eps=0.5, dim=10, origin=(0.0, 0.0)):
    return PixelGrid(origin[0], origin[1], eps, eps, dim, dim)


@pytest.mark.parametrize("p, k", [((1.2, 1.7), (3, 4)), ((0.0, 0.0), (1, 1)), ((0.5, 1.0), (1, 2))])
def test_rasterize_index_arithmetic(p, k):
    idx = rasterize_block(Rect.from_bounds(p[0], p[1], 0, 0), grid())
    assert (idx.k0, idx.kf) == k
    assert (idx.l0, idx.lf) == (1, 1)


def test_rasterize_guard_absorbs_float_noise():
    # 0.1 * 3 lands a hair above 0.3; the guard keeps it in pixel 3
    g = PixelGrid(0.0, 0.0, 0.1, 0.1, 3, 3)
    idx = rasterize_block(Rect.from_bounds(0, 0.1 * 3, 0, 0.3), g)
    assert idx.kf == 3 and idx.lf == 3


def test_rasterize_outside_grid_is_contract_violation():
    with pytest.raises(ContractViolation):
        rasterize_block(Rect.from_bounds(0, 6, 0, 1), grid())
    with pytest.raises(ContractViolation):
        rasterize_block(Rect.from_bounds(-1, 0, 0, 1), grid())


@given(rects(lo=st.floats(0, 20), ext=st.floats(0, 5)), st.floats(0.05, 3))
def test_rasterized_pixels_cover_block_with_one_pixel_slack(r, eps):
    dim = int(np.ceil(30 / eps)) + 2
    g = PixelGrid(0.0, 0.0, eps, eps, dim, dim)
    idx = rasterize_block(r, g)
    lo_p, hi_p = (idx.k0 - 1) * eps, idx.kf * eps
    lo_q, hi_q = (idx.l0 - 1) * eps, idx.lf * eps
    pts = lattice(RectUnion.from_rects([r]), max(r.p.width, r.q.width, 1e-3) / 7)
    tol = 1e-9 * max(1.0, 30 / eps)
    assert np.all(pts[:, 0] >= lo_p - tol) and np.all(pts[:, 0] <= hi_p + tol)
    assert np.all(pts[:, 1] >= lo_q - tol) and np.all(pts[:, 1] <= hi_q + tol)
    assert lo_p >= r.p.lo - eps - tol and hi_p <= r.p.hi + eps + tol
    assert lo_q >= r.q.lo - eps - tol and hi_q <= r.q.hi + eps + tol


def test_mark_range_counts_idempotent_disjoint():
    g = grid()
    mark_range(g, IndexRange(1, 2, 1, 3))
    assert g.count == 6
    mark_range(g, IndexRange(1, 2, 1, 3))
    assert g.count == 6
    mark_range(g, IndexRange(5, 5, 5, 6))
    assert g.count == 8
    with pytest.raises(ContractViolation):
        mark_range(g, IndexRange(1, 11, 1, 1))


@given(st.lists(st.tuples(st.integers(1, 9), st.integers(0, 3), st.integers(1, 9), st.integers(0, 3)),
                max_size=30))
def test_mark_ranges_matches_slicing(boxes):
    a, b = grid(), grid()
    for k0, dk, l0, dl in boxes:
        mark_range(a, IndexRange(k0, min(10, k0 + dk), l0, min(10, l0 + dl)))
    if boxes:
        arr = np.array(boxes)
        mark_ranges(b, arr[:, 0], np.minimum(10, arr[:, 0] + arr[:, 1]),
                    arr[:, 2], np.minimum(10, arr[:, 2] + arr[:, 3]))
    np.testing.assert_array_equal(a.occupancy, b.occupancy)


def test_grid_to_rect_union_examples():
    full = PixelGrid(0, 0, 1, 1, 2, 2)
    full.occupancy[:] = True
    u = grid_to_rect_union(full)
    assert u.bbox() == (0, 2, 0, 2) and u.area() == 4
    assert len(grid_to_rect_union(PixelGrid(0, 0, 1, 1, 2, 2))) == 0
    checker = PixelGrid(0, 0, 1, 1, 2, 2, np.array([[True, False], [False, True]]))
    u = grid_to_rect_union(checker)
    assert len(u) == 2 and u.area() == 2


@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**31 - 1))
def test_row_runs_preserve_point_set(dp, dq, seed):
    occ = np.random.default_rng(seed).random((dp, dq)) < 0.5
    g = PixelGrid(-1.0, 2.0, 0.5, 0.25, dp, dq, occ)
    u = grid_to_rect_union(g)
    k, l = np.nonzero(occ)
    centres = np.column_stack((-1.0 + (k + 0.5) * 0.5, 2.0 + (l + 0.5) * 0.25))
    assert u.contains(centres, tol=0).all()
    assert np.isclose(u.area(), occ.sum() * 0.125)


def test_coalesce_keeps_point_set():
    u = RectUnion(np.array([[0, 1, 0, 1], [0, 1, 1, 2], [0, 1, 3, 4], [1, 2, 0, 1]], float))
    c = coalesce(u)
    assert len(c) == 3
    assert c.area() == u.area()


def test_range_reduce_against_loop(rng):
    n = 41
    start = rng.integers(0, n, 300)
    stop = np.minimum(n - 1, start + rng.integers(0, 25, 300))
    vals = rng.normal(size=300)
    lo = np.full(n, np.inf)
    hi = np.full(n, -np.inf)
    for s, e, v in zip(start, stop, vals):
        lo[s:e + 1] = np.minimum(lo[s:e + 1], v)
        hi[s:e + 1] = np.maximum(hi[s:e + 1], v)
    np.testing.assert_array_equal(range_reduce(n, start, stop, vals), lo)
    np.testing.assert_array_equal(range_reduce(n, start, stop, vals, np.maximum, -np.inf), hi)


@given(unions(6), st.floats(0.3, 3))
def test_refined_runs_still_cover_blocks(u, eps):
    bb = u.bbox()
    b = u.blocks - [bb[0], bb[0], bb[2], bb[2]]
    dim_p = max(1, int(np.ceil(b[:, 1].max() / eps - 1e-9)))
    dim_q = max(1, int(np.ceil(b[:, 3].max() / eps - 1e-9)))
    g = PixelGrid(0, 0, eps, eps, dim_p, dim_q)
    ext = SumExtents.empty(g)
    idx = rasterize_blocks(b, g)
    mark_ranges(g, *idx)
    ext.update(b, *idx)
    refined = grid_to_rect_union(g, extents=ext)
    plain = grid_to_rect_union(g)
    pts = lattice(RectUnion(b), 0.2)
    assert refined.contains(pts).all()
    assert refined.area() <= plain.area() + 1e-9


def test_split_blocks_reproduces_pixels():
    g = PixelGrid(0, 0, 1, 1, 4, 3)
    g.occupancy[[0, 1, 3], 1] = True
    k, l, cells = split_blocks(grid_to_rect_union(g).blocks, g)
    assert sorted(zip(k.tolist(), l.tolist())) == [(1, 2), (2, 2), (4, 2)]
    assert np.allclose(cells[:, 1] - cells[:, 0], 1)
