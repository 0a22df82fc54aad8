import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from antilimit import HypothesisViolation, builtin_model, certify, refine_1d, refine_2d, solve_window_2d
from antilimit.cantor import fibers_1d


def _dw1(eps):
    return builtin_model("double-well", {"epsilon": eps, "mode": "oneD"})


@pytest.fixture(scope="module")
def dw_tree():
    return refine_1d(_dw1(0.5), depth=5)


def test_double_well_count(dw_tree):
    assert dw_tree.counts == [1, 2, 4, 8, 16, 32]


def test_double_well_matches_closed_form(dw_tree):
    ref = oracles.double_well_tree_1d(0.5, 5)
    for lv, want in zip(dw_tree.levels, ref):
        np.testing.assert_allclose(np.column_stack([lv.lo[:, 0], lv.hi[:, 0]]), want, atol=1e-12)


def test_depth_zero_root():
    t = refine_1d(_dw1(0.5), fibers_1d(_dw1(0.5), 1), depth=0)
    assert t.counts == [1] and t.max_diameters() == [2.0]


def test_linear_single_branch_contracts():
    m = builtin_model("linear", {"epsilon": 0.3, "mode": "oneD"})
    t = refine_1d(m, depth=6)
    assert t.counts == [1] * 7
    d = np.array(t.max_diameters())
    slope = oracles.linear_level_slope_1d(0.3)
    np.testing.assert_allclose(d[1:] / d[:-1], slope, rtol=1e-6)


def test_itinerary_restriction(dw_tree):
    m = _dw1(0.5)
    t = refine_1d(m, depth=5, itinerary=(1, 0, 1, 1, 0))
    assert t.counts == [1] * 6 and t.restricted
    full = dw_tree.levels[5]
    i = full.itineraries.index((1, 0, 1, 1, 0))
    assert t.levels[5].lo[0, 0] == full.lo[i, 0] and t.levels[5].hi[0, 0] == full.hi[i, 0]


def test_count_law_and_nesting(dw_tree):
    assert all(c == dw_tree.expected_count(n) for n, c in enumerate(dw_tree.counts))
    assert dw_tree.nesting_ok(1e-10)


def test_diameter_law(dw_tree):
    d = np.array(dw_tree.max_diameters())
    slope = 1.0 - dw_tree.slope_margin
    assert np.all(d[1:] / d[:-1] <= slope + 1e-12)
    assert np.all(d <= 2.0 * slope ** np.arange(len(d)) + 1e-15)


def test_zero_margin_is_violation():
    # eps large enough that the component slopes exceed one
    from dataclasses import replace

    m = _dw1(0.5)
    fibers = fibers_1d(m, 3)
    bad = replace(fibers[0], components=tuple(
        replace(c, max_abs_slope=1.5) for c in fibers[0].components))
    with pytest.raises(HypothesisViolation):
        refine_1d(m, [bad] + fibers[1:])


def test_certify_double_well(dw_tree):
    cert = certify(dw_tree, dw_tree.slope_margin)
    assert cert.passed
    assert cert.split_depths == tuple(range(5)) and cert.min_gap > 0


def test_box_dimension_estimate():
    t = refine_1d(_dw1(0.5), depth=8)
    cert = certify(t, t.slope_margin)
    d = t.max_diameters()
    contraction = d[-1] / d[-2]
    assert cert.box_dim_estimate == pytest.approx(math.log(2) / math.log(1 / contraction), rel=0.05)


def test_certify_single_branch_fails_splits():
    t = refine_1d(builtin_model("linear", {"epsilon": 0.3, "mode": "oneD"}), depth=4)
    cert = certify(t, t.slope_margin)
    assert not cert.clauses["splits"] and not cert.passed


def test_certify_delta_one_fails_diameter(dw_tree):
    assert not certify(dw_tree, 1.0).clauses["diameter"]


def test_certify_shallow_tree_rejected(dw_tree):
    from antilimit import ContractError

    with pytest.raises(ContractError):
        certify(refine_1d(_dw1(0.5), depth=2), 0.5)


@given(st.sampled_from([0.2, 0.5]), st.integers(1, 6))
def test_nesting_property(eps, depth):
    t = refine_1d(_dw1(eps), depth=depth)
    assert t.nesting_ok(1e-10)
    assert t.counts[-1] == 2 ** depth


@pytest.fixture(scope="module")
def dw_tree_2d():
    return refine_2d(builtin_model("double-well", {"epsilon": 0.01}), depth=3, slices=9, grid=64)


def test_refine_2d_count(dw_tree_2d):
    assert dw_tree_2d.counts == [1, 4, 16, 64]
    assert dw_tree_2d.nesting_ok()


def test_refine_2d_depth_zero():
    t = refine_2d(builtin_model("double-well", {"epsilon": 0.01}), depth=0, slices=9, grid=64)
    assert t.counts == [1]
    np.testing.assert_array_equal(t.levels[0].lo, [[-1.0, -1.0, -1.0]])


def test_refine_2d_linear_single_region():
    t = refine_2d(builtin_model("linear", {"epsilon": 0.1}), depth=3, slices=9, grid=64)
    assert t.counts == [1, 1, 1, 1]
    x0 = [lv.hi[0, 1] - lv.lo[0, 1] for lv in t.levels]
    assert all(b < a for a, b in zip(x0, x0[1:]))


def test_refine_2d_certificate(dw_tree_2d):
    assert certify(dw_tree_2d, dw_tree_2d.slope_margin).passed


def test_orbit_consistency(dw_tree_2d):
    m = builtin_model("double-well", {"epsilon": 0.01})
    n = dw_tree_2d.depth
    last = dw_tree_2d.levels[n]
    for i in (0, 21, 42, 63):
        itin = last.itineraries[i]
        x = solve_window_2d(m, l=n, itinerary=itin).segments[0].values
        centre = x[n - 1:n + 2][::-1]  # (x_1, x_0, x_{-1})
        node = i
        for d in range(n, 0, -1):
            lv = dw_tree_2d.levels[d]
            assert np.all(centre >= lv.lo[node] - 1e-10) and np.all(centre <= lv.hi[node] + 1e-10)
            node = int(lv.parent[node])
