import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from antilimit import (
    BoundaryEscapeError,
    ContractError,
    builtin_model,
    extend_segment,
    solve_backward_1d,
    solve_forward_1d,
    solve_window_2d,
)
from antilimit.orbits import make_segment, window_residuals


def _dw1(eps):
    return builtin_model("double-well", {"epsilon": eps, "mode": "oneD"})


def test_backward_double_well_two_roots():
    m = _dw1(0.01)
    roots = solve_backward_1d(m, m.theta(0), 0.0)
    ys = np.linspace(-1, 1, 10 ** 6 + 1)
    f = 0.01 * (0.0 - 2 * ys) / 8 + ys ** 2 - 0.25
    assert len(roots) == int((np.sign(f[1:]) != np.sign(f[:-1])).sum()) == 2
    assert abs(roots[0] + 0.5) < 0.02 and abs(roots[1] - 0.5) < 0.02


@given(st.floats(-1, 1))
def test_backward_linear_unique_root(x_next):
    m = builtin_model("linear", {"epsilon": 0.1, "mode": "oneD"})
    (root,) = solve_backward_1d(m, m.theta(0), x_next)
    # 0.1 (x_next - 2x)/8 + x = 0
    assert root == pytest.approx(-0.1 * x_next / (8 - 0.2), abs=1e-14)


def test_backward_zero_epsilon_gives_zeros_of_v():
    m = _dw1(0.0)
    assert solve_backward_1d(m, m.theta(0), 0.3) == pytest.approx([-0.5, 0.5], abs=1e-14)


def test_backward_component_selection():
    m = _dw1(0.01)
    (upper,) = solve_backward_1d(m, m.theta(0), 0.0, component=1)
    assert abs(upper - 0.5) < 0.02
    with pytest.raises(ContractError):
        solve_backward_1d(m, m.theta(0), 0.0, component=2)


def test_forward_linear():
    m = builtin_model("linear", {"epsilon": 0.1, "mode": "oneD"})
    assert solve_forward_1d(m, m.theta(0), 0.0) == 0.0


def test_forward_double_well_escapes_at_wall():
    m = _dw1(0.1)
    with pytest.raises(BoundaryEscapeError):
        solve_forward_1d(m, m.theta(0), 0.5)


def test_forward_monotone_under_offset():
    m = _dw1(0.1)
    x = solve_forward_1d(m, m.theta(0), 0.51)
    shifted = solve_forward_1d(m, m.theta(0), 0.51, offset=1e-3)
    # dZ/du > 0, so a positive offset moves the root down
    assert shifted < x


def test_extend_double_well_backward_stays_near_half():
    m = _dw1(0.01)
    seg = make_segment(m, 0, [0.5])
    for _ in range(10):
        seg = extend_segment(m, seg, "backward", component=1)
    assert np.abs(seg.values - 0.5).max() < 0.02
    assert seg.max_residual <= 1e-9
    assert seg.itinerary[:10] == (1,) * 10


def test_extend_linear_zero():
    m = builtin_model("linear", {"epsilon": 0.1, "mode": "oneD"})
    seg = make_segment(m, 0, [0.0])
    seg = extend_segment(m, extend_segment(m, seg, "backward"), "forward")
    assert np.all(seg.values == 0.0) and seg.window == (-1, 1)


def test_extend_invalid_component():
    m = _dw1(0.01)
    with pytest.raises(ContractError):
        extend_segment(m, make_segment(m, 0, [0.5]), "backward", component=5)


def test_extend_default_choice_recorded():
    m = _dw1(0.01)
    seg = extend_segment(m, make_segment(m, 0, [0.5]), "backward")
    # ties in |x| go to the smaller root
    assert seg.itinerary[0] == 0 and seg.values[0] < 0


def test_window_double_well_32():
    m = builtin_model("double-well", {"epsilon": 0.01})
    sol = solve_window_2d(m, l=2)
    assert len(sol) == 32 and sol.complete
    assert np.abs(np.abs(sol.values()) - 0.5).max() < 0.05
    ref = oracles.enumerate_double_well_window(0.01, 2)
    got = np.array(sorted(sol.values().tolist()))
    np.testing.assert_allclose(got, ref, atol=1e-9)


def test_window_linear_unique_zero():
    m = builtin_model("linear", {"epsilon": 0.1})
    for l in (0, 2, 5):
        sol = solve_window_2d(m, l=l)
        assert len(sol) == 1
        assert np.all(sol.segments[0].values == 0.0) and sol.segments[0].max_residual == 0.0


def test_window_zero_epsilon_decouples():
    m = builtin_model("double-well", {"epsilon": 0.0})
    sol = solve_window_2d(m, l=1, a=0.9, b=-0.3)
    assert len(sol) == 8
    assert set(np.round(sol.values().ravel(), 12)) == {-0.5, 0.5}


def test_window_rejects_boundary_outside_i():
    m = builtin_model("double-well", {"epsilon": 0.01})
    with pytest.raises(ContractError):
        solve_window_2d(m, l=1, a=1.5)


def test_window_enforces_coupling_bound():
    m = builtin_model("double-well", {"epsilon": 0.9})
    with pytest.raises(ContractError):
        solve_window_2d(m, l=1)


def test_window_residual_independent_recheck():
    m = builtin_model("double-well", {"epsilon": 0.1})
    for seg in solve_window_2d(m, l=2, a=0.3, b=-0.2).segments:
        r = oracles.double_well_window_residual(seg.values, 0.1, 0.3, -0.2)
        assert np.abs(r).max() <= 1e-9
        assert np.all(np.abs(seg.values) <= 1.0)


def test_solutions_pairwise_distinct():
    m = builtin_model("double-well", {"epsilon": 0.1})
    X = solve_window_2d(m, l=2).values()
    d = np.abs(X[:, None, :] - X[None, :, :]).max(axis=2)
    assert d[~np.eye(len(X), dtype=bool)].min() > 1e-6


@given(st.sampled_from([0.01, 0.05, 0.1]), st.floats(-1, 1), st.floats(-1, 1))
def test_window_nesting(eps, a, b):
    m = builtin_model("double-well", {"epsilon": eps})
    outer = solve_window_2d(m, l=2, a=a, b=b)
    for seg in outer.segments[::7]:
        inner = solve_window_2d(m, l=1, a=float(seg.values[4]), b=float(seg.values[0])).values()
        d = np.abs(inner - seg.values[1:4]).max(axis=1).min()
        assert d <= 1e-6


def test_epsilon_continuity():
    itin = (0, 1, 1, 0, 1)
    dev = []
    for eps in (0.04, 0.02):
        m = builtin_model("double-well", {"epsilon": eps})
        x = solve_window_2d(m, l=2, itinerary=itin).segments[0].values
        dev.append(np.abs(x - np.where(np.array(itin) == 1, 0.5, -0.5)).max())
    assert dev[1] / dev[0] <= 0.75


def test_orbit_csv_columns():
    m = builtin_model("double-well", {"epsilon": 0.01})
    seg = solve_window_2d(m, l=1).segments[0]
    rows = seg.csv_rows()
    assert [r[0] for r in rows] == [-1, 0, 1] and len(rows[0]) == 4
    assert window_residuals(m, [-1, 0, 1], seg.thetas, seg.values, 0.0, 0.0).max() <= 1e-9
