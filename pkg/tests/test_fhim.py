import math
import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from antilimit import ContractError, ExistenceViolation, builtin_model
from antilimit.fhim import (
    TorusGrid,
    continue_parameter,
    derivative_growth,
    gradient_flow,
    graph_residual,
    iterate_skew,
    lyapunov_exponents,
    newton_solve_K,
    zero_guess,
)
from antilimit.model import ScalarField
from antilimit.orbits import solve_window_2d

GOLDEN = (math.sqrt(5) - 1) / 2


def linear(eps, **extra):
    return builtin_model("linear", {"epsilon": eps, "omega": GOLDEN, **extra})


def standard_map(gamma=0.1, kappa=1.0, **extra):
    return builtin_model("standard-map", {"gamma": gamma, "kappa": kappa, "omega": GOLDEN, **extra})


def vs_family(s, eps):
    return builtin_model("vs-family", {"s": s, "epsilon": eps, "omega": GOLDEN})


# --- torus grid ------------------------------------------------------------------


@pytest.mark.parametrize("N", [3, 6, 100])
def test_grid_size_must_be_power_of_two(N):
    with pytest.raises(ContractError):
        TorusGrid(N)


def test_trigonometric_shift_is_exact_on_low_modes():
    g = TorusGrid(64)
    f = np.cos(2 * np.pi * 3 * g.points) + 0.5 * np.sin(2 * np.pi * 5 * g.points)
    shifted = g.shift_operator(GOLDEN) @ f
    expected = np.cos(2 * np.pi * 3 * (g.points + GOLDEN)) + 0.5 * np.sin(2 * np.pi * 5 * (g.points + GOLDEN))
    assert np.abs(shifted - expected).max() < 1e-12


def test_shift_by_whole_cells_is_a_permutation():
    for interp in ("trigonometric", "linear"):
        g = TorusGrid(16, interp)
        f = np.arange(16.0)
        assert np.allclose(g.shift_operator(3 / 16) @ f, np.roll(f, -3))


# --- newton_solve_K ----------------------------------------------------------------


@pytest.mark.parametrize("eps", [0.5, 0.1, 0.01])
def test_linear_graph_is_zero(eps):
    g = newton_solve_K(linear(eps), TorusGrid(1024), 0.3)
    assert g.residual_norm < 1e-12
    assert np.abs(g.values).max() < 1e-12


@pytest.mark.parametrize("branch", [-0.5, 0.5])
@pytest.mark.parametrize("eps", [0.5, 0.01])
def test_double_well_constant_graphs(branch, eps):
    m = builtin_model("double-well", {"epsilon": eps, "omega": GOLDEN})
    g = newton_solve_K(m, TorusGrid(64), branch)
    assert np.abs(g.values - branch).max() < 1e-14
    assert g.residual_norm < 1e-14


def test_standard_map_graph_refinement():
    m = standard_map()
    g1 = newton_solve_K(m, TorusGrid(1024), 0.5)
    g2 = newton_solve_K(m, TorusGrid(2048), 0.5)
    assert g1.residual_norm <= 1e-10 and g2.residual_norm <= 1e-10
    assert np.abs(g2(g1.thetas) - g1.values).max() < 1e-8
    # frozen values from this solver at N=1024
    assert g1.values[256] == pytest.approx(0.5223703474129482, abs=1e-12)
    assert g1(0.1) == pytest.approx(0.5131330565021404, abs=1e-12)


def test_accepted_graph_residual_recomputed():
    m = standard_map()
    grid = TorusGrid(256)
    g = newton_solve_K(m, grid, 0.5)
    assert np.abs(graph_residual(m, grid, g.values)).max() <= 1e-10


@settings(max_examples=10)
@given(st.floats(0.001, 0.05))
def test_vs_family_grid_refinement_stable(eps):
    m = vs_family(0.0, eps)
    g1 = newton_solve_K(m, TorusGrid(256), zero_guess(m, TorusGrid(256)))
    g2 = newton_solve_K(m, TorusGrid(512), g1)
    assert np.abs(g2(g1.thetas) - g1.values).max() < 1e-6


def test_graph_needs_rotation_base():
    m = builtin_model("linear", {"epsilon": 0.1})
    with pytest.raises(ContractError):
        newton_solve_K(m, TorusGrid(16), 0.0)


def test_zero_guess_branches():
    m = builtin_model("double-well", {"epsilon": 0.1, "omega": GOLDEN})
    grid = TorusGrid(8)
    assert np.allclose(zero_guess(m, grid, "lowest"), -0.5)
    assert np.allclose(zero_guess(m, grid, "highest"), 0.5)
    with pytest.raises(ContractError):
        zero_guess(m, grid, "middle")


def test_zero_guess_without_zeros():
    m = builtin_model("standard-map", {"gamma": 5.0, "kappa": 0.0, "omega": GOLDEN})
    with pytest.raises(ExistenceViolation):
        zero_guess(m, TorusGrid(8))


# --- continuation ---------------------------------------------------------------------


def test_linear_continuation_has_no_breakdown():
    scan = continue_parameter(linear(0.5), TorusGrid(64), np.linspace(0.5, 0.01, 8), 0.0, param="epsilon")
    assert scan.critical is None
    assert all(e.status == "ok" and e.deriv_estimate == 0.0 for e in scan.entries)
    assert scan.deriv_nondecreasing


def test_single_point_path():
    scan = continue_parameter(linear(0.5), TorusGrid(16), [0.5], 0.0, param="epsilon")
    assert len(scan.entries) == 1 and scan.critical is None


def test_path_must_be_monotone():
    with pytest.raises(ContractError):
        continue_parameter(linear(0.5), TorusGrid(16), [0.1, 0.3, 0.2], 0.0, param="epsilon")


def test_vs_family_branch_breakdown():
    # the decoupled graph on the lowest zero, continued from s = 0, loses
    # convergence after the fibers fold; frozen at this grid and step
    m = vs_family(0.0, 0.01)
    grid = TorusGrid(256)
    scan = continue_parameter(m, grid, np.linspace(0.0, 1.0, 41), zero_guess(m, grid), param="s", max_N=1024)
    assert scan.critical == pytest.approx(0.525)
    assert scan.entries[-1].status == "no-convergence"
    # no breakdown is possible while every fiber has a single zero
    assert scan.critical > oracles.vs_fold_parameter(np.linspace(0.0, 1.0, 4097))


def test_standard_map_gamma_scan_records_derivatives():
    scan = continue_parameter(standard_map(gamma=0.0), TorusGrid(128), [0.0, 0.05, 0.1], 0.5)
    assert scan.critical is None
    assert [e.param for e in scan.entries] == [0.0, 0.05, 0.1]
    assert all(math.isfinite(e.deriv_estimate) for e in scan.entries)


def test_derivative_growth_flat_for_smooth_graph():
    growth = derivative_growth(standard_map(), TorusGrid(128), 0.5, doublings=2)
    assert growth.Ns == (128, 256, 512)
    assert abs(growth.exponent) < 1e-6


def test_derivative_growth_of_zero_graph():
    growth = derivative_growth(linear(0.2), TorusGrid(16), 0.0, doublings=1)
    assert growth.deriv_estimates == (0.0, 0.0) and growth.exponent == 0.0
    with pytest.raises(ContractError):
        derivative_growth(linear(0.2), TorusGrid(16), 0.0, doublings=0)


# --- skew map and Lyapunov exponents ---------------------------------------------------


def test_linear_trajectory_zero():
    tr = iterate_skew(linear(0.1), x0=0.0, x_minus1=0.0, steps=50)
    assert not tr.truncated and np.all(tr.x == 0.0)


def test_linear_growth_rate():
    tr = iterate_skew(linear(0.1), x0=1e-8, x_minus1=0.0, steps=6)
    ratio = tr.x[-1] / tr.x[-2]
    t = 78.0
    assert abs(ratio) == pytest.approx((t + math.sqrt(t * t - 4)) / 2, rel=1e-6)


def test_linear_divergence_truncates():
    tr = iterate_skew(linear(0.1), x0=1e-8, x_minus1=0.0, steps=100)
    assert tr.truncated and tr.reason == "diverged"


def test_double_well_fixed_point():
    m = builtin_model("double-well", {"epsilon": 0.1, "omega": GOLDEN})
    tr = iterate_skew(m, x0=0.5, x_minus1=0.5, steps=100)
    assert np.all(tr.x == 0.5)


def test_nonaffine_coupling_uses_bisection():
    base = linear(0.1)
    Z = ScalarField(lambda th, a, b, c: (a - 2 * b + c) / 8 + 0.01 * a ** 3, 3)
    m = replace(base, Z=Z)
    tr = iterate_skew(m, x0=1e-7, x_minus1=2e-7, steps=3)
    assert not tr.truncated
    x = np.asarray(tr.x)
    for k in range(3):
        a, b, c = x[k + 2], x[k + 1], x[k]
        assert abs(0.1 * ((a - 2 * b + c) / 8 + 0.01 * a ** 3) + b) < 1e-12


def test_lyapunov_linear_closed_form():
    m = linear(0.1)
    g = newton_solve_K(m, TorusGrid(64), 0.0)
    res = lyapunov_exponents(m, g, steps=10_000)
    lam = oracles.linear_lyapunov(0.1)
    assert res.exponents[0] == pytest.approx(lam, abs=1e-6)
    assert res.exponents[1] == pytest.approx(-lam, abs=1e-6)
    assert abs(sum(res.exponents)) < 1e-3


def test_lyapunov_grows_as_eps_decreases():
    tops = []
    for eps in (0.1, 0.05, 0.025):
        m = linear(eps)
        res = lyapunov_exponents(m, newton_solve_K(m, TorusGrid(16), 0.0), steps=2000)
        tops.append(res.exponents[0])
        assert res.exponents[0] == pytest.approx(oracles.linear_lyapunov(eps), abs=1e-6)
        assert abs(res.exponents[0] - math.log(8 / eps)) < 0.05
    assert tops[0] < tops[1] < tops[2]


def test_standard_map_cocycle_is_symplectic():
    m = standard_map()
    g = newton_solve_K(m, TorusGrid(256), 0.5)
    res = lyapunov_exponents(m, g, steps=10_000)
    assert abs(sum(res.exponents)) < 1e-3
    assert res.symplectic_defect < 1e-9


def test_lyapunov_zero_steps():
    m = linear(0.1)
    g = newton_solve_K(m, TorusGrid(16), 0.0)
    with pytest.raises(ContractError):
        lyapunov_exponents(m, g, steps=0)


def test_lyapunov_short_trajectory_warns():
    m = builtin_model("double-well", {"epsilon": 0.1, "omega": GOLDEN})
    tr = iterate_skew(m, x0=0.5, x_minus1=0.5, steps=20)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = lyapunov_exponents(m, tr)
    assert res.steps == 20 and any("rough" in str(w.message) for w in caught)


def test_lyapunov_truncated_trajectory_is_noted():
    tr = iterate_skew(linear(0.1), x0=1e-8, x_minus1=0.0, steps=100)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = lyapunov_exponents(linear(0.1), tr)
    assert any("truncated" in n for n in res.warnings)


# --- gradient flow ----------------------------------------------------------------------


def flat_chain():
    return standard_map(gamma=0.0, kappa=0.0)


def test_flat_chain_zero_boundary():
    res = gradient_flow(flat_chain(), 3, (0.0, 0.0), x_init=np.linspace(-0.3, 0.4, 7))
    assert res.converged and np.abs(res.segment.values).max() < 1e-9


@pytest.mark.parametrize("l", [1, 3, 5])
def test_flat_chain_harmonic_profile(l):
    res = gradient_flow(flat_chain(), l, (1.0, 0.0), x_init=np.zeros(2 * l + 1))
    k = np.arange(-l, l + 1)
    assert res.converged
    assert np.abs(res.segment.values - (k + l + 1) / (2 * l + 2)).max() < 1e-8


def test_flow_stops_at_t_end():
    res = gradient_flow(flat_chain(), 3, (1.0, 0.0), x_init=np.zeros(7), t_end=0.5)
    assert not res.converged and res.time == pytest.approx(0.5)


def test_flow_matches_window_solution():
    m = standard_map(gamma=0.0, kappa=0.1, rescale=[1.0, 0.25])
    flow = gradient_flow(m, 2, (0.0, 0.0))
    assert flow.converged
    sols = solve_window_2d(m, None, 2, 0.0, 0.0, strict=False)
    gap = min(np.abs(s.values - flow.segment.values).max() for s in sols.segments)
    assert gap < 1e-6
    # independent re-evaluation of the lattice equation
    assert np.abs(oracles.standard_map_window_residual(flow.segment.values, 0.1, 0.0, 0.0)).max() <= 1e-8
