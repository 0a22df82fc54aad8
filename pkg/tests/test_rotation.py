import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from antilimit import (
    HypothesisViolation,
    builtin_model,
    construct_rotation_orbit,
    measure_rotation_number,
    staircase,
)
from antilimit.rotation import check_shift_hypotheses, coupling_shift_values, shifted_coupling

GOLDEN = (math.sqrt(5) - 1) / 2


def periodic_model(eps=0.05, kappa=1.0):
    return builtin_model("standard-map", {"gamma": 0.0, "kappa": kappa, "epsilon": eps,
                                          "rescale": [1.0, 0.25], "omega": GOLDEN})


def test_staircase_half():
    assert staircase(0.5, (0, 4)).ms.tolist() == [0, 0, 1, 1, 2]


def test_staircase_zero():
    assert staircase(0, (-5, 5)).ms.tolist() == [0] * 11


def test_staircase_negative():
    assert staircase(-0.5, (0, 3)).ms.tolist() == [0, -1, -1, -2]


@given(st.integers(-50, 50), st.integers(1, 50), st.integers(-200, 200))
def test_staircase_rational_exact(p, q, k):
    s = staircase(Fraction(p, q), (k, k))
    assert s.m(k) == (k * p) // q


@given(st.floats(-1, 1), st.integers(-1000, 1000))
def test_staircase_invariants(omega, k):
    s = staircase(omega, (k, k + 1))
    assert s.delta(k) in (-1, 0, 1)
    # exact: the float deviation can round to -1 for tiny omega
    assert abs(s.m(k) - k * s.omega) < 1


def test_shift_value_laplacian():
    m = periodic_model()
    s = staircase(0.5, (0, 3))
    g = coupling_shift_values(m, s)
    assert g[1] == pytest.approx(1 / 8, abs=1e-15)


def test_shift_vanishes_for_integer_omega():
    m = periodic_model()
    assert np.all(coupling_shift_values(m, staircase(1, (-5, 5))) == 0.0)


@given(st.floats(-1, 1))
def test_shift_bounded(omega):
    m = periodic_model()
    assert np.abs(coupling_shift_values(m, staircase(omega, (-20, 20)))).max() <= 2.0


def test_hypotheses_pass_and_fail():
    assert check_shift_hypotheses(periodic_model()).passed
    dw = builtin_model("double-well", {"epsilon": 0.01})
    hyp = check_shift_hypotheses(dw)
    assert hyp.z_periodic and not hyp.v_periodic
    with pytest.raises(HypothesisViolation):
        shifted_coupling(dw, staircase(0.5, (0, 3)))


def test_both_cube_bounds_recorded():
    hyp = check_shift_hypotheses(periodic_model())
    assert hyp.max_abs_z_unit == pytest.approx(0.5, rel=1e-2)
    assert hyp.max_abs_z_double == pytest.approx(1.0, rel=1e-2)


@pytest.mark.parametrize("omega", [0, GOLDEN, "1/3", 1])
def test_rotation_orbit_bounds(omega):
    orb = construct_rotation_orbit(periodic_model(), omega, 30)
    ks = orb.ks
    om = float(Fraction(omega)) if isinstance(omega, str) else omega
    assert np.all(np.abs(orb.y - ks * om) <= 2.0)
    assert orb.original_residual <= 1e-9
    n = np.arange(1, len(orb.profile) + 1)
    assert np.all(np.abs(orb.profile - om) <= 4.0 / n)
    assert np.all(np.abs(orb.backward_profile - om) <= 4.0 / n)


def test_rotation_zero_is_unshifted():
    orb = construct_rotation_orbit(periodic_model(), 0, 10)
    np.testing.assert_array_equal(orb.y, orb.segment.values)


def test_rotation_integer_measures_one():
    orb = construct_rotation_orbit(periodic_model(), 1, 20)
    assert orb.forward == pytest.approx(1.0, abs=4 / 20)


def test_rotation_original_system_independent():
    m = periodic_model(kappa=1.0)
    orb = construct_rotation_orbit(m, "1/3", 10)
    # the gamma = 0 map with unit Laplacian scaled by eps/8
    y = orb.y
    lap_scale = 0.05 / 8.0
    s = staircase("1/3", (-11, 11))
    ya, yb = float(s.m(11)), float(s.m(-11))
    padded = np.concatenate(([yb], y, [ya]))
    res = lap_scale * (padded[2:] - 2 * padded[1:-1] + padded[:-2]) + \
        1.0 / (2 * math.pi) * np.sin(2 * math.pi * (y - 0.25))
    assert np.abs(res).max() <= 1e-9


def test_measure_exact_line():
    k = np.arange(-10, 11)
    f, b, prof, _ = measure_rotation_number(k * GOLDEN, origin=10)
    assert f == pytest.approx(GOLDEN, abs=1e-14) and b == pytest.approx(GOLDEN, abs=1e-14)


@given(st.lists(st.floats(-1, 1), min_size=21, max_size=21), st.floats(-1, 1))
def test_measure_bounded_noise(noise, omega):
    k = np.arange(-10, 11)
    y = k * omega + 2 * np.array(noise)
    _, _, prof, bprof = measure_rotation_number(y, origin=10)
    n = np.arange(1, 11)
    assert np.all(np.abs(prof - omega) <= 4.0 / n + 1e-12)
    assert np.all(np.abs(bprof - omega) <= 4.0 / n + 1e-12)


def test_measure_constant():
    f, b, _, _ = measure_rotation_number([3.0] * 5, origin=2)
    assert f == 0.0 and b == 0.0
