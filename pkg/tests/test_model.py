import math
from decimal import Decimal, localcontext
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from antilimit import (
    BaseDynamics,
    ConfigurationError,
    ContractError,
    builtin_model,
    estimate_epsilon0,
    eval_f,
    model_from_config,
    verify_conditions,
)
from antilimit.model import band_intervals


def test_eval_f_vanishes_on_diagonal_zero():
    m = builtin_model("double-well", {"epsilon": 0.1})
    assert eval_f(m, m.theta(0), (0.5, 0.5, 0.5)) == 0.0


def test_eval_f_linear_coupling_cancels():
    m = builtin_model("double-well", {"epsilon": 0.1})
    assert eval_f(m, m.theta(0), (1.0, 0.0, -1.0)) == pytest.approx(-0.25, abs=1e-15)


def test_eval_f_linear_origin():
    m = builtin_model("linear", {"epsilon": 0.1})
    assert eval_f(m, m.theta(0), (0.0, 0.0, 0.0)) == 0.0


def test_eval_f_arity_mismatch():
    m = builtin_model("linear", {"epsilon": 0.1})
    with pytest.raises(ContractError):
        eval_f(m, m.theta(0), (0.0, 0.0))


@pytest.mark.parametrize("eps", [0.0, 0.01, 0.1, 0.3])
def test_double_well_constant_sequences(eps):
    m = builtin_model("double-well", {"epsilon": eps})
    for x in (-0.5, 0.5):
        assert eval_f(m, m.theta(0), (x, x, x)) == 0.0


def test_vs_family_coefficients_at_zero():
    from antilimit.model import vs_a, vs_b

    assert vs_a(0.0) == pytest.approx(1.1 - 1.2 * math.sin(0.4 * math.pi), abs=1e-15)
    assert vs_b(0.0) == pytest.approx(2.4, abs=1e-15)


@pytest.mark.parametrize("s", [0.0, 1.0])
def test_vs_family_matches_polynomial(s):
    m = builtin_model("vs-family", {"s": s, "epsilon": 0.001})
    rng = np.random.default_rng(7)
    for theta, u in zip(rng.uniform(0, 1, 10), rng.uniform(-1, 1, 10)):
        # the model works in u in I; the polynomial lives at x = 3u
        assert float(m.potential(theta, u)) == pytest.approx(
            oracles.vs_potential(s, theta, 3.0 * u), rel=1e-13, abs=1e-13
        )


def test_unknown_model_name():
    with pytest.raises(ConfigurationError, match="model.name"):
        builtin_model("pendulum", {})


def test_missing_params_listed():
    with pytest.raises(ConfigurationError) as exc:
        builtin_model("standard-map", {"gamma": 0.1})
    assert "kappa" in str(exc.value)


def test_verify_linear_all_pass():
    m = builtin_model("linear", {"epsilon": 0.1})
    rep = verify_conditions(m, 64)
    assert rep.passed
    assert rep.t0 == pytest.approx(-m.eps0, abs=1e-12)
    assert rep.t1 == pytest.approx(m.eps0, abs=1e-12)


def test_verify_laplacian_extrema():
    m = builtin_model("linear", {"epsilon": 0.1})
    rep = verify_conditions(m, 64)
    assert rep.max_abs_z.value == pytest.approx(0.5, abs=1e-15)
    assert rep.K1 == pytest.approx(0.125, abs=1e-15)
    assert rep.min_abs_dz_last.value == pytest.approx(0.125, abs=1e-15)


def test_verify_grid_too_coarse():
    with pytest.raises(ContractError):
        verify_conditions(builtin_model("linear", {"epsilon": 0.1}), 32)


def test_double_well_band_endpoints():
    m = builtin_model("double-well", {"epsilon": 0.01, "eps0": 0.1})
    got = band_intervals(m, m.theta(0), 0.1)
    want = oracles.double_well_band(0.1)
    assert len(got) == 2
    np.testing.assert_allclose(np.array(got), np.array(want), atol=1e-12)


def test_estimate_eps0_linear():
    m = builtin_model("linear", {"epsilon": 0.1, "eps0": 0.5})
    assert estimate_epsilon0(m, 0.1) == pytest.approx(0.9, rel=1e-3)


def test_estimate_eps0_double_well():
    m = builtin_model("double-well", {"epsilon": 0.1, "eps0": 0.5})
    assert estimate_epsilon0(m, 0.1) == pytest.approx(oracles.double_well_eps0(0.1), rel=1e-3)


def test_estimate_eps0_vs_family_regression():
    # regression fixture from the grid scan
    m = builtin_model("vs-family", {"s": 1.0, "epsilon": 0.001})
    assert m.eps0 > 0
    assert m.eps0 == pytest.approx(4.173329755573555, rel=1e-12)


def test_estimate_eps0_margin_contract():
    m = builtin_model("linear", {"epsilon": 0.1})
    with pytest.raises(ContractError):
        estimate_epsilon0(m, 1.5)


def test_coupling_bound_enforced():
    m = builtin_model("double-well", {"epsilon": 0.1})
    with pytest.raises(ContractError):
        m.check_coupling(10.0)


@pytest.mark.parametrize(
    "name,params",
    [
        ("linear", {"epsilon": 0.1}),
        ("double-well", {"epsilon": 0.1}),
        ("standard-map", {"gamma": 0.3, "kappa": 0.7}),
        ("vs-family", {"s": 0.5, "epsilon": 0.01}),
        ("double-well", {"epsilon": 0.1, "mode": "oneD"}),
    ],
)
def test_partials_match_finite_differences(name, params):
    m = builtin_model(name, params)
    rep = verify_conditions(m, 64)
    assert rep.max_partial_mismatch <= 1e-4


def test_custom_model_from_terms():
    block = {
        "name": "custom",
        "epsilon": 0.05,
        "V": {"terms": [{"c": 1.0, "p": 2}, {"c": -0.25}]},
        "Z": {"terms": [{"c": 0.125, "powers": [1, 0, 0]}, {"c": -0.25, "powers": [0, 1, 0]},
                        {"c": 0.125, "powers": [0, 0, 1]}]},
    }
    m = model_from_config(block)
    ref = builtin_model("double-well", {"epsilon": 0.05})
    for args in [(0.1, -0.3, 0.7), (0.5, 0.5, 0.5), (-1.0, 0.2, 0.9)]:
        assert eval_f(m, 0.0, args) == pytest.approx(eval_f(ref, 0.0, args), abs=1e-15)


def test_base_dynamics_roundtrip():
    for b in (BaseDynamics.rotation("1/3", 0.1), BaseDynamics.fixed_point(0.25),
              BaseDynamics.explicit([0.1, 0.2, 0.3], offset=-1)):
        assert BaseDynamics.from_dict(b.to_dict()) == b


def test_explicit_sequence_window():
    b = BaseDynamics.explicit([0.1, 0.2, 0.3], offset=-1)
    assert b.theta(-1) == 0.1 and b.theta(1) == 0.3
    with pytest.raises(ContractError):
        b.theta(2)


def test_golden_mean_continued_fraction():
    from antilimit.model import GOLDEN_MEAN

    assert BaseDynamics.rotation(GOLDEN_MEAN).continued_fraction(8)[1:] == [1] * 7


@given(st.integers(-10 ** 6, 10 ** 6), st.floats(0, 1, exclude_max=True))
def test_rotation_direct_evaluation(k, theta0):
    omega = (math.sqrt(5) - 1) / 2
    b = BaseDynamics.rotation(omega, theta0)
    with localcontext() as ctx:
        ctx.prec = 60
        exact = (Decimal(theta0) + k * Decimal(omega)) % 1
        if exact < 0:
            exact += 1
    d = abs(float(b.theta(k)) - float(exact))
    assert min(d, 1.0 - d) <= 1e-12


@given(st.integers(0, 3000), st.floats(0, 1, exclude_max=True))
def test_rotation_step_composition(k, theta0):
    b = BaseDynamics.rotation((math.sqrt(5) - 1) / 2, theta0)
    th = b.theta(0)
    for _ in range(k):
        th = b.step(th)
    d = abs(th - float(b.theta(k)))
    assert min(d, 1.0 - d) <= 1e-12


def test_rotation_steps_compose():
    b = BaseDynamics.rotation(Fraction(2, 7), 0.125)
    th = b.theta(0)
    for k in range(1, 50):
        th = b.step(th)
        assert abs(float(th) - float(b.theta(k))) <= 1e-12


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3).filter(lambda c: max(abs(v) for v in c) > 1e-3))
def test_c1_scaling_passes(coeffs):
    # c * g with c = 0.9 / max|g| satisfies max|Z| < 1
    terms = [{"c": coeffs[0], "powers": [1, 0, 0]}, {"c": coeffs[1], "powers": [0, 1, 0]},
             {"c": coeffs[2], "powers": [1, 0, 1]}]
    g = np.linspace(-1, 1, 64)
    A, B, C = np.meshgrid(g, g, g, indexing="ij")
    gmax = np.abs(coeffs[0] * A + coeffs[1] * B + coeffs[2] * A * C).max()
    scaled = [dict(t, c=t["c"] * 0.9 / gmax) for t in terms]
    from antilimit.model import TermField

    fld = TermField.from_config({"terms": scaled}, 3, "Z")
    assert np.abs(fld(0.0, A, B, C)).max() < 1.0
