import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgpkit.core import (
    ContractError,
    OdeProblem,
    RunRecord,
    SolverConfig,
    UnsupportedMetricError,
    ZeroReferenceEnergyError,
    ConfigurationError,
    energy_error,
    evaluate_split_rhs,
    global_error,
)
from cgpkit.problems import make_argon7, make_kepler, make_sho

finite = st.floats(-10, 10, allow_nan=False)


def test_split_rhs_sho_values():
    sho = make_sho()
    assert np.array_equal(evaluate_split_rhs(sho, [0.0, 1.0]), [-1.0, 0.0])
    assert np.array_equal(evaluate_split_rhs(sho, [0.0, 0.0]), [0.0, 0.0])


def test_split_rhs_kepler_unit_circle():
    kep = make_kepler(0.0)
    np.testing.assert_allclose(evaluate_split_rhs(kep, [0, 1, 1, 0]), [-1, 0, 0, 1], atol=0)


def test_split_rhs_rejects_wrong_length():
    with pytest.raises(ContractError):
        evaluate_split_rhs(make_sho(), [1.0, 2.0, 3.0])


def test_split_rhs_falls_back_to_rhs():
    prob = OdeProblem("decay", 1, lambda t, y: -2.0 * y, [3.0])
    assert evaluate_split_rhs(prob, [1.5]) == pytest.approx([-3.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=2, max_size=2))
def test_split_matches_rhs_sho(y):
    sho = make_sho()
    np.testing.assert_allclose(evaluate_split_rhs(sho, y), sho.rhs(0.0, np.array(y)), rtol=1e-15, atol=0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(0, 2 * math.pi), st.lists(finite, min_size=2, max_size=2))
def test_split_matches_rhs_kepler(r, phi, p):
    kep = make_kepler(0.3)
    y = np.array([p[0], p[1], r * math.cos(phi), r * math.sin(phi)])
    np.testing.assert_allclose(evaluate_split_rhs(kep, y), kep.rhs(0.0, y), rtol=1e-14, atol=1e-14)


def test_split_matches_rhs_argon():
    argon = make_argon7()
    rng = np.random.default_rng(3)
    for _ in range(5):
        y = np.array(argon.y0)
        y[14:] += rng.normal(scale=0.01, size=14)
        y[:14] *= rng.uniform(0.5, 2.0, size=14)
        a, b = evaluate_split_rhs(argon, y), argon.rhs(0.0, y)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12 * np.abs(b).max())


def test_energy_error_values():
    sho = make_sho()
    assert energy_error(sho, sho.y0, 0.5) == 0.0
    # ((1.0001^2)/2 - 0.5)/0.5 computed by hand
    assert energy_error(sho, [0.0, 1.0001], 0.5) == pytest.approx(2.0001e-4, rel=1e-12)
    kep = make_kepler(0.0)
    assert kep.energy(kep.y0) == -0.5
    assert energy_error(kep, kep.y0, -0.5) == 0.0


def test_energy_error_zero_reference():
    with pytest.raises(ZeroReferenceEnergyError):
        energy_error(make_sho(), [0.0, 0.0], 0.0)


def test_global_error_values():
    sho = make_sho()
    assert global_error(sho, sho.t0, sho.y0) == 0.0
    assert global_error(sho, math.pi, [0.0, -1.0 + 1e-6]) == pytest.approx(1e-6, rel=1e-9)
    kep = make_kepler(0.0)
    assert global_error(kep, 2 * math.pi, kep.y0) == pytest.approx(0.0, abs=1e-14)


def test_global_error_needs_exact():
    with pytest.raises(UnsupportedMetricError):
        global_error(make_argon7(), 0.0, make_argon7().y0)


@pytest.mark.parametrize("make", [make_sho, lambda: make_kepler(0.5), lambda: make_kepler(0.9)])
def test_global_error_zero_at_start(make):
    prob = make()
    assert global_error(prob, prob.t0, prob.y0) == 0.0


def test_problem_validation():
    with pytest.raises(ContractError):
        OdeProblem("bad", 2, lambda t, y: y, [1.0])
    with pytest.raises(ContractError):
        OdeProblem("bad", 1, lambda t, y: np.zeros(2), [1.0])
    with pytest.raises(ContractError):
        OdeProblem("bad", 1, lambda t, y: y, [np.nan])
    with pytest.raises(ContractError):
        OdeProblem("odd", 3, lambda t, y: y, [1, 2, 3], hamiltonian=lambda y: 0.0)


def test_problem_is_read_only():
    sho = make_sho()
    with pytest.raises(ValueError):
        sho.y0[0] = 5.0


def test_scalar_only_callables_fall_back():
    prob = OdeProblem("lin", 2, lambda t, y: np.array([-y[1], y[0]]), [0.0, 1.0],
                      hamiltonian=lambda y: float(0.5 * (y[0] ** 2 + y[1] ** 2)),
                      exact=lambda t: np.array([-math.sin(t), math.cos(t)]))
    assert prob.energies(np.ones((3, 2))).tolist() == [1.0, 1.0, 1.0]
    np.testing.assert_allclose(prob.exact_states([0.0, math.pi / 2]), [[0, 1], [-1, 0]], atol=1e-15)


def test_solver_config_validation():
    with pytest.raises(ConfigurationError):
        SolverConfig(max_iter=0)
    with pytest.raises(ConfigurationError):
        SolverConfig(tol=0.0)


def test_run_record_invariants():
    states = np.zeros((3, 2))
    RunRecord("p", "m", 0.1, [0.0, 0.1, 0.2], states, None, None, 0.0, 2, 0)
    with pytest.raises(ContractError):
        RunRecord("p", "m", 0.1, [0.0, 0.2, 0.1], states, None, None, 0.0, 2, 0)
    with pytest.raises(ContractError):
        RunRecord("p", "m", 0.1, [0.0, 0.1, 0.2], states, np.zeros(2), None, 0.0, 2, 0)
