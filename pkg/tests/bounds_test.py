import math

import numpy as np
import pytest

from governor.bounds import (
    HORIZON_FACTOR,
    ClosedLoopSystem,
    DoubleIntegratorGains,
    OutputPeakBound,
    StateVec,
    bound,
    build_double_integrator,
    exact_peak_critically_damped,
    exact_peak_general,
    peak,
    prediction_series,
    relaxed_peak,
    sampled_peak,
)
from governor.errors import InvalidParametersError, NotCriticallyDampedError, NotHurwitzError
from governor.metric import directional_matrix

DEFAULT_GAINS = DoubleIntegratorGains(k=1.0, zeta=2.0 * math.sqrt(2.0))
# robot at (-2, 0) pushed sideways, governor at the origin
PREDICTION_STATE = StateVec(pos_err=(-2.0, 0.0), vel=(0.0, 2.0))


def _random_case(rng):
    gains = DoubleIntegratorGains.critically_damped(float(rng.uniform(0.25, 4.0)))
    c1 = float(rng.uniform(0.5, 2.0))
    c2 = c1 * float(rng.uniform(1.5, 8.0))
    pos_err, vel = rng.uniform(-2.0, 2.0, size=2), rng.uniform(-2.0, 2.0, size=2)
    q = directional_matrix(-pos_err, c1, c2).q
    return build_double_integrator(gains, q), StateVec(pos_err=pos_err, vel=vel)


def _random_hurwitz_system(rng):
    m = rng.normal(size=(4, 4))
    shift = float(np.max(np.linalg.eigvals(m).real)) + rng.uniform(0.2, 1.5)
    return ClosedLoopSystem(a_bar=m - shift * np.eye(4), c_out=rng.normal(size=(2, 4)))


def test_build_double_integrator_default_gains():
    sys = build_double_integrator(DEFAULT_GAINS, np.eye(2))
    assert np.allclose(sys.c_out, np.hstack([np.eye(2), np.zeros((2, 2))]))
    assert sys.abscissa == pytest.approx(-math.sqrt(2.0), abs=1e-6)
    assert DEFAULT_GAINS.is_critically_damped
    assert DEFAULT_GAINS.repeated_eigenvalue == pytest.approx(-math.sqrt(2.0))


def test_underdamped_loop_is_hurwitz():
    sys = build_double_integrator(DoubleIntegratorGains(k=1.0, zeta=1.0), np.eye(2))
    assert sys.abscissa == pytest.approx(-0.5)


def test_invalid_gains():
    with pytest.raises(InvalidParametersError):
        DoubleIntegratorGains(k=0.0, zeta=1.0)
    with pytest.raises(InvalidParametersError):
        DoubleIntegratorGains(k=1.0, zeta=-1.0)


def test_unstable_system_rejected():
    with pytest.raises(NotHurwitzError):
        ClosedLoopSystem(a_bar=np.diag([-1.0, -1.0, -1.0, 0.5]), c_out=np.eye(4)[:2])


def test_equilibrium():
    sys = build_double_integrator(DEFAULT_GAINS, np.eye(2))
    assert exact_peak_critically_damped(sys, np.zeros(4), DEFAULT_GAINS.repeated_eigenvalue) == (0.0, 0.0)
    assert exact_peak_general(sys, np.zeros(4)) == (0.0, 0.0)
    assert bound(sys, np.zeros(4)) == OutputPeakBound(eta=0.0, delta=0.0, argmax_t=0.0)


def test_pure_decay_peaks_at_start():
    sys = build_double_integrator(DEFAULT_GAINS, np.eye(2))
    eta, argmax_t = exact_peak_critically_damped(
        sys, StateVec(pos_err=(-2.0, 0.0), vel=(0.0, 0.0)), DEFAULT_GAINS.repeated_eigenvalue
    )
    assert eta == pytest.approx(4.0)
    assert argmax_t == pytest.approx(0.0, abs=1e-9)


def test_closed_form_needs_critical_damping():
    sys = build_double_integrator(DoubleIntegratorGains(k=1.0, zeta=1.0), np.eye(2))
    with pytest.raises(NotCriticallyDampedError):
        exact_peak_critically_damped(sys, np.ones(4), -0.5)
    critical = build_double_integrator(DEFAULT_GAINS, np.eye(2))
    with pytest.raises(NotCriticallyDampedError):
        exact_peak_critically_damped(critical, np.ones(4), -1.0)


def test_prediction_case_matches_dense_oracle():
    q = directional_matrix((2.0, 0.0), 1.0, 4.0).q
    sys = build_double_integrator(DEFAULT_GAINS, q)
    eta, argmax_t = peak(sys, PREDICTION_STATE)
    rate = math.sqrt(2.0)
    oracle = sampled_peak(sys, PREDICTION_STATE, 1e-4 / rate, 20.0 / rate)
    assert oracle <= eta + 1e-9
    assert oracle == pytest.approx(eta, rel=1e-6)
    assert argmax_t > 0.0


def test_prediction_case_bound_ratio():
    q = directional_matrix((2.0, 0.0), 1.0, 4.0).q
    result = bound(build_double_integrator(DEFAULT_GAINS, q), PREDICTION_STATE)
    assert result.eta <= result.delta + 1e-9
    assert result.delta / result.eta <= 3.0


def test_closed_form_matches_general(rng):
    for _ in range(40):
        sys, s0 = _random_case(rng)
        closed, _ = exact_peak_critically_damped(sys, s0, sys.gains.repeated_eigenvalue)
        general, _ = exact_peak_general(sys, s0)
        assert general == pytest.approx(closed, rel=1e-8)


def test_general_peak_on_random_systems(rng):
    for _ in range(20):
        sys = _random_hurwitz_system(rng)
        s0 = rng.normal(size=4)
        eta, argmax_t = exact_peak_general(sys, s0)
        rate = abs(sys.abscissa)
        oracle = sampled_peak(sys, s0, 1e-3 / rate, HORIZON_FACTOR / rate)
        assert eta >= oracle - 1e-9
        assert eta >= float(s0 @ sys.output_form @ s0)
        assert argmax_t >= 0.0


def test_general_peak_of_pure_decay_is_the_initial_value(rng):
    sys = ClosedLoopSystem(a_bar=-np.diag([1.0, 2.0, 3.0, 4.0]), c_out=np.eye(4)[:2])
    for _ in range(50):
        s0 = rng.normal(size=4) * rng.uniform(0.1, 10.0)
        eta, argmax_t = exact_peak_general(sys, s0)
        assert eta == float(s0 @ sys.output_form @ s0)
        assert argmax_t == 0.0


def test_ordering_on_random_double_integrators(rng):
    ratios = []
    for _ in range(500):
        sys, s0 = _random_case(rng)
        result = bound(sys, s0)
        rate = abs(sys.abscissa)
        oracle = sampled_peak(sys, s0, 2.5e-4 / rate, 0.5 * HORIZON_FACTOR / rate)
        assert oracle <= result.eta + 1e-9
        assert result.eta <= result.delta + 1e-9
        assert oracle == pytest.approx(result.eta, rel=1e-6)
        ratios.append(result.delta / result.eta)
    assert float(np.median(ratios)) <= 2.0


def test_ordering_on_random_hurwitz_systems(rng):
    for _ in range(100):
        sys = _random_hurwitz_system(rng)
        s0 = rng.normal(size=4)
        result = bound(sys, s0)
        assert result.eta <= result.delta + 1e-9


def test_scale_homogeneity(rng):
    sys, s0 = _random_case(rng)
    doubled = StateVec(pos_err=2.0 * s0.pos_err, vel=2.0 * s0.vel)
    assert peak(sys, doubled)[0] == pytest.approx(4.0 * peak(sys, s0)[0], rel=1e-12)
    assert relaxed_peak(sys, doubled) == pytest.approx(4.0 * relaxed_peak(sys, s0), rel=1e-9)


def test_relaxed_peak_of_equilibrium_is_zero():
    sys = build_double_integrator(DEFAULT_GAINS, np.eye(2))
    assert relaxed_peak(sys, StateVec(pos_err=(0.0, 0.0), vel=(0.0, 0.0))) == 0.0


def test_sdp_backend_without_solver_names_the_extra(monkeypatch):
    import builtins

    real_import = builtins.__import__

    def blocked(name, *args, **kwargs):
        if name == "cvxpy":
            raise ImportError(name)
        return real_import(name, *args, **kwargs)

    monkeypatch.setattr(builtins, "__import__", blocked)
    sys = build_double_integrator(DEFAULT_GAINS, np.eye(2))
    with pytest.raises(InvalidParametersError, match="sdp"):
        relaxed_peak(sys, PREDICTION_STATE, backend="sdp")


def test_sdp_backend_is_an_upper_bound():
    pytest.importorskip("cvxpy")
    q = directional_matrix((2.0, 0.0), 1.0, 4.0).q
    sys = build_double_integrator(DEFAULT_GAINS, q)
    eta, _ = peak(sys, PREDICTION_STATE)
    delta = relaxed_peak(sys, PREDICTION_STATE, backend="sdp")
    assert delta >= eta * (1.0 - 1e-5)
    assert delta <= relaxed_peak(sys, PREDICTION_STATE) * (1.0 + 1e-3)


def test_directional_bound_is_smaller_at_start():
    samples = prediction_series(DEFAULT_GAINS, PREDICTION_STATE, 1.0, 4.0, [0.0, 0.5, 1.0])
    first = samples[0]
    assert first.t == 0.0
    assert np.allclose(first.pos_err, (-2.0, 0.0))
    assert first.area_directional < first.area_euclid
    assert len(samples) == 3
    assert all(s.eta_euclid >= 0.0 and s.eta_directional >= 0.0 for s in samples)
