import numpy as np
import pytest

from handtutor.dtw import DeviationProfile
from handtutor.impedance import (
    ImpedanceConfig,
    compose,
    control_force,
    initial_stiffness,
    psi,
    update_engagement,
)

CFG = ImpedanceConfig()


def _profile(values):
    return DeviationProfile(np.asarray(values, dtype=float))


def test_config_defaults_match_hardware_setup():
    assert CFG.beta_r == 1000.0
    assert CFG.beta_k == 100.0
    assert CFG.alpha == 2000.0
    assert CFG.pi_threshold == 0.05
    assert np.allclose(CFG.k_min, [200.0, 200.0])
    assert np.allclose(CFG.k_max, [1200.0, 1200.0])
    assert CFG.sample_interval == 0.001


def test_config_validation():
    with pytest.raises(ValueError):
        ImpedanceConfig(k_min=(0.0, 200.0))
    with pytest.raises(ValueError):
        ImpedanceConfig(k_min=(300.0, 300.0), k_max=(200.0, 200.0))


def test_psi_reference_values():
    assert abs(psi(0.0, CFG) - (-0.98720)) < 1e-3
    assert abs(psi(0.05, CFG) - (-0.024995)) < 1e-4
    assert abs(psi(0.1, CFG) - 0.99999) < 1e-4


def test_psi_bounded_and_monotone():
    values = [psi(d, CFG) for d in np.linspace(0, 0.5, 200)]
    assert all(-1.0 <= v <= 1.0 for v in values)
    assert np.all(np.diff(values) >= 0)
    # strict interior where float64 can resolve it (tanh saturates beyond)
    assert all(-1.0 < psi(d, CFG) < 1.0 for d in np.linspace(0, 0.09, 100))


def test_psi_sign_boundary():
    # psi > 0 iff alpha * (delta^2 - pi^2) > pi
    boundary = np.sqrt(CFG.pi_threshold**2 + CFG.pi_threshold / CFG.alpha)
    assert psi(boundary + 1e-12, CFG) > 0
    assert psi(boundary - 1e-12, CFG) < 0


def test_initial_stiffness_zero_deviation_clamps_to_min():
    k = initial_stiffness(_profile(np.zeros((10, 2))), CFG)
    assert np.allclose(k, [200.0, 200.0])


def test_initial_stiffness_direct_evaluation():
    k = initial_stiffness(_profile(np.full((5, 2), 0.3)), CFG)
    assert np.allclose(k, [300.0, 300.0])


def test_initial_stiffness_clamps_to_max():
    k = initial_stiffness(_profile(np.full((5, 2), 2.0)), CFG)
    assert np.allclose(k, [1200.0, 1200.0])


def test_update_engagement_floors_at_zero():
    k_s = update_engagement(np.zeros(2), _profile(np.zeros((8, 2))), CFG)
    assert np.allclose(k_s, [0.0, 0.0])


def test_update_engagement_grows_on_large_error():
    k_s = update_engagement(np.zeros(2), _profile(np.full((8, 2), 0.1)), CFG)
    assert np.allclose(k_s, [100.0 * psi(0.1, CFG)] * 2, atol=1e-9)
    assert k_s[0] > 99.9


def test_update_engagement_saturates_composed_stiffness():
    k_s = np.zeros(2)
    err = _profile(np.full((8, 2), 0.1))
    for _ in range(9):
        k_s = update_engagement(k_s, err, CFG)
    state = compose(np.array([1100.0, 1100.0]), k_s, CFG)
    assert np.allclose(state.k_d, [1200.0, 1200.0])


def test_compose_examples():
    s = compose([300.0, 300.0], [0.0, 0.0], CFG)
    assert np.allclose(s.k_d, [300.0, 300.0])
    assert np.allclose(s.b_d, 0.5 * np.sqrt(300.0))

    s = compose([1100.0, 1100.0], [300.0, 300.0], CFG)
    assert np.allclose(s.k_d, [1200.0, 1200.0])

    s = compose(CFG.k_min, [0.0, 0.0], CFG)
    assert np.allclose(s.k_d, [200.0, 200.0])
    assert np.allclose(s.b_d, [7.0710678118654755 / 1.0] * 2, atol=1e-6)


def test_compose_invariants_random():
    rng = np.random.default_rng(0)
    for _ in range(100):
        k_r = rng.uniform(0, 2000, 2)
        k_s = rng.uniform(0, 2000, 2)
        s = compose(k_r, k_s, CFG)
        assert np.all(s.k_d >= CFG.k_min - 1e-12)
        assert np.all(s.k_d <= CFG.k_max + 1e-12)
        assert np.array_equal(s.b_d, 0.5 * np.sqrt(s.k_d))


def test_control_force_equilibrium():
    s = compose([300.0, 300.0], [0.0, 0.0], CFG)
    f = control_force(s, [0.1, 0.2], [0.05, -0.02], [0.1, 0.2], [0.05, -0.02])
    assert np.allclose(f, 0.0)


def test_control_force_examples():
    s = compose([1200.0, 1200.0], [0.0, 0.0], CFG)
    f = control_force(s, [0.01, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0])
    assert np.allclose(f, [-12.0, 0.0])

    from handtutor.impedance import ImpedanceState

    s = ImpedanceState(k_r=np.zeros(2), k_s=np.zeros(2), k_d=np.zeros(2), b_d=np.array([10.0, 10.0]))
    f = control_force(s, [0.0, 0.0], [0.0, 0.1], [0.0, 0.0], [0.0, 0.0])
    assert np.allclose(f, [0.0, -1.0])


def test_control_force_linearity():
    s = compose([700.0, 500.0], [100.0, 50.0], CFG)
    rng = np.random.default_rng(1)
    a = rng.normal(size=2)
    b = rng.normal(size=2)
    f1 = control_force(s, a, b, np.zeros(2), np.zeros(2))
    f2 = control_force(s, 2.5 * a, 2.5 * b, np.zeros(2), np.zeros(2))
    assert np.allclose(f2, 2.5 * f1, atol=1e-12)


def test_engagement_contracts_below_threshold_and_grows_above():
    margin = np.sqrt(CFG.pi_threshold**2 + CFG.pi_threshold / CFG.alpha)
    small = _profile(np.full((6, 2), 0.01))
    big = _profile(np.full((6, 2), margin * 1.5))
    k1 = update_engagement(np.array([500.0, 500.0]), small, CFG)
    assert np.all(k1 < 500.0)
    k2 = update_engagement(np.array([500.0, 500.0]), big, CFG)
    assert np.all(k2 > 500.0)
