"""
Controller tests: reference generation, feedback linearization, companion
matrices, the Lyapunov solver, the adaptive law and the controller objects.
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from shared.errors import NotHurwitzError
from pendulum.control import (
    FOURTH_ORDER_GAINS,
    PAPER_GAINS,
    PAPER_P,
    MATCHED_GAINS,
    STABLE_GAINS,
    AdaptiveControllerConfig,
    AdaptiveFuzzyController,
    ClassicalController,
    FLControllerConfig,
    ReferenceSignal,
    adaptation_rates,
    adaptive_control,
    apply_preset,
    companion_matrix,
    fl_control,
    filtered_difference,
    fl_outer_v,
    gain_feedback,
    hurwitz_check,
    paper_matrix_warnings,
    reference,
    solve_lyapunov,
)
from pendulum.fuzzy import default_partitions, fuzzy_basis, grid_points, init_from_function
from pendulum.plant import plant_derivative, true_f, true_g


# ── Reference ────────────────────────────────────────────────────────────────

def test_reference_at_zero():
    assert reference(0.0, ReferenceSignal()) == pytest.approx((0.0, 0.2, 0.0, -0.2, 0.0))


def test_reference_at_quarter_period():
    assert reference(math.pi / 2, ReferenceSignal()) == pytest.approx((0.2, 0.0, -0.2, 0.0, 0.2), abs=1e-12)


def test_reference_fourth_derivative_identity():
    r = ReferenceSignal(amplitude=0.35, frequency=2.5)
    for t in np.linspace(0.0, 10.0, 37):
        values = reference(t, r)
        assert values[4] == pytest.approx(r.frequency ** 4 * values[0], abs=1e-12)


def test_reference_order():
    assert len(reference(1.0, ReferenceSignal(), order=2)) == 3


# ── Feedback linearization ───────────────────────────────────────────────────

def test_outer_loop():
    cfg = FLControllerConfig()
    assert fl_outer_v(0.0, 0.0, 0.0, cfg) == 0.0
    assert fl_outer_v(1.0, 0.0, 0.0, cfg) == -8.0


def test_outer_loop_poles():
    cfg = FLControllerConfig()
    roots = np.roots([1.0, cfg.kd, cfg.kp])
    np.testing.assert_allclose(sorted(roots, key=lambda z: z.imag), [-1 - 2.6458j, -1 + 2.6458j], atol=1e-4)


def test_fl_gains_must_be_positive():
    with pytest.raises(ValidationError):
        FLControllerConfig(kd=0.0)


def test_fl_control_values(nominal_coeffs):
    assert fl_control(nominal_coeffs, np.zeros(4), 0.0) == 0.0
    assert fl_control(nominal_coeffs, np.zeros(4), 1.0) == pytest.approx(0.0072457, abs=1e-7)


def test_exact_linearization(nominal_coeffs):
    rng = np.random.default_rng(21)
    for _ in range(1000):
        x = rng.uniform(-3, 3, size=4)
        v = rng.uniform(-10, 10)
        u = fl_control(nominal_coeffs, x, v)
        assert abs(plant_derivative(nominal_coeffs, x, u)[3] - v) < 1e-10


def test_classical_controller_at_rest(nominal_coeffs):
    controller = ClassicalController(nominal_coeffs)
    sample = controller.command(0.0, np.zeros(4), (0.0, 0.0, 0.0, 0.0, 0.0))
    assert sample.u == 0.0
    assert not sample.clamped


# ── Companion matrix and Lyapunov ────────────────────────────────────────────

def test_companion_matrix_small():
    np.testing.assert_array_equal(companion_matrix((2.0, 1.0)), [[0.0, 1.0], [-1.0, -2.0]])


def test_companion_matrix_paper_row():
    A = companion_matrix(PAPER_GAINS)
    np.testing.assert_allclose(A[-1], [-0.7, -10.8, -1.0, 0.7])
    np.testing.assert_array_equal(A[:3, 1:], np.eye(3))


@pytest.mark.parametrize("K", [STABLE_GAINS, FOURTH_ORDER_GAINS, PAPER_GAINS, (6.0, 11.0, 6.0)])
def test_companion_spectrum(K):
    for eigenvalue in np.linalg.eigvals(companion_matrix(K)):
        assert abs(np.polyval([1.0, *K], eigenvalue)) < 1e-6 * np.linalg.norm(K)


def test_fourth_order_gains_place_poles():
    poles = np.sort(np.linalg.eigvals(companion_matrix(FOURTH_ORDER_GAINS)).real)
    np.testing.assert_allclose(poles, [-3, -3, -2, -2], atol=1e-4)


def test_paper_matrix_not_hurwitz():
    with pytest.raises(NotHurwitzError) as info:
        hurwitz_check(companion_matrix(PAPER_GAINS))
    assert info.value.eigenvalue.real > 0
    assert "eigenvalue" in str(info.value)


def test_lyapunov_scalar():
    np.testing.assert_allclose(solve_lyapunov([[-1.0]], [[2.0]]), [[1.0]])


def test_lyapunov_hand_solved():
    P = solve_lyapunov([[0.0, 1.0], [-2.0, -3.0]], 2.0 * np.eye(2))
    np.testing.assert_allclose(P, [[2.5, 0.5], [0.5, 0.5]], atol=1e-12)


def test_lyapunov_stable_preset():
    A = companion_matrix(STABLE_GAINS)
    P = solve_lyapunov(A, 1000.0 * np.eye(2))
    np.testing.assert_allclose(P, [[9310.0 / 3, 10.0 / 3], [10.0 / 3, 302.0 / 15]], rtol=1e-8)


def test_lyapunov_random_hurwitz():
    rng = np.random.default_rng(4)
    for _ in range(100):
        n = int(rng.integers(2, 5))
        V, _r = np.linalg.qr(rng.normal(size=(n, n)))
        T = np.diag(-rng.uniform(0.5, 5.0, size=n)) + np.triu(rng.normal(size=(n, n)), k=1)
        A = V @ T @ V.T
        Q = 1000.0 * np.eye(n)
        P = solve_lyapunov(A, Q)
        assert np.linalg.norm(A.T @ P + P @ A + Q, np.inf) <= 1e-8 * 1000.0
        assert np.all(np.linalg.eigvalsh(P) > 0)
        np.testing.assert_array_equal(P, P.T)


def test_lyapunov_rejects_unstable():
    with pytest.raises(NotHurwitzError):
        solve_lyapunov([[0.0, 1.0], [2.0, -1.0]], np.eye(2))


def test_lyapunov_shape_mismatch():
    with pytest.raises(ValueError):
        solve_lyapunov(np.eye(2), np.eye(3))


def test_paper_matrix_warnings():
    A = companion_matrix(PAPER_GAINS)
    warnings = paper_matrix_warnings(PAPER_P, A, 1000.0 * np.eye(4))
    assert any("not symmetric positive definite" in w for w in warnings)
    assert any("does not solve" in w for w in warnings)


# ── Adaptive law ─────────────────────────────────────────────────────────────

def test_gain_feedback_convention():
    # K.e = k1*e' + k2*e for order 2
    assert gain_feedback((25.0, 150.0), (1.0, 0.0)) == 150.0
    assert gain_feedback((25.0, 150.0), (0.0, 1.0)) == 25.0


def test_adaptive_control_zero():
    cfg = AdaptiveControllerConfig()
    xi = np.full(125, 1.0 / 125)
    u, clamped = adaptive_control(np.zeros(125), np.full(125, 5.0), xi, xi, np.zeros(2), 0.0, cfg)
    assert u == 0.0
    assert not clamped


def test_adaptive_control_clamps_small_g():
    cfg = AdaptiveControllerConfig()
    xi = np.full(125, 1.0 / 125)
    u, clamped = adaptive_control(np.zeros(125), np.full(125, 0.1), xi, xi, np.zeros(2), 3.0, cfg)
    assert clamped
    assert u == pytest.approx(3.0)


def test_adaptive_control_degenerates_to_feedback_linearization(nominal_coeffs):
    cfg = AdaptiveControllerConfig()
    parts = default_partitions()
    theta_f = init_from_function(parts, lambda X: true_f(nominal_coeffs, (0.0, *X)))
    theta_g = init_from_function(parts, lambda X: true_g(nominal_coeffs))
    for point in grid_points(parts)[::11]:
        x = np.array([0.0, *point])
        xi = fuzzy_basis(parts, point)
        v = 2.5
        u, _ = adaptive_control(theta_f, theta_g, xi, xi, np.zeros(2), v, cfg)
        assert u == pytest.approx(fl_control(nominal_coeffs, x, v), abs=1e-9)


def test_adaptation_rates_zero_error():
    cfg = AdaptiveControllerConfig()
    xi = np.full(125, 1.0 / 125)
    f_dot, g_dot = adaptation_rates(np.zeros(2), np.eye(2), np.array([0.0, 1.0]), xi, xi, 4.0, cfg)
    assert not f_dot.any() and not g_dot.any()


def test_adaptation_rates_one_hot():
    cfg = AdaptiveControllerConfig()
    xi = np.zeros(125)
    xi[17] = 1.0
    f_dot, g_dot = adaptation_rates(np.array([0.0, 1.0]), np.eye(2), np.array([0.0, 1.0]), xi, xi, 0.0, cfg)
    assert f_dot[17] == -35.0
    assert np.count_nonzero(f_dot) == 1
    assert not g_dot.any()


def test_adaptation_rates_projection():
    cfg = AdaptiveControllerConfig(theta_cap=10.0)
    xi = np.zeros(125)
    xi[3] = 0.5
    xi[4] = 0.5
    theta = np.zeros(125)
    theta[3] = -10.0   # at the cap, the rate below pushes it further out
    theta[4] = 10.0    # at the cap, the rate pulls it back
    f_dot, _ = adaptation_rates(np.array([0.0, 1.0]), np.eye(2), np.array([0.0, 1.0]), xi, xi, 1.0, cfg,
                                theta_f=theta, theta_g=np.zeros(125))
    assert f_dot[3] == 0.0
    assert f_dot[4] == pytest.approx(-17.5)


def test_filtered_difference_without_filter():
    assert filtered_difference(5.0, 0.0, 0.001, 0.001, 0.0) == pytest.approx(1.0)


def test_filtered_difference_first_step():
    assert filtered_difference(0.0, 0.0, 1.0, 0.001, 0.2) == pytest.approx(1.0 / 0.201)


def test_filtered_difference_settles_on_slope():
    dt, estimate = 0.001, 0.0
    for k in range(1, 5001):
        estimate = filtered_difference(estimate, 2.0 * (k - 1) * dt, 2.0 * k * dt, dt, 0.2)
    assert estimate == pytest.approx(2.0, rel=1e-6)


# ── Configuration and presets ────────────────────────────────────────────────

def test_default_config_is_stable_preset():
    assert AdaptiveControllerConfig() == apply_preset("stable")
    np.testing.assert_array_equal(AdaptiveControllerConfig().q_matrix(), 1000.0 * np.eye(2))


def test_paper_preset():
    cfg = apply_preset("paper")
    assert cfg.order == 4
    assert cfg.gains == PAPER_GAINS
    assert cfg.p_mode == "paper-matrix"


def test_matched_preset_shares_classical_poles():
    cfg = apply_preset("matched")
    classical = FLControllerConfig()
    assert cfg.gains == MATCHED_GAINS == (classical.kd, classical.kp)
    assert cfg.model_dump(exclude={"gains"}) == apply_preset("stable").model_dump(exclude={"gains"})


def test_preset_overrides():
    cfg = apply_preset("stable", {"gamma1": 10.0})
    assert cfg.gamma1 == 10.0
    with pytest.raises(ValueError):
        apply_preset("fastest")


@pytest.mark.parametrize("settings", [
    {"gains": (1.0, 2.0, 3.0)},
    {"order": 2, "p_mode": "paper-matrix"},
    {"q": (1.0, 2.0, 3.0)},
    {"q": (-1.0,)},
    {"gamma1": 0.0},
    {"g_floor": -1.0},
    {"x3_domain": (1.0, -1.0)},
    {"derivative_tau": -0.1},
])
def test_invalid_adaptive_config(settings):
    with pytest.raises(ValidationError):
        AdaptiveControllerConfig(**settings)


# ── Adaptive controller object ───────────────────────────────────────────────

def test_adaptive_controller_initial_estimates(nominal_coeffs):
    controller = AdaptiveFuzzyController(AdaptiveControllerConfig(), nominal_coeffs, 1e-3)
    assert controller.rule_count == 125
    np.testing.assert_allclose(controller.theta_g, nominal_coeffs.b2)
    assert controller.warnings == []
    np.testing.assert_allclose(controller.P, controller.P.T)


def test_adaptive_controller_paper_solved_fails(nominal_coeffs):
    cfg = apply_preset("paper", {"p_mode": "solved"})
    with pytest.raises(NotHurwitzError) as info:
        AdaptiveFuzzyController(cfg, nominal_coeffs, 1e-3)
    assert info.value.eigenvalue.real > 0


def test_adaptive_controller_paper_matrix_warns(nominal_coeffs):
    controller = AdaptiveFuzzyController(apply_preset("paper"), nominal_coeffs, 1e-3)
    np.testing.assert_array_equal(controller.P, PAPER_P)
    assert any("not symmetric positive definite" in w for w in controller.warnings)


def test_adaptive_controller_differences_error_rates(nominal_coeffs):
    cfg = AdaptiveControllerConfig(order=3, gains=(6.0, 11.0, 6.0), derivative_tau=0.0)
    controller = AdaptiveFuzzyController(cfg, nominal_coeffs, 1e-3)
    ref = (0.0, 0.0, 0.0, 0.0, 0.0)
    first = controller.command(0.0, np.zeros(4), ref)
    second = controller.command(1e-3, np.array([0.0, 0.0, 0.0, 0.01]), ref)
    assert first.e_vec[2] == 0.0
    assert second.e_vec[1] == pytest.approx(-0.01)
    assert second.e_vec[2] == pytest.approx(-10.0)


def test_adaptive_controller_filters_error_rates(nominal_coeffs):
    cfg = AdaptiveControllerConfig(order=3, gains=(6.0, 11.0, 6.0), derivative_tau=0.2)
    controller = AdaptiveFuzzyController(cfg, nominal_coeffs, 1e-3)
    ref = (0.0, 0.0, 0.0, 0.0, 0.0)
    controller.command(0.0, np.zeros(4), ref)
    second = controller.command(1e-3, np.array([0.0, 0.0, 0.0, 0.01]), ref)
    third = controller.command(2e-3, np.array([0.0, 0.0, 0.0, 0.01]), ref)
    assert second.e_vec[2] == pytest.approx(-0.01 / 0.201)
    assert third.e_vec[2] == pytest.approx(second.e_vec[2] * 0.2 / 0.201)


def test_fourth_order_input_feedback_is_damped(nominal_coeffs):
    # a held input du moves e' by -b2*dt*du one sample later
    dt = 1e-3
    ref = (0.0, 0.0, 0.0, 0.0, 0.0)
    responses = {}
    for tau in (0.0, 0.2):
        cfg = apply_preset("stable", {"order": 4, "gains": FOURTH_ORDER_GAINS, "derivative_tau": tau})
        controller = AdaptiveFuzzyController(cfg, nominal_coeffs, dt)
        quiet = [controller.command(k * dt, np.zeros(4), ref).u for k in range(3)]
        du = 1.0
        x = np.array([0.0, 0.0, 0.0, nominal_coeffs.b2 * dt * du])
        responses[tau] = abs(controller.command(3 * dt, x, ref).u - quiet[-1])
    assert responses[0.0] > 1e3
    assert responses[0.2] < 1.0


def test_adaptive_controller_quiescent_without_error(nominal_coeffs):
    controller = AdaptiveFuzzyController(AdaptiveControllerConfig(), nominal_coeffs, 1e-3)
    ref = (0.0, 0.0, 0.0, 0.0, 0.0)
    sample = controller.command(0.0, np.zeros(4), ref)
    f_dot, g_dot = controller.rates(0.0, np.zeros(4), controller.theta_f, controller.theta_g, sample)
    assert not f_dot.any() and not g_dot.any()


def test_adaptive_controller_clips_initial_theta(nominal_coeffs):
    cfg = AdaptiveControllerConfig(theta_cap=50.0)
    controller = AdaptiveFuzzyController(cfg, nominal_coeffs, 1e-3)
    assert np.abs(controller.theta_f).max() <= 50.0
    assert np.abs(controller.theta_g).max() <= 50.0
