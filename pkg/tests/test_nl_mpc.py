"""Sliding-window controller with artificial equilibrium setpoint."""

import warnings

import numpy as np
import pytest

from ddmpc.lti_mpc import Box
from ddmpc.nl_mpc import (NlControllerConfig, NlDataDrivenMpc, SlidingWindow,
                          assemble_nl_qp)
from ddmpc.plant import (FourTankParams, FourTankPlant, LtiPlant,
                         four_tank_equilibrium, four_tank_input_for_output,
                         random_lti)
from ddmpc.qpsolve import QpSettings, QpStatus, solve_equality_only
from ddmpc.hankel import build_hankel


def tank_config(**overrides):
    base = dict(N=150, L=35, n=3, Q=1.0, R=2.0, S=20.0,
                lambda_alpha=5e-5, lambda_sigma=2e5,
                y_target=np.array([15.0, 15.0]),
                input_box=Box.from_bounds(0.0, 60.0, 2),
                setpoint_box=Box.from_bounds(0.6, 59.4, 2))
    base.update(overrides)
    return NlControllerConfig(**base)


def small_config(**overrides):
    base = dict(N=60, L=10, n=2, Q=1.0, R=0.1, S=50.0,
                lambda_alpha=1e-4, lambda_sigma=1e5,
                y_target=np.array([0.4, -0.2]),
                input_box=Box.from_bounds(-5.0, 5.0, 2),
                setpoint_box=Box.from_bounds(-4.5, 4.5, 2))
    base.update(overrides)
    return NlControllerConfig(**base)


def feed_excitation(controller, plant, steps, rng, low=20.0, high=30.0):
    for _ in range(steps):
        u = rng.uniform(low, high, plant.n_inputs)
        y = plant.step(u)
        controller.observe(u, y)


@pytest.fixture(scope="module")
def tank_takeover():
    """State of the loop right after the excitation phase: a full window
    of uniform-random inputs on the empty-start tank plant."""
    cfg = tank_config()
    controller = NlDataDrivenMpc(cfg)
    plant = FourTankPlant(x0=np.zeros(4))
    rng = np.random.default_rng(0)
    feed_excitation(controller, plant, 150, rng)
    u0 = controller.compute_input()
    return cfg, controller, plant, u0


class TestSolutionInvariants:
    def test_alpha_dimension(self, tank_takeover):
        _, controller, _, _ = tank_takeover
        assert controller.last_solution.alpha.size == 150 - 35 - 3

    def test_alpha_sums_to_one(self, tank_takeover):
        _, controller, _, _ = tank_takeover
        assert abs(controller.last_solution.alpha.sum() - 1.0) <= 1e-8

    def test_terminal_window_pinned_to_setpoint(self, tank_takeover):
        _, controller, _, _ = tank_takeover
        sol = controller.last_solution
        assert sol.u_bar.shape == (36, 2)
        for k in range(36 - 4, 36):
            np.testing.assert_allclose(sol.u_bar[k], sol.u_s_art, atol=1e-6)
            np.testing.assert_allclose(sol.y_bar[k], sol.y_s_art, atol=1e-6)

    def test_artificial_setpoint_inside_its_box(self, tank_takeover):
        _, controller, _, _ = tank_takeover
        sol = controller.last_solution
        assert (sol.u_s_art >= 0.6 - 1e-8).all()
        assert (sol.u_s_art <= 59.4 + 1e-8).all()

    def test_inputs_inside_box(self, tank_takeover):
        _, controller, _, _ = tank_takeover
        sol = controller.last_solution
        assert (sol.u_bar >= -1e-7).all()
        assert (sol.u_bar <= 60.0 + 1e-7).all()

    def test_qp_dimensions(self, tank_takeover):
        cfg, controller, _, _ = tank_takeover
        window = SlidingWindow(150, 2, 2)
        u = controller.window_inputs()
        y = controller.window_outputs()
        for k in range(150):
            window.push(u[k], y[k])
        from ddmpc.lti_mpc import PastWindow
        past = PastWindow(u[-3:], y[-3:])
        problem = assemble_nl_qp(cfg, window, past)
        depth = 35 + 3 + 1
        n_alpha = 150 - depth + 1
        assert problem.n_vars == n_alpha + 2 * depth + 2 * depth \
            + 2 * depth + 2 + 2


class TestEquilibriumBehavior:
    def setup_method(self):
        self.params = FourTankParams()
        self.u_eq = four_tank_input_for_output(self.params,
                                               np.array([15.0, 15.0]))
        self.x_eq = four_tank_equilibrium(self.params, self.u_eq)

    def prime_at_equilibrium(self, cfg):
        controller = NlDataDrivenMpc(cfg)
        for _ in range(cfg.N):
            controller.observe(self.u_eq, self.x_eq[:2])
        return controller

    def test_objective_reduces_to_regularization(self):
        cfg = tank_config()
        controller = self.prime_at_equilibrium(cfg)
        controller.compute_input()
        sol = controller.last_solution
        reg = cfg.lambda_alpha * float(sol.alpha @ sol.alpha)
        assert sol.objective < 1e-5
        assert abs(sol.objective - reg) <= 1e-8 + 0.01 * reg
        spread = np.ptp(sol.u_bar, axis=0)
        assert (spread < 1e-5).all()

    def test_returns_equilibrium_input_each_step(self):
        cfg = tank_config()
        controller = self.prime_at_equilibrium(cfg)
        plant = FourTankPlant(self.params, x0=self.x_eq.copy())
        u = controller.compute_input()
        for _ in range(4):
            np.testing.assert_allclose(u, self.u_eq, atol=1e-3)
            y = plant.step(u)
            u = controller.step(u, y)

    def test_artificial_setpoint_is_plant_equilibrium(self):
        cfg = tank_config()
        controller = self.prime_at_equilibrium(cfg)
        controller.compute_input()
        sol = controller.last_solution
        x_star = four_tank_equilibrium(self.params, sol.u_s_art)
        np.testing.assert_allclose(x_star[:2], sol.y_s_art, atol=1e-3)


class TestAffineConsistency:
    """The sum-to-one constraint carries constant offsets from the data
    into the predictions; without it the offset is lost."""

    def residual(self, with_sum_constraint):
        rng = np.random.default_rng(7)
        G = np.array([[1.0, 0.4], [-0.3, 0.8]])
        c = np.array([0.8, -0.6])  # unit-size offset
        u_data = rng.uniform(-1, 1, (60, 2))
        y_data = u_data @ G.T + c
        depth = 6
        u_test = rng.uniform(-1, 1, (depth, 2))
        y_test = u_test @ G.T + c
        Hu = build_hankel(u_data, depth)
        Hy = build_hankel(y_data, depth)
        n_alpha = Hu.shape[1]
        rows = [Hu]
        rhs = [u_test.ravel()]
        if with_sum_constraint:
            rows.append(np.ones((1, n_alpha)))
            rhs.append(np.ones(1))
        A = np.vstack(rows)
        b = np.concatenate(rhs)
        sol = solve_equality_only(np.eye(n_alpha), np.zeros(n_alpha), A, b)
        pred = Hy @ sol.z_star
        return np.linalg.norm(pred - y_test.ravel()) \
            / np.linalg.norm(y_test)

    def test_with_constraint_exact(self):
        assert self.residual(with_sum_constraint=True) < 1e-6

    def test_without_constraint_offset_lost(self):
        assert self.residual(with_sum_constraint=False) > 1e-2


class TestSlidingWindowSemantics:
    def test_holds_last_min_k_n_pairs(self):
        window = SlidingWindow(5, 1, 1)
        for k in range(1, 12):
            window.push([float(k)], [float(-k)])
            held = window.u_seq()[:, 0]
            expected = np.arange(max(1, k - 4), k + 1, dtype=float)
            np.testing.assert_array_equal(held, expected)
            np.testing.assert_array_equal(window.y_seq()[:, 0], -expected)
            assert len(window) == min(k, 5)
            assert window.full == (k >= 5)

    def test_not_ready_before_full(self):
        cfg = small_config()
        controller = NlDataDrivenMpc(cfg)
        controller.observe(np.zeros(2), np.zeros(2))
        assert not controller.ready
        with pytest.raises(RuntimeError):
            controller.compute_input()

    def test_frozen_window_keeps_data_but_tracks_past(self):
        cfg = small_config(update_data=False)
        controller = NlDataDrivenMpc(cfg)
        system = random_lti(2, 2, 2, spectral_radius_max=0.8, seed=5)
        plant = LtiPlant(system)
        rng = np.random.default_rng(3)
        feed_excitation(controller, plant, 60, rng, low=-1.0, high=1.0)
        frozen = controller.window_inputs().copy()
        u = controller.compute_input()
        fed = []
        for _ in range(3):
            y = plant.step(u)
            fed.append((u.copy(), y.copy()))
            u = controller.step(u, y)
        np.testing.assert_array_equal(controller.window_inputs(), frozen)
        # the initialization window must still follow the loop
        np.testing.assert_array_equal(controller._past_u[-1], fed[-1][0])
        np.testing.assert_array_equal(controller._past_y[-1], fed[-1][1])


class TestConfigValidation:
    def test_window_too_short(self):
        with pytest.raises(ValueError):
            small_config(N=30)  # needs (m+1)(L+n+1)-1 = 38

    def test_setpoint_box_must_be_strictly_inside(self):
        with pytest.raises(ValueError):
            small_config(setpoint_box=Box.from_bounds(-5.0, 5.0, 2))

    def test_positive_weights_required(self):
        with pytest.raises(ValueError):
            small_config(lambda_alpha=0.0)
        with pytest.raises(ValueError):
            small_config(lambda_sigma=-1.0)


class TestPeAdvisory:
    def test_constant_window_not_pe(self):
        cfg = small_config()
        controller = NlDataDrivenMpc(cfg)
        for _ in range(60):
            controller.observe(np.ones(2), np.ones(2))
        report = controller.pe_advisory()
        assert not report.is_pe

    def test_excitation_window_healthy(self):
        cfg = tank_config()
        controller = NlDataDrivenMpc(cfg)
        plant = FourTankPlant(x0=np.zeros(4))
        rng = np.random.default_rng(1)
        feed_excitation(controller, plant, 150, rng)
        report = controller.pe_advisory()
        assert report.is_pe
        assert report.smallest_retained_singular_value > 1e-3


class TestLinearPlantBehavior:
    def run_loop(self, lambda_alpha, steps=120):
        system = random_lti(2, 2, 2, spectral_radius_max=0.75, seed=17)
        gain = system.C @ np.linalg.solve(np.eye(2) - system.A, system.B)
        y_target = gain @ np.array([0.8, -0.5])
        cfg = small_config(lambda_alpha=lambda_alpha,
                           y_target=y_target, S=200.0)
        controller = NlDataDrivenMpc(cfg)
        plant = LtiPlant(system)
        rng = np.random.default_rng(11)
        feed_excitation(controller, plant, 60, rng, low=-1.0, high=1.0)
        u = controller.compute_input()
        errors = []
        for _ in range(steps):
            y = plant.step(u)
            errors.append(np.max(np.abs(y - y_target)))
            u = controller.step(u, y)
        return np.array(errors), controller

    def test_converges_on_linear_plant(self):
        errors, controller = self.run_loop(1e-4)
        assert errors[-10:].mean() < 1e-2
        sol = controller.last_solution
        assert np.linalg.norm(sol.sigma) < 1e-3

    def test_steady_error_shrinks_with_lambda_alpha(self):
        coarse, _ = self.run_loop(1e-2)
        fine, _ = self.run_loop(1e-5)
        assert fine[-10:].mean() < coarse[-10:].mean()

    def test_artificial_setpoint_near_admissible_target(self):
        errors, controller = self.run_loop(1e-4)
        sol = controller.last_solution
        np.testing.assert_allclose(sol.y_s_art, controller.y_target,
                                   atol=1e-2)


class TestSolverStress:
    def test_iteration_limit_warns_and_returns_input(self):
        cfg = small_config()
        controller = NlDataDrivenMpc(
            cfg, settings=QpSettings(max_iter=30, polish=False))
        system = random_lti(2, 2, 2, spectral_radius_max=0.8, seed=5)
        plant = LtiPlant(system)
        rng = np.random.default_rng(3)
        feed_excitation(controller, plant, 60, rng, low=-1.0, high=1.0)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            u = controller.compute_input()
        assert controller.last_solution.qp_stats.status \
            is QpStatus.MAX_ITERATIONS
        assert any("iteration limit" in str(w.message) for w in caught)
        assert np.isfinite(u).all()

    def test_set_target_changes_objective(self, tank_takeover):
        cfg, controller, _, _ = tank_takeover
        sol_before = controller.last_solution
        controller.set_target([11.0, 11.0])
        controller.compute_input()
        sol_after = controller.last_solution
        controller.set_target([15.0, 15.0])  # restore for other tests
        controller.compute_input()
        assert not np.allclose(sol_before.y_s_art, sol_after.y_s_art)
