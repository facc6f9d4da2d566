import numpy as np
from django.test import SimpleTestCase
from scipy.integrate import dblquad

from consensus.services.grid import Grid2D
from consensus.services.scenarios import preset
from consensus.services.strategy import (
    BRUTE_FORCE, CONSTANT, GRADIENT_BRACKET_P, GRADIENT_BRACKET_X, GRADIENT_DESCENT, GRADIENT_READINGS, GREEDY,
    SCRIPTED, SOLVER_CHARACTERISTICS, StrategyError, StrategySpec,
    brute_force_direction, choose_control, default_denom_tol, greedy_direction, local_cost,
    strategy_integral, trial_speeds,
)
from consensus.services.velocity import LINEAR, RadialKernel, VelocityModel, grad_p_div, jacobian_dp

MODEL = VelocityModel((RadialKernel(1, 10.0, LINEAR),))
P = np.array([[3.0, 2.0]])
TARGET = (1.0, 8.0)
SIGMA2 = 0.49


def rho_bar(X, Y):
    return np.exp(-((X - 5.0) ** 2 + (Y - 5.0) ** 2) / (2.0 * SIGMA2))


def rho_gradient(X, Y):
    r = rho_bar(X, Y)
    return -(X - 5.0) / SIGMA2 * r, -(Y - 5.0) / SIGMA2 * r


def psi(X, Y):
    return np.hypot(np.asarray(X) - TARGET[0], np.asarray(Y) - TARGET[1])


def setup_grid(n):
    grid = Grid2D.from_domain(0.0, 10.0, 0.0, 10.0, n, n)
    return grid, grid.sample(rho_bar), rho_gradient(*grid.mesh)


class StrategySpecTests(SimpleTestCase):

    def test_validation(self):
        with self.assertRaises(StrategyError):
            StrategySpec('teleport', 1.0)
        with self.assertRaises(StrategyError):
            StrategySpec(GREEDY, -1.0)
        with self.assertRaises(StrategyError):
            StrategySpec(CONSTANT, 1.0, control=(1.0, 1.0))
        with self.assertRaises(StrategyError):
            StrategySpec(SCRIPTED, 1.0, times=(0.0, 1.0), controls=((0.0, 0.0),))
        with self.assertRaises(StrategyError):
            StrategySpec(SCRIPTED, 1.0, times=(0.0, 0.0), controls=((0.0, 0.0), (0.0, 0.0)))
        with self.assertRaises(StrategyError):
            StrategySpec(BRUTE_FORCE, 1.0, n_directions=3)
        with self.assertRaises(StrategyError):
            StrategySpec(BRUTE_FORCE, 1.0, solver='spectral')
        with self.assertRaisesMessage(StrategyError, "unknown gradient reading"):
            StrategySpec(GREEDY, 1.0, gradient='uphill')

    def test_control_on_the_cap_is_accepted(self):
        spec = StrategySpec(CONSTANT, 1.0, control=(0.6, 0.8))
        self.assertEqual(spec.control, (0.6, 0.8))

    def test_scripted_control_is_piecewise_constant(self):
        spec = StrategySpec(SCRIPTED, 1.0, times=(0.0, 1.0), controls=((1.0, 0.0), (0.0, -1.0)))
        np.testing.assert_array_equal(spec.scripted_control(0.5), [1.0, 0.0])
        np.testing.assert_array_equal(spec.scripted_control(1.0), [0.0, -1.0])
        np.testing.assert_array_equal(spec.scripted_control(7.0), [0.0, -1.0])

    def test_non_anticipative_variants(self):
        self.assertTrue(StrategySpec(GREEDY, 1.0).is_non_anticipative)
        self.assertTrue(StrategySpec(BRUTE_FORCE, 1.0).is_non_anticipative)
        self.assertFalse(StrategySpec(CONSTANT, 1.0).is_non_anticipative)

    def test_trial_speeds(self):
        speeds = trial_speeds(2.0, 8)
        self.assertEqual(speeds.shape, (9, 2))
        np.testing.assert_array_equal(speeds[0], [0.0, 0.0])
        np.testing.assert_allclose(np.linalg.norm(speeds[1:], axis=-1), 2.0)
        np.testing.assert_allclose(speeds[1], [2.0, 0.0])


class StrategyIntegralTests(SimpleTestCase):

    def test_against_quadrature(self):
        grid, rho, gradient = setup_grid(200)
        g = strategy_integral(rho, P, 0, MODEL, psi, gradient=gradient)

        def integrand(component):
            def f(y, x):
                point = np.array([[x, y]])
                gx, gy = rho_gradient(x, y)
                D = jacobian_dp(MODEL, point, P, 0)[0]
                G = grad_p_div(MODEL, point, P, 0)[0]
                value = np.array([gx, gy]) @ D + rho_bar(x, y) * G
                return -value[component] * psi(x, y)
            return f

        for component in range(2):
            oracle, _ = dblquad(integrand(component), 1.5, 8.5, 1.5, 8.5, epsabs=1e-9)
            self.assertLess(abs(g[component] - oracle) / np.linalg.norm(g), 2e-3)

    def test_grid_gradient_converges_to_analytic(self):
        grid, rho, gradient = setup_grid(200)
        exact = strategy_integral(rho, P, 0, MODEL, psi, gradient=gradient)
        discrete = strategy_integral(rho, P, 0, MODEL, psi)
        self.assertLess(np.linalg.norm(discrete - exact) / np.linalg.norm(exact), 1e-2)

    def test_empty_crowd(self):
        grid = Grid2D.from_domain(0.0, 10.0, 0.0, 10.0, 20, 20)
        np.testing.assert_array_equal(strategy_integral(grid.zeros(), P, 0, MODEL, psi), [0.0, 0.0])
        np.testing.assert_array_equal(greedy_direction(grid.zeros(), P, 0, MODEL, psi, 1.5), [0.0, 0.0])

    def test_integrand_not_finite(self):
        grid, rho, gradient = setup_grid(20)
        with self.assertRaisesMessage(StrategyError, "strategy integrand not finite"):
            strategy_integral(rho, P, 0, MODEL, lambda X, Y: np.full(np.shape(X), np.inf), gradient=gradient)


class GreedyTests(SimpleTestCase):

    def setUp(self):
        self.grid, self.rho, self.gradient = setup_grid(60)

    def test_speed_is_the_cap(self):
        w = greedy_direction(self.rho, P, 0, MODEL, psi, 1.5, gradient=self.gradient)
        self.assertAlmostEqual(float(np.linalg.norm(w)), 1.5)

    def test_tolerance_switches_to_rest(self):
        g = strategy_integral(self.rho, P, 0, MODEL, psi, gradient=self.gradient)
        w = greedy_direction(self.rho, P, 0, MODEL, psi, 1.5, denom_tol=2 * np.linalg.norm(g),
                             gradient=self.gradient)
        np.testing.assert_array_equal(w, [0.0, 0.0])
        self.assertAlmostEqual(default_denom_tol(self.rho), 1e-12 * (1 + self.rho.l1_norm()))

    def test_greedy_lowers_the_local_cost(self):
        dt = 0.01
        w = greedy_direction(self.rho, P, 0, MODEL, psi, 1.5, gradient=self.gradient)

        def cost(trial):
            return local_cost(self.rho, P, 0, MODEL, psi, trial, dt, 0.0, SOLVER_CHARACTERISTICS, rho_bar)

        self.assertLess(cost(w), cost(np.zeros(2)))
        self.assertLess(cost(w), cost(-w))

    def test_agrees_with_brute_force_oracle(self):
        dt, n_directions = 0.01, 16
        w = greedy_direction(self.rho, P, 0, MODEL, psi, 1.5, gradient=self.gradient)
        best = brute_force_direction(
            self.rho, P, 0, MODEL, psi, 1.5, dt, n_directions, 0.0, SOLVER_CHARACTERISTICS, rho_bar,
        )
        cosine = float(w @ best) / (1.5 * 1.5)
        self.assertGreaterEqual(cosine, np.cos(2 * np.pi / n_directions))


class LocalCostTests(SimpleTestCase):

    def test_solvers_agree(self):
        grid, rho, _ = setup_grid(80)
        w = np.array([1.0, 0.5])
        fv = local_cost(rho, P, 0, MODEL, psi, w, 0.1)
        exact = local_cost(rho, P, 0, MODEL, psi, w, 0.1, solver=SOLVER_CHARACTERISTICS, density_fn=rho_bar)
        self.assertLess(abs(fv - exact) / exact, 1e-2)

    def test_interpolated_snapshot_is_the_default_datum(self):
        grid, rho, _ = setup_grid(80)
        w = np.array([1.0, 0.5])
        interpolated = local_cost(rho, P, 0, MODEL, psi, w, 0.05, solver=SOLVER_CHARACTERISTICS)
        exact = local_cost(rho, P, 0, MODEL, psi, w, 0.05, solver=SOLVER_CHARACTERISTICS, density_fn=rho_bar)
        self.assertLess(abs(interpolated - exact) / exact, 1e-2)

    def test_invalid_arguments(self):
        grid, rho, _ = setup_grid(20)
        with self.assertRaises(StrategyError):
            local_cost(rho, P, 0, MODEL, psi, (0.0, 0.0), 0.0)
        with self.assertRaises(StrategyError):
            local_cost(rho, P, 0, MODEL, psi, (0.0, 0.0), 0.1, solver='spectral')
        with self.assertRaises(StrategyError):
            brute_force_direction(rho, P, 0, MODEL, psi, 1.0, 0.1, n_directions=2)


class ChooseControlTests(SimpleTestCase):

    def setUp(self):
        self.grid, self.rho, _ = setup_grid(40)

    def test_constant_and_scripted(self):
        constant = StrategySpec(CONSTANT, 1.0, control=(-0.7, 0.4))
        np.testing.assert_array_equal(
            choose_control(constant, self.rho, P, 0, MODEL, psi, 3.0, 0.01), [-0.7, 0.4],
        )
        scripted = StrategySpec(SCRIPTED, 1.0, times=(0.0, 0.5), controls=((1.0, 0.0), (0.0, 1.0)))
        np.testing.assert_array_equal(
            choose_control(scripted, self.rho, P, 0, MODEL, psi, 0.6, 0.01), [0.0, 1.0],
        )

    def test_greedy_uses_the_snapshot_gradient(self):
        spec = StrategySpec(GREEDY, 1.5)
        w = choose_control(spec, self.rho, P, 0, MODEL, psi, 0.0, 0.01)
        np.testing.assert_allclose(w, greedy_direction(self.rho, P, 0, MODEL, psi, 1.5))

    def test_brute_force_returns_a_candidate(self):
        spec = StrategySpec(BRUTE_FORCE, 1.0, n_directions=8)
        w = choose_control(spec, self.rho, P, 0, MODEL, psi, 0.0, 0.05)
        self.assertTrue(any(np.allclose(w, c) for c in trial_speeds(1.0, 8)))


class GradientReadingTests(SimpleTestCase):

    def setUp(self):
        self.grid, self.rho, self.gradient = setup_grid(60)

    def integral(self, reading, weight=psi):
        return strategy_integral(self.rho, P, 0, MODEL, weight, gradient=self.gradient, reading=reading)

    def test_brackets_are_opposite(self):
        np.testing.assert_allclose(self.integral(GRADIENT_BRACKET_X), -self.integral(GRADIENT_BRACKET_P))

    def test_readings_share_the_two_terms(self):
        descent, bracket = self.integral(GRADIENT_DESCENT), self.integral(GRADIENT_BRACKET_P)
        transport = 0.5 * (bracket - descent)
        compression = -0.5 * (bracket + descent)
        grid_transport = strategy_integral(
            self.rho.with_values(np.zeros(self.grid.shape)), P, 0, MODEL, psi, gradient=self.gradient,
        )
        # With rho = 0 only the transport term is left: descent = -A
        np.testing.assert_allclose(grid_transport, -transport, rtol=1e-10, atol=1e-14)
        self.assertGreater(float(np.linalg.norm(compression)), 0.0)

    def test_unknown_reading(self):
        with self.assertRaisesMessage(StrategyError, "unknown gradient reading"):
            self.integral('uphill')

    def test_weight_scaling(self):
        for reading in GRADIENT_READINGS:
            with self.subTest(reading):
                w = greedy_direction(self.rho, P, 0, MODEL, psi, 1.5, gradient=self.gradient, reading=reading)
                for factor in (0.25, 3.0):
                    scaled = greedy_direction(self.rho, P, 0, MODEL, lambda X, Y: factor * psi(X, Y), 1.5,
                                              gradient=self.gradient, reading=reading)
                    np.testing.assert_allclose(scaled, w, atol=1e-12)
                flipped = greedy_direction(self.rho, P, 0, MODEL, lambda X, Y: -2.0 * psi(X, Y), 1.5,
                                           gradient=self.gradient, reading=reading)
                np.testing.assert_allclose(flipped, -w, atol=1e-12)

    def test_choose_control_follows_the_reading(self):
        spec = StrategySpec(GREEDY, 1.5, gradient=GRADIENT_BRACKET_X)
        w = choose_control(spec, self.rho, P, 0, MODEL, psi, 0.0, 0.01)
        np.testing.assert_allclose(w, greedy_direction(self.rho, P, 0, MODEL, psi, 1.5, reading=GRADIENT_BRACKET_X))


class PresetDirectionTests(SimpleTestCase):
    """First greedy decisions of the preset experiments on a 100 x 100 grid."""

    @staticmethod
    def first_direction(name, i, reading):
        scenario = preset(name, 100)
        seed = scenario.agents[i]
        return greedy_direction(
            scenario.initial_density(), scenario.initial_positions(), i, scenario.model(), seed.psi(),
            seed.speed_cap, reading=reading,
        )

    def test_single_leader_first_moves_right_under_bracket_x(self):
        w = self.first_direction('single-agent', 0, GRADIENT_BRACKET_X)
        self.assertGreater(w[0], 0.0)
        self.assertGreater(w[1], 0.0)

    def test_single_leader_descent_heads_left_and_up(self):
        for name in ('single-agent', 'single-agent-unit'):
            with self.subTest(name):
                w = self.first_direction(name, 0, GRADIENT_DESCENT)
                self.assertLess(w[0], 0.0)
                self.assertGreater(w[1], 0.0)

    def test_rival_greedy_matches_brute_force(self):
        scenario = preset('two-attractive', 100)
        seed = scenario.agents[1]
        rho, P2 = scenario.initial_density(), scenario.initial_positions()
        model, weight = scenario.model(), seed.psi()
        n_directions = 16
        greedy = greedy_direction(rho, P2, 1, model, weight, 1.5)
        best = brute_force_direction(rho, P2, 1, model, weight, 1.5, 0.01, n_directions)
        cosine = float(greedy @ best) / (1.5 * 1.5)
        self.assertGreaterEqual(cosine, np.cos(2 * np.pi / n_directions))
        # Both head down towards (1, 1); bracket_x points the other way
        self.assertLess(best[1], 0.0)
        self.assertGreater(self.first_direction('two-attractive', 1, GRADIENT_BRACKET_X)[1], 0.0)


class CostCovarianceTests(SimpleTestCase):
    """The local cost is unchanged when crowd, agent, weight and speed move together."""

    def setUp(self):
        self.w = np.array([1.0, 0.5])

        def rho_skew(X, Y):
            return rho_bar(X, Y) * (1.0 + 0.3 * np.asarray(X) - 0.1 * np.asarray(Y))

        self.rho_skew = rho_skew

    def cost(self, grid, density, P_, weight, w):
        rho = grid.sample(density)
        return local_cost(rho, P_, 0, MODEL, weight, w, 0.05, solver=SOLVER_CHARACTERISTICS, density_fn=density)

    def test_quarter_turn(self):
        grid = Grid2D.from_domain(0.0, 10.0, 0.0, 10.0, 40, 40)
        base = self.cost(grid, self.rho_skew, P, psi, self.w)

        # (x, y) -> (10 - y, x) maps the grid onto itself
        turned_density = lambda X, Y: self.rho_skew(Y, 10.0 - np.asarray(X))
        turned_psi = lambda X, Y: psi(Y, 10.0 - np.asarray(X))
        turned_P = np.array([[10.0 - P[0, 1], P[0, 0]]])
        turned_w = np.array([-self.w[1], self.w[0]])
        turned = self.cost(grid, turned_density, turned_P, turned_psi, turned_w)
        self.assertAlmostEqual(turned, base, delta=1e-6 * abs(base))

    def test_translation(self):
        shift = np.array([2.0, -3.0])
        grid = Grid2D.from_domain(0.0, 10.0, 0.0, 10.0, 40, 40)
        moved_grid = Grid2D.from_domain(2.0, 12.0, -3.0, 7.0, 40, 40)
        base = self.cost(grid, self.rho_skew, P, psi, self.w)

        moved_density = lambda X, Y: self.rho_skew(np.asarray(X) - shift[0], np.asarray(Y) - shift[1])
        moved_psi = lambda X, Y: psi(np.asarray(X) - shift[0], np.asarray(Y) - shift[1])
        moved = self.cost(moved_grid, moved_density, P + shift, moved_psi, self.w)
        self.assertAlmostEqual(moved, base, delta=1e-6 * abs(base))
