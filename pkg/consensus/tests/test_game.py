from dataclasses import replace

import numpy as np
from django.test import SimpleTestCase

from consensus.services.game import GameError, run_game, terminal_cost
from consensus.services.grid import integrate_weighted
from consensus.services.scenarios import AgentSeed, DensitySpec, Scenario, preset
from consensus.services.strategy import CONSTANT, GREEDY, StrategySpec
from consensus.services.velocity import UNIT, RadialKernel


def small_scenario(agents, T=0.2, dt=0.05, n=20, snapshots=()):
    return Scenario(
        name='small',
        domain=(0.0, 10.0, 0.0, 10.0),
        nx=n, ny=n, T=T, dt_strategy=dt,
        density=DensitySpec((4.0, 6.0, 4.0, 6.0), 1.0, 0.0),
        agents=tuple(agents),
        snapshot_times=snapshots,
    )


def constant_agent(position, control, cap=1.0):
    return AgentSeed(position, RadialKernel(1, 5.0, UNIT), StrategySpec(CONSTANT, cap, control=control), (1.0, 1.0))


class RunGameTests(SimpleTestCase):

    def test_trace_layout(self):
        scenario = small_scenario([constant_agent((8.0, 5.0), (0.0, 1.0))])
        trace = run_game(scenario, threads=1)
        self.assertEqual(trace.n_epochs, 4)
        self.assertEqual(trace.k, 1)
        np.testing.assert_allclose(trace.times, [0.0, 0.05, 0.1, 0.15, 0.2])
        self.assertEqual(trace.positions.shape, (5, 1, 2))
        self.assertEqual(trace.controls.shape, (4, 1, 2))
        self.assertEqual(trace.running_costs.shape, (5, 1))
        self.assertEqual(trace.running_costs[-1, 0], trace.final_costs[0])
        self.assertGreater(trace.substeps, 0)

    def test_agents_follow_forward_euler(self):
        scenario = small_scenario([constant_agent((8.0, 5.0), (-0.6, 0.8))])
        trace = run_game(scenario, threads=1)
        expected = np.array([8.0, 5.0]) + np.outer(trace.times, [-0.6, 0.8])
        np.testing.assert_allclose(trace.positions[:, 0], expected, atol=1e-12)
        np.testing.assert_array_equal(trace.controls[:, 0], np.tile([-0.6, 0.8], (4, 1)))

    def test_mass_is_conserved_away_from_the_boundary(self):
        scenario = small_scenario([constant_agent((8.0, 5.0), (0.0, 0.0))])
        trace = run_game(scenario, threads=1)
        np.testing.assert_allclose(trace.masses, trace.masses[0], rtol=1e-12)
        self.assertAlmostEqual(trace.masses[0], 4.0)

    def test_terminal_cost_is_weighted_integral(self):
        scenario = small_scenario([constant_agent((8.0, 5.0), (0.0, 0.0))])
        trace = run_game(scenario, threads=1)
        psi = scenario.agents[0].psi()
        self.assertEqual(trace.final_costs[0], integrate_weighted(trace.final_density, psi))
        self.assertEqual(terminal_cost(trace.final_density, psi), trace.final_costs[0])

    def test_greedy_controls_use_the_speed_cap(self):
        seed = AgentSeed((8.0, 5.0), RadialKernel(1, 5.0, UNIT), StrategySpec(GREEDY, 1.5), (1.0, 8.0))
        trace = run_game(small_scenario([seed]), threads=1)
        np.testing.assert_allclose(np.linalg.norm(trace.controls[:, 0], axis=-1), 1.5)

    def test_greedy_leader_lowers_the_cost(self):
        greedy = AgentSeed((8.0, 5.0), RadialKernel(1, 5.0, UNIT), StrategySpec(GREEDY, 1.5), (1.0, 8.0))
        still = replace(greedy, strategy=StrategySpec(CONSTANT, 1.5))
        steered = run_game(small_scenario([greedy], T=1.0, n=40), threads=1)
        idle = run_game(small_scenario([still], T=1.0, n=40), threads=1)
        self.assertLess(steered.final_costs[0], idle.final_costs[0])

    def test_worker_count_does_not_change_the_result(self):
        agents = [
            AgentSeed((8.0, 5.0), RadialKernel(1, 5.0, UNIT), StrategySpec(GREEDY, 1.5), (1.0, 9.0)),
            AgentSeed((8.0, 5.0), RadialKernel(1, 5.0, UNIT), StrategySpec(GREEDY, 1.5), (1.0, 1.0)),
            constant_agent((2.0, 2.0), (0.5, 0.0)),
        ]
        scenario = small_scenario(agents)
        serial = run_game(scenario, threads=1)
        parallel = run_game(scenario, threads=3)
        np.testing.assert_array_equal(serial.positions, parallel.positions)
        np.testing.assert_array_equal(serial.final_costs, parallel.final_costs)
        np.testing.assert_array_equal(serial.final_density.values, parallel.final_density.values)

    def test_mirror_symmetric_players_break_even(self):
        scenario = preset('two-attractive-both-greedy', 30)
        scenario = replace(scenario, T=0.5)
        trace = run_game(scenario, threads=1)
        J1, J2 = trace.final_costs
        self.assertLessEqual(abs(J1 - J2), 1e-9 * max(1.0, abs(J1)))
        np.testing.assert_allclose(trace.positions[-1, 0, 1], 10.0 - trace.positions[-1, 1, 1], atol=1e-9)

    def test_snapshots(self):
        scenario = small_scenario([constant_agent((8.0, 5.0), (0.0, 0.0))], snapshots=(0.0, 0.1, 3.0))
        trace = run_game(scenario, threads=1)
        self.assertEqual(sorted(trace.snapshots), [0.0, 0.1])
        self.assertEqual(trace.snapshots[0.0].values.tolist(), scenario.initial_density().values.tolist())

    def test_escaping_agent(self):
        runaway = constant_agent((2.0, 5.0), (-10.0, 0.0), cap=10.0)
        scenario = small_scenario([runaway], T=2.5, dt=0.1)
        with self.assertRaisesMessage(GameError, "agent escaped"):
            run_game(scenario, threads=1)

    def test_zero_horizon(self):
        scenario = small_scenario([constant_agent((8.0, 5.0), (0.0, 0.0))], T=0.0)
        trace = run_game(scenario, threads=1)
        self.assertEqual(trace.n_epochs, 0)
        self.assertEqual(trace.final_costs[0], trace.running_costs[0, 0])

    def test_recorded_motion(self):
        scenario = small_scenario([constant_agent((8.0, 5.0), (-0.6, 0.8))])
        trace = run_game(scenario, threads=1)
        motion = trace.motion()
        np.testing.assert_allclose(motion(0.1), trace.positions[2])
        np.testing.assert_allclose(motion(0.125), 0.5 * (trace.positions[2] + trace.positions[3]))
        np.testing.assert_allclose(motion(9.0), trace.positions[-1])
