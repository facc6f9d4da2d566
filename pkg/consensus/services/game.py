"""
Coupled crowd/agent game: strategy epochs of length dt, density transport
with every agent moving at its chosen speed, forward Euler for the agents and
terminal costs at T.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from django.conf import settings

from .grid import NumericsError, PointwiseFunction, ScalarField, integrate_weighted
from .motion import LinearMotion, PiecewiseLinearMotion
from .pde import TransportStats, advance_interval
from .scenarios import Scenario
from .strategy import StrategySpec, choose_control

logger = logging.getLogger(__name__)


class GameError(NumericsError):
    """Raised when a game run cannot continue."""
    pass


@dataclass
class AgentState:
    index: int
    position: np.ndarray
    strategy: StrategySpec
    psi: PointwiseFunction
    target: Optional[tuple] = None


@dataclass
class GameTrace:
    """Everything a run produced; arrays are indexed by epoch (times has one more entry)."""
    scenario_name: str
    dt: float
    times: np.ndarray
    positions: np.ndarray          # (n+1, k, 2)
    controls: np.ndarray           # (n, k, 2)
    running_costs: np.ndarray      # (n+1, k)
    masses: np.ndarray             # (n+1,)
    final_costs: np.ndarray        # (k,)
    final_density: ScalarField
    snapshots: Dict[float, ScalarField] = field(default_factory=dict)
    substeps: int = 0
    max_courant: float = 0.0

    @property
    def k(self) -> int:
        return self.positions.shape[1]

    @property
    def n_epochs(self) -> int:
        return self.controls.shape[0]

    def motion(self) -> PiecewiseLinearMotion:
        """Recorded agent trajectory as a motion, linear between epochs."""
        return PiecewiseLinearMotion(self.times, self.positions)


def terminal_cost(rho_T: ScalarField, psi: PointwiseFunction) -> float:
    """int rho(T, x) psi(x) dx."""
    return integrate_weighted(rho_T, psi)


def _snapshot_epochs(scenario: Scenario) -> Dict[int, float]:
    epochs = {}
    for time in scenario.snapshot_times:
        index = int(round(time / scenario.dt_strategy))
        if 0 <= index <= scenario.n_epochs:
            epochs[index] = time
        else:
            logger.warning(f"Snapshot time {time} lies outside [0, T]; skipped")
    return epochs


def _check_inside(scenario: Scenario, agents: List[AgentState]):
    x0, x1, y0, y1 = scenario.domain
    width, height = x1 - x0, y1 - y0
    for agent in agents:
        px, py = agent.position
        if px < x0 - width or px > x1 + width or py < y0 - height or py > y1 + height:
            raise GameError(f"agent escaped: agent {agent.index + 1} at ({px:.4g}, {py:.4g})")


def run_game(scenario: Scenario, threads: Optional[int] = None) -> GameTrace:
    """
    Play the scenario from t = 0 to T.

    Args:
        scenario: validated scenario
        threads: worker cap for the per-epoch agent decisions (defaults to CONSENSUS_THREADS)

    Returns:
        GameTrace with positions, controls, running costs, masses and snapshots
    """
    grid = scenario.grid()
    model = scenario.model()
    dt = scenario.dt_strategy
    n = scenario.n_epochs
    k = scenario.k
    workers = max(1, min(k, threads or settings.CONSENSUS_THREADS))

    agents = [
        AgentState(i, np.array(seed.position, dtype=float), seed.strategy, seed.psi(), seed.target)
        for i, seed in enumerate(scenario.agents)
    ]
    rho = scenario.initial_density()
    snapshot_epochs = _snapshot_epochs(scenario)
    stats = TransportStats()

    positions = np.zeros((n + 1, k, 2))
    controls = np.zeros((n, k, 2))
    running = np.zeros((n + 1, k))
    masses = np.zeros(n + 1)
    snapshots: Dict[float, ScalarField] = {}

    def record(epoch: int):
        positions[epoch] = [agent.position for agent in agents]
        running[epoch] = [terminal_cost(rho, agent.psi) for agent in agents]
        masses[epoch] = rho.total_mass()
        if epoch in snapshot_epochs:
            snapshots[snapshot_epochs[epoch]] = rho

    logger.info(f"Running {scenario.name}: k={k}, grid {grid.nx}x{grid.ny}, {n} epochs of {dt}")
    record(0)

    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for epoch in range(n):
            t = epoch * dt
            P = np.array([agent.position for agent in agents])

            def decide(agent: AgentState) -> np.ndarray:
                return choose_control(agent.strategy, rho, P, agent.index, model, agent.psi, t, dt)

            # Simultaneous moves: every agent reads the same snapshot
            if executor is not None:
                W = np.array(list(executor.map(decide, agents)))
            else:
                W = np.array([decide(agent) for agent in agents])

            rho = advance_interval(rho, model, LinearMotion(P, W, t0=t), t, dt, scenario.cfl, stats)
            for agent, w in zip(agents, W):
                agent.position = agent.position + dt * w
            _check_inside(scenario, agents)

            controls[epoch] = W
            record(epoch + 1)
            if n >= 10 and (epoch + 1) % (n // 10) == 0:
                logger.debug(f"{scenario.name}: epoch {epoch + 1}/{n}, mass {masses[epoch + 1]:.6g}")
    finally:
        if executor is not None:
            executor.shutdown()

    final_costs = np.array([terminal_cost(rho, agent.psi) for agent in agents])
    logger.info(f"Finished {scenario.name}: costs {', '.join(f'{c:.4f}' for c in final_costs)}")

    return GameTrace(
        scenario_name=scenario.name,
        dt=dt,
        times=np.arange(n + 1) * dt,
        positions=positions,
        controls=controls,
        running_costs=running,
        masses=masses,
        final_costs=final_costs,
        final_density=rho,
        snapshots=snapshots,
        substeps=stats.substeps,
        max_courant=stats.max_courant,
    )
