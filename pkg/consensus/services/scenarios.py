"""
Scenario schema, TOML loading/dumping and the built-in experiment presets.

A Scenario is immutable; tables of a TOML file are validated by the forms in
consensus.forms and assembled into the dataclasses below.
"""
import logging
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import tomli_w
from django.conf import settings

from ..forms import (
    AgentForm, DensityForm, DomainForm, GridForm, KernelForm, OutputForm, StrategyForm, TimeForm,
)
from .grid import BoundingBox, Grid2D, PointwiseFunction, ScalarField
from .strategy import (
    BRUTE_FORCE, CONSTANT, GRADIENT_BRACKET_X, GRADIENT_DESCENT, GREEDY, SCRIPTED, StrategySpec,
)
from .velocity import LINEAR, UNIT, RadialKernel, VelocityModel

logger = logging.getLogger(__name__)

TOP_LEVEL_KEYS = ('name', 'description', 'domain', 'grid', 'time', 'density', 'agents', 'output')


class ScenarioError(Exception):
    """Raised when a scenario file or preset is invalid."""
    pass


def _smoothstep(s: np.ndarray) -> np.ndarray:
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def _smoothstep_slope(s: np.ndarray) -> np.ndarray:
    inside = (s > 0.0) & (s < 1.0)
    return np.where(inside, 6.0 * s * (1.0 - s), 0.0)


@dataclass(frozen=True)
class DensitySpec:
    """
    Initial crowd density: amplitude times the indicator of box = (ax, bx, ay, by).

    With mollify_cells > 0 every edge is replaced by a C1 cubic ramp of width
    mollify_cells * min(dx, dy) centred on the edge (grid dependent).
    """
    box: Tuple[float, float, float, float]
    amplitude: float = 1.0
    mollify_cells: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, 'box', tuple(float(b) for b in self.box))

    @property
    def bbox(self) -> BoundingBox:
        return BoundingBox(*self.box)

    def ramp_width(self, grid: Grid2D) -> float:
        return self.mollify_cells * min(grid.dx, grid.dy)

    def _axis_profile(self, s: np.ndarray, a: float, b: float, delta: float):
        if delta == 0.0:
            value = ((s >= a) & (s <= b)).astype(float)
            return value, np.zeros_like(value)
        up = (s - (a - 0.5 * delta)) / delta
        down = ((b + 0.5 * delta) - s) / delta
        value = _smoothstep(up) * _smoothstep(down)
        slope = (_smoothstep_slope(up) * _smoothstep(down) - _smoothstep(up) * _smoothstep_slope(down)) / delta
        return value, slope

    def function(self, grid: Grid2D) -> PointwiseFunction:
        ax, bx, ay, by = self.box
        delta = self.ramp_width(grid)

        def rho_bar(X, Y):
            fx, _ = self._axis_profile(np.asarray(X, dtype=float), ax, bx, delta)
            fy, _ = self._axis_profile(np.asarray(Y, dtype=float), ay, by, delta)
            return self.amplitude * fx * fy

        return rho_bar

    def gradient(self, grid: Grid2D) -> Tuple[np.ndarray, np.ndarray]:
        """Exact gradient of the mollified density at the cell centers (zero for raw indicators)."""
        ax, bx, ay, by = self.box
        delta = self.ramp_width(grid)
        X, Y = grid.mesh
        fx, dfx = self._axis_profile(X, ax, bx, delta)
        fy, dfy = self._axis_profile(Y, ay, by, delta)
        return self.amplitude * dfx * fy, self.amplitude * fx * dfy

    def sample(self, grid: Grid2D) -> ScalarField:
        return grid.sample(self.function(grid))


@dataclass(frozen=True)
class AgentSeed:
    """Initial state and rule of one agent; psi(x) = psi_sign * |x - target|."""
    position: Tuple[float, float]
    kernel: RadialKernel
    strategy: StrategySpec
    target: Optional[Tuple[float, float]] = None
    psi_sign: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'position', tuple(float(p) for p in self.position))
        if self.target is not None:
            object.__setattr__(self, 'target', tuple(float(p) for p in self.target))

    @property
    def speed_cap(self) -> float:
        return self.strategy.speed_cap

    def psi(self) -> PointwiseFunction:
        if self.target is None:
            return lambda X, Y: np.zeros(np.shape(X))
        tx, ty = self.target
        sign = float(self.psi_sign)
        return lambda X, Y: sign * np.hypot(np.asarray(X) - tx, np.asarray(Y) - ty)


@dataclass(frozen=True)
class Scenario:
    name: str
    domain: Tuple[float, float, float, float]
    nx: int
    ny: int
    T: float
    dt_strategy: float
    density: DensitySpec
    agents: Tuple[AgentSeed, ...]
    cfl: float = 0.45
    snapshot_times: Tuple[float, ...] = ()
    description: str = ''

    def __post_init__(self):
        object.__setattr__(self, 'domain', tuple(float(d) for d in self.domain))
        object.__setattr__(self, 'agents', tuple(self.agents))
        object.__setattr__(self, 'snapshot_times', tuple(sorted(float(t) for t in self.snapshot_times)))
        self.validate()

    def validate(self):
        x0, x1, y0, y1 = self.domain
        if not (x1 > x0 and y1 > y0):
            raise ScenarioError("domain: empty rectangle")
        if self.nx < 2 or self.ny < 2:
            raise ScenarioError("grid: nx and ny must be at least 2")
        if not self.agents:
            raise ScenarioError("agents: at least one agent is required")
        if not (self.T >= 0 and self.dt_strategy > 0):
            raise ScenarioError("time: T must be non-negative and dt_strategy positive")
        if not 0 < self.cfl <= 1:
            raise ScenarioError("grid.cfl: must lie in (0, 1]")

        reach = 0.5 * self.density.ramp_width(self.grid())
        ax, bx, ay, by = self.density.box
        if not (x0 < ax - reach and bx + reach < x1 and y0 < ay - reach and by + reach < y1):
            raise ScenarioError("density.box: initial support not interior")
        for index, agent in enumerate(self.agents):
            if not all(math.isfinite(p) for p in agent.position):
                raise ScenarioError(f"agents[{index}].position: not finite")

    @property
    def k(self) -> int:
        return len(self.agents)

    @property
    def n_epochs(self) -> int:
        return int(round(self.T / self.dt_strategy))

    def grid(self) -> Grid2D:
        x0, x1, y0, y1 = self.domain
        return Grid2D.from_domain(x0, x1, y0, y1, self.nx, self.ny)

    def model(self) -> VelocityModel:
        return VelocityModel(tuple(agent.kernel for agent in self.agents))

    def initial_positions(self) -> np.ndarray:
        return np.array([agent.position for agent in self.agents], dtype=float)

    def initial_density(self) -> ScalarField:
        return self.density.sample(self.grid())

    def with_grid(self, nx: int, ny: int) -> 'Scenario':
        return replace(self, nx=nx, ny=ny)

    def with_snapshots(self, times) -> 'Scenario':
        return replace(self, snapshot_times=tuple(times))


# --- TOML --------------------------------------------------------------------

def _collect(form) -> dict:
    if not form.is_valid():
        raise ScenarioError('; '.join(form.error_messages_with_paths()))
    return form.cleaned_data


def _strategy_from_table(data: dict, speed_cap: float, path: str) -> StrategySpec:
    cleaned = _collect(StrategyForm(data, path))
    kwargs = {'variant': cleaned['variant'], 'speed_cap': speed_cap,
              'n_directions': cleaned['n_directions'], 'solver': cleaned['solver'],
              'gradient': cleaned['gradient']}
    if cleaned.get('denom_tol') is not None:
        kwargs['denom_tol'] = cleaned['denom_tol']
    if cleaned.get('control') is not None:
        kwargs['control'] = cleaned['control']
    if cleaned.get('times') is not None:
        kwargs['times'] = cleaned['times']
    if cleaned.get('controls') is not None:
        kwargs['controls'] = cleaned['controls']
    try:
        return StrategySpec(**kwargs)
    except Exception as e:
        raise ScenarioError(f"{path}: {e}")


def scenario_from_dict(data: dict, default_name: str = 'scenario') -> Scenario:
    """Validate a parsed TOML document table by table and build the Scenario."""
    unknown = sorted(set(data) - set(TOP_LEVEL_KEYS))
    if unknown:
        raise ScenarioError(f"unknown key(s): {', '.join(unknown)}")
    for table in ('domain', 'time', 'density', 'agents'):
        if table not in data:
            raise ScenarioError(f"{table}: missing")
    for table in ('domain', 'grid', 'time', 'density', 'output'):
        if table in data and not isinstance(data[table], dict):
            raise ScenarioError(f"{table}: expected a table")
    if not isinstance(data['agents'], list) or not data['agents']:
        raise ScenarioError("agents: expected a non-empty array of tables")

    domain = _collect(DomainForm(data['domain'], 'domain'))
    grid = _collect(GridForm(data.get('grid', {}), 'grid'))
    time = _collect(TimeForm(data['time'], 'time'))
    density = _collect(DensityForm(data['density'], 'density'))
    output = _collect(OutputForm(data.get('output', {}), 'output'))

    agents = []
    for index, raw in enumerate(data['agents']):
        path = f"agents[{index}]"
        if not isinstance(raw, dict):
            raise ScenarioError(f"{path}: expected a table")
        agent = _collect(AgentForm(raw, path))
        kernel_data = _collect(KernelForm(agent.get('kernel') or {}, f"{path}.kernel"))
        try:
            kernel = RadialKernel(**kernel_data)
        except Exception as e:
            raise ScenarioError(f"{path}.kernel: {e}")
        strategy = _strategy_from_table(agent['strategy'], agent['speed_cap'], f"{path}.strategy")
        agents.append(AgentSeed(
            position=agent['position'],
            kernel=kernel,
            strategy=strategy,
            target=agent.get('target'),
            psi_sign=agent['psi_sign'],
        ))

    name = data.get('name', default_name)
    description = data.get('description', '')
    if not isinstance(name, str) or not isinstance(description, str):
        raise ScenarioError("name/description: expected strings")

    return Scenario(
        name=name,
        description=description,
        domain=(domain['x0'], domain['x1'], domain['y0'], domain['y1']),
        nx=grid['nx'],
        ny=grid['ny'],
        cfl=grid['cfl'],
        T=time['T'],
        dt_strategy=time['dt_strategy'],
        density=DensitySpec(density['box'], density['amplitude'], density['mollify_cells']),
        agents=tuple(agents),
        snapshot_times=output['snapshot_times'],
    )


def load_scenario(source: Union[str, Path]) -> Scenario:
    """
    Load a scenario from a TOML file path or from TOML text.

    Args:
        source: a Path, a string naming a .toml file, or TOML text

    Returns:
        validated Scenario
    """
    is_path = isinstance(source, Path) or ('\n' not in source and source.strip().endswith('.toml'))
    if is_path:
        path = Path(source)
        try:
            text = path.read_text()
        except OSError as e:
            raise ScenarioError(f"cannot read scenario {path}: {e.strerror or e}")
        default_name = path.stem
    else:
        text = source
        default_name = 'scenario'

    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ScenarioError(f"invalid TOML: {e}")
    scenario = scenario_from_dict(data, default_name)
    logger.info(f"Loaded scenario {scenario.name}: k={scenario.k}, grid {scenario.nx}x{scenario.ny}")
    return scenario


def _kernel_table(kernel: RadialKernel) -> dict:
    return {
        'sign': kernel.sign,
        'decay_length': kernel.decay_length,
        'form': kernel.form,
        'epsilon': kernel.epsilon,
        'strength': kernel.strength,
    }


def _strategy_table(spec: StrategySpec) -> dict:
    table = {'variant': spec.variant}
    if spec.variant == GREEDY:
        table['gradient'] = spec.gradient
        if spec.denom_tol is not None:
            table['denom_tol'] = spec.denom_tol
    elif spec.variant == CONSTANT:
        table['control'] = list(spec.control)
    elif spec.variant == SCRIPTED:
        table['times'] = list(spec.times)
        table['controls'] = [list(u) for u in spec.controls]
    elif spec.variant == BRUTE_FORCE:
        table['n_directions'] = spec.n_directions
        table['solver'] = spec.solver
    return table


def scenario_to_dict(scenario: Scenario) -> dict:
    x0, x1, y0, y1 = scenario.domain
    agents = []
    for agent in scenario.agents:
        entry = {
            'position': list(agent.position),
            'kernel': _kernel_table(agent.kernel),
            'speed_cap': agent.speed_cap,
            'strategy': _strategy_table(agent.strategy),
            'psi_sign': agent.psi_sign,
        }
        if agent.target is not None:
            entry['target'] = list(agent.target)
        agents.append(entry)
    return {
        'name': scenario.name,
        'description': scenario.description,
        'domain': {'x0': x0, 'x1': x1, 'y0': y0, 'y1': y1},
        'grid': {'nx': scenario.nx, 'ny': scenario.ny, 'cfl': scenario.cfl},
        'time': {'T': scenario.T, 'dt_strategy': scenario.dt_strategy},
        'density': {
            'box': list(scenario.density.box),
            'amplitude': scenario.density.amplitude,
            'mollify_cells': scenario.density.mollify_cells,
        },
        'agents': agents,
        'output': {'snapshot_times': list(scenario.snapshot_times)},
    }


def dump_scenario(scenario: Scenario) -> str:
    return tomli_w.dumps(scenario_to_dict(scenario))


def agent_readings(scenario: Scenario) -> List[dict]:
    """Kernel form, sign and greedy gradient reading of every agent, for run summaries."""
    readings = []
    for agent in scenario.agents:
        entry = {
            'kernel': agent.kernel.form,
            'sign': agent.kernel.sign,
            'decay_length': agent.kernel.decay_length,
            'strategy': agent.strategy.variant,
        }
        if agent.strategy.variant == GREEDY:
            entry['gradient'] = agent.strategy.gradient
        readings.append(entry)
    return readings


# --- presets -----------------------------------------------------------------

@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    anchor: str
    build: Callable[[int], Scenario] = field(repr=False)


UNIT_BOX = (0.0, 10.0, 0.0, 10.0)


def _greedy(U: float, reading: str = GRADIENT_DESCENT) -> StrategySpec:
    return StrategySpec(GREEDY, U, gradient=reading)


def _single_agent(n: int, form: str = LINEAR, name: str = 'single-agent',
                  reading: str = GRADIENT_BRACKET_X) -> Scenario:
    return Scenario(
        name=name,
        description=PRESET_INFO[name][0],
        domain=UNIT_BOX, nx=n, ny=n, T=10.0, dt_strategy=0.01,
        density=DensitySpec((6.0, 8.0, 2.0, 8.0), 1.0, 0.0),
        agents=(AgentSeed((3.0, 2.0), RadialKernel(1, 10.0, form), _greedy(1.5, reading), (1.0, 8.0)),),
        cfl=settings.CONSENSUS_CFL,
    )


def _two_attractive(n: int, name: str, first: StrategySpec, second: StrategySpec,
                    second_strength: float = 1.0) -> Scenario:
    return Scenario(
        name=name,
        description=PRESET_INFO[name][0],
        domain=UNIT_BOX, nx=n, ny=n, T=10.0, dt_strategy=0.01,
        density=DensitySpec((7.0, 9.0, 3.0, 7.0), 1.0, 0.0),
        agents=(
            AgentSeed((8.0, 5.0), RadialKernel(1, 5.0, UNIT), first, (1.0, 9.0)),
            AgentSeed((8.0, 5.0), RadialKernel(1, 5.0, UNIT, strength=second_strength), second, (1.0, 1.0)),
        ),
        cfl=settings.CONSENSUS_CFL,
    )


RECTILINEAR = (-0.7, 0.4)


def _six_repulsive(n: int) -> Scenario:
    positions = [(1.0, 2.0), (1.0, 4.0), (1.0, 6.0), (1.0, 8.0), (9.0, 4.0), (9.0, 6.0)]
    return Scenario(
        name='six-repulsive',
        description=PRESET_INFO['six-repulsive'][0],
        domain=UNIT_BOX, nx=n, ny=n, T=5.0, dt_strategy=0.01,
        density=DensitySpec((6.0, 8.0, 3.0, 7.0), 1.0, 0.0),
        agents=tuple(
            AgentSeed(p, RadialKernel(-1, 5.0, UNIT), _greedy(1.0), (5.0, 5.0)) for p in positions
        ),
        cfl=settings.CONSENSUS_CFL,
    )


def _attr_rep(n: int, name: str, outer_psi_sign: int) -> Scenario:
    target = (9.0, 5.0)
    return Scenario(
        name=name,
        description=PRESET_INFO[name][0],
        domain=UNIT_BOX, nx=n, ny=n, T=5.0, dt_strategy=0.01,
        density=DensitySpec((1.0, 2.0, 3.0, 7.0), 1.0, 0.0),
        agents=(
            AgentSeed((1.0, 1.0), RadialKernel(-1, 5.0, UNIT), _greedy(1.0), target, outer_psi_sign),
            AgentSeed((1.0, 5.0), RadialKernel(1, 5.0, UNIT), _greedy(1.0), target, 1),
            AgentSeed((1.0, 9.0), RadialKernel(-1, 5.0, UNIT), _greedy(1.0), target, outer_psi_sign),
        ),
        cfl=settings.CONSENSUS_CFL,
    )


PRESET_INFO: Dict[str, Tuple[str, str]] = {
    'single-agent': (
        'One attractive leader, linear kernel e^{-xi/10}, steers [6,8]x[2,8] towards (1,8); U=3/2, T=10; '
        'greedy reading bracket_x (moves right, then left); measured J 43.2 / 49.2 / 54.6 on 100/200/400 grids, '
        'descent 0 / 0 / 5.5, bracket_p 74.2 / 62.8 / 53.7',
        'reference cost 29.33',
    ),
    'single-agent-unit': (
        'single-agent with the unit-direction kernel (1/xi) e^{-xi/10}; greedy reading descent; '
        'measured J 51.8 / 40.3 / 39.3 on 100/200/400 grids, bracket_p 61.9 / 66.1 / 67.9, '
        'bracket_x 74.1 / 74.9 / 76.3',
        'reference cost 29.33, unit-direction reading',
    ),
    'two-attractive': (
        'Two attractive leaders at (8,5), unit kernel e^{-xi/5}; P1 rectilinear (-7/10, 2/5), P2 greedy descent; '
        'targets (1,9), (1,1); T=10; measured J 54.0 / 61.5 (100 grid), 62.1 / 63.6 (200 grid)',
        'reference costs 36.41 / 32.65',
    ),
    'two-attractive-alone': (
        'two-attractive with P2 switched off (zero strength, zero control); '
        'measured J1 36.1 / 18.7 / 8.0 on 100/200/400 grids',
        'reference cost of P1 alone 11.73',
    ),
    'two-attractive-both-greedy': (
        'two-attractive with both leaders greedy descent; symmetric, players break even; '
        'measured J 64.6 (100 grid), 64.5 (200 grid)',
        'reference costs 33.42 / 33.42',
    ),
    'six-repulsive': (
        'Six repulsive leaders, unit kernel e^{-xi/5}, common target (5,5), crowd [6,8]x[3,7]; k=6, U=1, T=5; '
        'greedy descent; measured common J 9.0 (100 grid), 12.9 (200 grid)',
        'reference common cost 10.54',
    ),
    'attr-rep-coop': (
        'Repulsive P1, P3 and attractive P2, unit kernel e^{-xi/5}, share psi = d(x,(9,5)); k=3, U=1, T=5; '
        'greedy descent; measured common J 28.2 (100 grid), 25.0 (200 grid)',
        'reference common cost 2.04',
    ),
    'attr-rep-steal': (
        'attr-rep-coop with psi1 = psi3 = -d(x,(9,5)); P1 and P3 steal followers from P2; '
        'greedy descent; measured J2 29.5 (100 grid), 31.9 (200 grid)',
        'reference cost of P2 26.68',
    ),
}

# Reference costs per preset, keyed by agent index
REFERENCE_COSTS: Dict[str, Dict[int, float]] = {
    'single-agent': {0: 29.33},
    'single-agent-unit': {0: 29.33},
    'two-attractive': {0: 36.41, 1: 32.65},
    'two-attractive-alone': {0: 11.73},
    'two-attractive-both-greedy': {0: 33.42, 1: 33.42},
    'six-repulsive': {i: 10.54 for i in range(6)},
    'attr-rep-coop': {0: 2.04, 1: 2.04, 2: 2.04},
    'attr-rep-steal': {1: 26.68},
}

PRESETS: Dict[str, Preset] = {}


def _register(name: str, build: Callable[[int], Scenario]):
    description, anchor = PRESET_INFO[name]
    PRESETS[name] = Preset(name, description, anchor, build)


_register('single-agent', lambda n: _single_agent(n))
_register('single-agent-unit', lambda n: _single_agent(n, UNIT, 'single-agent-unit'))
_register('two-attractive', lambda n: _two_attractive(
    n, 'two-attractive', StrategySpec(CONSTANT, 1.5, control=RECTILINEAR), _greedy(1.5)))
_register('two-attractive-alone', lambda n: _two_attractive(
    n, 'two-attractive-alone', StrategySpec(CONSTANT, 1.5, control=RECTILINEAR),
    StrategySpec(CONSTANT, 1.5, control=(0.0, 0.0)), second_strength=0.0))
_register('two-attractive-both-greedy', lambda n: _two_attractive(
    n, 'two-attractive-both-greedy', _greedy(1.5), _greedy(1.5)))
_register('six-repulsive', _six_repulsive)
_register('attr-rep-coop', lambda n: _attr_rep(n, 'attr-rep-coop', 1))
_register('attr-rep-steal', lambda n: _attr_rep(n, 'attr-rep-steal', -1))


def preset_names() -> List[str]:
    return list(PRESETS)


def preset(name: str, n: Optional[int] = None) -> Scenario:
    """Built-in scenario on an n x n grid (default CONSENSUS_DEFAULT_GRID)."""
    if name not in PRESETS:
        raise ScenarioError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return PRESETS[name].build(n or settings.CONSENSUS_DEFAULT_GRID)
