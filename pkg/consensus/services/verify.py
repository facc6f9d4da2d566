"""
Verification suite: executable checks of the analytic estimates behind the simulator.

Each check computes both sides of an inequality (or a convergence statistic)
and returns CheckReport objects. Every report can be re-judged with an
inflated left-hand side; a sound check must then fail, which guards the suite
against vacuous passes.

Norm constants are estimated by dense sampling on the set actually visited by
the flow (support inflated by the speed bound, plus the agents' paths).
"""
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from django.conf import settings

from .characteristics import backtrack, exact_density_field, variational_dwx
from .game import run_game
from .grid import BoundingBox, support_bbox
from .motion import FixedMotion, LinearMotion
from .pde import advance_interval
from .scenarios import PRESETS, REFERENCE_COSTS, AgentSeed, DensitySpec, agent_readings, preset
from .strategy import SOLVER_CHARACTERISTICS, local_cost, strategy_integral
from .velocity import (
    VelocityModel, eval_velocity, grad_p_div, grad_x_div, jacobian_dp,
    jacobian_dx, zero_strength,
)

logger = logging.getLogger(__name__)

SUITES = ('support', 'stability', 'gradient', 'convergence')
# Opt-in: plays every preset to its final time
EXTRA_SUITES = ('reproduction',)

# Relative slack absorbing sampling error in the norm estimates
SAMPLING_SLACK = 0.05
SUPPORT_THRESHOLD = 1e-6
VERIFY_RAMP_CELLS = 8

# Convergence fixture: absolute ramp width of the initial box and final time.
# Narrower ramps or longer runs stay pre-asymptotic on 100-400 grids
CONVERGENCE_RAMP = 2.0
CONVERGENCE_TIME = 0.25

# Relative deviation from the reference costs accepted by the reproduction check
REPRODUCTION_TOLERANCE = 0.25


@dataclass
class CheckReport:
    """
    Outcome of one check: passes iff lhs <= rhs * (1 + relative_slack) + absolute_slack
    and every extra condition holds.
    """
    check: str
    lhs: float
    rhs: float
    relative_slack: float = 0.0
    absolute_slack: float = 0.0
    params: Dict = field(default_factory=dict)
    resolutions: List[int] = field(default_factory=list)
    orders: List[float] = field(default_factory=list)
    conditions: Dict[str, bool] = field(default_factory=dict)
    self_test_failed: Optional[bool] = None

    @property
    def bound(self) -> float:
        return self.rhs * (1.0 + self.relative_slack) + self.absolute_slack

    @property
    def passed(self) -> bool:
        return bool(self.lhs <= self.bound and all(self.conditions.values()))

    def with_inflated_lhs(self) -> 'CheckReport':
        """Copy whose lhs is pushed past twice the acceptance bound."""
        inflated = max(2.0 * self.lhs, 2.0 * self.bound)
        if inflated == 0.0:
            inflated = 1.0
        return replace(self, lhs=inflated, self_test_failed=None)

    def run_self_test(self) -> bool:
        self.self_test_failed = not self.with_inflated_lhs().passed
        return self.self_test_failed

    def to_dict(self) -> dict:
        return {
            'check': self.check,
            'lhs': self.lhs,
            'rhs': self.rhs,
            'pass': self.passed,
            'params': self.params,
            'resolutions': self.resolutions,
            'orders': self.orders,
            'conditions': self.conditions,
            'self_test_failed': self.self_test_failed,
        }


# --- shared fixtures -----------------------------------------------------------

def verification_setup(n: int = 200, ramp_cells: float = VERIFY_RAMP_CELLS):
    """Single-agent experiment with a mollified initial density, on an n x n grid."""
    scenario = preset('single-agent', n)
    density = DensitySpec(scenario.density.box, scenario.density.amplitude, ramp_cells)
    return replace(scenario, density=density)


def _sample_box(box: BoundingBox, n: int = 101) -> np.ndarray:
    xs = np.linspace(box.x0, box.x1, n)
    ys = np.linspace(box.y0, box.y1, n)
    X, Y = np.meshgrid(xs, ys)
    return np.stack([X.ravel(), Y.ravel()], axis=-1)


def _path_box(box: BoundingBox, paths: Sequence[np.ndarray]) -> BoundingBox:
    points = np.concatenate([np.asarray(p).reshape(-1, 2) for p in paths])
    return BoundingBox(
        min(box.x0, float(points[:, 0].min())), max(box.x1, float(points[:, 0].max())),
        min(box.y0, float(points[:, 1].min())), max(box.y1, float(points[:, 1].max())),
    )


def _operator_norm(matrices: np.ndarray) -> np.ndarray:
    return np.linalg.norm(matrices, ord=2, axis=(-2, -1))


def sample_norms(
    model: VelocityModel,
    motions: Sequence[Callable[[float], np.ndarray]],
    t0: float,
    t1: float,
    box: BoundingBox,
    agent: Optional[int] = None,
    n_points: int = 101,
    n_times: int = 11,
) -> Dict[str, float]:
    """
    Sup norms of v, D_x v, D_P v, grad_x div_x v and D_P div_x v over box x [t0, t1].

    With agent given, the P-derivatives are taken with respect to that agent
    only; otherwise with respect to the full position vector.
    """
    points = _sample_box(box, n_points)
    agents = range(model.k) if agent is None else [agent]
    norms = dict.fromkeys(('v', 'dxv', 'dpv', 'grad_div', 'dp_div'), 0.0)
    for motion in motions:
        for s in np.linspace(t0, t1, n_times):
            P = motion(s)
            dpv = np.concatenate([jacobian_dp(model, points, P, i) for i in agents], axis=-1)
            dp_div = np.concatenate([grad_p_div(model, points, P, i) for i in agents], axis=-1)
            norms['v'] = max(norms['v'], float(np.max(np.linalg.norm(eval_velocity(model, points, P), axis=-1))))
            norms['dxv'] = max(norms['dxv'], float(np.max(_operator_norm(jacobian_dx(model, points, P)))))
            norms['dpv'] = max(norms['dpv'], float(np.max(_operator_norm(dpv))))
            norms['grad_div'] = max(norms['grad_div'], float(np.max(np.linalg.norm(grad_x_div(model, points, P), axis=-1))))
            norms['dp_div'] = max(norms['dp_div'], float(np.max(np.linalg.norm(dp_div, axis=-1))))
    return norms


def _finish(reports: List[CheckReport]) -> List[CheckReport]:
    for report in reports:
        report.run_self_test()
        verdict = 'PASS' if report.passed else 'FAIL'
        logger.info(f"{report.check}: {verdict} (lhs={report.lhs:.4e}, rhs={report.rhs:.4e})")
    return reports


# --- support ------------------------------------------------------------------

def check_support_bound(
    n: int = 200,
    t: float = 1.0,
    model: Optional[VelocityModel] = None,
    positions: Optional[np.ndarray] = None,
    velocities: Optional[np.ndarray] = None,
) -> CheckReport:
    """
    Transport the mollified single-agent density for time t and compare the
    outward growth of its support box with |V| t exp(|D_x V| t), V sampled on
    [0,t] x spt rho_bar and D_x V on the visited set; one cell diagonal of slack.
    """
    scenario = verification_setup(n)
    grid = scenario.grid()
    model = model or scenario.model()
    P0 = scenario.initial_positions() if positions is None else np.asarray(positions, dtype=float)
    W = np.zeros_like(P0) if velocities is None else np.asarray(velocities, dtype=float)
    motion = LinearMotion(P0, W)

    rho0 = scenario.initial_density()
    box0 = support_bbox(rho0, SUPPORT_THRESHOLD * rho0.max_abs())
    rho_t = advance_interval(rho0, model, motion, 0.0, t, scenario.cfl)
    peak = rho_t.max_abs()
    box_t = support_bbox(rho_t, SUPPORT_THRESHOLD * peak) if peak > 0 else None
    growth = 0.0 if box_t is None else box0.outward_growth(box_t)

    on_support = sample_norms(model, [motion], 0.0, t, box0)
    visited = _path_box(box0.inflate(model.speed_bound() * t), [motion(0.0), motion(t)])
    on_visited = sample_norms(model, [motion], 0.0, t, visited)
    rhs = on_support['v'] * t * math.exp(on_visited['dxv'] * t)

    return CheckReport(
        check='support_bound',
        lhs=growth,
        rhs=rhs,
        absolute_slack=grid.cell_diagonal,
        params={
            't': t, 'threshold': SUPPORT_THRESHOLD, 'initial_box': box0.to_list(),
            'final_box': None if box_t is None else box_t.to_list(),
            'v_sup_on_support': on_support['v'], 'dxv_sup': on_visited['dxv'],
            'sampling_box': visited.to_list(),
        },
        resolutions=[n],
    )


# --- stability estimates ---------------------------------------------------------

def check_stability_estimates(
    u1=(-1.0, 0.5),
    u2=(-0.9, 0.5),
    n: int = 100,
    t: float = 1.0,
    local_dt: float = 0.05,
) -> List[CheckReport]:
    """
    Continuous dependence on the agents' controls, three ways:

    characteristic_stability: |X1(t;0,x) - X2(t;0,x)| <= C t e^{Ct} |P1 - P2|_C0
    density_stability:        |rho1(t) - rho2(t)|_L1 against the global-in-time estimate
    local_stability:          |rho_w1 - rho_w2|_L1 after local_dt against the local estimate,
                              with w1 = u1 and w2 = u2 as trial speeds at t = 0
    C is the max of the sampled sup norms (constants independent of the initial datum).
    """
    scenario = verification_setup(n)
    grid = scenario.grid()
    model = scenario.model()
    P0 = scenario.initial_positions()
    u1 = np.asarray(u1, dtype=float).reshape(P0.shape)
    u2 = np.asarray(u2, dtype=float).reshape(P0.shape)
    motion1 = LinearMotion(P0, u1)
    motion2 = LinearMotion(P0, u2)
    gap = float(np.max(np.linalg.norm(u1 - u2, axis=-1))) * t

    rho_bar = scenario.density.function(grid)
    rho0 = scenario.initial_density()
    box0 = support_bbox(rho0, 0.0)
    grad_x, grad_y = scenario.density.gradient(grid)
    grad_sup = float(np.max(np.hypot(grad_x, grad_y)))
    mass = rho0.l1_norm()

    visited = _path_box(box0.inflate(model.speed_bound() * t), [motion1(0.0), motion1(t), motion2(t)])
    norms = sample_norms(model, [motion1, motion2], 0.0, t, visited)
    C = max(norms['v'], norms['dxv'], norms['dpv'], norms['grad_div'])
    growth = C * t * math.exp(C * t)

    # Characteristics started inside the support
    mask = rho0.values > 0
    X, Y = grid.mesh
    starts = np.stack([X[mask], Y[mask]], axis=-1)[::7]
    end1 = backtrack(model, motion1, 0.0, t, starts).position
    end2 = backtrack(model, motion2, 0.0, t, starts).position
    char_lhs = float(np.max(np.linalg.norm(end1 - end2, axis=-1)))
    characteristic = CheckReport(
        check='characteristic_stability',
        lhs=char_lhs,
        rhs=growth * gap,
        relative_slack=SAMPLING_SLACK,
        params={'t': t, 'C': C, 'control_gap': gap, 'norms': norms, 'sampling_box': visited.to_list(),
                'u1': u1.tolist(), 'u2': u2.tolist()},
        resolutions=[n],
    )

    rho1 = exact_density_field(rho_bar, model, motion1, grid, t)
    rho2 = exact_density_field(rho_bar, model, motion2, grid, t)
    density_rhs = (C * (grad_sup * box0.neighbourhood_area(growth) + mass * (1.0 + C * t))
                   * t * math.exp(2.0 * C * t) * gap)
    density = CheckReport(
        check='density_stability',
        lhs=rho1.l1_distance(rho2),
        rhs=density_rhs,
        relative_slack=SAMPLING_SLACK,
        params={'t': t, 'C': C, 'control_gap': gap, 'grad_sup': grad_sup, 'mass': mass},
        resolutions=[n],
    )

    # Local problem: only agent 0 moves, over [0, local_dt]
    w1, w2 = u1[0], u2[0]
    U = float(max(np.linalg.norm(w1), np.linalg.norm(w2)))
    local_motions = [LinearMotion.single_agent(P0, 0, w) for w in (w1, w2)]
    local_box = _path_box(box0.inflate(model.speed_bound() * local_dt),
                          [P0, P0 + local_dt * U, P0 - local_dt * U])
    local_norms = sample_norms(model, local_motions, 0.0, local_dt, local_box, agent=0)
    C_local = max(local_norms['v'], local_norms['dxv'], 0.5 * local_norms['dpv'], local_norms['dp_div'])
    local1 = exact_density_field(rho_bar, model, local_motions[0], grid, local_dt, h_ode=local_dt / 20)
    local2 = exact_density_field(rho_bar, model, local_motions[1], grid, local_dt, h_ode=local_dt / 20)
    radius = C_local * math.exp(C_local * local_dt) * local_dt
    local_rhs = ((grad_sup * box0.neighbourhood_area(radius) + (1.0 + C_local * local_dt) * mass)
                 * C_local * math.exp(2.0 * C_local * local_dt) * local_dt ** 2
                 * float(np.linalg.norm(w1 - w2)))
    local = CheckReport(
        check='local_stability',
        lhs=local1.l1_distance(local2),
        rhs=local_rhs,
        relative_slack=SAMPLING_SLACK,
        params={'dt': local_dt, 'C': C_local, 'w1': w1.tolist(), 'w2': w2.tolist(),
                'norms': local_norms, 'sampling_box': local_box.to_list()},
        resolutions=[n],
    )
    return [characteristic, density, local]


# --- gradient expansion -----------------------------------------------------------

def _fd_gradient(cost: Callable[[np.ndarray], float], w: np.ndarray, step: float) -> np.ndarray:
    grad = np.zeros(2)
    for j in range(2):
        e = np.zeros(2)
        e[j] = step
        grad[j] = (cost(w + e) - cost(w - e)) / (2.0 * step)
    return grad


def check_gradient_expansion(
    n: int = 200,
    w=(0.0, 0.0),
    ladder: Sequence[float] = (1e-2, 5e-3, 2.5e-3),
    tolerance: float = 0.05,
    scenario=None,
) -> CheckReport:
    """
    Central finite differences of the local cost in w against the leading term
    (dt^2/2) g for every dt of the ladder. Passes when the deviation at the
    smallest dt is within tolerance, the remainder decays faster than dt^2 and
    the FD gradient at |w| = U/2 matches the one at w = 0 within the same budget.
    """
    scenario = scenario or verification_setup(n)
    grid = scenario.grid()
    model = scenario.model()
    P = scenario.initial_positions()
    seed: AgentSeed = scenario.agents[0]
    U = seed.speed_cap
    psi = seed.psi()
    rho = scenario.initial_density()
    rho_bar = scenario.density.function(grid)
    gradient = scenario.density.gradient(grid)
    w = np.asarray(w, dtype=float)
    w_far = w + np.array([0.5 * U, 0.0])
    step = 1e-4 * U

    g = strategy_integral(rho, P, 0, model, psi, gradient=gradient)
    deviations, remainders, w_gaps, leads = [], [], [], []
    for dt in ladder:
        def cost(trial):
            return local_cost(rho, P, 0, model, psi, trial, dt, 0.0, SOLVER_CHARACTERISTICS, rho_bar)

        lead = 0.5 * dt ** 2 * g
        fd = _fd_gradient(cost, w, step)
        fd_far = _fd_gradient(cost, w_far, step)
        scale = float(np.linalg.norm(lead))
        remainder = float(np.linalg.norm(fd - lead))
        deviations.append(remainder / scale if scale > 0 else 0.0)
        remainders.append(remainder)
        w_gaps.append(float(np.linalg.norm(fd - fd_far)) / scale if scale > 0 else 0.0)
        leads.append(lead.tolist())
        logger.debug(f"gradient expansion dt={dt}: fd={fd}, lead={lead}, deviation={deviations[-1]:.3e}")

    positive = [r for r in remainders if r > 0]
    if len(positive) == len(remainders) and len(remainders) > 1:
        fitted = float(np.polyfit(np.log(ladder), np.log(remainders), 1)[0])
        orders = [math.log2(a / b) for a, b in zip(remainders, remainders[1:])]
    else:
        # Exact agreement (e.g. empty crowd): nothing left to fit
        fitted, orders = math.inf, []

    return CheckReport(
        check='gradient_expansion',
        lhs=deviations[-1],
        rhs=tolerance,
        params={'ladder': list(ladder), 'w': w.tolist(), 'w_far': w_far.tolist(), 'fd_step': step,
                'deviations': deviations, 'remainders': remainders, 'w_gaps': w_gaps,
                'leading_terms': leads, 'fitted_order': fitted, 'g': g.tolist()},
        resolutions=[scenario.nx],
        orders=orders,
        conditions={'remainder_order_above_2': fitted > 2.0,
                    'leading_term_w_independent': w_gaps[-1] <= tolerance},
    )


def check_variational_taylor(
    n: int = 100,
    ladder: Sequence[float] = (1e-2, 5e-3, 2.5e-3),
    tolerance: float = 0.02,
    w=(0.5, -0.5),
) -> CheckReport:
    """Y(t+dt) / dt^2 against D_P v(t, x, P(t)) / 2 at points of the initial support."""
    scenario = verification_setup(n)
    model = scenario.model()
    P = scenario.initial_positions()
    rho0 = scenario.initial_density()
    box = support_bbox(rho0, 0.0)
    points = _sample_box(box, 5)
    target = 0.5 * jacobian_dp(model, points, P, 0)
    scale = float(np.max(_operator_norm(target)))

    errors = []
    for dt in ladder:
        Y_end = variational_dwx(model, P, 0, 0.0, dt, np.asarray(w, dtype=float), points).Y[-1]
        errors.append(float(np.max(_operator_norm(Y_end / dt ** 2 - target))) / scale)
    orders = [math.log2(a / b) for a, b in zip(errors, errors[1:]) if a > 0 and b > 0]

    return CheckReport(
        check='variational_taylor',
        lhs=errors[-1],
        rhs=tolerance,
        params={'ladder': list(ladder), 'errors': errors, 'w': list(w), 'points': int(len(points))},
        resolutions=[n],
        orders=orders,
    )


# --- convergence ----------------------------------------------------------------

def _convergence_fixture(n: int, ramp: float, strength: float):
    scenario = verification_setup(n)
    grid = scenario.grid()
    density = DensitySpec(scenario.density.box, 1.0, ramp / min(grid.dx, grid.dy))
    model = scenario.model()
    if strength == 0.0:
        model = zero_strength(model, range(model.k))
    P = np.array([[3.0, 5.0]])
    return scenario, grid, density, model, FixedMotion(P)


def fv_error(
    n: int, t: float, ramp: float = CONVERGENCE_RAMP, strength: float = 1.0, cfl: Optional[float] = None,
) -> float:
    """L1 distance between the finite-volume solution and exact_density at time t."""
    scenario, grid, density, model, motion = _convergence_fixture(n, ramp, strength)
    rho0 = density.sample(grid)
    fv = advance_interval(rho0, model, motion, 0.0, t, cfl or scenario.cfl)
    exact = exact_density_field(density.function(grid), model, motion, grid, t)
    return fv.l1_distance(exact)


def check_convergence(
    resolutions: Sequence[int] = (100, 200, 400),
    t: float = CONVERGENCE_TIME,
    ramp: float = CONVERGENCE_RAMP,
    strength: float = 1.0,
    order_range=(0.7, 1.3),
) -> CheckReport:
    """
    Observed L1 order of the finite-volume scheme against the characteristics
    solution for a fixed attractive agent. Also checks that halving only the
    time step at the coarsest grid does not beat its spatial error floor.
    """
    errors = [fv_error(n, t, ramp, strength) for n in resolutions]
    if max(errors) == 0.0:
        orders = []
    else:
        orders = [math.log2(a / b) if b > 0 else math.inf for a, b in zip(errors, errors[1:])]
    low, high = order_range
    worst = max((abs(order - 1.0) for order in orders), default=0.0)

    base_cfl = settings.CONSENSUS_CFL
    dt_only = [errors[0], fv_error(resolutions[0], t, ramp, strength, 0.5 * base_cfl)]
    return CheckReport(
        check='fv_convergence',
        lhs=worst,
        rhs=max(1.0 - low, high - 1.0),
        params={'t': t, 'ramp_width': ramp, 'errors': errors, 'dt_only_errors': dt_only},
        resolutions=list(resolutions),
        orders=orders,
        conditions={'dt_only_refinement_no_gain': dt_only[1] >= 0.5 * dt_only[0]},
    )


# --- reproduction -------------------------------------------------------------

def check_preset_reproduction(
    name: str,
    n: int = 100,
    tolerance: float = REPRODUCTION_TOLERANCE,
    threads: Optional[int] = 1,
) -> CheckReport:
    """
    Play a preset on an n x n grid and compare its costs with the reference
    ones: lhs is the largest relative deviation over the agents with a
    reference cost. For two-attractive the reference ordering J2 < J1 is an
    extra condition.
    """
    scenario = preset(name, n)
    references = REFERENCE_COSTS[name]
    trace = run_game(scenario, threads=threads)
    costs = [float(c) for c in trace.final_costs]
    deviations = {i: abs(costs[i] - ref) / abs(ref) for i, ref in references.items()}

    conditions = {}
    if name == 'two-attractive':
        conditions['second_below_first'] = costs[1] < costs[0]
    return CheckReport(
        check=f"reproduction_{name}",
        lhs=max(deviations.values()),
        rhs=tolerance,
        params={'preset': name, 'costs': costs,
                'reference': {f"J_{i + 1}": ref for i, ref in references.items()},
                'deviations': {f"J_{i + 1}": d for i, d in deviations.items()},
                'final_mass': float(trace.masses[-1]), 'agents': agent_readings(scenario)},
        resolutions=[n],
        conditions=conditions,
    )


# --- suite ----------------------------------------------------------------------

def _suite_jobs(name: str) -> List[Callable[[], List[CheckReport]]]:
    if name == 'support':
        return [lambda: [check_support_bound(200)], lambda: [check_support_bound(400)]]
    if name == 'stability':
        return [lambda: check_stability_estimates()]
    if name == 'gradient':
        return [lambda: [check_gradient_expansion()], lambda: [check_variational_taylor()]]
    if name == 'convergence':
        return [lambda: [check_convergence()]]
    if name == 'reproduction':
        return [lambda name=preset_name: [check_preset_reproduction(name)] for preset_name in PRESETS]
    raise ValueError(f"unknown suite {name!r}")


def run_suite(names: Sequence[str], threads: Optional[int] = None) -> List[CheckReport]:
    """Run the named suites; reports come back in a fixed order whatever the worker count."""
    jobs = [job for name in names for job in _suite_jobs(name)]
    workers = max(1, min(len(jobs), threads or settings.CONSENSUS_THREADS))
    if workers == 1:
        results = [job() for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(lambda job: job(), jobs))
    return _finish([report for batch in results for report in batch])


def suite_passed(reports: Sequence[CheckReport]) -> bool:
    return all(report.passed and report.self_test_failed is not False for report in reports)


def write_report(reports: Sequence[CheckReport], out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / 'verify_report.json'
    path.write_text(json.dumps([report.to_dict() for report in reports], indent=2, default=float) + '\n')
    return path
