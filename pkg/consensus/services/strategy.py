"""
Control synthesis for one agent at one strategy epoch.

Every rule here is non-anticipative: it sees the density snapshot rho(t) and
the current positions P(t), never anything later. Variants are greedy
(normalised leading-order gradient of the local cost), constant, scripted
(piecewise constant table) and brute force (direct minimisation of the local
cost over a circle of trial speeds, used as an oracle).
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .characteristics import exact_density
from .grid import (
    NumericsError, PointwiseFunction, ScalarField, field_interpolant,
    gradient_field, integrate_weighted,
)
from .motion import LinearMotion
from .pde import advance_interval
from .velocity import VelocityModel, grad_p_div, jacobian_dp

logger = logging.getLogger(__name__)

GREEDY = 'greedy'
CONSTANT = 'constant'
SCRIPTED = 'scripted'
BRUTE_FORCE = 'brute_force'
VARIANTS = (GREEDY, CONSTANT, SCRIPTED, BRUTE_FORCE)

SOLVER_FV = 'fv'
SOLVER_CHARACTERISTICS = 'characteristics'

# Readings of the greedy integrand, see strategy_integral
GRADIENT_DESCENT = 'descent'
GRADIENT_BRACKET_P = 'bracket_p'
GRADIENT_BRACKET_X = 'bracket_x'
GRADIENT_READINGS = (GRADIENT_DESCENT, GRADIENT_BRACKET_P, GRADIENT_BRACKET_X)

# Relative slack on the speed cap for user-supplied controls
SPEED_CAP_SLACK = 1e-12


class StrategyError(NumericsError):
    """Raised when a strategy is misconfigured or its integrand breaks down."""
    pass


@dataclass(frozen=True)
class StrategySpec:
    """
    Rule producing an agent's control, with speed cap U.

    greedy:      denom_tol (None -> 1e-12 * (1 + |rho|_L1)) and gradient reading
    constant:    control
    scripted:    times (increasing, first entry 0) and controls; the control
                 of the last time <= t applies
    brute_force: n_directions (>= 4)
    """
    variant: str
    speed_cap: float
    denom_tol: Optional[float] = None
    control: Tuple[float, float] = (0.0, 0.0)
    times: Tuple[float, ...] = ()
    controls: Tuple[Tuple[float, float], ...] = ()
    n_directions: int = 64
    solver: str = field(default=SOLVER_FV)
    gradient: str = GRADIENT_DESCENT

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise StrategyError(f"unknown strategy variant {self.variant!r}")
        if not self.speed_cap >= 0:
            raise StrategyError(f"speed cap must be non-negative, got {self.speed_cap}")
        object.__setattr__(self, 'control', tuple(float(c) for c in self.control))
        object.__setattr__(self, 'times', tuple(float(t) for t in self.times))
        object.__setattr__(self, 'controls', tuple(tuple(float(c) for c in u) for u in self.controls))

        limit = self.speed_cap * (1.0 + SPEED_CAP_SLACK)
        if self.variant == CONSTANT and math.hypot(*self.control) > limit:
            raise StrategyError(f"constant control {self.control} exceeds speed cap {self.speed_cap}")
        if self.variant == SCRIPTED:
            if not self.times or len(self.times) != len(self.controls):
                raise StrategyError("scripted strategy needs matching, non-empty times and controls")
            if any(b <= a for a, b in zip(self.times, self.times[1:])):
                raise StrategyError("scripted times must be strictly increasing")
            for u in self.controls:
                if len(u) != 2 or math.hypot(*u) > limit:
                    raise StrategyError(f"scripted control {u} exceeds speed cap {self.speed_cap}")
        if self.variant == BRUTE_FORCE and self.n_directions < 4:
            raise StrategyError(f"brute force needs at least 4 directions, got {self.n_directions}")
        if self.denom_tol is not None and self.denom_tol < 0:
            raise StrategyError(f"denom_tol must be non-negative, got {self.denom_tol}")
        if self.solver not in (SOLVER_FV, SOLVER_CHARACTERISTICS):
            raise StrategyError(f"unknown local-cost solver {self.solver!r}")
        if self.gradient not in GRADIENT_READINGS:
            raise StrategyError(f"unknown gradient reading {self.gradient!r}")

    @property
    def is_non_anticipative(self) -> bool:
        return self.variant in (GREEDY, BRUTE_FORCE)

    def scripted_control(self, t: float) -> np.ndarray:
        j = int(np.searchsorted(np.asarray(self.times), t + 1e-12, side='right')) - 1
        return np.array(self.controls[max(j, 0)], dtype=float)


def default_denom_tol(rho_t: ScalarField) -> float:
    return 1e-12 * (1.0 + rho_t.l1_norm())


def strategy_integral(
    rho_t: ScalarField,
    P: np.ndarray,
    i: int,
    model: VelocityModel,
    psi: PointwiseFunction,
    gradient: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    reading: str = GRADIENT_DESCENT,
) -> np.ndarray:
    """
    Greedy integrand of agent i, integrated by the midpoint rule.

    With A = int grad rho . D_{P_i} v psi dx and B = int rho grad_{P_i} div_x v psi dx:

        descent:   g = -(A + B); (dt^2 / 2) g is the leading term of the
                   gradient of the local cost in w
        bracket_p: g = A - B
        bracket_x: g = B - A, the bracket A - B with the x-derivatives of the
                   agent's own term (D_x = -D_{P_i} for a radial kernel)

    Args:
        rho_t: density snapshot
        P: current agent positions (k, 2)
        i: agent index
        model: velocity model
        psi: agent's cost weight
        gradient: (d_dx, d_dy) arrays on the grid; defaults to gradient_field(rho_t)
        reading: one of GRADIENT_READINGS

    Returns:
        2-vector g
    """
    if reading not in GRADIENT_READINGS:
        raise StrategyError(f"unknown gradient reading {reading!r}")
    grid = rho_t.grid
    if gradient is None:
        grad = gradient_field(rho_t)
        gx, gy = grad.gx, grad.gy
    else:
        gx, gy = (np.asarray(c, dtype=float) for c in gradient)

    rho = rho_t.values
    # Only cells where rho or its gradient is nonzero contribute
    mask = (rho != 0.0) | (gx != 0.0) | (gy != 0.0)
    if not mask.any():
        return np.zeros(2)

    X, Y = grid.mesh
    points = np.stack([X[mask], Y[mask]], axis=-1)
    weight = np.asarray(psi(points[:, 0], points[:, 1]), dtype=float)
    D = jacobian_dp(model, points, P, i)
    G = grad_p_div(model, points, P, i)
    grad_rho = np.stack([gx[mask], gy[mask]], axis=-1)

    transport = np.einsum('nk,nkj->nj', grad_rho, D) * weight[:, None]
    compression = rho[mask][:, None] * G * weight[:, None]
    if not (np.all(np.isfinite(transport)) and np.all(np.isfinite(compression))):
        raise StrategyError("strategy integrand not finite")
    A = np.sum(transport, axis=0) * grid.cell_area
    B = np.sum(compression, axis=0) * grid.cell_area
    if reading == GRADIENT_BRACKET_P:
        return A - B
    if reading == GRADIENT_BRACKET_X:
        return B - A
    return -(A + B)


def greedy_direction(
    rho_t: ScalarField,
    P: np.ndarray,
    i: int,
    model: VelocityModel,
    psi: PointwiseFunction,
    U: float,
    denom_tol: Optional[float] = None,
    gradient: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    reading: str = GRADIENT_DESCENT,
) -> np.ndarray:
    """-U g / |g| for the chosen reading of g, or zero when |g| <= denom_tol."""
    if denom_tol is None:
        denom_tol = default_denom_tol(rho_t)
    g = strategy_integral(rho_t, P, i, model, psi, gradient, reading)
    norm = float(np.hypot(g[0], g[1]))
    if norm <= denom_tol:
        return np.zeros(2)
    return -U * g / norm


def local_cost(
    rho_t: ScalarField,
    P: np.ndarray,
    i: int,
    model: VelocityModel,
    psi: PointwiseFunction,
    w,
    dt: float,
    t: float = 0.0,
    solver: str = SOLVER_FV,
    density_fn: Optional[PointwiseFunction] = None,
) -> float:
    """
    Cost of the frozen-time local problem: agent i moves at speed w over
    [t, t + dt], every other agent stays put, then rho is weighed by psi.

    solver='fv' transports the grid snapshot with the finite-volume scheme;
    solver='characteristics' evaluates the transported density at every cell
    center by backward characteristics from density_fn (defaults to the
    bilinear interpolant of rho_t).
    """
    if not dt > 0:
        raise StrategyError(f"local-cost interval must be positive, got {dt}")
    motion = LinearMotion.single_agent(P, i, np.asarray(w, dtype=float), t0=t)

    if solver == SOLVER_FV:
        rho_next = advance_interval(rho_t, model, motion, t, dt)
    elif solver == SOLVER_CHARACTERISTICS:
        if density_fn is None:
            density_fn = field_interpolant(rho_t)
        X, Y = rho_t.grid.mesh
        values = exact_density(
            density_fn, model, motion, t + dt, np.stack([X, Y], axis=-1), t0=t, h_ode=dt / 20,
        )
        rho_next = ScalarField(rho_t.grid, values)
    else:
        raise StrategyError(f"unknown local-cost solver {solver!r}")
    return integrate_weighted(rho_next, psi)


def trial_speeds(U: float, n_directions: int) -> np.ndarray:
    """w = 0 first, then U (cos, sin) of 2 pi k / n for k = 0 .. n-1."""
    angles = 2.0 * np.pi * np.arange(n_directions) / n_directions
    circle = U * np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    return np.vstack([np.zeros((1, 2)), circle])


def brute_force_direction(
    rho_t: ScalarField,
    P: np.ndarray,
    i: int,
    model: VelocityModel,
    psi: PointwiseFunction,
    U: float,
    dt: float,
    n_directions: int = 64,
    t: float = 0.0,
    solver: str = SOLVER_FV,
    density_fn: Optional[PointwiseFunction] = None,
) -> np.ndarray:
    """Argmin of local_cost over w = 0 and n_directions points of the radius-U circle; first minimum wins."""
    if n_directions < 4:
        raise StrategyError(f"brute force needs at least 4 directions, got {n_directions}")
    candidates = trial_speeds(U, n_directions)
    best_index, best_cost = 0, math.inf
    for index, w in enumerate(candidates):
        cost = local_cost(rho_t, P, i, model, psi, w, dt, t, solver, density_fn)
        if cost < best_cost:
            best_index, best_cost = index, cost
    logger.debug(f"brute force agent {i}: candidate {best_index} cost {best_cost:.6g}")
    return candidates[best_index].copy()


def choose_control(
    spec: StrategySpec,
    rho_t: ScalarField,
    P: np.ndarray,
    i: int,
    model: VelocityModel,
    psi: PointwiseFunction,
    t: float,
    dt: float,
) -> np.ndarray:
    """Control of agent i for the epoch starting at t."""
    if spec.variant == GREEDY:
        return greedy_direction(
            rho_t, P, i, model, psi, spec.speed_cap, spec.denom_tol, reading=spec.gradient,
        )
    if spec.variant == CONSTANT:
        return np.array(spec.control, dtype=float)
    if spec.variant == SCRIPTED:
        return spec.scripted_control(t)
    return brute_force_direction(
        rho_t, P, i, model, psi, spec.speed_cap, dt, spec.n_directions, t, spec.solver,
    )
