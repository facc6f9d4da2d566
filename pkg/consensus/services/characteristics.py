"""
Exact transport along characteristics.

The density transported by v is rho(t,x) = rho0(X(t0; t, x)) exp(-int_t0^t div_x v),
with X the characteristic through (t, x). Characteristics are integrated with
fixed-step classic RK4; the divergence integral rides along as an extra state
component so it reuses the RK4 stage nodes. The variational equation for the
derivative of the flow with respect to an agent's trial speed lives here too.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from django.conf import settings

from .grid import Grid2D, NumericsError, PointwiseFunction, ScalarField
from .motion import LinearMotion
from .velocity import VelocityModel, divergence, eval_velocity, jacobian_dp, jacobian_dx

logger = logging.getLogger(__name__)

Motion = Callable[[float], np.ndarray]

START = 'start'
END = 'end'


class CharacteristicError(NumericsError):
    """Raised when a characteristic leaves the finite numbers."""
    pass


@dataclass(frozen=True)
class FlowPoint:
    """
    End of a characteristic and the divergence accumulated along it.
    divergence_integral is int_{t_from}^{t_to} div_x v(s, X(s), P(s)) ds (signed).
    """
    position: np.ndarray
    divergence_integral: np.ndarray


def _step_count(span: float, h_ode: float) -> int:
    return max(1, math.ceil(abs(span) / h_ode - 1e-9))


def backtrack(
    model: VelocityModel,
    motion: Motion,
    t_from: float,
    t_to: float,
    x,
    h_ode: Optional[float] = None,
) -> FlowPoint:
    """
    Follow x' = v(x, P(s)) from time t_from to t_to (either direction).

    Args:
        model: velocity model
        motion: agent positions as a function of time
        t_from: time at which the characteristic passes through x
        t_to: time at which the position is wanted
        x: points, shape (..., 2)
        h_ode: RK4 step (defaults to CONSENSUS_ODE_STEP)
    """
    x = np.array(x, dtype=float)
    if t_to == t_from:
        return FlowPoint(x, np.zeros(x.shape[:-1]))
    if h_ode is None:
        h_ode = settings.CONSENSUS_ODE_STEP

    n = _step_count(t_to - t_from, h_ode)
    h = (t_to - t_from) / n
    y = x
    acc = np.zeros(x.shape[:-1])

    for s in range(n):
        t = t_from + s * h
        P1 = motion(t)
        Pm = motion(t + 0.5 * h)
        P4 = motion(t + h)
        k1 = eval_velocity(model, y, P1)
        d1 = divergence(model, y, P1)
        y2 = y + 0.5 * h * k1
        k2 = eval_velocity(model, y2, Pm)
        d2 = divergence(model, y2, Pm)
        y3 = y + 0.5 * h * k2
        k3 = eval_velocity(model, y3, Pm)
        d3 = divergence(model, y3, Pm)
        y4 = y + h * k3
        k4 = eval_velocity(model, y4, P4)
        d4 = divergence(model, y4, P4)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        acc = acc + (h / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4)

    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(acc))):
        raise CharacteristicError("characteristic blow-up")
    return FlowPoint(y, acc)


def exact_density(
    rho_bar: PointwiseFunction,
    model: VelocityModel,
    motion: Motion,
    t: float,
    x,
    t0: float = 0.0,
    h_ode: Optional[float] = None,
) -> np.ndarray:
    """rho(t, x) for initial datum rho_bar given at time t0."""
    x = np.asarray(x, dtype=float)
    flow = backtrack(model, motion, t, t0, x, h_ode)
    origin = flow.position
    # Integrating from t back to t0 yields -int_t0^t div, hence the plus sign
    return np.asarray(rho_bar(origin[..., 0], origin[..., 1]), dtype=float) * np.exp(flow.divergence_integral)


def exact_density_field(
    rho_bar: PointwiseFunction,
    model: VelocityModel,
    motion: Motion,
    grid: Grid2D,
    t: float,
    t0: float = 0.0,
    h_ode: Optional[float] = None,
) -> ScalarField:
    """exact_density sampled at every cell center."""
    X, Y = grid.mesh
    values = exact_density(rho_bar, model, motion, t, np.stack([X, Y], axis=-1), t0, h_ode)
    return ScalarField(grid, values)


@dataclass(frozen=True)
class VariationalTrajectory:
    """Samples of the characteristic and of Y = D_w X at the RK4 nodes."""
    times: np.ndarray
    positions: np.ndarray
    Y: np.ndarray


def variational_dwx(
    model: VelocityModel,
    P_at_t: np.ndarray,
    i: int,
    t: float,
    dt: float,
    w: np.ndarray,
    x,
    anchor: str = START,
    n_steps: int = 20,
) -> VariationalTrajectory:
    """
    Derivative of the frozen-time characteristic with respect to agent i's speed w.

    Agent i moves as P_i(t) + (tau - t) w, every other agent stays at P(t), and
    Y solves Y' = D_x v Y + (tau - t) D_{P_i} v along the characteristic.
    anchor=START: X(t) = x, Y(t) = 0, integrated forward to t + dt.
    anchor=END:   X(t + dt) = x, Y(t + dt) = 0, integrated backward to t.
    """
    if anchor not in (START, END):
        raise ValueError(f"unknown anchor {anchor!r}")
    motion = LinearMotion.single_agent(P_at_t, i, np.asarray(w, dtype=float), t0=t)
    t_begin, t_end = (t, t + dt) if anchor == START else (t + dt, t)
    h = (t_end - t_begin) / n_steps

    def rhs(tau, X, Y):
        P = motion(tau)
        vel = eval_velocity(model, X, P)
        dY = jacobian_dx(model, X, P) @ Y + (tau - t) * jacobian_dp(model, X, P, i)
        return vel, dY

    X = np.array(x, dtype=float)
    Y = np.zeros(X.shape[:-1] + (2, 2))
    times = [t_begin]
    positions = [X]
    Ys = [Y]
    for s in range(n_steps):
        tau = t_begin + s * h
        kx1, ky1 = rhs(tau, X, Y)
        kx2, ky2 = rhs(tau + 0.5 * h, X + 0.5 * h * kx1, Y + 0.5 * h * ky1)
        kx3, ky3 = rhs(tau + 0.5 * h, X + 0.5 * h * kx2, Y + 0.5 * h * ky2)
        kx4, ky4 = rhs(tau + h, X + h * kx3, Y + h * ky3)
        X = X + (h / 6.0) * (kx1 + 2.0 * kx2 + 2.0 * kx3 + kx4)
        Y = Y + (h / 6.0) * (ky1 + 2.0 * ky2 + 2.0 * ky3 + ky4)
        times.append(tau + h)
        positions.append(X)
        Ys.append(Y)

    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise CharacteristicError("characteristic blow-up")
    return VariationalTrajectory(np.array(times), np.array(positions), np.array(Ys))


def frozen_flow(
    model: VelocityModel,
    P_at_t: np.ndarray,
    i: int,
    t: float,
    dt: float,
    w: np.ndarray,
    x,
    n_steps: int = 20,
) -> np.ndarray:
    """X_w(t + dt) for X_w(t) = x under the frozen-time local dynamics (RK4, n_steps)."""
    motion = LinearMotion.single_agent(P_at_t, i, np.asarray(w, dtype=float), t0=t)
    return backtrack(model, motion, t, t + dt, x, h_ode=dt / n_steps).position
