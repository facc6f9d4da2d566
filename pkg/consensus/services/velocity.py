"""
Interaction velocity of the crowd: v(x, P) = sum_i a_i(|x - P_i|) (P_i - x).

Every derivative the strategy and the verification suite need is computed in
closed form here; tests certify each one against central finite differences.
Points are arrays of shape (..., 2); agent positions P have shape (k, 2).
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .grid import NumericsError

logger = logging.getLogger(__name__)

UNIT = 'unit'
LINEAR = 'linear'
KERNEL_FORMS = (UNIT, LINEAR)


class VelocityError(NumericsError):
    """Raised when the velocity or one of its derivatives cannot be evaluated."""
    pass


@dataclass(frozen=True)
class RadialKernel:
    """
    Radial profile a(xi) of one agent.

    unit:   a(xi) = s * exp(-xi/L) / sqrt(xi^2 + eps^2)   (unit-speed direction field)
    linear: a(xi) = s * exp(-xi/L)
    with s = sign * strength. sign is +1 (attractive) or -1 (repulsive).
    """
    sign: int = 1
    decay_length: float = 5.0
    form: str = UNIT
    epsilon: Optional[float] = None
    strength: float = 1.0

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise VelocityError(f"kernel sign must be +1 or -1, got {self.sign}")
        if not self.decay_length > 0:
            raise VelocityError(f"decay length must be positive, got {self.decay_length}")
        if self.form not in KERNEL_FORMS:
            raise VelocityError(f"unknown kernel form {self.form!r}")
        if self.strength < 0:
            raise VelocityError(f"kernel strength must be non-negative, got {self.strength}")
        if self.epsilon is None:
            default = 1e-3 * self.decay_length if self.form == UNIT else 0.0
            object.__setattr__(self, 'epsilon', default)
        if self.epsilon < 0:
            raise VelocityError(f"regularization must be non-negative, got {self.epsilon}")

    @property
    def coefficient(self) -> float:
        return self.sign * self.strength

    def speed_bound(self) -> float:
        """Upper bound of a(xi) * xi over xi >= 0."""
        if self.form == LINEAR:
            return self.strength * self.decay_length / math.e
        return self.strength

    def profile(self, xi: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """a, a' and a'' evaluated at the distances xi."""
        L = self.decay_length
        if self.form == LINEAR:
            a = self.coefficient * np.exp(-xi / L)
            return a, -a / L, a / L ** 2
        eps2 = self.epsilon ** 2
        if eps2 == 0.0 and np.any(xi == 0.0):
            raise VelocityError("kernel singular at agent position")
        r2 = xi ** 2 + eps2
        a = self.coefficient * np.exp(-xi / L) / np.sqrt(r2)
        g = -1.0 / L - xi / r2
        dg = -(eps2 - xi ** 2) / r2 ** 2
        return a, a * g, a * (g ** 2 + dg)


@dataclass(frozen=True)
class VelocityModel:
    """One radial kernel per agent; autonomous in time."""
    kernels: Tuple[RadialKernel, ...]

    def __post_init__(self):
        object.__setattr__(self, 'kernels', tuple(self.kernels))
        if not self.kernels:
            raise VelocityError("velocity model needs at least one kernel")

    @property
    def k(self) -> int:
        return len(self.kernels)

    def speed_bound(self) -> float:
        return float(sum(kernel.speed_bound() for kernel in self.kernels))

    @property
    def is_inert(self) -> bool:
        return all(kernel.strength == 0 for kernel in self.kernels)

    def check_positions(self, P: np.ndarray) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        if P.shape != (self.k, 2):
            raise VelocityError(f"expected {self.k} agent positions, got array of shape {P.shape}")
        return P

    def _agent_terms(self, i: int, x: np.ndarray, P: np.ndarray):
        d = P[i] - x
        xi = np.hypot(d[..., 0], d[..., 1])
        a, a1, a2 = self.kernels[i].profile(xi)
        return d, xi, a, a1, a2

    def velocity_xy(self, X: np.ndarray, Y: np.ndarray, P: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Velocity components on coordinate arrays X, Y of any common shape."""
        P = self.check_positions(P)
        VX = np.zeros(np.shape(X))
        VY = np.zeros(np.shape(X))
        for i, kernel in enumerate(self.kernels):
            if kernel.strength == 0:
                continue
            DX = P[i, 0] - X
            DY = P[i, 1] - Y
            a, _, _ = kernel.profile(np.hypot(DX, DY))
            VX += a * DX
            VY += a * DY
        return VX, VY


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise VelocityError(f"points must have a trailing dimension of 2, got shape {x.shape}")
    return x


def _safe_ratio(numerator: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """numerator / xi, set to 0 where xi == 0 (the outer-product terms vanish there)."""
    return np.where(xi > 0, numerator / np.where(xi > 0, xi, 1.0), 0.0)


def eval_velocity(model: VelocityModel, x, P) -> np.ndarray:
    x = _as_points(x)
    VX, VY = model.velocity_xy(x[..., 0], x[..., 1], P)
    return np.stack([VX, VY], axis=-1)


def divergence(model: VelocityModel, x, P) -> np.ndarray:
    """div_x v = sum_i (-2 a_i - a_i' xi_i) in two space dimensions."""
    x = _as_points(x)
    P = model.check_positions(P)
    total = np.zeros(x.shape[:-1])
    for i in range(model.k):
        _, xi, a, a1, _ = model._agent_terms(i, x, P)
        total += -2.0 * a - a1 * xi
    return total


def jacobian_dp(model: VelocityModel, x, P, i: int) -> np.ndarray:
    """D_{P_i} v = a I + (a'/xi) (P_i - x)(P_i - x)^T, shape (..., 2, 2)."""
    x = _as_points(x)
    P = model.check_positions(P)
    d, xi, a, a1, _ = model._agent_terms(i, x, P)
    c = _safe_ratio(a1, xi)
    J = c[..., None, None] * d[..., :, None] * d[..., None, :]
    J[..., 0, 0] += a
    J[..., 1, 1] += a
    return J


def jacobian_dx(model: VelocityModel, x, P) -> np.ndarray:
    """D_x v = -sum_i D_{P_i} v."""
    x = _as_points(x)
    total = np.zeros(x.shape[:-1] + (2, 2))
    for i in range(model.k):
        total -= jacobian_dp(model, x, P, i)
    return total


def grad_p_div(model: VelocityModel, x, P, i: int) -> np.ndarray:
    """grad_{P_i} div_x v = -(3 a' + a'' xi) (P_i - x) / xi; zero at x = P_i."""
    x = _as_points(x)
    P = model.check_positions(P)
    d, xi, _, a1, a2 = model._agent_terms(i, x, P)
    c = _safe_ratio(-(3.0 * a1 + a2 * xi), xi)
    return c[..., None] * d


def grad_x_div(model: VelocityModel, x, P) -> np.ndarray:
    x = _as_points(x)
    total = np.zeros(x.shape)
    for i in range(model.k):
        total -= grad_p_div(model, x, P, i)
    return total


def zero_strength(model: VelocityModel, agents: Sequence[int]) -> VelocityModel:
    """Copy of the model with the given agents switched off."""
    kernels = list(model.kernels)
    for i in agents:
        k = kernels[i]
        kernels[i] = RadialKernel(k.sign, k.decay_length, k.form, k.epsilon, 0.0)
    return VelocityModel(tuple(kernels))
