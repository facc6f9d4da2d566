"""
Finite-volume transport of the crowd density.

Integrates d_t rho + div_x(rho v) = 0 with Lax-Friedrichs fluxes and
dimensional splitting (alternating XY / YX sweeps), CFL-controlled substeps
and outflow boundaries: zero-order extrapolated ghosts, with the outer faces
only letting mass leave.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Tuple

import numpy as np
from django.conf import settings

from .grid import Grid2D, NumericsError, ScalarField
from .velocity import VelocityModel

logger = logging.getLogger(__name__)

AXIS_X = 'x'
AXIS_Y = 'y'

# Relative round-off allowed below zero before positivity counts as lost
POSITIVITY_TOLERANCE = 1e-14


class CFLViolation(NumericsError):
    """Raised when a sweep would exceed Courant number 1 on some face."""
    pass


class PositivityError(NumericsError):
    """Raised when a substep produces a negative density."""
    pass


@dataclass
class TransportStats:
    """Diagnostics accumulated over advance_interval calls."""
    substeps: int = 0
    max_courant: float = 0.0


def cfl_dt(grid: Grid2D, vmax: float, cfl: Optional[float] = None) -> float:
    """
    Largest stable step cfl * min(dx, dy) / vmax.
    With vmax == 0 nothing moves and the configured maximum step is returned.
    """
    if cfl is None:
        cfl = settings.CONSENSUS_CFL
    if not 0 < cfl <= 1:
        raise CFLViolation(f"cfl must lie in (0, 1], got {cfl}")
    if vmax < 0:
        raise CFLViolation(f"vmax must be non-negative, got {vmax}")
    if vmax == 0:
        return settings.CONSENSUS_MAX_STEP
    return cfl * min(grid.dx, grid.dy) / vmax


@lru_cache(maxsize=16)
def face_coordinates(grid: Grid2D) -> Tuple[Tuple[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]:
    """Coordinates of x-normal faces (ny, nx+1) and y-normal faces (ny+1, nx)."""
    x_faces = np.meshgrid(grid.x_faces, grid.yc)
    y_faces = np.meshgrid(grid.xc, grid.y_faces)
    return tuple(x_faces), tuple(y_faces)


def courant_number(grid: Grid2D, axis: str, face_u: np.ndarray, dt: float) -> float:
    h = grid.dx if axis == AXIS_X else grid.dy
    return float(np.max(np.abs(face_u))) * dt / h


def lxf_sweep(f: ScalarField, axis: str, face_u: np.ndarray, dt: float) -> ScalarField:
    """
    One conservative Lax-Friedrichs update along `axis`.

    Args:
        f: density before the sweep
        axis: AXIS_X (face_u shaped (ny, nx+1)) or AXIS_Y (face_u shaped (ny+1, nx))
        face_u: normal velocity sampled at the faces of the sweep axis
        dt: time step

    Returns:
        rho_c - dt/h (F_{c+1/2} - F_{c-1/2}) with
        F_{c+1/2} = u (rho_c + rho_{c+1}) / 2 - h / (2 dt) (rho_{c+1} - rho_c)
    """
    grid = f.grid
    if axis == AXIS_X:
        h, rho, u = grid.dx, f.values, np.asarray(face_u, dtype=float)
        expected = (grid.ny, grid.nx + 1)
    elif axis == AXIS_Y:
        h, rho, u = grid.dy, f.values.T, np.asarray(face_u, dtype=float).T
        expected = (grid.nx, grid.ny + 1)
    else:
        raise ValueError(f"unknown sweep axis {axis!r}")
    if u.shape != expected:
        raise CFLViolation(f"face velocity shape {u.shape} does not match sweep axis {axis}")

    if float(np.max(np.abs(u))) * dt / h > 1.0:
        raise CFLViolation("CFL violated")

    # Outflow ghosts: zero-order extrapolation
    padded = np.concatenate([rho[:, :1], rho, rho[:, -1:]], axis=1)
    left = padded[:, :-1]
    right = padded[:, 1:]
    flux = 0.5 * u * (left + right) - (h / (2.0 * dt)) * (right - left)
    # Outer faces only let mass leave
    flux[:, 0] = np.minimum(flux[:, 0], 0.0)
    flux[:, -1] = np.maximum(flux[:, -1], 0.0)
    updated = rho - (dt / h) * (flux[:, 1:] - flux[:, :-1])

    if axis == AXIS_Y:
        updated = updated.T
    return ScalarField(grid, updated)


def _check_positivity(f: ScalarField):
    peak = f.max_abs()
    lowest = float(np.min(f.values))
    if lowest < -POSITIVITY_TOLERANCE * max(peak, 1.0):
        raise PositivityError(f"density became negative ({lowest:.3e})")


def advance_interval(
    f: ScalarField,
    model: VelocityModel,
    motion: Callable[[float], np.ndarray],
    t: float,
    dt: float,
    cfl: Optional[float] = None,
    stats: Optional[TransportStats] = None,
) -> ScalarField:
    """
    Advance the density over [t, t + dt] while the agents follow `motion`.

    The interval is split into equal CFL-compliant substeps; substep s applies
    X then Y sweeps when s is even, Y then X when odd. Face velocities use the
    agents' positions at the substep midpoint.
    """
    if not dt > 0:
        raise NumericsError(f"interval length must be positive, got {dt}")
    if model.is_inert:
        return f

    grid = f.grid
    step = cfl_dt(grid, model.speed_bound(), cfl)
    n_sub = max(1, math.ceil(dt / step - 1e-9))
    h = dt / n_sub
    (xfX, xfY), (yfX, yfY) = face_coordinates(grid)

    current = f
    for s in range(n_sub):
        P = motion(t + (s + 0.5) * h)
        ux, _ = model.velocity_xy(xfX, xfY, P)
        _, uy = model.velocity_xy(yfX, yfY, P)
        sweeps = ((AXIS_X, ux), (AXIS_Y, uy)) if s % 2 == 0 else ((AXIS_Y, uy), (AXIS_X, ux))
        for axis, u in sweeps:
            try:
                current = lxf_sweep(current, axis, u, h)
            except CFLViolation as e:
                # Unreachable while every substep respects cfl <= 1
                raise CFLViolation(f"{e} at t={t + s * h:.6g} ({axis} sweep)") from e
            _check_positivity(current)
        if stats is not None:
            stats.substeps += 1
            stats.max_courant = max(
                stats.max_courant,
                courant_number(grid, AXIS_X, ux, h),
                courant_number(grid, AXIS_Y, uy, h),
            )

    logger.debug(f"advanced [{t:.4f}, {t + dt:.4f}] in {n_sub} substeps of {h:.3e}")
    return current
