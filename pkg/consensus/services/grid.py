"""
Cell-centered rectangular grid and the fields living on it.
Provides the discrete calculus used by the strategy (gradient, weighted
integral), support tracking, and the CSV/PGM field formats.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator

logger = logging.getLogger(__name__)

# Vectorised pointwise function: (X, Y) arrays -> array of the same shape
PointwiseFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


class NumericsError(Exception):
    """Base class for every numerical failure of the simulator."""
    pass


class FieldError(NumericsError):
    """Raised when a grid or a field violates its invariants."""
    pass


@dataclass(frozen=True)
class Grid2D:
    """
    Rectangular cell-centered grid with nx x ny cells.
    Cell (i, j) has its center at (x0 + (i+0.5)dx, y0 + (j+0.5)dy).
    Arrays on the grid are stored row-major with shape (ny, nx).
    """
    x0: float
    y0: float
    nx: int
    ny: int
    dx: float
    dy: float

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise FieldError(f"grid needs at least 2x2 cells, got {self.nx}x{self.ny}")
        if not (self.dx > 0 and self.dy > 0):
            raise FieldError(f"cell widths must be positive, got dx={self.dx} dy={self.dy}")

    @classmethod
    def from_domain(cls, x0: float, x1: float, y0: float, y1: float, nx: int, ny: int) -> 'Grid2D':
        """Grid covering [x0,x1]x[y0,y1] with nx x ny cells."""
        return cls(x0=x0, y0=y0, nx=nx, ny=ny, dx=(x1 - x0) / nx, dy=(y1 - y0) / ny)

    @property
    def x1(self) -> float:
        return self.x0 + self.nx * self.dx

    @property
    def y1(self) -> float:
        return self.y0 + self.ny * self.dy

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def cell_diagonal(self) -> float:
        return float(np.hypot(self.dx, self.dy))

    def cell_center(self, i: int, j: int) -> Tuple[float, float]:
        return (self.x0 + (i + 0.5) * self.dx, self.y0 + (j + 0.5) * self.dy)

    @cached_property
    def xc(self) -> np.ndarray:
        return self.x0 + (np.arange(self.nx) + 0.5) * self.dx

    @cached_property
    def yc(self) -> np.ndarray:
        return self.y0 + (np.arange(self.ny) + 0.5) * self.dy

    @cached_property
    def x_faces(self) -> np.ndarray:
        return self.x0 + np.arange(self.nx + 1) * self.dx

    @cached_property
    def y_faces(self) -> np.ndarray:
        return self.y0 + np.arange(self.ny + 1) * self.dy

    @cached_property
    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinates X, Y, each of shape (ny, nx)."""
        return np.meshgrid(self.xc, self.yc)

    def sample(self, function: PointwiseFunction) -> 'ScalarField':
        """Field of a pointwise function evaluated at the cell centers."""
        X, Y = self.mesh
        return ScalarField(self, np.asarray(function(X, Y), dtype=float))

    def zeros(self) -> 'ScalarField':
        return ScalarField(self, np.zeros(self.shape))


@dataclass(frozen=True)
class ScalarField:
    """Immutable snapshot of one real value per cell."""
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise FieldError(f"field shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise FieldError("field values not finite")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    def with_values(self, values: np.ndarray) -> 'ScalarField':
        return ScalarField(self.grid, values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def total_mass(self) -> float:
        """Midpoint-rule integral of the field (row sums, then ordered row reduction)."""
        return float(np.sum(np.sum(self.values, axis=1))) * self.grid.cell_area

    def l1_norm(self) -> float:
        return float(np.sum(np.sum(np.abs(self.values), axis=1))) * self.grid.cell_area

    def l1_distance(self, other: 'ScalarField') -> float:
        if other.grid != self.grid:
            raise FieldError("fields live on different grids")
        return float(np.sum(np.sum(np.abs(self.values - other.values), axis=1))) * self.grid.cell_area


@dataclass(frozen=True)
class VectorField2:
    """Two components per cell; gx along x, gy along y."""
    grid: Grid2D
    gx: np.ndarray
    gy: np.ndarray

    def __post_init__(self):
        for name in ('gx', 'gy'):
            component = np.array(getattr(self, name), dtype=float)
            if component.shape != self.grid.shape:
                raise FieldError(f"component {name} has shape {component.shape}, expected {self.grid.shape}")
            if not np.all(np.isfinite(component)):
                raise FieldError("vector field components not finite")
            component.setflags(write=False)
            object.__setattr__(self, name, component)

    def max_norm(self) -> float:
        return float(np.max(np.hypot(self.gx, self.gy)))


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box [x0,x1]x[y0,y1]."""
    x0: float
    x1: float
    y0: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, other: 'BoundingBox', slack: float = 0.0) -> bool:
        return (other.x0 >= self.x0 - slack and other.x1 <= self.x1 + slack
                and other.y0 >= self.y0 - slack and other.y1 <= self.y1 + slack)

    def inflate(self, radius: float) -> 'BoundingBox':
        return BoundingBox(self.x0 - radius, self.x1 + radius, self.y0 - radius, self.y1 + radius)

    def outward_growth(self, later: 'BoundingBox') -> float:
        """Largest distance by which `later` sticks out of this box along an axis."""
        return max(0.0, self.x0 - later.x0, later.x1 - self.x1, self.y0 - later.y0, later.y1 - self.y1)

    def neighbourhood_area(self, radius: float) -> float:
        """Lebesgue measure of the closed radius-neighbourhood of the box."""
        return self.area + 2.0 * (self.width + self.height) * radius + np.pi * radius ** 2

    def to_list(self) -> list:
        return [self.x0, self.x1, self.y0, self.y1]


def integrate_weighted(f: ScalarField, weight: PointwiseFunction) -> float:
    """
    Midpoint rule for the integral of f times a pointwise weight.

    Args:
        f: field to integrate
        weight: vectorised function of the cell-center coordinates

    Returns:
        sum over cells of f * weight(center) * dx * dy
    """
    X, Y = f.grid.mesh
    w = np.broadcast_to(np.asarray(weight(X, Y), dtype=float), f.grid.shape)
    if not np.all(np.isfinite(w)):
        raise FieldError("weight not finite")
    row_sums = np.sum(f.values * w, axis=1)
    return float(np.sum(row_sums)) * f.grid.cell_area


def gradient_field(f: ScalarField) -> VectorField2:
    """Central differences inside, first-order one-sided differences on boundary cells."""
    d_dy, d_dx = np.gradient(f.values, f.grid.dy, f.grid.dx, edge_order=1)
    return VectorField2(f.grid, d_dx, d_dy)


def default_threshold(f: ScalarField) -> float:
    return 1e-12 * f.max_abs()


def support_bbox(f: ScalarField, threshold: Optional[float] = None) -> Optional[BoundingBox]:
    """
    Smallest box containing every cell center where |f| > threshold.
    Returns None when no cell qualifies.
    """
    if threshold is None:
        threshold = default_threshold(f)
    if threshold < 0:
        raise FieldError(f"threshold must be non-negative, got {threshold}")
    mask = np.abs(f.values) > threshold
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        return None
    grid = f.grid
    return BoundingBox(
        float(grid.xc[cols[0]]), float(grid.xc[cols[-1]]),
        float(grid.yc[rows[0]]), float(grid.yc[rows[-1]]),
    )


def field_interpolant(f: ScalarField) -> PointwiseFunction:
    """Bilinear pointwise evaluation of a grid field; zero outside the cell-center hull."""
    interpolator = RegularGridInterpolator(
        (f.grid.yc, f.grid.xc), f.values, method='linear', bounds_error=False, fill_value=0.0,
    )

    def evaluate(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        points = np.stack([Y.ravel(), X.ravel()], axis=-1)
        return interpolator(points).reshape(X.shape)

    return evaluate


# --- field file formats -------------------------------------------------------

def _header(grid: Grid2D) -> str:
    return (f"nx={grid.nx} ny={grid.ny} x0={grid.x0!r} y0={grid.y0!r} "
            f"dx={grid.dx!r} dy={grid.dy!r}")


def write_field_csv(f: ScalarField, path: Union[str, Path]) -> Path:
    """Header line, then row j of the field on line j (full precision)."""
    path = Path(path)
    with open(path, 'w', newline='\n') as fh:
        np.savetxt(fh, f.values, delimiter=',', fmt='%.17g', header=_header(f.grid), comments='# ')
    return path


def read_field_csv(path: Union[str, Path]) -> ScalarField:
    path = Path(path)
    with open(path) as fh:
        header = fh.readline()
    if not header.startswith('#'):
        raise FieldError(f"{path}: missing grid header")
    meta = dict(item.split('=', 1) for item in header[1:].split())
    try:
        grid = Grid2D(
            x0=float(meta['x0']), y0=float(meta['y0']),
            nx=int(meta['nx']), ny=int(meta['ny']),
            dx=float(meta['dx']), dy=float(meta['dy']),
        )
    except (KeyError, ValueError) as e:
        raise FieldError(f"{path}: malformed grid header: {e}")
    values = np.loadtxt(path, delimiter=',', comments='#', ndmin=2)
    return ScalarField(grid, values)


def write_field_pgm(f: ScalarField, path: Union[str, Path]) -> Path:
    """Plain P2 image, |f| scaled linearly to 0..255 by max|f|; top image row = largest y."""
    path = Path(path)
    peak = f.max_abs()
    if peak > 0:
        pixels = np.rint(255.0 * np.abs(f.values) / peak).astype(int)
    else:
        pixels = np.zeros(f.grid.shape, dtype=int)
    lines = ['P2', f"{f.grid.nx} {f.grid.ny}", '255']
    lines.extend(' '.join(str(p) for p in row) for row in pixels[::-1])
    path.write_text('\n'.join(lines) + '\n')
    return path
