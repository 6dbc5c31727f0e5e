"""Uniform-grid discretization of compact intervals and discrete measures on them.

Densities are sampled at cell centers and integrated by the midpoint rule,
so every integral in this package is a weighted sum with scalar cell weight
``h`` (or ``h1*h2`` on product grids). The midpoint rule is exact on
piecewise-constant data, which keeps the norm and entropy tests exact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Tuple, Union

import numpy as np

__all__ = [
    "MASS_TOL",
    "Grid1D",
    "GridMeasure",
    "GridFunction",
    "ProductDensity",
    "ProductFunction",
    "AtomicMeasure",
    "total_mass",
    "marginals",
    "product_measure",
    "read_measure_csv",
    "write_measure_csv",
    "read_product_csv",
    "write_product_csv",
]

#: relative tolerance used when a measure claims to be a probability measure
MASS_TOL = 1e-10


def _frozen_array(values, dtype=float, ndim=1) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-dimensional array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid of ``n`` cells on the interval ``[lo, hi]``.

    Cell ``i`` has center ``lo + (i + 1/2) * h`` with ``h = (hi - lo) / n``.
    Integrals against functions sampled at the centers are midpoint sums.
    """

    lo: float
    hi: float
    n: int

    def __post_init__(self) -> None:
        if not np.isfinite(self.lo) or not np.isfinite(self.hi):
            raise ValueError("grid endpoints must be finite")
        if self.hi <= self.lo:
            raise ValueError(f"grid needs hi > lo, got [{self.lo}, {self.hi}]")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"cell count must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        """Cell width, also the quadrature weight."""
        return (self.hi - self.lo) / self.n

    @property
    def length(self) -> float:
        """Lebesgue measure of the underlying interval."""
        return self.hi - self.lo

    @property
    def centers(self) -> np.ndarray:
        return self.lo + (np.arange(self.n) + 0.5) * self.h

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi


def _check_grid_match(grid: Grid1D, values: np.ndarray, what: str) -> None:
    if values.shape[0] != grid.n:
        raise ValueError(
            f"{what} has {values.shape[0]} entries but the grid has {grid.n} cells"
        )
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} contains non-finite entries")


@dataclass(frozen=True, eq=False)
class GridMeasure:
    """Nonnegative density sampled at the cell centers of a :class:`Grid1D`.

    Total mass is ``sum(density) * h``. With ``probability=True`` the
    constructor additionally checks that the mass is 1 within
    :data:`MASS_TOL`; use ``renormalize=True`` to rescale near-probability
    input instead of rejecting it.
    """

    grid: Grid1D
    density: np.ndarray
    probability: bool = False

    def __init__(
        self,
        grid: Grid1D,
        density,
        probability: bool = False,
        renormalize: bool = False,
    ) -> None:
        dens = _frozen_array(density)
        _check_grid_match(grid, dens, "density")
        if np.any(dens < 0):
            raise ValueError("density values must be nonnegative")
        if renormalize:
            mass = float(dens.sum() * grid.h)
            if mass <= 0:
                raise ValueError("cannot renormalize a measure with zero mass")
            dens = _frozen_array(dens / mass)
            probability = True
        if probability:
            mass = float(dens.sum() * grid.h)
            if abs(mass - 1.0) > MASS_TOL * max(1.0, abs(mass)):
                raise ValueError(
                    f"probability measure has mass {mass!r}, off by more than {MASS_TOL}"
                )
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "density", dens)
        object.__setattr__(self, "probability", probability)

    @property
    def mass(self) -> float:
        return float(self.density.sum() * self.grid.h)

    def support_mask(self) -> np.ndarray:
        return self.density > 0.0


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real-valued (possibly signed) function sampled on a :class:`Grid1D`.

    Used where a grid-sampled function is not a measure, e.g. dual
    potentials or inputs to Orlicz norms.
    """

    grid: Grid1D
    values: np.ndarray

    def __init__(self, grid: Grid1D, values) -> None:
        vals = _frozen_array(values)
        _check_grid_match(grid, vals, "values")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", vals)

    def mean(self) -> float:
        """Integral average over the interval."""
        return float(self.values.sum() * self.grid.h / self.grid.length)


@dataclass(frozen=True, eq=False)
class ProductDensity:
    """Nonnegative density on the product of two grids, cell weight ``h1*h2``."""

    grid1: Grid1D
    grid2: Grid1D
    values: np.ndarray

    def __init__(self, grid1: Grid1D, grid2: Grid1D, values) -> None:
        vals = _frozen_array(values, ndim=2)
        if vals.shape != (grid1.n, grid2.n):
            raise ValueError(
                f"values shape {vals.shape} does not match grids ({grid1.n}, {grid2.n})"
            )
        if np.any(vals < 0):
            raise ValueError("product density values must be nonnegative")
        object.__setattr__(self, "grid1", grid1)
        object.__setattr__(self, "grid2", grid2)
        object.__setattr__(self, "values", vals)

    @property
    def weight(self) -> float:
        return self.grid1.h * self.grid2.h

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.weight)


@dataclass(frozen=True, eq=False)
class ProductFunction:
    """Signed function on a product grid, e.g. ``alpha_i + beta_j``."""

    grid1: Grid1D
    grid2: Grid1D
    values: np.ndarray

    def __init__(self, grid1: Grid1D, grid2: Grid1D, values) -> None:
        vals = _frozen_array(values, ndim=2)
        if vals.shape != (grid1.n, grid2.n):
            raise ValueError(
                f"values shape {vals.shape} does not match grids ({grid1.n}, {grid2.n})"
            )
        object.__setattr__(self, "grid1", grid1)
        object.__setattr__(self, "grid2", grid2)
        object.__setattr__(self, "values", vals)

    @property
    def weight(self) -> float:
        return self.grid1.h * self.grid2.h


@dataclass(frozen=True)
class AtomicMeasure:
    """Finite sum of point masses on an interval.

    ``atoms`` is a sequence of ``(location, mass)`` pairs with positive
    masses summing to 1 within :data:`MASS_TOL` and locations inside
    ``[lo, hi]``.
    """

    atoms: Tuple[Tuple[float, float], ...]
    lo: float = 0.0
    hi: float = 1.0

    def __init__(self, atoms: Iterable[Tuple[float, float]], lo: float = 0.0, hi: float = 1.0) -> None:
        pairs = tuple((float(x), float(m)) for x, m in atoms)
        if not pairs:
            raise ValueError("an atomic measure needs at least one atom")
        if hi <= lo:
            raise ValueError(f"domain needs hi > lo, got [{lo}, {hi}]")
        for x, m in pairs:
            if m <= 0:
                raise ValueError(f"atom at {x} has non-positive mass {m}")
            if not (lo <= x <= hi):
                raise ValueError(f"atom location {x} outside the domain [{lo}, {hi}]")
        total = sum(m for _, m in pairs)
        if abs(total - 1.0) > MASS_TOL * max(1.0, abs(total)):
            raise ValueError(f"atom masses sum to {total!r}, expected 1")
        object.__setattr__(self, "atoms", pairs)
        object.__setattr__(self, "lo", float(lo))
        object.__setattr__(self, "hi", float(hi))

    @property
    def locations(self) -> np.ndarray:
        return np.array([x for x, _ in self.atoms])

    @property
    def masses(self) -> np.ndarray:
        return np.array([m for _, m in self.atoms])

    def sorted(self) -> "AtomicMeasure":
        return AtomicMeasure(sorted(self.atoms), self.lo, self.hi)


MeasureLike = Union[GridMeasure, ProductDensity]


def total_mass(m: MeasureLike) -> float:
    """Midpoint-rule total mass of a grid or product measure."""
    return m.mass


def marginals(p: ProductDensity) -> Tuple[GridMeasure, GridMeasure]:
    """Pushforwards of a product density under the two coordinate projections.

    The first marginal integrates out the second factor,
    ``marg1_i = sum_j values_ij * h2``, and symmetrically for the second.
    Both marginals carry the same total mass as ``p``.
    """
    m1 = p.values.sum(axis=1) * p.grid2.h
    m2 = p.values.sum(axis=0) * p.grid1.h
    return GridMeasure(p.grid1, m1), GridMeasure(p.grid2, m2)


def product_measure(m1: GridMeasure, m2: GridMeasure) -> ProductDensity:
    """Outer product density ``values_ij = m1_i * m2_j``."""
    return ProductDensity(m1.grid, m2.grid, np.outer(m1.density, m2.density))


def _grid_from_centers(x: np.ndarray, what: str) -> Grid1D:
    if x.size == 0:
        raise ValueError(f"{what}: no rows")
    if x.size == 1:
        raise ValueError(f"{what}: cannot infer cell width from a single center")
    steps = np.diff(x)
    h = steps[0]
    if h <= 0 or not np.allclose(steps, h, rtol=1e-8, atol=1e-12):
        raise ValueError(f"{what}: cell centers are not uniformly spaced")
    return Grid1D(float(x[0] - h / 2), float(x[-1] + h / 2), x.size)


def write_measure_csv(path, m: GridMeasure) -> None:
    """Write a measure as CSV with header ``x,density``, one row per cell."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "density"])
        for x, d in zip(m.grid.centers, m.density):
            writer.writerow([repr(float(x)), repr(float(d))])


def read_measure_csv(path) -> GridMeasure:
    """Read a ``x,density`` CSV written by :func:`write_measure_csv`.

    The grid is reconstructed from the (uniformly spaced) centers.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:2]] != ["x", "density"]:
            raise ValueError(f"{path}: expected header 'x,density'")
        rows = [(float(r[0]), float(r[1])) for r in reader if r]
    x = np.array([r[0] for r in rows])
    dens = np.array([r[1] for r in rows])
    grid = _grid_from_centers(x, str(path))
    return GridMeasure(grid, dens)


def write_product_csv(path, p: ProductDensity) -> None:
    """Write a product density as CSV with header ``x,y,density``, row-major."""
    xs = p.grid1.centers
    ys = p.grid2.centers
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "density"])
        for i in range(p.grid1.n):
            for j in range(p.grid2.n):
                writer.writerow([repr(float(xs[i])), repr(float(ys[j])), repr(float(p.values[i, j]))])


def read_product_csv(path) -> ProductDensity:
    """Read a row-major ``x,y,density`` CSV written by :func:`write_product_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:3]] != ["x", "y", "density"]:
            raise ValueError(f"{path}: expected header 'x,y,density'")
        rows = [(float(r[0]), float(r[1]), float(r[2])) for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: no rows")
    xs_all = np.array([r[0] for r in rows])
    ys_all = np.array([r[1] for r in rows])
    vals = np.array([r[2] for r in rows])
    ys = np.unique(ys_all)
    n2 = ys.size
    if xs_all.size % n2 != 0:
        raise ValueError(f"{path}: row count {xs_all.size} is not a multiple of {n2} distinct y values")
    n1 = xs_all.size // n2
    xs = xs_all[::n2]
    if not np.allclose(np.tile(ys, n1), ys_all, rtol=1e-12, atol=0) or not np.allclose(
        np.repeat(xs, n2), xs_all, rtol=1e-12, atol=0
    ):
        raise ValueError(f"{path}: rows are not in row-major x,y order")
    grid1 = _grid_from_centers(xs, str(path))
    grid2 = _grid_from_centers(ys, str(path))
    return ProductDensity(grid1, grid2, vals.reshape(n1, n2))
