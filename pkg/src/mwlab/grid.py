"""Dyadic geometry on the unit cube ``[0, 1)^d``.

Every object lives on a finest partition of ``2^{dL}`` equal cells.  Coarser
dyadic cubes, cubes of shifted grids and arbitrary measurable sets are all
represented as sets of finest-cell indices, so every integral is an exact
finite sum.  Shifted cubes wrap around the torus.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ParameterError

MAX_DIM = 2
MAX_LEVEL = 12


@dataclass(frozen=True)
class GridSpec:
    """Finest dyadic partition of ``[0,1)^d`` with an optional lattice shift.

    ``shift`` is measured in units of the finest side ``2^{-L}``.
    """

    d: int
    L: int
    shift: tuple[int, ...] = None

    def __post_init__(self):
        if not 1 <= self.d <= MAX_DIM:
            raise ParameterError(f"dimension d={self.d} outside 1..{MAX_DIM}")
        if not 0 <= self.L <= MAX_LEVEL:
            raise ParameterError(f"level L={self.L} outside 0..{MAX_LEVEL}")
        shift = (0,) * self.d if self.shift is None else tuple(int(s) for s in self.shift)
        if len(shift) != self.d:
            raise ParameterError(f"shift {shift} has wrong length for d={self.d}")
        if any(not 0 <= s < self.side_cells for s in shift):
            raise ParameterError(f"shift {shift} outside [0, 2^L)")
        object.__setattr__(self, "shift", shift)

    @property
    def side_cells(self) -> int:
        return 1 << self.L

    @property
    def n_cells(self) -> int:
        return 1 << (self.d * self.L)

    @property
    def cell_measure(self) -> float:
        return 2.0 ** (-self.d * self.L)

    @property
    def h(self) -> float:
        """Side length of a finest cell."""
        return 2.0 ** (-self.L)

    @property
    def standard(self) -> GridSpec:
        return GridSpec(self.d, self.L)

    def cell_coords(self) -> np.ndarray:
        """Integer lattice coordinates of every cell, shape ``(N, d)``."""
        axes = [np.arange(self.side_cells)] * self.d
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def cell_centers(self) -> np.ndarray:
        return (self.cell_coords() + 0.5) * self.h

    def flat_index(self, coords) -> np.ndarray:
        coords = np.asarray(coords) % self.side_cells
        return np.ravel_multi_index(tuple(coords.T), (self.side_cells,) * self.d)


@dataclass(frozen=True)
class Cube:
    """Dyadic cube of a given level; ``anchor`` indexes it on its own level."""

    grid: GridSpec
    level: int
    anchor: tuple[int, ...]

    def __post_init__(self):
        if not 0 <= self.level <= self.grid.L:
            raise ParameterError(f"cube level {self.level} outside 0..{self.grid.L}")
        anchor = tuple(int(a) for a in self.anchor)
        if len(anchor) != self.grid.d or any(not 0 <= a < (1 << self.level) for a in anchor):
            raise ParameterError(f"anchor {anchor} invalid at level {self.level}")
        object.__setattr__(self, "anchor", anchor)

    @property
    def side(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def measure(self) -> float:
        return 2.0 ** (-self.grid.d * self.level)

    @property
    def n_cells(self) -> int:
        return 1 << (self.grid.d * (self.grid.L - self.level))

    @property
    def cells(self) -> np.ndarray:
        return _cube_cells(self.grid, self.level, self.anchor)

    def parent(self) -> Cube | None:
        if self.level == 0:
            return None
        return Cube(self.grid, self.level - 1, tuple(a >> 1 for a in self.anchor))

    def children(self) -> list[Cube]:
        if self.level == self.grid.L:
            return []
        return [
            Cube(self.grid, self.level + 1, tuple(2 * a + o for a, o in zip(self.anchor, offs)))
            for offs in itertools.product((0, 1), repeat=self.grid.d)
        ]

    def contains(self, other: Cube) -> bool:
        if other.grid != self.grid or other.level < self.level:
            return False
        shift = other.level - self.level
        return all((b >> shift) == a for a, b in zip(self.anchor, other.anchor))

    def label(self) -> str:
        return f"L{self.level}@{','.join(map(str, self.anchor))}"


@lru_cache(maxsize=None)
def _cube_cells(grid: GridSpec, level: int, anchor: tuple[int, ...]) -> np.ndarray:
    width = 1 << (grid.L - level)
    axes = [
        (a * width + s + np.arange(width)) % grid.side_cells
        for a, s in zip(anchor, grid.shift)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=1)
    cells = np.sort(grid.flat_index(coords))
    cells.setflags(write=False)
    return cells


@dataclass(frozen=True, eq=False)
class CubeSet:
    """Arbitrary union of finest cells of a grid (the sets E, E_M, E_P)."""

    grid: GridSpec
    members: np.ndarray = field(repr=False)

    def __post_init__(self):
        members = np.unique(np.asarray(self.members, dtype=np.int64))
        if members.size and (members[0] < 0 or members[-1] >= self.grid.n_cells):
            raise ParameterError("cell index outside the grid")
        members.setflags(write=False)
        object.__setattr__(self, "members", members)

    @classmethod
    def whole(cls, grid: GridSpec) -> CubeSet:
        return cls(grid, np.arange(grid.n_cells))

    @property
    def size(self) -> int:
        return int(self.members.size)

    @property
    def measure(self) -> float:
        return self.size * self.grid.cell_measure

    def __len__(self):
        return self.size

    def __eq__(self, other):
        return (
            isinstance(other, CubeSet)
            and other.grid.standard == self.grid.standard
            and np.array_equal(other.members, self.members)
        )

    def __or__(self, other: CubeSet) -> CubeSet:
        return CubeSet(self.grid, np.union1d(self.members, other.members))

    def __and__(self, other: CubeSet) -> CubeSet:
        return CubeSet(self.grid, np.intersect1d(self.members, other.members))

    def __sub__(self, other: CubeSet) -> CubeSet:
        return CubeSet(self.grid, np.setdiff1d(self.members, other.members))

    def issubset(self, other: CubeSet) -> bool:
        return bool(np.isin(self.members, other.members).all())


def enumerate_cubes(grid: GridSpec, max_level: int | None = None) -> list[Cube]:
    """All dyadic cubes of levels ``0..max_level``, coarse to fine."""
    if max_level is None:
        max_level = grid.L
    if not 0 <= max_level <= grid.L:
        raise ParameterError(f"max_level={max_level} outside 0..{grid.L}")
    cubes = []
    for level in range(max_level + 1):
        for anchor in itertools.product(range(1 << level), repeat=grid.d):
            cubes.append(Cube(grid, level, anchor))
    return cubes


def shifted_grids(d: int, L: int) -> list[GridSpec]:
    """The ``2^d`` grids with shifts ``t in {0, 1/3}^d`` rounded to the lattice."""
    third = round(2**L / 3) % (1 << L)
    return [
        GridSpec(d, L, tuple(third if t else 0 for t in ts))
        for ts in itertools.product((0, 1), repeat=d)
    ]


def cells_of(cube: Cube) -> CubeSet:
    return CubeSet(cube.grid.standard, cube.cells)


def as_cells(region, grid: GridSpec) -> np.ndarray:
    """Cell indices of a Cube, CubeSet or index array."""
    if isinstance(region, Cube):
        return region.cells
    if isinstance(region, CubeSet):
        return region.members
    if region is None:
        return np.arange(grid.n_cells)
    return np.asarray(region, dtype=np.int64)
