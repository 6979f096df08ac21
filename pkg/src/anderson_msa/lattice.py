"""Rectangular lattices, discrete disorder and the Anderson Hamiltonian.

The Hamiltonian on a box of Z^d with free boundary is

    H = diag(2 d gamma + v_x) - gamma * J,

where J is the nearest-neighbour adjacency matrix and the on-site potential
``v_x`` takes one of ``N`` equally spaced values in [0, 1]. The diagonal shift
``2 d gamma`` is applied at every site, boundary sites included.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import numerics


@dataclass(frozen=True)
class LatticeGeometry:
    """A box ``[0, side_1) x ... x [0, side_d)`` in Z^d with l1 distance.

    Sites are numbered in C (row-major) order, so ``index`` and ``coord`` are
    inverse bijections.
    """

    sides: tuple[int, ...]

    @property
    def d(self) -> int:
        return len(self.sides)

    @property
    def size(self) -> int:
        return int(np.prod(self.sides))

    @property
    def diam(self) -> int:
        return int(sum(s - 1 for s in self.sides))

    @cached_property
    def coords(self) -> np.ndarray:
        """Integer coordinates, shape ``(size, d)``."""
        grids = np.indices(self.sides).reshape(self.d, -1).T
        return np.ascontiguousarray(grids, dtype=np.int64)

    def index(self, coord: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(int(c) for c in coord), self.sides))

    def coord(self, index: int) -> tuple[int, ...]:
        return tuple(int(c) for c in np.unravel_index(int(index), self.sides))

    def distance(self, x: int, y: int) -> int:
        return int(np.abs(self.coords[x] - self.coords[y]).sum())

    def distances_from(self, sites: Iterable[int]) -> np.ndarray:
        """l1 distance from every lattice site to the nearest member of ``sites``."""
        sites = np.fromiter(sites, dtype=np.int64)
        if sites.size == 0:
            return np.full(self.size, np.iinfo(np.int64).max)
        best = np.full(self.size, np.iinfo(np.int64).max)
        # chunk to keep memory flat on the larger boxes
        for start in range(0, sites.size, 256):
            chunk = self.coords[sites[start:start + 256]]
            dist = np.abs(self.coords[:, None, :] - chunk[None, :, :]).sum(-1).min(1)
            np.minimum(best, dist, out=best)
        return best

    def neighbourhood(self, sites: Iterable[int], radius: float) -> tuple[int, ...]:
        """Sites within l1 distance ``radius`` of ``sites`` (includes ``sites``)."""
        dist = self.distances_from(sites)
        return tuple(int(i) for i in np.flatnonzero(dist <= radius))

    def exterior_boundary(self, sites: Iterable[int]) -> tuple[int, ...]:
        """Sites outside ``sites`` at distance exactly one from it."""
        dist = self.distances_from(sites)
        return tuple(int(i) for i in np.flatnonzero(dist == 1))

    def set_diameter(self, sites: Iterable[int]) -> int:
        sites = np.fromiter(sites, dtype=np.int64)
        if sites.size <= 1:
            return 0
        c = self.coords[sites]
        # l1 diameter of a finite set: max over sign patterns of the spread
        # of the projected coordinates
        best = 0
        for signs in np.ndindex(*(2,) * self.d):
            s = 1 - 2 * np.asarray(signs)
            proj = c @ s
            best = max(best, int(proj.max() - proj.min()))
        return best

    def set_distance(self, a: Iterable[int], b: Iterable[int]) -> int:
        b = list(b)
        if not b:
            return np.iinfo(np.int64).max
        dist = self.distances_from(a)
        return int(dist[np.asarray(b, dtype=np.int64)].min())

    @cached_property
    def edges(self) -> np.ndarray:
        """Nearest-neighbour pairs ``(i, j)`` with ``i < j``, shape ``(m, 2)``."""
        idx = np.arange(self.size).reshape(self.sides)
        pairs = []
        for axis in range(self.d):
            lo = np.take(idx, range(0, self.sides[axis] - 1), axis=axis).ravel()
            hi = np.take(idx, range(1, self.sides[axis]), axis=axis).ravel()
            pairs.append(np.stack([lo, hi], axis=1))
        if not pairs:
            return np.zeros((0, 2), dtype=np.int64)
        e = np.concatenate(pairs)
        return e[np.lexsort((e[:, 1], e[:, 0]))]

    def adjacency(self) -> np.ndarray:
        J = np.zeros((self.size, self.size))
        e = self.edges
        J[e[:, 0], e[:, 1]] = 1.0
        J[e[:, 1], e[:, 0]] = 1.0
        return J

    def to_dict(self) -> dict:
        return {"d": self.d, "sides": list(self.sides)}


def build_geometry(d: int, sides: Sequence[int]) -> LatticeGeometry:
    """Box lattice with the given per-axis extents.

    >>> build_geometry(2, [4, 4]).diam
    6
    """
    if int(d) < 1:
        raise ValueError(f"dimension must be positive, got {d}")
    sides = tuple(int(s) for s in sides)
    if len(sides) != int(d):
        raise ValueError(f"expected {d} sides, got {len(sides)}")
    if any(s < 1 for s in sides):
        raise ValueError(f"sides must be positive, got {sides}")
    return LatticeGeometry(sides)


@dataclass(frozen=True, eq=False)
class DisorderRealization:
    """Integer potential levels; the potential is ``levels / (N - 1)``."""

    N: int
    levels: np.ndarray
    seed: int | None = None

    @property
    def values(self) -> np.ndarray:
        return self.levels / (self.N - 1)

    def value(self, site: int, mp: bool = False):
        if mp:
            return numerics.to_mp(int(self.levels[site])) / (self.N - 1)
        return float(self.levels[site]) / (self.N - 1)

    def with_level(self, site: int, level: int) -> "DisorderRealization":
        levels = self.levels.copy()
        levels[site] = int(level)
        return DisorderRealization(self.N, levels, self.seed)

    def __eq__(self, other) -> bool:
        return (isinstance(other, DisorderRealization) and self.N == other.N
                and np.array_equal(self.levels, other.levels))

    def __hash__(self) -> int:
        return hash((self.N, self.levels.tobytes()))


def sample_disorder(geometry: LatticeGeometry, N: int, seed: int) -> DisorderRealization:
    """Draw iid uniform levels in ``{0, ..., N-1}`` with a PCG64 stream."""
    if int(N) < 2:
        raise ValueError(f"need at least two potential levels, got N={N}")
    rng = np.random.default_rng(int(seed))
    levels = rng.integers(0, int(N), size=geometry.size, dtype=np.int64)
    return DisorderRealization(int(N), levels, int(seed))


def disorder_from_levels(N: int, levels: Sequence[int]) -> DisorderRealization:
    levels = np.asarray(levels, dtype=np.int64)
    if int(N) < 2:
        raise ValueError(f"need at least two potential levels, got N={N}")
    if levels.size and (levels.min() < 0 or levels.max() >= N):
        raise ValueError("levels must lie in 0..N-1")
    return DisorderRealization(int(N), levels.copy(), None)


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    geometry: LatticeGeometry
    gamma: float
    disorder: DisorderRealization
    matrix: np.ndarray = field(repr=False)
    precision: int | None = None

    @property
    def size(self) -> int:
        return self.geometry.size

    @property
    def is_mp(self) -> bool:
        return self.precision is not None

    def diagonal_energy(self, site: int):
        """``2 d gamma + v_x`` in the working arithmetic."""
        return self.matrix[site, site]

    def submatrix(self, rows: Sequence[int], cols: Sequence[int] | None = None) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.int64)
        cols = rows if cols is None else np.asarray(cols, dtype=np.int64)
        return self.matrix[np.ix_(rows, cols)]

    def with_level(self, site: int, level: int) -> "Hamiltonian":
        """Copy with the potential at one site replaced."""
        disorder = self.disorder.with_level(site, level)
        matrix = self.matrix.copy()
        with numerics.working_precision(self.precision):
            matrix[site, site] = _diagonal_entry(self.geometry.d, self.gamma, disorder, site, self.is_mp)
        return Hamiltonian(self.geometry, self.gamma, disorder, matrix, self.precision)

    def to_dict(self) -> dict:
        return {
            "geometry": self.geometry.to_dict(),
            "N": self.disorder.N,
            "seed": self.disorder.seed,
            "gamma": self.gamma,
            "precision": self.precision,
            "levels": [int(v) for v in self.disorder.levels],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Hamiltonian":
        geom = build_geometry(data["geometry"]["d"], data["geometry"]["sides"])
        disorder = disorder_from_levels(data["N"], data["levels"])
        disorder = DisorderRealization(disorder.N, disorder.levels, data.get("seed"))
        return build_hamiltonian(geom, disorder, data["gamma"], precision=data.get("precision"))


def _diagonal_entry(d: int, gamma, disorder: DisorderRealization, site: int, mp: bool):
    if mp:
        return 2 * d * numerics.to_mp(gamma) + disorder.value(site, mp=True)
    return 2 * d * gamma + disorder.value(site)


def build_hamiltonian(geometry: LatticeGeometry, disorder: DisorderRealization, gamma: float,
                      precision: int | None = None) -> Hamiltonian:
    """Assemble ``H = H0 - gamma J``.

    Parameters
    ----------
    geometry, disorder
        The box and its potential levels; sizes must agree.
    gamma
        Hopping strength, ``gamma >= 0``.
    precision
        ``None`` for float64, otherwise the number of mpfr bits used for the
        entries (needed when energy windows fall below ~1e-15).
    """
    gamma = float(gamma)
    if gamma < 0:
        raise ValueError(f"gamma must be non-negative, got {gamma}")
    if disorder.levels.shape != (geometry.size,):
        raise ValueError("disorder does not match the lattice size")
    n = geometry.size
    e = geometry.edges
    if precision is None:
        matrix = np.zeros((n, n))
        matrix[np.arange(n), np.arange(n)] = 2 * geometry.d * gamma + disorder.values
        matrix[e[:, 0], e[:, 1]] = -gamma
        matrix[e[:, 1], e[:, 0]] = -gamma
    else:
        with numerics.working_precision(precision):
            matrix = numerics.zeros((n, n), mp=True)
            hop = -numerics.to_mp(gamma)
            for i in range(n):
                matrix[i, i] = _diagonal_entry(geometry.d, gamma, disorder, i, True)
            for i, j in e:
                matrix[i, j] = hop
                matrix[j, i] = hop
    return Hamiltonian(geometry, gamma, disorder, matrix, precision)


def spectral_bounds(d: int, gamma: float) -> tuple[float, float]:
    """Interval guaranteed to contain the spectrum."""
    return 0.0, 1.0 + 4 * d * gamma
