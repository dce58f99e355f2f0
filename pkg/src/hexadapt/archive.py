"""Quality-diversity containers.

Two kinds of archive are used:

* ``GridArchive`` discretises the primary descriptor space on a fixed
  grid (top layer and flat baselines).  With ``secondary_slots=True``
  every cell additionally splits into one slot per secondary bit
  pattern (the flat 8-D container: 100x100x64 = 640,000 cells).
* ``DistArchive`` is unstructured: an elite is only admitted if its
  descriptor is farther than ``l`` from every stored one, or if it
  beats the nearest stored elite without moving inside ``l`` of any
  other.  The metric concatenates the normalized primary descriptor
  with the raw secondary bits, so differing bit patterns are at
  distance >= 1 and never compete with each other.

Descriptor/fitness matrices are kept in capacity-doubling numpy
buffers so nearest-neighbour lookups stay vectorized while insertion
remains O(n).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Elite:
    """One stored solution.

    ``yaw`` is the heading displacement recorded at evaluation time for
    layers whose primary descriptor drops it (top layer, flat archives);
    adaptation needs it to build the 3-component desired descriptor.
    ``order`` is the archive-wide insertion counter used to break ties
    deterministically.
    """

    genotype: np.ndarray
    fitness: float
    bd_primary: np.ndarray
    bd_secondary: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint8))
    yaw: float = 0.0
    order: int = -1


class ArchiveError(ValueError):
    pass


class _Buffers:
    """Row-addressed growable storage shared by both archive kinds."""

    def __init__(self, primary_dims: int, secondary_dims: int, capacity: int = 256):
        self.prim = np.empty((capacity, primary_dims), dtype=np.float64)
        self.sec = np.empty((capacity, secondary_dims), dtype=np.float64)
        self.fit = np.empty(capacity, dtype=np.float64)
        self.order = np.empty(capacity, dtype=np.int64)
        self.elites: list[Elite] = []

    def _grow(self):
        for name in ("prim", "sec", "fit", "order"):
            arr = getattr(self, name)
            bigger = np.empty((arr.shape[0] * 2,) + arr.shape[1:], dtype=arr.dtype)
            bigger[: arr.shape[0]] = arr
            setattr(self, name, bigger)

    def append(self, e: Elite) -> int:
        row = len(self.elites)
        if row == self.fit.shape[0]:
            self._grow()
        self._write(row, e)
        self.elites.append(e)
        return row

    def replace(self, row: int, e: Elite):
        self._write(row, e)
        self.elites[row] = e

    def _write(self, row: int, e: Elite):
        self.prim[row] = e.bd_primary
        self.sec[row] = e.bd_secondary
        self.fit[row] = e.fitness
        self.order[row] = e.order

    @property
    def n(self) -> int:
        return len(self.elites)


class GridArchive:
    def __init__(self, dims, bounds, secondary_dims: int = 0,
                 secondary_slots: bool = False):
        self.dims = tuple(int(d) for d in dims)
        self.bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
        if len(self.dims) != len(self.bounds):
            raise ArchiveError("dims and bounds length mismatch")
        self.secondary_dims = secondary_dims
        self.secondary_slots = secondary_slots
        self.cells: dict[tuple, int] = {}    # cell key -> buffer row
        self._buf = _Buffers(len(self.dims), secondary_dims)
        self._counter = 0

    # -- container protocol -------------------------------------------------
    @property
    def elites(self) -> list[Elite]:
        return self._buf.elites

    def __len__(self) -> int:
        return self._buf.n

    def primary_matrix(self) -> np.ndarray:
        return self._buf.prim[: self._buf.n]

    def fitness_vector(self) -> np.ndarray:
        return self._buf.fit[: self._buf.n]

    def cell_index(self, bd) -> tuple:
        bd = np.asarray(bd, dtype=np.float64)
        if bd.shape[0] != len(self.dims):
            raise ArchiveError(
                f"descriptor has {bd.shape[0]} dims, grid expects {len(self.dims)}")
        idx = []
        for v, d, (lo, hi) in zip(bd, self.dims, self.bounds):
            i = int(math.floor((v - lo) / (hi - lo) * d))
            idx.append(min(max(i, 0), d - 1))
        return tuple(idx)

    def _key(self, e: Elite) -> tuple:
        key = self.cell_index(e.bd_primary)
        if self.secondary_slots:
            key = key + tuple(int(b) for b in e.bd_secondary)
        return key

    def insert(self, e: Elite) -> bool:
        key = self._key(e)
        row = self.cells.get(key)
        if row is not None and self._buf.fit[row] >= e.fitness:
            return False
        e.order = self._counter
        self._counter += 1
        if row is None:
            self.cells[key] = self._buf.append(e)
        else:
            self._buf.replace(row, e)
        return True

    def random_elite(self, rng) -> Elite:
        return self._buf.elites[int(rng.integers(self._buf.n))]

    def nearest_primary(self, q) -> Elite:
        return _nearest_primary(self, q)


class DistArchive:
    def __init__(self, l: float, primary_dims: int, secondary_dims: int = 0):
        self.l = float(l)
        self.primary_dims = primary_dims
        self.secondary_dims = secondary_dims
        self._buf = _Buffers(primary_dims, secondary_dims)
        self._counter = 0
        # pattern bytes -> rows holding it; valid because a replacement can
        # only happen within distance l < 1, i.e. within one pattern
        self._pattern_rows: dict[bytes, list[int]] = {}

    @property
    def elites(self) -> list[Elite]:
        return self._buf.elites

    def __len__(self) -> int:
        return self._buf.n

    def primary_matrix(self) -> np.ndarray:
        return self._buf.prim[: self._buf.n]

    def fitness_vector(self) -> np.ndarray:
        return self._buf.fit[: self._buf.n]

    def patterns(self) -> list[np.ndarray]:
        """Distinct secondary patterns present, sorted for determinism."""
        keys = sorted(self._pattern_rows.keys())
        return [np.frombuffer(k, dtype=np.uint8).copy() for k in keys]

    def pattern_counts(self) -> dict[bytes, int]:
        return {k: len(v) for k, v in self._pattern_rows.items()}

    def _full_dists(self, e: Elite) -> np.ndarray:
        n = self._buf.n
        dp = self._buf.prim[:n] - e.bd_primary
        d2 = np.einsum("ij,ij->i", dp, dp)
        if self.secondary_dims:
            ds = self._buf.sec[:n] - e.bd_secondary
            d2 = d2 + np.einsum("ij,ij->i", ds, ds)
        return np.sqrt(d2)

    def insert(self, e: Elite) -> bool:
        if e.bd_primary.shape[0] != self.primary_dims or \
                e.bd_secondary.shape[0] != self.secondary_dims:
            raise ArchiveError("descriptor dims mismatch")
        if self._buf.n == 0:
            self._store(e, None)
            return True
        d = self._full_dists(e)
        j = int(np.argmin(d))
        if d[j] > self.l:
            self._store(e, None)
            return True
        if e.fitness <= self._buf.fit[j]:
            return False
        # replacement may not move the newcomer within l of anyone else,
        # or the pairwise-distance invariant would break
        d[j] = np.inf
        if self._buf.n > 1 and d.min() <= self.l:
            return False
        self._store(e, j)
        return True

    def _store(self, e: Elite, row: int | None):
        e.order = self._counter
        self._counter += 1
        if row is None:
            row = self._buf.append(e)
            key = e.bd_secondary.astype(np.uint8).tobytes()
            self._pattern_rows.setdefault(key, []).append(row)
        else:
            self._buf.replace(row, e)

    def random_elite(self, rng) -> Elite:
        return self._buf.elites[int(rng.integers(self._buf.n))]

    def nearest_primary(self, q) -> Elite:
        return _nearest_primary(self, q)

    def nearest_with_pattern(self, q, pattern, radius: float) -> Elite | None:
        key = np.asarray(pattern, dtype=np.uint8).tobytes()
        rows = self._pattern_rows.get(key)
        if not rows:
            return None
        q = np.asarray(q, dtype=np.float64)
        idx = np.asarray(rows)
        dp = self._buf.prim[idx] - q
        d = np.sqrt(np.einsum("ij,ij->i", dp, dp))
        jpos = int(np.argmin(d))
        ties = np.flatnonzero(d == d[jpos])
        if len(ties) > 1:
            jpos = min(ties, key=lambda r: (-self._buf.fit[idx[r]], self._buf.order[idx[r]]))
        if d[int(jpos)] > radius:
            return None
        return self._buf.elites[int(idx[int(jpos)])]


def _nearest_primary(a, q) -> Elite:
    if len(a) == 0:
        raise ArchiveError("archive is empty")
    q = np.asarray(q, dtype=np.float64)
    dp = a.primary_matrix() - q
    d = np.sqrt(np.einsum("ij,ij->i", dp, dp))
    j = int(np.argmin(d))
    ties = np.flatnonzero(d == d[j])
    if len(ties) > 1:
        j = min(ties, key=lambda r: (-a._buf.fit[r], a._buf.order[r]))
    return a.elites[int(j)]


# -- spec-facing wrappers ---------------------------------------------------

def grid_insert(a: GridArchive, e: Elite) -> bool:
    return a.insert(e)


def dist_insert(a: DistArchive, e: Elite) -> bool:
    return a.insert(e)


def nearest_primary(a, q) -> Elite:
    return a.nearest_primary(q)


def nearest_with_pattern(a: DistArchive, q, pattern, radius: float) -> Elite | None:
    return a.nearest_with_pattern(q, pattern, radius)


def project_effective(a, dims=(100, 100), bounds=((-1.8, 1.8), (-1.8, 1.8))):
    """Bin elites by their first two primary dims, best fitness per cell.

    Returns (occupied cell count, mean fitness of the kept elites);
    an empty archive reports (0, 0.0).
    """
    best: dict[tuple[int, int], float] = {}
    (lo0, hi0), (lo1, hi1) = bounds
    d0, d1 = dims
    for e in a.elites:
        b = e.bd_primary
        i = min(max(int(math.floor((b[0] - lo0) / (hi0 - lo0) * d0)), 0), d0 - 1)
        j = min(max(int(math.floor((b[1] - lo1) / (hi1 - lo1) * d1)), 0), d1 - 1)
        cur = best.get((i, j))
        if cur is None or e.fitness > cur:
            best[(i, j)] = e.fitness
    if not best:
        return 0, 0.0
    return len(best), float(np.mean(list(best.values())))
