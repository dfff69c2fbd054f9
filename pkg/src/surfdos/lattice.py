"""Finite-box discretization of configuration space.

Sites are the integer points ``x`` with ``max_j |x_j| <= R``; physical
positions are ``h * x``.  Regions (balls, slabs around a subspace, unit
cubes) are represented as sorted arrays of flat site indices.
"""
from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "LatticeSpec",
    "SubspaceFamily",
    "RegionMask",
    "Box",
    "build_box",
    "project",
    "region_mask",
    "ball_volume",
    "cube_centers",
    "DEFAULT_DENSE_CAP",
]

DEFAULT_DENSE_CAP = 4096

BOUNDARY_CONDITIONS = ("dirichlet", "periodic")
REGION_KINDS = ("ball_A_L", "slab_A_Ln", "cube_C_k", "custom")


@dataclass(frozen=True)
class LatticeSpec:
    """Discretization of ``R^d`` on the grid ``h * Z^d``.

    Parameters
    ----------
    d : int
        Dimension.
    h : float
        Grid spacing in length units.
    R : int
        Box radius in lattice units.
    bc : {"dirichlet", "periodic"}
    metric : tuple of float, optional
        Diagonal metric entries ``g^{jj}``.  Identity by default.
    """

    d: int
    h: float = 1.0
    R: int = 1
    bc: str = "dirichlet"
    metric: tuple[float, ...] | None = None

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d}")
        if not self.h > 0:
            raise ValueError(f"grid spacing must be positive, got {self.h}")
        if int(self.R) != self.R or self.R < 1:
            raise ValueError(f"box radius must be an integer >= 1, got {self.R}")
        if self.bc not in BOUNDARY_CONDITIONS:
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        metric = (1.0,) * self.d if self.metric is None else tuple(float(g) for g in self.metric)
        if len(metric) != self.d:
            raise ValueError(f"metric needs {self.d} entries, got {len(metric)}")
        if any(not g > 0 for g in metric):
            raise ValueError("metric entries must be positive")
        object.__setattr__(self, "metric", metric)

    @property
    def side(self) -> int:
        return 2 * self.R + 1

    @property
    def n_sites(self) -> int:
        return self.side ** self.d

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d

    @property
    def extent(self) -> float:
        """Largest ball radius (length units) that fits in the box."""
        return self.h * self.R


@dataclass(frozen=True)
class SubspaceFamily:
    """Coordinate subspaces ``X_n = span{e_j : j in S_n}``, ``n = 1..N_0``.

    Coordinate indices are 1-based.  Subspaces must be listed by
    non-increasing dimension.
    """

    d: int
    subspaces: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        subs = tuple(tuple(sorted(set(int(j) for j in s))) for s in self.subspaces)
        if not subs:
            raise ValueError("subspace family must contain at least one subspace")
        for s in subs:
            if any(j < 1 or j > self.d for j in s):
                raise ValueError(f"coordinate index out of range 1..{self.d} in {s}")
        dims = [len(s) for s in subs]
        if any(a < b for a, b in zip(dims, dims[1:])):
            raise ValueError(f"subspaces must be ordered by non-increasing dimension, got dims {dims}")
        object.__setattr__(self, "subspaces", subs)

    @property
    def n_subspaces(self) -> int:
        return len(self.subspaces)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.subspaces)

    @property
    def top_dim(self) -> int:
        """``d_1``, the largest subspace dimension."""
        return self.dims[0]

    @property
    def maximal(self) -> tuple[int, ...]:
        """Indices ``n`` with ``d_n = d_1`` (1-based)."""
        return tuple(n for n, dn in enumerate(self.dims, start=1) if dn == self.top_dim)

    def dim(self, n: int) -> int:
        return len(self.coords(n))

    def coords(self, n: int) -> tuple[int, ...]:
        if not 1 <= n <= self.n_subspaces:
            raise IndexError(f"subspace index {n} out of range 1..{self.n_subspaces}")
        return self.subspaces[n - 1]

    def along_mask(self, n: int) -> np.ndarray:
        """Boolean mask over the ``d`` axes selecting the coordinates of ``X_n``."""
        mask = np.zeros(self.d, dtype=bool)
        mask[[j - 1 for j in self.coords(n)]] = True
        return mask


def project(family: SubspaceFamily, n: int, x) -> tuple[np.ndarray, np.ndarray]:
    """Split ``x`` into its ``X_n`` part and the orthogonal remainder.

    ``x`` may be a single point of shape ``(d,)`` or an array of points of
    shape ``(m, d)``.
    """
    along = family.along_mask(n)
    x = np.asarray(x)
    if x.shape[-1] != family.d:
        raise ValueError(f"points must have {family.d} coordinates")
    par = np.where(along, x, 0)
    return par, x - par


def ball_volume(m: int) -> float:
    """Volume of the unit ball in ``R^m``; ``1`` for ``m = 0``."""
    if m < 0:
        raise ValueError("dimension must be non-negative")
    return math.pi ** (m / 2) / math.gamma(m / 2 + 1)


class Box:
    """Site table for a :class:`LatticeSpec`.

    Sites are enumerated in lexicographic order of their integer
    coordinates, the last coordinate running fastest.
    """

    def __init__(self, spec: LatticeSpec):
        self.spec = spec
        self._strides = np.array([spec.side ** (spec.d - 1 - j) for j in range(spec.d)], dtype=np.int64)

    @property
    def n_sites(self) -> int:
        return self.spec.n_sites

    @cached_property
    def coords(self) -> np.ndarray:
        """Integer coordinates, shape ``(N, d)``."""
        axis = np.arange(-self.spec.R, self.spec.R + 1, dtype=np.int64)
        grids = np.meshgrid(*([axis] * self.spec.d), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    @cached_property
    def positions(self) -> np.ndarray:
        """Physical positions ``h * x``."""
        return self.spec.h * self.coords

    def index(self, x) -> np.ndarray:
        """Flat index of integer coordinates (vectorised)."""
        x = np.asarray(x, dtype=np.int64)
        if np.any(np.abs(x) > self.spec.R):
            raise IndexError("coordinates outside the box")
        return (x + self.spec.R) @ self._strides

    def contains(self, x) -> np.ndarray:
        return np.all(np.abs(np.asarray(x)) <= self.spec.R, axis=-1)


@lru_cache(maxsize=64)
def _shared_box(spec: LatticeSpec) -> Box:
    return Box(spec)


def build_box(spec: LatticeSpec, dense: bool = False, cap: int = DEFAULT_DENSE_CAP) -> Box:
    """Build the site table; with ``dense=True`` refuse boxes beyond ``cap`` sites."""
    if dense and spec.n_sites > cap:
        raise MemoryError(
            f"box has {spec.n_sites} sites, above the dense cap of {cap}; use the kpm path or a smaller box"
        )
    return _shared_box(spec)


@dataclass(frozen=True, eq=False)
class RegionMask:
    """A set of box sites.

    ``indices`` is sorted and duplicate free.  ``flags`` carries
    non-fatal warnings (e.g. slab exponent outside its nominal window).
    """

    kind: str
    spec: LatticeSpec
    indices: np.ndarray
    params: dict = field(default_factory=dict)
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in REGION_KINDS:
            raise ValueError(f"unknown region kind {self.kind!r}")
        idx = np.unique(np.asarray(self.indices, dtype=np.int64))
        if idx.size and (idx[0] < 0 or idx[-1] >= self.spec.n_sites):
            raise IndexError("mask indices outside the box")
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return int(self.indices.size)

    @property
    def cell_volume(self) -> float:
        return self.spec.cell_volume

    def as_bool(self) -> np.ndarray:
        out = np.zeros(self.spec.n_sites, dtype=bool)
        out[self.indices] = True
        return out

    @property
    def mu(self) -> int:
        """Number of unit cubes ``C_j = j + [-1/2, 1/2]^d`` meeting the region.

        Closed cubes: a site on a shared face meets both neighbours.
        """
        if not len(self):
            return 0
        pos = _shared_box(self.spec).positions[self.indices]
        lo = np.ceil(pos - 0.5 - 1e-12).astype(np.int64)
        hi = np.floor(pos + 0.5 + 1e-12).astype(np.int64)
        cubes = set()
        for a, b in zip(lo, hi):
            cubes.update(itertools.product(*(range(s, e + 1) for s, e in zip(a, b))))
        return len(cubes)

    def union(self, other: "RegionMask") -> "RegionMask":
        return RegionMask("custom", self.spec, np.union1d(self.indices, other.indices))

    def intersect(self, other: "RegionMask") -> "RegionMask":
        return RegionMask("custom", self.spec, np.intersect1d(self.indices, other.indices))

    def minus(self, other: "RegionMask") -> "RegionMask":
        return RegionMask("custom", self.spec, np.setdiff1d(self.indices, other.indices))

    def to_csv(self, path) -> None:
        """Write ``flat_index, x_1..x_d, in_mask`` for every box site."""
        box = _shared_box(self.spec)
        inside = self.as_bool()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["flat_index", *[f"x_{j + 1}" for j in range(self.spec.d)], "in_mask"])
            for i, x in enumerate(box.coords):
                w.writerow([i, *x.tolist(), int(inside[i])])


def _check_radius(spec: LatticeSpec, L: float, margin: float) -> None:
    if not L > 0:
        raise ValueError(f"region radius must be positive, got {L}")
    if L > spec.extent - margin + 1e-12:
        raise ValueError(
            f"region of radius {L} exceeds the box (extent {spec.extent}, margin {margin})"
        )


def region_mask(
    spec: LatticeSpec,
    family: SubspaceFamily | None,
    kind: str,
    *,
    L: float | None = None,
    n: int | None = None,
    alpha: float | None = None,
    k: Sequence[int] | None = None,
    indices: Iterable[int] | None = None,
    margin: float = 0.0,
) -> RegionMask:
    """Resolve a region to a :class:`RegionMask`.

    ``ball_A_L`` is ``{|h x| <= L}`` (boundary inclusive).  ``slab_A_Ln``
    adds ``|pi^n(h x)| <= L**alpha``.  ``cube_C_k`` is the half-open cube
    ``k + [-1/2, 1/2)^d`` in physical units, so cubes tile the box.
    """
    box = _shared_box(spec)
    flags: tuple[str, ...] = ()
    if kind == "ball_A_L":
        _check_radius(spec, L, margin)
        r2 = np.sum(box.positions**2, axis=1)
        idx = np.flatnonzero(r2 <= L * L * (1 + 1e-12))
        params = {"L": L, "margin": margin}
    elif kind == "slab_A_Ln":
        if family is None or n is None or alpha is None:
            raise ValueError("slab needs a subspace family, n and alpha")
        _check_radius(spec, L, margin)
        if not 0 < alpha < 1 / spec.d**2:
            msg = f"slab exponent alpha={alpha} outside (0, 1/d^2) = (0, {1 / spec.d**2:g})"
            warnings.warn(msg, stacklevel=2)
            flags = (msg,)
        _, perp = project(family, n, box.positions)
        r2 = np.sum(box.positions**2, axis=1)
        width = L**alpha
        inside = (r2 <= L * L * (1 + 1e-12)) & (np.sum(perp**2, axis=1) <= width * width * (1 + 1e-12))
        idx = np.flatnonzero(inside)
        params = {"L": L, "n": n, "alpha": alpha, "margin": margin}
    elif kind == "cube_C_k":
        if k is None:
            raise ValueError("cube needs a center k")
        k = np.asarray(k, dtype=float)
        if k.shape != (spec.d,):
            raise ValueError(f"cube center needs {spec.d} coordinates")
        if np.any(np.abs(k) - 0.5 > spec.extent + 1e-12):
            raise ValueError(f"cube centered at {k.tolist()} does not meet the box")
        rel = box.positions - k
        idx = np.flatnonzero(np.all((rel >= -0.5 - 1e-12) & (rel < 0.5 - 1e-12), axis=1))
        params = {"k": tuple(k.tolist())}
    elif kind == "custom":
        if indices is None:
            raise ValueError("custom region needs explicit indices")
        idx = np.asarray(list(indices), dtype=np.int64)
        params = {}
    else:
        raise ValueError(f"unknown region kind {kind!r}")
    return RegionMask(kind, spec, idx, params, flags)


def cube_centers(spec: LatticeSpec) -> np.ndarray:
    """Integer points ``k`` whose half-open cube ``C_k`` holds at least one box site."""
    kmax = int(math.floor(spec.extent + 0.5 + 1e-12))
    axis = np.arange(-kmax, kmax + 1)
    grids = np.meshgrid(*([axis] * spec.d), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)
