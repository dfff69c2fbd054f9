"""Random potentials ergodic along a coordinate subspace.

A field for subspace ``n`` has the form

    v_n(x) = coupling * u(pi_n x) * envelope(|pi^n (h x)|)

where ``u`` is one i.i.d. draw per lattice point of ``X_n``.  Each draw comes
from its own Philox stream keyed on ``(seed, n, pi_n x)``, so a value never
depends on the box size, on the order of generation, or on which other
sites were sampled.  That makes shifted realizations directly comparable.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .lattice import Box, LatticeSpec, SubspaceFamily, build_box, project

__all__ = [
    "RandomFieldSpec",
    "BackgroundSpec",
    "PotentialField",
    "sample_field",
    "background_field",
    "total_potential",
    "shift_realization",
]

DISTRIBUTIONS = ("uniform", "bernoulli", "gaussian")
ENVELOPES = ("exp", "power")
GAUSSIAN_CUTOFF = 4.0


@dataclass(frozen=True)
class RandomFieldSpec:
    """Law of one surface potential ``v_n``.

    ``distribution`` is one of ``uniform`` (on ``[-W, W]``), ``bernoulli``
    (``+-W``) or ``gaussian`` (variance ``W**2``, truncated at ``4W``).
    ``envelope`` is ``exp`` (``exp(-kappa r)``) or ``power``
    (``(1 + r)**-gamma``).
    """

    n: int
    amplitude: float = 1.0
    distribution: str = "uniform"
    envelope: str = "exp"
    kappa: float = 1.0
    gamma: float = 4.0
    coupling: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("random fields live on subspaces n >= 1; use BackgroundSpec for n = 0")
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if self.envelope not in ENVELOPES:
            raise ValueError(f"unknown envelope {self.envelope!r}")
        if self.envelope == "exp" and not self.kappa > 0:
            raise ValueError("exp envelope needs kappa > 0")
        if self.envelope == "power" and not self.gamma > 0:
            raise ValueError("power envelope needs gamma > 0")

    def envelope_at(self, r):
        r = np.asarray(r, dtype=float)
        if self.envelope == "exp":
            return np.exp(-self.kappa * r)
        return (1.0 + r) ** (-self.gamma)

    @property
    def max_draw(self) -> float:
        return GAUSSIAN_CUTOFF * self.amplitude if self.distribution == "gaussian" else self.amplitude

    @property
    def bound(self) -> float:
        """Sup of ``|v_n|`` over all realizations."""
        return abs(self.coupling) * self.max_draw


@dataclass(frozen=True)
class BackgroundSpec:
    """Deterministic background ``v_0``: ``none`` or ``A * sum_j cos(2 pi x_j / P)``."""

    kind: str = "none"
    amplitude: float = 0.0
    period: float = 2.0

    def __post_init__(self):
        if self.kind not in ("none", "cosine"):
            raise ValueError(f"unknown background kind {self.kind!r}")
        if self.kind == "cosine" and not self.period > 0:
            raise ValueError("cosine background needs a positive period")


@dataclass(frozen=True, eq=False)
class PotentialField:
    """Potential values on every site of a box.

    ``components`` lists the subspace indices summed into ``values``
    (``0`` is the background).
    """

    values: np.ndarray
    lattice: LatticeSpec
    seed: int | None = None
    n: int = 0
    components: tuple[int, ...] = ()
    spec: RandomFieldSpec | BackgroundSpec | None = None
    offset: tuple[int, ...] | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.lattice.n_sites,):
            raise ValueError(f"field has {vals.shape} values for a box of {self.lattice.n_sites} sites")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def to_csv(self, path) -> None:
        box = build_box(self.lattice)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["flat_index", *[f"x_{j + 1}" for j in range(self.lattice.d)], "value"])
            for i, (x, v) in enumerate(zip(box.coords, self.values)):
                w.writerow([i, *x.tolist(), repr(float(v))])


def _zigzag(k: int) -> int:
    return 2 * k if k >= 0 else -2 * k - 1


def _draw(spec: RandomFieldSpec, seed: int, key: tuple[int, ...]) -> float:
    ss = np.random.SeedSequence([int(seed), spec.n, *(_zigzag(int(c)) for c in key)])
    g = np.random.Generator(np.random.Philox(ss))
    W = spec.amplitude
    if spec.distribution == "uniform":
        return W * (2.0 * g.random() - 1.0)
    if spec.distribution == "bernoulli":
        return W if g.random() < 0.5 else -W
    while True:
        z = g.normal(0.0, W)
        if abs(z) <= GAUSSIAN_CUTOFF * W:
            return z


def _field_values(spec, seed, box: Box, family: SubspaceFamily, offset) -> np.ndarray:
    along = family.along_mask(spec.n)
    if along.any():
        keys = box.coords[:, along] + np.asarray(offset, dtype=np.int64)[along]
        uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
        draws = np.array([_draw(spec, seed, tuple(k)) for k in uniq])
    else:
        inverse = np.zeros(box.n_sites, dtype=np.int64)
        draws = np.array([_draw(spec, seed, ())])
    _, perp = project(family, spec.n, box.positions)
    env = spec.envelope_at(np.sqrt(np.sum(perp**2, axis=1)))
    return spec.coupling * draws[inverse.ravel()] * env


def sample_field(
    spec: RandomFieldSpec, seed: int, box: Box | LatticeSpec, family: SubspaceFamily
) -> PotentialField:
    """Draw the realization of ``v_n`` for ``seed`` on ``box``."""
    if isinstance(box, LatticeSpec):
        box = build_box(box)
    if spec.n > family.n_subspaces:
        raise ValueError(f"field refers to subspace {spec.n}, family has {family.n_subspaces}")
    if family.d != box.spec.d:
        raise ValueError("family and box dimensions differ")
    if spec.coupling == 0:
        values = np.zeros(box.n_sites)
    else:
        values = _field_values(spec, seed, box, family, np.zeros(box.spec.d, dtype=np.int64))
    return PotentialField(values, box.spec, seed, spec.n, (spec.n,), spec, (0,) * box.spec.d)


def shift_realization(field: PotentialField, z, family: SubspaceFamily) -> PotentialField:
    """Realization translated by the lattice vector ``z`` along ``X_n``.

    The result satisfies ``shifted.values[x] == field.values[x + z]``
    wherever ``x + z`` is in the box.
    """
    spec = field.spec
    if not isinstance(spec, RandomFieldSpec):
        raise TypeError("only sampled random fields can be shifted")
    z = np.asarray(z, dtype=np.int64)
    if z.shape != (field.lattice.d,):
        raise ValueError(f"shift needs {field.lattice.d} integer components")
    along = family.along_mask(spec.n)
    if np.any(z[~along] != 0):
        raise ValueError(f"shift {z.tolist()} has components outside X_{spec.n}")
    offset = np.asarray(field.offset, dtype=np.int64) + z
    box = build_box(field.lattice)
    if spec.coupling == 0:
        values = np.zeros(box.n_sites)
    else:
        values = _field_values(spec, field.seed, box, family, offset)
    return PotentialField(values, field.lattice, field.seed, spec.n, (spec.n,), spec, tuple(offset.tolist()))


def background_field(spec: BackgroundSpec, lattice: LatticeSpec) -> PotentialField:
    box = build_box(lattice)
    if spec.kind == "none" or spec.amplitude == 0:
        values = np.zeros(box.n_sites)
    else:
        values = spec.amplitude * np.sum(np.cos(2 * math.pi * box.positions / spec.period), axis=1)
    return PotentialField(values, lattice, None, 0, (0,), spec)


def total_potential(
    fields, include_background: bool = True, lattice: LatticeSpec | None = None
) -> PotentialField:
    """Pointwise sum of fields.

    With ``include_background=False`` any ``n = 0`` field in the list is
    skipped.  ``lattice`` is required only when ``fields`` is empty.
    """
    fields = [f for f in fields if include_background or f.n != 0]
    if not fields:
        if lattice is None:
            raise ValueError("empty sum needs an explicit lattice")
        return PotentialField(np.zeros(lattice.n_sites), lattice)
    lat = fields[0].lattice if lattice is None else lattice
    if any(f.lattice != lat for f in fields):
        raise ValueError("fields live on different boxes")
    values = np.zeros(lat.n_sites)
    comps: list[int] = []
    for f in fields:
        values = values + f.values
        comps.extend(c for c in f.components if c not in comps)
    seed = fields[0].seed if all(f.seed == fields[0].seed for f in fields) else None
    return PotentialField(values, lat, seed, -1 if len(comps) != 1 else comps[0], tuple(sorted(comps)))
