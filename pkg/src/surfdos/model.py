"""Realizations of the full operator family ``H``, ``H_0`` and ``H_n``.

All operators built from one :class:`OperatorSet` share the same box and
the same disorder draws, so differences such as ``f(H) - f(H_n)`` compare
operators at a fixed realization.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from functools import cached_property

from .disorder import BackgroundSpec, RandomFieldSpec, background_field, sample_field, total_potential
from .lattice import LatticeSpec, SubspaceFamily, build_box
from .operator import SparseOperator, assemble_hamiltonian, assemble_laplacian

__all__ = ["SurfaceModel", "OperatorSet"]


@dataclass(frozen=True)
class SurfaceModel:
    """Everything needed to build operators for any ``(L, seed)``.

    The box radius for a ball of radius ``L`` is
    ``ceil((L + max(buffer, 2 L**alpha)) / h)`` lattice units.
    """

    d: int
    family: SubspaceFamily
    fields: tuple[RandomFieldSpec, ...] = ()
    background: BackgroundSpec = BackgroundSpec()
    h: float = 1.0
    bc: str = "dirichlet"
    metric: tuple[float, ...] | None = None
    buffer: float = 4.0
    margin: float = 0.0
    energy_shift: float = 0.0
    _h0_cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, compare=False, repr=False, hash=False)

    def __post_init__(self):
        if self.family.d != self.d:
            raise ValueError("subspace family dimension differs from the model dimension")
        seen = set()
        for f in self.fields:
            if f.n > self.family.n_subspaces:
                raise ValueError(f"field for subspace {f.n} but only {self.family.n_subspaces} subspaces")
            if f.n in seen:
                raise ValueError(f"two fields for subspace {f.n}")
            seen.add(f.n)

    def radius_for(self, L: float, alpha: float | None = None) -> int:
        buf = self.buffer if alpha is None else max(self.buffer, 2 * L**alpha)
        return int(math.ceil((L + buf + self.margin) / self.h - 1e-9))

    def lattice_for(self, L: float, alpha: float | None = None) -> LatticeSpec:
        return LatticeSpec(self.d, self.h, self.radius_for(L, alpha), self.bc, self.metric)

    def field_spec(self, n: int) -> RandomFieldSpec | None:
        for f in self.fields:
            if f.n == n:
                return f
        return None

    @property
    def zero_disorder(self) -> bool:
        return all(f.coupling == 0 for f in self.fields)

    def _background_ops(self, lattice: LatticeSpec):
        with self._lock:
            hit = self._h0_cache.get(lattice)
            if hit is None:
                lap = assemble_laplacian(lattice)
                v0 = background_field(self.background, lattice)
                h0 = assemble_hamiltonian(lap, v0, label="H0", shift=self.energy_shift)
                hit = (lap, v0, h0)
                while len(self._h0_cache) >= 4:
                    self._h0_cache.pop(next(iter(self._h0_cache)))
                self._h0_cache[lattice] = hit
            return hit

    def realize(self, L: float, seed: int, alpha: float | None = None, lattice: LatticeSpec | None = None):
        lattice = lattice or self.lattice_for(L, alpha)
        return OperatorSet(self, lattice, int(seed))


class OperatorSet:
    """Operators for one ``(box, seed)``; built lazily and cached."""

    def __init__(self, model: SurfaceModel, lattice: LatticeSpec, seed: int):
        self.model = model
        self.lattice = lattice
        self.seed = seed
        self.family = model.family
        self.box = build_box(lattice)
        self.laplacian, self.background, self.H0 = model._background_ops(lattice)
        self._ops: dict = {}

    @cached_property
    def fields(self) -> dict:
        """Sampled ``v_n`` for every configured subspace field."""
        return {f.n: sample_field(f, self.seed, self.box, self.family) for f in self.model.fields}

    def potential(self, ns) -> "object":
        parts = [self.background] + [self.fields[n] for n in ns if n in self.fields]
        return total_potential(parts, include_background=True)

    def _build(self, ns, label):
        # operators with the same active potential terms are the same operator
        active = tuple(n for n in ns if n in self.fields and self.model.field_spec(n).coupling != 0)
        if not active:
            return self.H0
        op = self._ops.get(active)
        if op is None:
            pot = self.potential(active)
            op = assemble_hamiltonian(self.laplacian, pot, label=label, shift=self.model.energy_shift)
            self._ops[active] = op
        return op

    @property
    def H(self) -> SparseOperator:
        return self._build(tuple(range(1, self.family.n_subspaces + 1)), "H")

    def H_n(self, n: int) -> SparseOperator:
        self.family.coords(n)
        return self._build((n,), f"H{n}")

    @property
    def subsystem_ops(self) -> dict:
        return {n: self.H_n(n) for n in range(1, self.family.n_subspaces + 1)}
