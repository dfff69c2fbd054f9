"""Sparse lattice Hamiltonians ``-Delta + V`` and their spectral bounds."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .disorder import PotentialField
from .lattice import LatticeSpec, build_box

__all__ = [
    "SparseOperator",
    "assemble_laplacian",
    "assemble_hamiltonian",
    "gershgorin_bounds",
    "lanczos_extremes",
    "spectral_bounds",
]


@dataclass(eq=False)
class SparseOperator:
    """Real symmetric sparse matrix on a lattice box.

    The matrix itself is treated as immutable; ``cache`` holds derived
    quantities (spectral interval, eigendecomposition) computed on demand.
    """

    matrix: sp.csr_matrix
    lattice: LatticeSpec
    label: str = "H"
    components: tuple[int, ...] = ()
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    @property
    def bounds(self) -> tuple[float, float] | None:
        return self.cache.get("bounds")

    def to_triplets(self, path) -> None:
        """Write ``row col value`` lines (upper and lower triangle)."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, delimiter=" ", lineterminator="\n")
            for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                w.writerow([int(r), int(c), repr(float(v))])


def assemble_laplacian(spec: LatticeSpec) -> SparseOperator:
    """Second-order finite-difference ``-Delta`` with diagonal metric.

    ``(-Delta u)(x) = sum_j g^jj (2 u(x) - u(x + h e_j) - u(x - h e_j)) / h^2``.
    Dirichlet boundaries drop out-of-box neighbours, periodic ones wrap.
    """
    box = build_box(spec)
    N, side = spec.n_sites, spec.side
    coords = box.coords
    rows, cols, vals = [], [], []
    diag = np.zeros(N)
    for j in range(spec.d):
        w = spec.metric[j] / spec.h**2
        diag += 2.0 * w
        stride = side ** (spec.d - 1 - j)
        # forward bonds only; symmetry by mirroring the same values
        if spec.bc == "dirichlet":
            src = np.flatnonzero(coords[:, j] < spec.R)
            dst = src + stride
        else:
            src = np.arange(N)
            at_edge = coords[:, j] == spec.R
            dst = np.where(at_edge, src - (side - 1) * stride, src + stride)
        bond = np.full(src.size, -w)
        rows += [src, dst]
        cols += [dst, src]
        vals += [bond, bond]
    rows.append(np.arange(N))
    cols.append(np.arange(N))
    vals.append(diag)
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    ).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return SparseOperator(mat, spec, label="Lap", components=())


def assemble_hamiltonian(
    lap: SparseOperator,
    pot: PotentialField,
    label: str | None = None,
    shift: float = 0.0,
) -> SparseOperator:
    """``lap + diag(pot) + shift``.

    The label defaults to ``H0`` for background-only potentials, ``H<n>``
    for a single surface term and ``H`` otherwise.
    """
    if pot.values.shape[0] != lap.dim or pot.lattice != lap.lattice:
        raise ValueError(f"potential on {pot.lattice} does not match operator on {lap.lattice}")
    surface = tuple(c for c in pot.components if c != 0)
    if label is None:
        label = "H0" if not surface else (f"H{surface[0]}" if len(surface) == 1 else "H")
    mat = (lap.matrix + sp.diags(pot.values + shift, format="csr")).tocsr()
    mat.sort_indices()
    return SparseOperator(mat, lap.lattice, label=label, components=tuple(pot.components))


def gershgorin_bounds(op: SparseOperator) -> tuple[float, float]:
    m = op.matrix
    diag = m.diagonal()
    radius = np.asarray(abs(m).sum(axis=1)).ravel() - np.abs(diag)
    return float(np.min(diag - radius)), float(np.max(diag + radius))


def lanczos_extremes(op: SparseOperator, steps: int = 80, seed: int = 0):
    """Extremal Ritz values after ``steps`` Lanczos iterations.

    Uses full reorthogonalisation.  Returns ``(theta_min, theta_max,
    res_min, res_max, breakdown)`` where the residuals bound the distance
    from each Ritz value to the spectrum.
    """
    N = op.dim
    m = min(steps, N)
    rng = np.random.default_rng(seed)
    Q = np.zeros((N, m + 1))
    q = rng.standard_normal(N)
    Q[:, 0] = q / np.linalg.norm(q)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    scale = max(abs(x) for x in gershgorin_bounds(op)) or 1.0
    breakdown = False
    k = m
    for i in range(m):
        w = op.matvec(Q[:, i])
        alpha[i] = Q[:, i] @ w
        w -= Q[:, : i + 1] @ (Q[:, : i + 1].T @ w)
        w -= Q[:, : i + 1] @ (Q[:, : i + 1].T @ w)
        beta[i] = np.linalg.norm(w)
        if beta[i] <= 1e-12 * scale:
            k = i + 1
            breakdown = k < N
            break
        Q[:, i + 1] = w / beta[i]
    T = np.diag(alpha[:k]) + np.diag(beta[: k - 1], 1) + np.diag(beta[: k - 1], -1)
    theta, S = np.linalg.eigh(T)
    res = np.abs(beta[k - 1] * S[-1, :])
    return theta[0], theta[-1], res[0], res[-1], breakdown


def spectral_bounds(op: SparseOperator, margin: float = 0.01, steps: int = 80, seed: int = 0):
    """Interval enclosing the spectrum, cached on the operator.

    Lanczos extremes are widened by their residual and by ``margin`` times
    the interval width, then clamped to the Gershgorin interval (which is
    always valid and is returned outright on breakdown).
    """
    key = ("bounds", margin, steps, seed)
    if key in op.cache:
        return op.cache[key]
    glo, ghi = gershgorin_bounds(op)
    lo, hi, rlo, rhi, breakdown = lanczos_extremes(op, steps, seed)
    if breakdown:
        bounds = (glo, ghi)
    else:
        pad = margin * max(hi - lo, abs(hi), abs(lo), 1e-12)
        bounds = (max(glo, lo - rlo - pad), min(ghi, hi + rhi + pad))
    op.cache[key] = bounds
    op.cache["bounds"] = bounds
    return bounds
