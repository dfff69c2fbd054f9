"""Functional calculus for lattice Hamiltonians.

Two routes to ``tr{chi_M f(H)}``:

* the exact one, from a full symmetric eigendecomposition, and
* the kernel polynomial method: a (damped) Chebyshev expansion of ``f``
  applied to random probe vectors supported on the mask.

The module also provides blocks of the heat semigroup ``exp(-t H)`` and
Schatten norms of small dense blocks.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .lattice import DEFAULT_DENSE_CAP, RegionMask
from .operator import SparseOperator, spectral_bounds

__all__ = [
    "SpectralFunction",
    "EigenDecomposition",
    "ChebyshevExpansion",
    "KPMPlan",
    "dense_eig",
    "local_density",
    "masked_trace_dense",
    "jackson_kernel",
    "chebyshev_coeffs",
    "kpm_masked_trace",
    "kpm_masked_trace_difference",
    "heat_block",
    "row_block_norm",
    "schatten_norm",
    "DEFAULT_DENSE_CAP",
]

MAX_BLOCK_ENTRIES = 10**6

_KINDS = {
    "gaussian_bump": ("center", "width"),
    "smooth_bump": ("a", "b"),
    "exp_decay": ("t",),
    "indicator_smoothed": ("a", "b", "eta"),
    "constant": ("value",),
    "polynomial": ("coeffs",),
}


@dataclass(frozen=True)
class SpectralFunction:
    """A real function of energy from a fixed catalogue.

    ``gaussian_bump``      ``exp(-(x - center)^2 / (2 width^2))``
    ``smooth_bump``        ``exp(1 - 1/(1 - s^2))`` on ``(a, b)``, zero outside,
                           with ``s`` the affine map of ``(a, b)`` onto ``(-1, 1)``
    ``exp_decay``          ``exp(-t x)``
    ``indicator_smoothed`` ``(tanh((x - a)/eta) - tanh((x - b)/eta)) / 2``
    ``constant``           ``value``
    ``polynomial``         ``sum_k coeffs[k] x^k``

    Linear combinations are built with :meth:`combine`.
    """

    kind: str
    params: tuple = ()
    terms: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.kind == "combination":
            return
        if self.kind not in _KINDS:
            raise ValueError(f"unknown spectral function kind {self.kind!r}")
        names = _KINDS[self.kind]
        if len(self.params) != len(names):
            raise ValueError(f"{self.kind} takes parameters {names}")
        p = dict(zip(names, self.params))
        if self.kind == "gaussian_bump" and not p["width"] > 0:
            raise ValueError("gaussian width must be positive")
        if self.kind in ("smooth_bump", "indicator_smoothed") and not p["b"] > p["a"]:
            raise ValueError("need a < b")
        if self.kind == "indicator_smoothed" and not p["eta"] > 0:
            raise ValueError("eta must be positive")
        if self.kind == "polynomial":
            object.__setattr__(self, "params", (tuple(float(c) for c in p["coeffs"]),))

    # constructors -------------------------------------------------------
    @classmethod
    def gaussian_bump(cls, center, width):
        return cls("gaussian_bump", (float(center), float(width)))

    @classmethod
    def smooth_bump(cls, a, b):
        return cls("smooth_bump", (float(a), float(b)))

    @classmethod
    def exp_decay(cls, t):
        return cls("exp_decay", (float(t),))

    @classmethod
    def indicator_smoothed(cls, a, b, eta):
        return cls("indicator_smoothed", (float(a), float(b), float(eta)))

    @classmethod
    def constant(cls, value):
        return cls("constant", (float(value),))

    @classmethod
    def polynomial(cls, coeffs):
        return cls("polynomial", (tuple(coeffs),))

    @classmethod
    def combine(cls, *pairs):
        """``sum_i w_i f_i`` from ``(w_i, f_i)`` pairs."""
        return cls("combination", (), tuple((float(w), f) for w, f in pairs))

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralFunction":
        d = dict(d)
        kind = d.pop("kind")
        if kind not in _KINDS:
            raise ValueError(f"unknown spectral function kind {kind!r}")
        names = _KINDS[kind]
        missing = [n for n in names if n not in d]
        extra = sorted(set(d) - set(names))
        if missing or extra:
            raise ValueError(f"{kind}: missing {missing}, unexpected {extra}")
        return cls(kind, tuple(d[n] for n in names))

    def to_dict(self) -> dict:
        if self.kind == "combination":
            raise ValueError("combinations have no config form")
        out = {"kind": self.kind}
        for name, val in zip(_KINDS[self.kind], self.params):
            out[name] = list(val) if isinstance(val, tuple) else val
        return out

    # evaluation ---------------------------------------------------------
    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k, p = self.kind, self.params
        if k == "gaussian_bump":
            c, w = p
            return np.exp(-((x - c) ** 2) / (2 * w * w))
        if k == "smooth_bump":
            a, b = p
            s = (2 * x - a - b) / (b - a)
            out = np.zeros_like(x)
            inside = np.abs(s) < 1
            out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
            return out
        if k == "exp_decay":
            return np.exp(-p[0] * x)
        if k == "indicator_smoothed":
            a, b, eta = p
            return 0.5 * (np.tanh((x - a) / eta) - np.tanh((x - b) / eta))
        if k == "constant":
            return np.full_like(x, p[0])
        if k == "polynomial":
            return np.polynomial.polynomial.polyval(x, np.array(p[0]))
        return sum(w * f(x) for w, f in self.terms)

    @property
    def nominal_support(self) -> tuple[float, float]:
        k, p = self.kind, self.params
        if k == "gaussian_bump":
            return (p[0] - 4 * p[1], p[0] + 4 * p[1])
        if k == "smooth_bump":
            return (p[0], p[1])
        if k == "indicator_smoothed":
            return (p[0] - 3 * p[2], p[1] + 3 * p[2])
        if k == "combination":
            sups = [f.nominal_support for _, f in self.terms]
            return (min(s[0] for s in sups), max(s[1] for s in sups)) if sups else (0.0, 0.0)
        return (-math.inf, math.inf)

    @property
    def scale(self) -> float:
        """Edge width used for support clearances."""
        k, p = self.kind, self.params
        if k == "gaussian_bump":
            return p[1]
        if k == "smooth_bump":
            return (p[1] - p[0]) / 8
        if k == "indicator_smoothed":
            return p[2]
        return 0.0

    @property
    def nonnegative(self) -> bool:
        if self.kind in ("gaussian_bump", "smooth_bump", "exp_decay", "indicator_smoothed"):
            return True
        if self.kind == "constant":
            return self.params[0] >= 0
        if self.kind == "combination":
            return all(w >= 0 and f.nonnegative for w, f in self.terms)
        return False

    def describe(self) -> str:
        if self.kind == "combination":
            return " + ".join(f"{w:g}*{f.describe()}" for w, f in self.terms)
        args = ",".join(f"{v:g}" if not isinstance(v, tuple) else str(list(v)) for v in self.params)
        return f"{self.kind}({args})"


@dataclass(eq=False)
class EigenDecomposition:
    """Ascending eigenvalues and orthonormal eigenvectors (columns)."""

    values: np.ndarray
    vectors: np.ndarray
    label: str = ""
    _density: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.values.size


def dense_eig(op: SparseOperator, cap: int = DEFAULT_DENSE_CAP) -> EigenDecomposition:
    """Full eigendecomposition, cached on the operator."""
    if op.dim > cap:
        raise MemoryError(f"operator of dimension {op.dim} exceeds the dense cap {cap}")
    eig = op.cache.get("eig")
    if eig is None:
        w, v = np.linalg.eigh(op.toarray())
        eig = EigenDecomposition(w, v, op.label)
        op.cache["eig"] = eig
    return eig


def local_density(eig: EigenDecomposition, f: SpectralFunction) -> np.ndarray:
    """Diagonal of ``f(H)``: ``sum_k f(lambda_k) v_k(i)^2``, memoised per ``f``."""
    try:
        return eig._density[f]
    except (KeyError, TypeError):
        pass
    fv = f(eig.values)
    if not np.all(np.isfinite(fv)):
        raise ValueError(f"{f.describe()} is not finite on the spectrum")
    diag = (eig.vectors**2) @ fv
    try:
        eig._density[f] = diag
    except TypeError:
        pass
    return diag


def _mask_indices(mask) -> np.ndarray:
    if mask is None:
        return None
    if isinstance(mask, RegionMask):
        return mask.indices
    return np.asarray(mask, dtype=np.int64).ravel()


def masked_trace_dense(eig: EigenDecomposition, f: SpectralFunction, mask, continuum: bool = False) -> float:
    """``sum_{i in mask} f(H)_ii``; times ``h^d`` when ``continuum`` is set."""
    idx = _mask_indices(mask)
    val = float(np.sum(local_density(eig, f)[idx]))
    if continuum:
        if not isinstance(mask, RegionMask):
            raise TypeError("continuum normalisation needs a RegionMask")
        val *= mask.cell_volume
    return val


# ---------------------------------------------------------------------------
# Chebyshev / KPM


def jackson_kernel(n_moments: int) -> np.ndarray:
    """Jackson damping factors ``g_0..g_{N-1}`` for ``N`` moments."""
    N = n_moments
    m = np.arange(N)
    q = math.pi / (N + 1)
    return ((N - m + 1) * np.cos(q * m) + np.sin(q * m) / math.tan(q)) / (N + 1)


@dataclass(frozen=True)
class ChebyshevExpansion:
    """``f(x) ~ sum_m coeffs[m] T_m((x - center) / halfwidth)``.

    ``coeffs`` already include damping.  ``tail`` bounds
    ``sup |f - p|`` on the interval: the damping loss on retained terms
    plus the dropped coefficients up to twice the degree.
    """

    coeffs: np.ndarray
    raw: np.ndarray
    bounds: tuple[float, float]
    damping: str
    tail: float

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    @property
    def center(self) -> float:
        return 0.5 * (self.bounds[0] + self.bounds[1])

    @property
    def halfwidth(self) -> float:
        return 0.5 * (self.bounds[1] - self.bounds[0])

    def __call__(self, x):
        s = (np.asarray(x, dtype=float) - self.center) / self.halfwidth
        return np.polynomial.chebyshev.chebval(s, self.coeffs)


def _raw_chebyshev(f, bounds, n_coeffs: int) -> np.ndarray:
    a, b = bounds
    K = max(2 * n_coeffs, 64)
    theta = math.pi * (np.arange(K) + 0.5) / K
    vals = f(0.5 * (a + b) + 0.5 * (b - a) * np.cos(theta))
    if not np.all(np.isfinite(vals)):
        raise ValueError("function is not finite on the expansion interval")
    c = scipy.fft.dct(vals, type=2) / K
    c[0] *= 0.5
    return c[:n_coeffs]


def chebyshev_coeffs(f, bounds, M: int, damping: str = "jackson") -> ChebyshevExpansion:
    """Degree-``M`` Chebyshev coefficients of ``f`` on ``bounds``."""
    if M < 16:
        raise ValueError("expansion degree must be at least 16")
    a, b = map(float, bounds)
    if not b > a:
        raise ValueError(f"degenerate interval {bounds}")
    raw = _raw_chebyshev(f, (a, b), 2 * M + 1)
    if damping == "jackson":
        g = jackson_kernel(M + 1)
    elif damping == "none":
        g = np.ones(M + 1)
    else:
        raise ValueError(f"unknown damping {damping!r}")
    coeffs = raw[: M + 1] * g
    tail = float(np.sum(np.abs(raw[: M + 1] * (1 - g))) + np.sum(np.abs(raw[M + 1 :])))
    return ChebyshevExpansion(coeffs, raw, (a, b), damping, tail)


@dataclass(frozen=True)
class KPMPlan:
    """Settings for a stochastic Chebyshev trace."""

    degree: int = 256
    probes: int = 16
    damping: str = "jackson"
    probe_kind: str = "rademacher"
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        if self.degree < 16:
            raise ValueError("KPM degree must be at least 16")
        if self.probes < 1:
            raise ValueError("need at least one probe")
        if self.damping not in ("jackson", "none"):
            raise ValueError(f"unknown damping {self.damping!r}")
        if self.probe_kind not in ("rademacher", "deterministic_basis"):
            raise ValueError(f"unknown probe kind {self.probe_kind!r}")
        if self.bounds is not None and not self.bounds[1] > self.bounds[0]:
            raise ValueError("KPM bounds need b > a")


def _probes(plan: KPMPlan, N: int, idx: np.ndarray, seed: int) -> np.ndarray:
    if plan.probe_kind == "deterministic_basis":
        Z = np.zeros((N, idx.size))
        Z[idx, np.arange(idx.size)] = 1.0
        return Z
    rng = np.random.default_rng(seed)
    Z = np.zeros((N, plan.probes))
    Z[idx, :] = rng.choice((-1.0, 1.0), size=(idx.size, plan.probes))
    return Z


def _probe_values(op: SparseOperator, exp: ChebyshevExpansion, Z: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """``z_p^T p(H) z_p`` for every probe column, via the three-term recurrence."""
    c, w = exp.center, exp.halfwidth
    A = op.matrix
    Zm = Z[idx]

    def apply(X):
        return (A @ X - c * X) / w

    t_prev = Z
    out = exp.coeffs[0] * np.einsum("ip,ip->p", Zm, Zm)
    if exp.degree == 0:
        return out
    t_cur = apply(Z)
    out = out + exp.coeffs[1] * np.einsum("ip,ip->p", Zm, t_cur[idx])
    for m in range(2, exp.degree + 1):
        t_prev, t_cur = t_cur, 2.0 * apply(t_cur) - t_prev
        out = out + exp.coeffs[m] * np.einsum("ip,ip->p", Zm, t_cur[idx])
    return out


def _reduce(values: np.ndarray, plan: KPMPlan) -> tuple[float, float]:
    if plan.probe_kind == "deterministic_basis":
        return float(np.sum(values)), 0.0
    est = float(np.mean(values))
    if values.size < 2:
        warnings.warn("a single probe gives no error estimate; stderr is undefined", stacklevel=3)
        return est, math.nan
    return est, float(np.std(values, ddof=1) / math.sqrt(values.size))


def _scale(mask, continuum: bool) -> float:
    if not continuum:
        return 1.0
    if not isinstance(mask, RegionMask):
        raise TypeError("continuum normalisation needs a RegionMask")
    return mask.cell_volume


def kpm_masked_trace(
    op: SparseOperator, f, mask, plan: KPMPlan, seed: int = 0, continuum: bool = False
) -> tuple[float, float]:
    """Stochastic estimate of ``tr{chi_M f(op)}`` and its standard error.

    Rademacher probes are drawn on the mask sites only, so each probe is an
    unbiased estimate of the masked trace.  ``deterministic_basis`` uses the
    unit vectors of the mask and is exact up to the polynomial error.
    """
    idx = _mask_indices(mask)
    if idx.size == 0:
        return 0.0, 0.0
    bounds = plan.bounds or spectral_bounds(op)
    exp = chebyshev_coeffs(f, bounds, plan.degree, plan.damping)
    Z = _probes(plan, op.dim, idx, seed)
    est, err = _reduce(_probe_values(op, exp, Z, idx), plan)
    s = _scale(mask, continuum)
    return est * s, err * s


def kpm_masked_trace_difference(
    opA: SparseOperator, opB: SparseOperator, f, mask, plan: KPMPlan, seed: int = 0, continuum: bool = False
) -> tuple[float, float]:
    """``tr{chi_M (f(A) - f(B))}`` with the same probes for both operators."""
    idx = _mask_indices(mask)
    if idx.size == 0:
        return 0.0, 0.0
    if plan.bounds is not None:
        bounds = plan.bounds
    else:
        (a1, b1), (a2, b2) = spectral_bounds(opA), spectral_bounds(opB)
        bounds = (min(a1, a2), max(b1, b2))
    exp = chebyshev_coeffs(f, bounds, plan.degree, plan.damping)
    Z = _probes(plan, opA.dim, idx, seed)
    diff = _probe_values(opA, exp, Z, idx) - _probe_values(opB, exp, Z, idx)
    est, err = _reduce(diff, plan)
    s = _scale(mask, continuum)
    return est * s, err * s


# ---------------------------------------------------------------------------
# heat semigroup blocks and Schatten norms


def _exp_expansion(op: SparseOperator, t: float) -> ChebyshevExpansion:
    bounds = spectral_bounds(op)
    f = SpectralFunction.exp_decay(t)
    raw = _raw_chebyshev(f, bounds, 1024)
    big = np.flatnonzero(np.abs(raw) > 1e-17 * np.max(np.abs(raw)))
    M = max(16, int(big[-1]) + 8) if big.size else 16
    return chebyshev_coeffs(f, bounds, min(M, 1000), damping="none")


def _chebyshev_apply(op: SparseOperator, exp: ChebyshevExpansion, X: np.ndarray) -> np.ndarray:
    c, w = exp.center, exp.halfwidth
    A = op.matrix

    def apply(Y):
        return (A @ Y - c * Y) / w

    t_prev, t_cur = X, apply(X)
    out = exp.coeffs[0] * t_prev + exp.coeffs[1] * t_cur
    for m in range(2, exp.degree + 1):
        t_prev, t_cur = t_cur, 2.0 * apply(t_cur) - t_prev
        out += exp.coeffs[m] * t_cur
    return out


def _heat_single(op, t, rows, cols, cap):
    if op.dim <= cap:
        eig = dense_eig(op, cap)
        V = eig.vectors
        return (V[rows] * np.exp(-t * eig.values)) @ V[cols].T
    E = np.zeros((op.dim, cols.size))
    E[cols, np.arange(cols.size)] = 1.0
    return _chebyshev_apply(op, _exp_expansion(op, t), E)[rows]


def heat_block(
    opA: SparseOperator,
    opB: SparseOperator | None,
    t: float,
    rows,
    cols=None,
    cap: int = DEFAULT_DENSE_CAP,
) -> np.ndarray:
    """Block ``[exp(-t A) - exp(-t B)]_{rows, cols}`` (``B`` term omitted if ``None``).

    ``cols=None`` means all sites.  ``t`` must lie in ``[0, 1]``.
    """
    if not 0 <= t <= 1:
        raise ValueError(f"heat time must lie in [0, 1], got {t}")
    rows = _mask_indices(rows)
    cols = np.arange(opA.dim) if cols is None else _mask_indices(cols)
    if rows.size * cols.size > MAX_BLOCK_ENTRIES:
        raise ValueError(f"block of {rows.size} x {cols.size} entries is too large")
    if opB is not None and opB.dim != opA.dim:
        raise ValueError("operators have different dimensions")
    if t == 0:
        eye = (rows[:, None] == cols[None, :]).astype(float)
        return eye if opB is None else np.zeros_like(eye)
    block = _heat_single(opA, t, rows, cols, cap)
    if opB is not None:
        block = block - _heat_single(opB, t, rows, cols, cap)
    return block


def schatten_norm(block, p: float = 2) -> float:
    """``(tr |A|^p)^(1/p)``: Frobenius for ``p = 2``, trace norm for ``p = 1``."""
    A = np.atleast_2d(np.asarray(block, dtype=float))
    if A.size == 0:
        return 0.0
    if p == 2:
        return float(np.linalg.norm(A))
    s = np.linalg.svd(A, compute_uv=False)
    if p == 1:
        return float(np.sum(s))
    return float(np.sum(s**p) ** (1.0 / p))


def row_block_norm(eig: EigenDecomposition, f, mask, p: float = 1) -> float:
    """Schatten norm of ``chi_M f(H)`` (all columns), from the eigenbasis.

    Uses ``chi_M f(H) (chi_M f(H))^T = V_M diag(f^2) V_M^T``, so only an
    ``|M| x |M|`` matrix is formed.
    """
    idx = _mask_indices(mask)
    if idx.size == 0:
        return 0.0
    VM = eig.vectors[idx]
    gram = (VM * f(eig.values) ** 2) @ VM.T
    s = np.sqrt(np.clip(np.linalg.eigvalsh(gram), 0.0, None))
    if p == 2:
        return float(np.sqrt(np.sum(s**2)))
    return float(np.sum(s**p) ** (1.0 / p))
