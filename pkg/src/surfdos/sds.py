"""Surface density of states estimates and the studies built on them.

Every estimate compares operators that share one box and one disorder
realization.  Traces over regions are sums of diagonal entries of
``f(H)`` over the region's sites, times the cell volume ``h^d``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .lattice import DEFAULT_DENSE_CAP, RegionMask, SubspaceFamily, ball_volume, build_box, region_mask
from .model import SurfaceModel
from .operator import SparseOperator
from .spectral import (
    KPMPlan,
    SpectralFunction,
    dense_eig,
    heat_block,
    kpm_masked_trace_difference,
    local_density,
    row_block_norm,
    schatten_norm,
)

__all__ = [
    "SDSEstimate",
    "StudyReport",
    "CSV_COLUMNS",
    "nu_s_L",
    "nu_s_L_n",
    "alpha_tally",
    "alpha_profile",
    "localization_residual",
    "decomposition_residual",
    "positivity_check",
    "find_gaps",
    "self_averaging_study",
    "crossing_study",
    "alpha_decay_study",
    "crosscheck_study",
    "lemma_checks",
    "fit_power_exponent",
    "fan_out",
]

CSV_COLUMNS = ("study", "kind", "n", "L", "alpha", "seed", "method", "value", "stderr")
METHODS = ("dense", "kpm")


@dataclass(frozen=True)
class SDSEstimate:
    """One number produced by the sds layer, with its provenance."""

    value: float
    kind: str
    L: float
    f: str
    seed: int | None = None
    method: str = "dense"
    stderr: float | None = None
    n: int | None = None
    alpha: float | None = None
    h: float = 1.0
    bc: str = "dirichlet"
    margin: float = 0.0
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "dense" and self.stderr is not None:
            raise ValueError("dense estimates carry no stderr")
        if self.method == "kpm" and not (self.stderr is None or math.isnan(self.stderr) or self.stderr >= 0):
            raise ValueError("stderr must be non-negative")

    @property
    def inconclusive(self) -> bool:
        return "inconclusive" in self.flags

    def row(self, study: str) -> dict:
        return {
            "study": study,
            "kind": self.kind,
            "n": self.n,
            "L": self.L,
            "alpha": self.alpha,
            "seed": self.seed,
            "method": self.method,
            "value": self.value,
            "stderr": self.stderr,
        }


@dataclass
class StudyReport:
    """Rows of estimates plus derived statistics and named pass/fail checks.

    A check value of ``None`` means the check was not applicable.
    """

    study: str
    rows: list[dict] = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def add(self, est: SDSEstimate) -> None:
        self.rows.append(est.row(self.study))

    def add_row(self, **kw) -> None:
        row = {c: None for c in CSV_COLUMNS}
        row["study"] = self.study
        row.update(kw)
        self.rows.append(row)

    @property
    def passed(self) -> bool:
        return all(v is not False for v in self.checks.values())

    def merge(self, other: "StudyReport", prefix: str | None = None) -> None:
        p = prefix or other.study
        self.rows.extend(other.rows)
        self.stats[p] = other.stats
        self.checks.update({f"{p}.{k}": v for k, v in other.checks.items()})
        self.notes.extend(other.notes)


def fan_out(fn, tasks, threads: int = 1) -> list:
    """``[fn(t) for t in tasks]``, optionally on a thread pool; order preserved."""
    tasks = list(tasks)
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, tasks))


# ---------------------------------------------------------------------------
# single estimates


def _normalizer(L: float, dim: int) -> float:
    return ball_volume(dim) * L**dim


def _coupled_trace(opA, opB, f, mask: RegionMask, method, plan, seed, cap):
    """``h^d tr{chi_M (f(A) - f(B))}`` and its stderr (``None`` for dense)."""
    if method == "dense":
        if opA is opB or len(mask) == 0:
            return 0.0, None
        diff = local_density(dense_eig(opA, cap), f) - local_density(dense_eig(opB, cap), f)
        return float(np.sum(diff[mask.indices])) * mask.cell_volume, None
    if method == "kpm":
        if opA is opB:
            return 0.0, 0.0
        return kpm_masked_trace_difference(opA, opB, f, mask, plan or KPMPlan(), seed=seed, continuum=True)
    raise ValueError(f"unknown method {method!r}")


def _estimate(value, err, kind, L, f, op, method, seed, margin, n=None, alpha=None, flags=()):
    flags = tuple(flags)
    if err is not None and (math.isnan(err) or err > abs(value)):
        flags += ("inconclusive",)
    return SDSEstimate(
        value=value,
        kind=kind,
        L=L,
        f=f.describe(),
        seed=seed,
        method=method,
        stderr=err,
        n=n,
        alpha=alpha,
        h=op.lattice.h,
        bc=op.lattice.bc,
        margin=margin,
        flags=flags,
    )


def nu_s_L(
    H: SparseOperator,
    H0: SparseOperator,
    f: SpectralFunction,
    L: float,
    family: SubspaceFamily,
    method: str = "dense",
    *,
    plan: KPMPlan | None = None,
    seed: int | None = None,
    probe_seed: int = 0,
    margin: float = 0.0,
    cap: int = DEFAULT_DENSE_CAP,
) -> SDSEstimate:
    """``h^d tr{chi_{A_L}(f(H) - f(H0))} / (mu_{d_1} L^{d_1})``."""
    mask = region_mask(H.lattice, family, "ball_A_L", L=L, margin=margin)
    value, err = _coupled_trace(H, H0, f, mask, method, plan, probe_seed, cap)
    norm = _normalizer(L, family.top_dim)
    flags = ("experimental: zero-dimensional surface",) if family.top_dim == 0 else ()
    err = None if err is None else err / norm
    return _estimate(value / norm, err, "nu_s_L", L, f, H, method, seed, margin, flags=flags)


def nu_s_L_n(
    H_n: SparseOperator,
    H0: SparseOperator,
    f: SpectralFunction,
    L: float,
    n: int,
    family: SubspaceFamily,
    method: str = "dense",
    *,
    plan: KPMPlan | None = None,
    seed: int | None = None,
    probe_seed: int = 0,
    margin: float = 0.0,
    cap: int = DEFAULT_DENSE_CAP,
) -> SDSEstimate:
    """Single-subsystem analogue, normalized by ``mu_{d_n} L^{d_n}``."""
    dn = family.dim(n)
    mask = region_mask(H_n.lattice, family, "ball_A_L", L=L, margin=margin)
    value, err = _coupled_trace(H_n, H0, f, mask, method, plan, probe_seed, cap)
    norm = _normalizer(L, dn)
    flags = ("experimental: zero-dimensional surface",) if dn == 0 else ()
    err = None if err is None else err / norm
    return _estimate(value / norm, err, "nu_s_L_n", L, f, H_n, method, seed, margin, n=n, flags=flags)


def _cube_ids(lattice) -> tuple[np.ndarray, np.ndarray]:
    """Cube center for every site (half-open unit cubes) and the unique centers."""
    pos = build_box(lattice).positions
    k = np.floor(pos + 0.5 + 1e-12).astype(np.int64)
    centers, inverse = np.unique(k, axis=0, return_inverse=True)
    return centers, inverse.ravel()


def alpha_tally(
    H_n: SparseOperator,
    H0: SparseOperator,
    f: SpectralFunction,
    family: SubspaceFamily,
    n: int,
    L: float,
    method: str = "dense",
    cap: int = DEFAULT_DENSE_CAP,
) -> dict:
    """Per-cube traces ``h^d tr{chi_{C_k}(f(H_n) - f(H0))}`` for cubes inside ``A_L``.

    Keys are ``(j, i)``: ``j`` the cube coordinates transverse to ``X_n``,
    ``i`` those along it.
    """
    if method != "dense":
        raise NotImplementedError("per-cube traces need the dense eigendecomposition")
    lattice = H_n.lattice
    ball = region_mask(lattice, family, "ball_A_L", L=L).as_bool()
    centers, cube_of = _cube_ids(lattice)
    if H_n is H0:
        diff = np.zeros(lattice.n_sites)
    else:
        diff = local_density(dense_eig(H_n, cap), f) - local_density(dense_eig(H0, cap), f)
    sums = np.bincount(cube_of, weights=diff * lattice.cell_volume, minlength=len(centers))
    outside = np.bincount(cube_of, weights=~ball, minlength=len(centers)) > 0
    along = family.along_mask(n)
    out = {}
    for c, s, bad in zip(centers, sums, outside):
        if not bad:
            out[(tuple(c[~along].tolist()), tuple(c[along].tolist()))] = float(s)
    return out


def alpha_profile(tally: dict, max_j: int) -> np.ndarray:
    """Mean ``|alpha_{j,i}|`` over ``i`` for each ``|j|_1 = 0..max_j`` (nan if no cube)."""
    acc = np.zeros(max_j + 1)
    cnt = np.zeros(max_j + 1)
    for (j, _), a in tally.items():
        r = sum(abs(x) for x in j)
        if r <= max_j:
            acc[r] += abs(a)
            cnt[r] += 1
    with np.errstate(invalid="ignore"):
        return acc / cnt


def localization_residual(
    H: SparseOperator,
    H_n: SparseOperator,
    f: SpectralFunction,
    L: float,
    n: int,
    alpha: float,
    family: SubspaceFamily,
    method: str = "dense",
    *,
    plan: KPMPlan | None = None,
    probe_seed: int = 0,
    margin: float = 0.0,
    cap: int = DEFAULT_DENSE_CAP,
) -> float:
    """``|h^d tr{chi_{A_{L,n}}(f(H) - f(H_n))}| / (mu_{d_1} L^{d_1})``."""
    slab = region_mask(H.lattice, family, "slab_A_Ln", L=L, n=n, alpha=alpha, margin=margin)
    value, _ = _coupled_trace(H, H_n, f, slab, method, plan, probe_seed, cap)
    return abs(value) / _normalizer(L, family.top_dim)


def decomposition_residual(
    H: SparseOperator,
    H_ns: dict,
    H0: SparseOperator,
    f: SpectralFunction,
    L: float,
    alpha: float,
    family: SubspaceFamily,
    method: str = "dense",
    *,
    use_ball: bool = False,
    plan: KPMPlan | None = None,
    probe_seed: int = 0,
    margin: float = 0.0,
    cap: int = DEFAULT_DENSE_CAP,
) -> float:
    """``|nu_s^L - sum_n h^d tr{chi_{A_{L,n}}(f(H_n) - f(H0))} / (mu_{d_1} L^{d_1})|``.

    ``use_ball`` replaces every slab by the full ball.
    """
    lattice = H.lattice
    norm = _normalizer(L, family.top_dim)
    ball = region_mask(lattice, family, "ball_A_L", L=L, margin=margin)
    total, _ = _coupled_trace(H, H0, f, ball, method, plan, probe_seed, cap)
    parts = 0.0
    for n in sorted(H_ns):
        mask = ball if use_ball else region_mask(
            lattice, family, "slab_A_Ln", L=L, n=n, alpha=alpha, margin=margin
        )
        v, _ = _coupled_trace(H_ns[n], H0, f, mask, method, plan, probe_seed, cap)
        parts += v
    return abs(total - parts) / norm


# ---------------------------------------------------------------------------
# positivity


def find_gaps(values: np.ndarray, min_width: float) -> list[tuple[float, float]]:
    """Open intervals between consecutive eigenvalues at least ``min_width`` wide."""
    v = np.sort(np.asarray(values))
    gaps = np.diff(v)
    return [(float(v[i]), float(v[i + 1])) for i in np.flatnonzero(gaps >= min_width)]


def positivity_check(
    H: SparseOperator,
    H0: SparseOperator,
    f_gap: SpectralFunction,
    L: float,
    family: SubspaceFamily,
    method: str = "dense",
    *,
    plan: KPMPlan | None = None,
    seed: int | None = None,
    probe_seed: int = 0,
    tol: float = 1e-8,
    min_gap: float = 0.5,
    margin: float = 0.0,
    cap: int = DEFAULT_DENSE_CAP,
) -> StudyReport:
    """Sign of ``nu_s^L(f_gap)`` for a nonnegative ``f_gap`` inside a gap of ``H0``.

    The gap is read off the dense spectrum of ``H0``; the nominal support
    of ``f_gap`` must stay ``2 * f_gap.scale`` away from both gap edges.
    Without such a gap the check is reported as inapplicable.
    """
    rep = StudyReport("positivity")
    if not f_gap.nonnegative:
        raise ValueError(f"{f_gap.describe()} is not nonnegative")
    a, b = f_gap.nominal_support
    clear = 2 * f_gap.scale
    gaps = find_gaps(dense_eig(H0, cap).values, min_gap)
    host = [g for g in gaps if g[0] < a - clear and b + clear < g[1]]
    rep.stats.update({"L": L, "gaps": gaps, "support": (a, b), "clearance": clear})
    if not host:
        rep.checks[f"L={L:g}.nu_nonnegative"] = None
        rep.notes.append(f"L={L:g}: no spectral gap of H0 holds {f_gap.describe()}; check inapplicable")
        return rep
    rep.stats["gap"] = host[0]
    nu = nu_s_L(H, H0, f_gap, L, family, method, plan=plan, seed=seed, probe_seed=probe_seed, margin=margin, cap=cap)
    rep.add(nu)
    ball = region_mask(H.lattice, family, "ball_A_L", L=L, margin=margin)
    if method == "dense":
        raw = float(np.sum(local_density(dense_eig(H, cap), f_gap)[ball.indices])) * ball.cell_volume
        raw_err = None
        nu_tol = raw_tol = tol
    else:
        from .spectral import kpm_masked_trace

        raw, raw_err = kpm_masked_trace(H, f_gap, ball, plan or KPMPlan(), seed=probe_seed, continuum=True)
        nu_tol = 3 * (nu.stderr or 0.0)
        raw_tol = 3 * raw_err
    rep.add_row(kind="trace_f_H", L=L, seed=seed, method=method, value=raw, stderr=raw_err)
    rep.stats.update({"nu": nu.value, "trace": raw})
    rep.checks[f"L={L:g}.nu_nonnegative"] = bool(nu.value >= -nu_tol)
    rep.checks[f"L={L:g}.trace_nonnegative"] = bool(raw >= -raw_tol)
    return rep


# ---------------------------------------------------------------------------
# studies over (L, seed)


def _ladder_ok(ladder) -> list:
    ladder = sorted(float(L) for L in ladder)
    if len(ladder) < 2:
        raise ValueError("an L-ladder needs at least two sizes")
    return ladder


def self_averaging_study(
    model: SurfaceModel,
    f: SpectralFunction,
    ladder,
    seeds,
    method: str = "dense",
    *,
    plan: KPMPlan | None = None,
    threads: int = 1,
    min_seeds: int = 8,
    cap: int = DEFAULT_DENSE_CAP,
) -> StudyReport:
    """``nu_s^L(f)`` over an L-ladder and a seed list.

    Checks that the across-seed variance shrinks from the smallest to the
    largest ``L`` and that successive differences of the seed means shrink.
    """
    ladder = _ladder_ok(ladder)
    seeds = [int(s) for s in seeds]
    if len(seeds) < min_seeds:
        raise ValueError(f"self-averaging needs at least {min_seeds} seeds, got {len(seeds)}")

    def task(ls):
        L, s = ls
        ops = model.realize(L, s)
        return nu_s_L(ops.H, ops.H0, f, L, model.family, method, plan=plan, seed=s, margin=model.margin, cap=cap)

    ests = fan_out(task, [(L, s) for L in ladder for s in seeds], threads)
    rep = StudyReport("self_averaging")
    for e in ests:
        rep.add(e)
    vals = np.array([e.value for e in ests]).reshape(len(ladder), len(seeds))
    means = vals.mean(axis=1)
    var = vals.var(axis=1, ddof=1)
    cauchy = np.abs(np.diff(means))
    rep.stats.update(
        {
            "L": ladder,
            "mean": means.tolist(),
            "variance": var.tolist(),
            "cauchy": cauchy.tolist(),
            "estimate": float(means[-1]),
        }
    )
    if model.zero_disorder:
        rep.checks["variance_shrinks"] = None
        rep.notes.append("zero disorder: variance ratio not assessed")
    else:
        rep.stats["variance_ratio"] = float(var[-1] / var[0]) if var[0] > 0 else math.inf
        rep.checks["variance_shrinks"] = bool(var[-1] < var[0])
    if len(ladder) >= 3 and not model.zero_disorder:
        rep.checks["cauchy_shrinks"] = bool(all(cauchy[i + 1] < cauchy[i] for i in range(len(cauchy) - 1)))
    for e in ests:
        if e.inconclusive:
            rep.notes.append(f"L={e.L:g} seed={e.seed}: kpm estimate inconclusive")
    return rep


def crossing_study(
    model: SurfaceModel,
    f: SpectralFunction,
    ladder,
    seeds,
    alpha: float = 0.2,
    method: str = "dense",
    *,
    plan: KPMPlan | None = None,
    threads: int = 1,
    cap: int = DEFAULT_DENSE_CAP,
) -> StudyReport:
    """Localization and decomposition residuals over an L-ladder.

    Checks use the seed mean of each residual: localization residuals must
    decrease strictly along the ladder for every ``n``; the decomposition
    residual at the largest ``L`` must lie below the one at the smallest.
    """
    ladder = _ladder_ok(ladder)
    seeds = [int(s) for s in seeds]
    family = model.family
    ns = list(range(1, family.n_subspaces + 1))

    def task(ls):
        L, s = ls
        ops = model.realize(L, s, alpha=alpha)
        loc = {
            n: localization_residual(ops.H, ops.H_n(n), f, L, n, alpha, family, method, plan=plan, cap=cap)
            for n in ns
        }
        dec = decomposition_residual(ops.H, ops.subsystem_ops, ops.H0, f, L, alpha, family, method, plan=plan, cap=cap)
        return loc, dec

    results = fan_out(task, [(L, s) for L in ladder for s in seeds], threads)
    rep = StudyReport("crossing")
    it = iter(results)
    loc_mean = {n: [] for n in ns}
    dec_mean = []
    for L in ladder:
        per = [next(it) for _ in seeds]
        for s, (loc, dec) in zip(seeds, per):
            for n in ns:
                rep.add_row(kind="localization", n=n, L=L, alpha=alpha, seed=s, method=method, value=loc[n])
            rep.add_row(kind="decomposition", L=L, alpha=alpha, seed=s, method=method, value=dec)
        for n in ns:
            loc_mean[n].append(float(np.mean([p[0][n] for p in per])))
        dec_mean.append(float(np.mean([p[1] for p in per])))
    rep.stats.update({"L": ladder, "localization_mean": loc_mean, "decomposition_mean": dec_mean})
    for n in ns:
        m = loc_mean[n]
        rep.checks[f"localization_decreasing.n={n}"] = bool(all(m[i + 1] < m[i] for i in range(len(m) - 1)))
    rep.checks["decomposition_shrinks"] = bool(dec_mean[-1] < dec_mean[0])
    return rep


def alpha_decay_study(
    model: SurfaceModel,
    f: SpectralFunction,
    L: float,
    seeds,
    n: int = 1,
    max_j: int = 6,
    bound_factor: float = 4.0,
    *,
    threads: int = 1,
    cap: int = DEFAULT_DENSE_CAP,
) -> StudyReport:
    """Seed-averaged per-cube traces as a function of transverse distance.

    With ``p = 2 (d - d_n)``, checks that ``mean|alpha|`` decreases strictly in
    ``|j|`` and that ``max_j mean|alpha_j| (1 + |j|^p) <= bound_factor mean|alpha_0|``.
    """
    seeds = [int(s) for s in seeds]
    family = model.family
    power = 2 * (model.d - family.dim(n))

    def task(s):
        ops = model.realize(L, s)
        return alpha_tally(ops.H_n(n), ops.H0, f, family, n, L, cap=cap)

    tallies = fan_out(task, seeds, threads)
    rep = StudyReport("alpha_decay")
    for s, tally in zip(seeds, tallies):
        for (j, i), a in sorted(tally.items()):
            kind = "alpha(" + " ".join(map(str, j)) + ";" + " ".join(map(str, i)) + ")"
            rep.add_row(kind=kind, n=n, L=L, seed=s, method="dense", value=a)
    profile = np.mean([alpha_profile(t, max_j) for t in tallies], axis=0)
    for r, p in enumerate(profile):
        rep.add_row(kind=f"alpha_profile({r})", n=n, L=L, method="dense", value=float(p))
    weighted = profile * (1 + np.arange(max_j + 1) ** power)
    ratio = float(np.nanmax(weighted) / profile[0]) if profile[0] > 0 else math.nan
    rep.stats.update(
        {"L": L, "n": n, "power": power, "profile": profile.tolist(), "weighted": weighted.tolist(), "bound_ratio": ratio}
    )
    if model.zero_disorder:
        rep.checks["profile_decreasing"] = None
        rep.checks["weighted_bounded"] = None
        rep.notes.append("zero disorder: all per-cube traces vanish")
        return rep
    if np.any(np.isnan(profile)):
        raise ValueError(f"no cube inside A_L at some |j| <= {max_j}; enlarge L")
    rep.checks["profile_decreasing"] = bool(np.all(np.diff(profile) < 0))
    rep.checks["weighted_bounded"] = bool(ratio <= bound_factor)
    return rep


def crosscheck_study(
    model: SurfaceModel,
    functions,
    L: float,
    seed: int,
    plan: KPMPlan,
    *,
    probe_seed: int = 0,
    rel_tol: float = 0.02,
    n_sigma: float = 3.0,
    cap: int = DEFAULT_DENSE_CAP,
) -> StudyReport:
    """KPM masked trace of ``f(H)`` on ``A_L`` against the dense oracle."""
    from .spectral import kpm_masked_trace, masked_trace_dense

    ops = model.realize(L, seed)
    H = ops.H
    mask = region_mask(H.lattice, model.family, "ball_A_L", L=L, margin=model.margin)
    eig = dense_eig(H, cap)
    rep = StudyReport("crosscheck")
    rep.stats.update({"N": H.dim, "mask_sites": len(mask), "degree": plan.degree, "probes": plan.probes})
    for idx, f in enumerate(functions):
        exact = masked_trace_dense(eig, f, mask, continuum=True)
        est, err = kpm_masked_trace(H, f, mask, plan, seed=probe_seed + idx, continuum=True)
        tol = max(rel_tol * abs(exact), n_sigma * err)
        rep.add_row(kind=f"dense:{f.describe()}", L=L, seed=seed, method="dense", value=exact)
        rep.add_row(kind=f"kpm:{f.describe()}", L=L, seed=seed, method="kpm", value=est, stderr=err)
        rep.stats[f.describe()] = {"dense": exact, "kpm": est, "stderr": err, "delta": est - exact, "tol": tol}
        rep.checks[f"match.{f.describe()}"] = bool(abs(est - exact) <= tol)
    return rep


# ---------------------------------------------------------------------------
# heat-kernel decay


def fit_power_exponent(dist, norms) -> float:
    """``-slope`` of the least-squares line through ``(log dist, log norm)``."""
    x = np.log(np.asarray(dist, dtype=float))
    y = np.log(np.asarray(norms, dtype=float))
    if np.any(~np.isfinite(y)):
        return math.nan
    return float(-np.polyfit(x, y, 1)[0])


def _strictly_decreasing(v) -> bool:
    v = np.asarray(v)
    return bool(v.size > 1 and np.all(np.diff(v) < 0) and np.all(v > 0))


def _cube_mask(lattice, k) -> RegionMask:
    return region_mask(lattice, None, "cube_C_k", k=k)


def lemma_checks(
    model: SurfaceModel,
    R: int,
    seed: int,
    times=(0.25, 0.5, 1.0),
    separations=range(1, 11),
    exponent_floor: float = 4.0,
    f: SpectralFunction | None = None,
    ball_radii=(),
    name: str = "lemmas",
    cap: int = DEFAULT_DENSE_CAP,
) -> StudyReport:
    """Off-diagonal decay of heat-kernel blocks on one box of radius ``R``.

    For both ``H0`` (free instance) and ``H`` (disordered instance), and each
    ``t``:

    * Schatten-2 and Schatten-1 norms of ``chi_{C_0} e^{-tH} chi_{C_k}``
      with ``k = s e_1`` must decrease strictly in ``s`` and their fitted
      power-law exponent must exceed ``exponent_floor``;
    * ``||chi_{C_0} e^{-tH} chi_{|x| >= s}||_1`` is reported with the same test;
    * ``||chi_{C_k}(e^{-tH} - e^{-tH0})||_1`` with ``k`` moved away from every
      ``X_n`` must decrease strictly in ``L_k = dist(k, U X_n) + 1``.

    ``ball_radii`` adds the ratio ``||chi_{A_r} f(H)||_1 / mu(A_r)`` (reported only).
    """
    from .lattice import LatticeSpec

    lattice = LatticeSpec(model.d, model.h, R, model.bc, model.metric)
    ops = model.realize(0, seed, lattice=lattice)
    family = model.family
    seps = [int(s) for s in separations]
    if max(seps) * model.h > lattice.extent:
        raise ValueError("separations exceed the box")
    d = model.d
    e1 = np.zeros(d, dtype=int)
    e1[0] = 1
    origin = _cube_mask(lattice, np.zeros(d))
    box = build_box(lattice)
    radius = np.sqrt(np.sum(box.positions**2, axis=1))
    rep = StudyReport(name)
    instances = [("free", ops.H0)]
    if not model.zero_disorder:
        instances.append(("disordered", ops.H))
    # direction pointing away from every subspace: the unit vector on the
    # coordinate contained in the fewest subspaces
    counts = [sum(j in family.coords(n) for n in range(1, family.n_subspaces + 1)) for j in range(1, d + 1)]
    away = int(np.argmin(counts))
    for label, H in instances:
        for t in times:
            key = f"{label}.t={t:g}"
            base = heat_block(H, None, t, origin, origin, cap)
            rep.add_row(kind=f"B2_zero_sep:{key}", L=0, seed=seed, method="dense", value=schatten_norm(base, 2))
            b2, b1, tail = [], [], []
            for s in seps:
                blk = heat_block(H, None, t, origin, _cube_mask(lattice, s * e1), cap)
                b2.append(schatten_norm(blk, 2))
                b1.append(schatten_norm(blk, 1))
                outside = np.flatnonzero(radius >= s * model.h - 1e-12)
                tail.append(schatten_norm(heat_block(H, None, t, origin, outside, cap), 1))
            for s, v2, v1, vt in zip(seps, b2, b1, tail):
                rep.add_row(kind=f"B2:{key}", L=s, seed=seed, method="dense", value=v2)
                rep.add_row(kind=f"B1:{key}", L=s, seed=seed, method="dense", value=v1)
                rep.add_row(kind=f"tail_B1:{key}", L=s, seed=seed, method="dense", value=vt)
            ex2, ex1, ext = (fit_power_exponent(seps, v) for v in (b2, b1, tail))
            rep.stats[key] = {"B2_exponent": ex2, "B1_exponent": ex1, "tail_exponent": ext}
            rep.checks[f"{key}.B2_decreasing"] = _strictly_decreasing(b2)
            rep.checks[f"{key}.B1_decreasing"] = _strictly_decreasing(b1)
            rep.checks[f"{key}.B2_exponent"] = bool(ex2 > exponent_floor)
            rep.checks[f"{key}.B1_exponent"] = bool(ex1 > exponent_floor)
            rep.checks[f"{key}.tail_decreasing"] = _strictly_decreasing(tail)
            rep.checks[f"{key}.tail_exponent"] = bool(ext > exponent_floor)
    if not model.zero_disorder:
        H, H0 = ops.H, ops.H0
        for t in times:
            key = f"difference.t={t:g}"
            vals, Lks = [], []
            for s in seps:
                k = np.zeros(d)
                k[away] = s
                rows = _cube_mask(lattice, k)
                Lk = _distance_to_subspaces(family, k) + 1
                Lks.append(Lk)
                vals.append(schatten_norm(heat_block(H, H0, t, rows, None, cap), 1))
            for Lk, v in zip(Lks, vals):
                rep.add_row(kind=f"B1_diff:{key}", L=Lk, seed=seed, method="dense", value=v)
            rep.stats[key] = {"L_k": Lks, "exponent": fit_power_exponent(Lks, vals)}
            rep.checks[f"{key}.decreasing"] = _strictly_decreasing(vals) and bool(np.all(np.diff(Lks) > 0))
    if f is not None and ball_radii:
        eig = dense_eig(ops.H, cap)
        ratios = []
        for r in ball_radii:
            m = region_mask(lattice, family, "ball_A_L", L=r)
            ratio = row_block_norm(eig, f, m, 1) / m.mu
            ratios.append(ratio)
            rep.add_row(kind=f"B1_per_cube:{f.describe()}", L=r, seed=seed, method="dense", value=ratio)
        rep.stats["B1_per_cube"] = {"radii": list(ball_radii), "ratio": ratios, "fitted_bound": max(ratios)}
    return rep


def _distance_to_subspaces(family: SubspaceFamily, x) -> float:
    x = np.asarray(x, dtype=float)
    best = math.inf
    for n in range(1, family.n_subspaces + 1):
        perp = x * ~family.along_mask(n)
        best = min(best, float(np.sqrt(np.sum(perp**2))))
    return best
