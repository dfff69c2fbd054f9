import math

import numpy as np
import pytest

from surfdos import sds
from surfdos.disorder import BackgroundSpec, RandomFieldSpec
from surfdos.lattice import SubspaceFamily, region_mask
from surfdos.model import SurfaceModel
from surfdos.spectral import KPMPlan, SpectralFunction, dense_eig, masked_trace_dense

SF = SpectralFunction
BUMP = SF.gaussian_bump(4.0, 0.8)
LINE = SubspaceFamily(2, [(1,)])
CROSS = SubspaceFamily(2, [(1,), (2,)])


def line_model(coupling=1.0, **kw):
    return SurfaceModel(2, LINE, (RandomFieldSpec(1, 2.0, coupling=coupling),), **kw)


def cross_model(coupling=1.0, kappa=2.0):
    fields = (RandomFieldSpec(1, 2.0, kappa=kappa, coupling=coupling), RandomFieldSpec(2, 2.0, kappa=kappa, coupling=coupling))
    return SurfaceModel(2, CROSS, fields)


# --- model plumbing ---------------------------------------------------------


def test_operator_set_shares_realization():
    ops = cross_model().realize(6, seed=4)
    d = ops.H.diagonal - ops.H_n(1).diagonal
    assert np.allclose(d, ops.fields[2].values, atol=1e-13)
    assert ops.H_n(1) is ops.subsystem_ops[1]
    assert ops.lattice.R == 10


def test_zero_coupling_collapses_to_background():
    ops = cross_model(coupling=0.0).realize(6, seed=4)
    assert ops.H is ops.H0 and ops.H_n(2) is ops.H0


def test_single_subsystem_h_is_h1():
    ops = line_model().realize(6, seed=1)
    assert ops.H is ops.H_n(1)


def test_model_rejects_bad_fields():
    with pytest.raises(ValueError):
        SurfaceModel(2, LINE, (RandomFieldSpec(2),))
    with pytest.raises(ValueError):
        SurfaceModel(2, CROSS, (RandomFieldSpec(1), RandomFieldSpec(1)))


def test_radius_includes_slab_buffer():
    m = line_model(buffer=1.0)
    assert m.radius_for(10) == 11
    assert m.radius_for(10, alpha=0.2) == math.ceil(10 + 2 * 10**0.2)


# --- single estimates -------------------------------------------------------


def test_nu_zero_disorder_and_zero_function():
    ops = line_model(coupling=0.0).realize(6, 0)
    assert sds.nu_s_L(ops.H, ops.H0, BUMP, 6, LINE).value == 0.0
    ops = line_model().realize(6, 0)
    assert sds.nu_s_L(ops.H, ops.H0, SF.constant(0.0), 6, LINE).value == 0.0


def test_estimate_metadata():
    ops = line_model().realize(6, 3)
    e = sds.nu_s_L(ops.H, ops.H0, BUMP, 6, LINE, seed=3)
    assert e.method == "dense" and e.stderr is None and e.kind == "nu_s_L" and e.seed == 3
    assert e.h == 1.0 and e.bc == "dirichlet"
    with pytest.raises(ValueError):
        sds.SDSEstimate(1.0, "nu_s_L", 6, "f", method="dense", stderr=0.1)


def test_nu_normalization_and_coupled_difference():
    ops = line_model().realize(6, 3)
    e = sds.nu_s_L(ops.H, ops.H0, BUMP, 6, LINE)
    m = region_mask(ops.lattice, LINE, "ball_A_L", L=6)
    separate = masked_trace_dense(dense_eig(ops.H), BUMP, m, continuum=True) - masked_trace_dense(
        dense_eig(ops.H0), BUMP, m, continuum=True
    )
    assert abs(e.value - separate / (2 * 6)) <= 1e-10 * max(1.0, abs(e.value))


def test_nu_linear_in_f():
    ops = line_model().realize(6, 5)
    g = SF.exp_decay(0.4)
    combo = SF.combine((3.0, BUMP), (-2.0, g))
    a = sds.nu_s_L(ops.H, ops.H0, combo, 6, LINE).value
    b = 3 * sds.nu_s_L(ops.H, ops.H0, BUMP, 6, LINE).value - 2 * sds.nu_s_L(ops.H, ops.H0, g, 6, LINE).value
    assert abs(a - b) <= 1e-10 * max(abs(a), abs(b))


def test_nu_kpm_agrees_with_dense():
    ops = line_model().realize(6, 2)
    dense = sds.nu_s_L(ops.H, ops.H0, BUMP, 6, LINE)
    kpm = sds.nu_s_L(ops.H, ops.H0, BUMP, 6, LINE, "kpm", plan=KPMPlan(degree=512, probes=64))
    assert kpm.method == "kpm" and kpm.stderr >= 0
    assert abs(kpm.value - dense.value) <= max(4 * kpm.stderr, 0.05 * abs(dense.value))


def test_kpm_inconclusive_flag():
    ops = line_model().realize(6, 2)
    e = sds.nu_s_L(ops.H, ops.H0, BUMP, 6, LINE, "kpm", plan=KPMPlan(degree=32, probes=2))
    assert e.inconclusive == (e.stderr > abs(e.value))


def test_box_overflow_rejected():
    ops = line_model().realize(6, 2)
    with pytest.raises(ValueError):
        sds.nu_s_L(ops.H, ops.H0, BUMP, 20, LINE)


def test_single_subsystem_nu_equals_nu1():
    ops = line_model().realize(8, 6)
    a = sds.nu_s_L(ops.H, ops.H0, BUMP, 8, LINE).value
    b = sds.nu_s_L_n(ops.H_n(1), ops.H0, BUMP, 8, 1, LINE).value
    assert a == b


def test_nu_n_zero_field():
    ops = cross_model(coupling=0.0).realize(6, 0)
    assert sds.nu_s_L_n(ops.H_n(2), ops.H0, BUMP, 6, 2, CROSS).value == 0.0


def test_lower_dimensional_term_vanishes_relative_to_surface():
    # X_2 is the origin: its contribution per unit surface dies like 1/L
    fam = SubspaceFamily(2, [(1,), ()])
    model = SurfaceModel(2, fam, (RandomFieldSpec(1, 2.0), RandomFieldSpec(2, 2.0)))
    rel, top = [], []
    for L in (4, 8, 12):
        vals2, vals1 = [], []
        for s in range(4):
            ops = model.realize(L, s)
            e2 = sds.nu_s_L_n(ops.H_n(2), ops.H0, BUMP, L, 2, fam)
            assert "experimental: zero-dimensional surface" in e2.flags
            vals2.append(e2.value)
            vals1.append(sds.nu_s_L_n(ops.H_n(1), ops.H0, BUMP, L, 1, fam).value)
        rel.append(abs(np.mean(vals2)) * L**0 / (2 * L))
        top.append(np.mean(vals1))
    assert rel[2] < rel[0]
    assert abs(top[2] - top[1]) < abs(top[0]) + 1e-12


def test_alpha_tally_examples():
    model = line_model()
    ops = model.realize(6, 1)
    zero = sds.alpha_tally(ops.H0, ops.H0, BUMP, LINE, 1, 6)
    assert zero and all(v == 0 for v in zero.values())
    tally = sds.alpha_tally(ops.H_n(1), ops.H0, BUMP, LINE, 1, 6)
    # additivity: sum over cubes equals the trace over their union
    lat = ops.lattice
    union = np.concatenate(
        [region_mask(lat, None, "cube_C_k", k=(i[0], j[0])).indices for (j, i) in tally]
    )
    diff = masked_trace_dense(dense_eig(ops.H_n(1)), BUMP, union) - masked_trace_dense(dense_eig(ops.H0), BUMP, union)
    assert sum(tally.values()) == pytest.approx(diff, rel=1e-10)
    with pytest.raises(NotImplementedError):
        sds.alpha_tally(ops.H_n(1), ops.H0, BUMP, LINE, 1, 6, method="kpm")


def test_alpha_profile():
    tally = {((0,), (0,)): 1.0, ((0,), (1,)): -3.0, ((1,), (0,)): 0.5, ((-2,), (0,)): 0.1}
    prof = sds.alpha_profile(tally, 3)
    assert prof[:3].tolist() == [2.0, 0.5, 0.1] and math.isnan(prof[3])


def test_localization_residual_examples():
    ops = line_model().realize(8, 2)
    assert sds.localization_residual(ops.H, ops.H_n(1), BUMP, 8, 1, 0.2, LINE) == 0.0
    ops = cross_model().realize(8, 2)
    assert sds.localization_residual(ops.H, ops.H_n(1), SF.constant(0.0), 8, 1, 0.2, CROSS) == 0.0
    assert sds.localization_residual(ops.H, ops.H_n(1), BUMP, 8, 1, 0.2, CROSS) > 0


def test_decomposition_residual_examples():
    ops = line_model().realize(8, 2)
    r = sds.decomposition_residual(ops.H, ops.subsystem_ops, ops.H0, BUMP, 8, 0.2, LINE, use_ball=True)
    assert r == 0.0
    ops = cross_model(coupling=0.0).realize(8, 2)
    assert sds.decomposition_residual(ops.H, ops.subsystem_ops, ops.H0, BUMP, 8, 0.2, CROSS) == 0.0


# --- positivity -------------------------------------------------------------

GAP_BUMP = SF.smooth_bump(0.5, 2.8)


def gapped_model():
    return line_model(background=BackgroundSpec("cosine", 6.0, 2.0))


def test_find_gaps():
    assert sds.find_gaps(np.array([0.0, 0.1, 2.0, 2.1]), 0.5) == [(0.1, 2.0)]


def test_positivity_zero_function_and_h_equals_h0():
    model = gapped_model()
    ops = model.realize(8, 0)
    zero = SF.combine((0.0, GAP_BUMP))
    rep = sds.positivity_check(ops.H, ops.H0, zero, 8, LINE)
    assert rep.stats["nu"] == 0.0 and rep.passed
    rep = sds.positivity_check(ops.H0, ops.H0, GAP_BUMP, 8, LINE)
    assert rep.stats["nu"] == 0.0 and rep.stats["trace"] == 0.0 and rep.passed


def test_positivity_in_gap():
    ops = gapped_model().realize(8, 0)
    rep = sds.positivity_check(ops.H, ops.H0, GAP_BUMP, 8, LINE)
    assert rep.checks["L=8.nu_nonnegative"] and rep.stats["nu"] > 0


def test_positivity_without_gap_is_inapplicable():
    ops = line_model().realize(8, 0)
    rep = sds.positivity_check(ops.H, ops.H0, GAP_BUMP, 8, LINE)
    assert rep.checks == {"L=8.nu_nonnegative": None} and rep.passed and rep.notes


def test_positivity_requires_nonnegative_function():
    ops = gapped_model().realize(8, 0)
    with pytest.raises(ValueError):
        sds.positivity_check(ops.H, ops.H0, SF.polynomial([1, -1]), 8, LINE)


# --- studies ----------------------------------------------------------------


def test_self_averaging_zero_disorder():
    rep = sds.self_averaging_study(line_model(coupling=0.0), BUMP, [4, 6], range(8))
    assert all(r["value"] == 0.0 for r in rep.rows)
    assert rep.stats["variance"] == [0.0, 0.0]
    assert rep.checks["variance_shrinks"] is None and rep.passed


def test_self_averaging_needs_seeds():
    with pytest.raises(ValueError):
        sds.self_averaging_study(line_model(), BUMP, [4, 6], range(4))


def test_duplicate_seeds_identical_and_thread_independent():
    seeds = [3] * 8
    rep = sds.self_averaging_study(line_model(), BUMP, [4, 6], seeds)
    vals = [r["value"] for r in rep.rows if r["L"] == 4]
    assert len(set(vals)) == 1
    rep2 = sds.self_averaging_study(line_model(), BUMP, [4, 6], seeds, threads=3)
    assert rep2.rows == rep.rows


def test_convergence_trend_in_L():
    model = line_model()
    means = {}
    for L in (5, 10, 20):
        means[L] = np.mean([sds.nu_s_L(*(lambda o: (o.H, o.H0))(model.realize(L, s)), BUMP, L, LINE).value for s in range(6)])
    assert abs(means[20] - means[10]) < abs(means[10] - means[5])


def test_crossing_study_small():
    rep = sds.crossing_study(cross_model(), SF.gaussian_bump(4.0, 1.2), [6, 10], [0, 1], 0.2)
    kinds = {r["kind"] for r in rep.rows}
    assert kinds == {"localization", "decomposition"}
    assert len(rep.rows) == 2 * 2 * 3


def test_lemma_checks_free_1d():
    model = SurfaceModel(1, SubspaceFamily(1, [()]), (RandomFieldSpec(1, 2.0, coupling=0.0),))
    rep = sds.lemma_checks(model, 20, seed=0, times=[0.5])
    base = [r for r in rep.rows if r["kind"].startswith("B2_zero_sep")]
    assert len(base) == 1 and 0 < base[0]["value"] <= 1.0
    assert rep.passed
    assert rep.stats["free.t=0.5"]["B2_exponent"] > 4
    assert not any(k.startswith("difference") for k in rep.checks)


def test_fit_power_exponent():
    s = np.arange(1, 8)
    assert sds.fit_power_exponent(s, 3.0 * s**-5.0) == pytest.approx(5.0)


def test_report_merge_and_pass():
    a = sds.StudyReport("a", checks={"x": True})
    b = sds.StudyReport("b", checks={"y": None, "z": False})
    a.merge(b)
    assert set(a.checks) == {"x", "b.y", "b.z"} and not a.passed


def test_fan_out_preserves_order():
    assert sds.fan_out(lambda x: x * x, range(10), threads=4) == [x * x for x in range(10)]
