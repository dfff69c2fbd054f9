"""End-to-end acceptance runs over the bundled configs.

Each criterion test logs one PASS/FAIL line (collected again in the terminal
summary) and then asserts.  Runs go through the CLI so the CSV and manifest
paths are exercised too; each (subcommand, config) pair is run once per session.
"""
import csv
import json
import re
import time
from importlib import resources

import pytest

from surfdos.cli import main

pytestmark = pytest.mark.slow


def bundled(name):
    return str(resources.files("surfdos") / "configs" / name)


class Runs:
    def __init__(self, root):
        self.root = root
        self.cache = {}

    def run(self, sub, config, tag="first"):
        key = (sub, config, tag)
        if key not in self.cache:
            out = self.root / f"{tag}-{config.removesuffix('.yaml')}-{sub}"
            start = time.perf_counter()
            code = main([sub, "--config", bundled(config), "--out", str(out), "--threads", "1"])
            wall = time.perf_counter() - start
            manifest = json.loads((out / f"{sub}.manifest.json").read_text())
            csv_path = out / f"{sub}.csv"
            rows = []
            if csv_path.exists():
                with open(csv_path, newline="") as fh:
                    rows = list(csv.DictReader(fh))
            self.cache[key] = dict(code=code, wall=wall, manifest=manifest, rows=rows, csv=csv_path)
        return self.cache[key]


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    return Runs(tmp_path_factory.mktemp("acceptance"))


def checks_with(manifest, *parts):
    return {k: v for k, v in manifest["checks"].items() if all(p in k for p in parts)}


def test_criterion_1_zero_disorder(runs, acceptance_log):
    a = runs.run("sds", "zero_disorder.yaml")
    b = runs.run("decay", "zero_disorder.yaml")
    rows = a["rows"] + b["rows"]
    kinds = {r["kind"].split("(")[0] for r in rows}
    worst = max(abs(float(r["value"])) for r in rows)
    wall = a["wall"] + b["wall"]
    ok = (
        {"nu_s_L", "nu_s_L_n", "alpha"} <= kinds
        and worst <= 1e-10
        and wall < 10
        and a["code"] == 0
        and b["code"] == 0
    )
    acceptance_log(1, "zero disorder gives zero estimates", ok, f"{len(rows)} values, max |value| {worst:.1e}, {wall:.1f}s")
    assert ok


def test_criterion_2_kpm_matches_dense(runs, acceptance_log):
    r = runs.run("crosscheck", "crosscheck.yaml")
    match = checks_with(r["manifest"], "match.")
    ok = len(match) == 3 and all(v is True for v in match.values()) and r["wall"] < 180
    stats = r["manifest"]["stats"]["crosscheck"]
    detail = ", ".join(f"{v['delta']:.2f}/{v['tol']:.2f}" for k, v in sorted(stats.items()) if isinstance(v, dict))
    acceptance_log(2, "KPM trace matches the dense oracle", ok, f"delta/tol {detail}; N={stats['N']}, {r['wall']:.0f}s")
    assert ok


def test_criterion_3_self_averaging(runs, acceptance_log):
    r = runs.run("converge", "self_averaging.yaml")
    c = r["manifest"]["checks"]
    stats = r["manifest"]["stats"]["self_averaging"]
    ok = c.get("self_averaging.variance_shrinks") is True and c.get("self_averaging.cauchy_shrinks") is True
    ok = ok and r["wall"] < 300
    acceptance_log(
        3, "variance and Cauchy differences shrink with L", ok,
        f"variance {['%.2e' % v for v in stats['variance']]}, cauchy {['%.2e' % v for v in stats['cauchy']]}, {r['wall']:.0f}s",
    )
    assert ok


def test_criterion_4_positivity_in_gap(runs, acceptance_log):
    r = runs.run("sds", "positivity.yaml")
    pos = checks_with(r["manifest"], "nu_nonnegative")
    Ls = {re.search(r"L=\d+", k).group() for k in pos}
    ok = Ls == {"L=8", "L=16"} and all(v is True for v in pos.values()) and r["wall"] < 120
    nus = [float(row["value"]) for row in r["rows"] if row["kind"] == "nu_s_L"]
    acceptance_log(4, "nonnegative surface measure in a spectral gap", ok, f"min nu {min(nus):.3e}, {r['wall']:.0f}s")
    assert ok


def test_criterion_5_localization(runs, acceptance_log):
    r = runs.run("converge", "crossing.yaml")
    loc = checks_with(r["manifest"], "localization_decreasing")
    ok = len(loc) == 2 and all(v is True for v in loc.values()) and r["wall"] < 180
    means = r["manifest"]["stats"]["crossing"]["localization_mean"]
    acceptance_log(5, "slab localization residual decreases in L", ok, f"means {means}, {r['wall']:.0f}s")
    assert ok


def test_criterion_6_decomposition(runs, acceptance_log):
    r = runs.run("converge", "crossing.yaml")
    ok = r["manifest"]["checks"].get("crossing.decomposition_shrinks") is True and r["wall"] < 120
    means = r["manifest"]["stats"]["crossing"]["decomposition_mean"]
    acceptance_log(6, "decomposition residual shrinks from L=6 to L=14", ok, f"means {means}")
    assert ok


def test_criterion_7_alpha_decay(runs, acceptance_log):
    r = runs.run("decay", "decay.yaml")
    c = r["manifest"]["checks"]
    ok = c.get("alpha_decay.profile_decreasing") is True and c.get("alpha_decay.weighted_bounded") is True
    ok = ok and r["wall"] < 240
    stats = r["manifest"]["stats"]["alpha_decay"]
    acceptance_log(7, "per-cube weights decay away from the surface", ok, f"bound ratio {stats['bound_ratio']:.2f}, {r['wall']:.0f}s")
    assert ok


def test_criterion_8_heat_kernel_decay(runs, acceptance_log):
    walls, failures, seen = 0.0, [], set()
    for cfg in ("lemmas_1d.yaml", "lemmas_2d.yaml"):
        r = runs.run("lemmas", cfg)
        walls += r["wall"]
        for name, v in r["manifest"]["checks"].items():
            if v is not True:
                failures.append(f"{cfg}:{name}")
            m = re.fullmatch(r"lemmas\.(\w+)\.(t=[\d.]+)\.(\w+)", name)
            if m:
                seen.add((cfg, *m.groups()))
    needed = {
        (cfg, inst, f"t={t}", check)
        for cfg in ("lemmas_1d.yaml", "lemmas_2d.yaml")
        for inst in ("free", "disordered")
        for t in ("0.25", "0.5", "1")
        for check in ("B2_decreasing", "B1_decreasing", "B2_exponent", "B1_exponent")
    } | {(cfg, "difference", f"t={t}", "decreasing") for cfg in ("lemmas_1d.yaml", "lemmas_2d.yaml") for t in ("0.25", "0.5", "1")}
    missing = needed - seen
    ok = not failures and not missing and walls < 180
    acceptance_log(8, "heat-kernel block norms decay", ok, f"{len(seen)} checks, {len(failures)} failed, {len(missing)} missing, {walls:.0f}s")
    assert ok


RERUNS = [
    ("sds", "zero_disorder.yaml"),
    ("decay", "zero_disorder.yaml"),
    ("crosscheck", "crosscheck.yaml"),
    ("converge", "self_averaging.yaml"),
    ("sds", "positivity.yaml"),
    ("converge", "crossing.yaml"),
    ("decay", "decay.yaml"),
    ("lemmas", "lemmas_1d.yaml"),
    ("lemmas", "lemmas_2d.yaml"),
]


def test_criterion_9_determinism(runs, acceptance_log):
    differing = []
    for sub, cfg in RERUNS:
        first = runs.run(sub, cfg)
        second = runs.run(sub, cfg, tag="rerun")
        if first["csv"].read_bytes() != second["csv"].read_bytes():
            differing.append(f"{cfg}:{sub}")
    ok = not differing
    acceptance_log(9, "reruns give byte-identical CSVs", ok, f"{len(RERUNS)} runs compared" + (f", differing {differing}" if differing else ""))
    assert ok
