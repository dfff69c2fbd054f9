"""Command-line entry point.

    surfdos {validate,spectrum,sds,converge,decay,lemmas,crosscheck} --config FILE [--out DIR]

Exit status: 0 when every check passed, 1 when a check failed, 2 for
config or usage errors.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import sds
from .config import ConfigError, ExperimentConfig, load_config
from .output import emit_outputs
from .spectral import dense_eig

log = logging.getLogger("surfdos")

SUBCOMMANDS = ("validate", "spectrum", "sds", "converge", "decay", "lemmas", "crosscheck")
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _function(cfg: ExperimentConfig, name):
    return cfg.function(name if name is not None else sorted(cfg.data["functions"])[0])


def run_spectrum(cfg, threads) -> sds.StudyReport:
    rep = sds.StudyReport("spectrum")
    st = cfg.studies.get("spectrum")
    if st is None:
        return rep
    model = cfg.model()
    L = float(st["L"]) if not isinstance(st["L"], list) else float(st["L"][0])
    seed = cfg.seed_at(int(st["seed_index"]))
    ops = model.realize(L, seed)
    spectra = {"H0": dense_eig(ops.H0, cfg.dense_cap).values, "H": dense_eig(ops.H, cfg.dense_cap).values}
    lo = min(v[0] for v in spectra.values())
    hi = max(v[-1] for v in spectra.values())
    edges = np.linspace(lo, hi, int(st["bins"]) + 1)
    for label, vals in spectra.items():
        for k, v in enumerate(vals):
            rep.add_row(kind=f"eigenvalue:{label}", n=k, L=L, seed=seed, method="dense", value=float(v))
        dos, _ = np.histogram(vals, bins=edges, density=True)
        for k, v in enumerate(dos):
            rep.add_row(kind=f"dos:{label}", n=k, L=L, seed=seed, method="dense", value=float(v))
    rep.stats.update({"N": ops.H.dim, "bin_edges": edges.tolist()})
    return rep


def run_sds(cfg, threads) -> sds.StudyReport:
    rep = sds.StudyReport("sds")
    model = cfg.model()
    method = cfg.method
    plan = cfg.kpm_plan() if method == "kpm" else None
    st = cfg.studies.get("sds")
    if st is not None:
        f = _function(cfg, st["function"])
        ladder = st["L"] if isinstance(st["L"], list) else [st["L"]]
        ns = range(1, model.family.n_subspaces + 1) if st["subsystems"] else ()

        def task(ls):
            L, s = ls
            ops = model.realize(L, s)
            kw = dict(plan=plan, seed=s, margin=model.margin, cap=cfg.dense_cap)
            out = [sds.nu_s_L(ops.H, ops.H0, f, L, model.family, method, **kw)]
            out += [sds.nu_s_L_n(ops.H_n(n), ops.H0, f, L, n, model.family, method, **kw) for n in ns]
            return out

        for ests in sds.fan_out(task, [(float(L), s) for L in ladder for s in cfg.seeds_for("sds")], threads):
            for e in ests:
                rep.add(e)
                if e.inconclusive:
                    rep.notes.append(f"{e.kind} n={e.n} L={e.L:g} seed={e.seed}: inconclusive")
    st = cfg.studies.get("positivity")
    if st is not None:
        f = _function(cfg, st["function"])
        ladder = st["L"] if isinstance(st["L"], list) else [st["L"]]
        for L in ladder:
            for s in cfg.seeds_for("positivity"):
                ops = model.realize(float(L), s)
                sub = sds.positivity_check(
                    ops.H, ops.H0, f, float(L), model.family, method,
                    plan=plan, seed=s, tol=float(st["tol"]), min_gap=float(st["min_gap"]),
                    margin=model.margin, cap=cfg.dense_cap,
                )
                rep.merge(sub, prefix=f"positivity.seed={s}")
    return rep


def run_converge(cfg, threads) -> sds.StudyReport:
    rep = sds.StudyReport("converge")
    model = cfg.model()
    method = cfg.method
    plan = cfg.kpm_plan() if method == "kpm" else None
    st = cfg.studies.get("self_averaging")
    if st is not None:
        sub = sds.self_averaging_study(
            model, _function(cfg, st["function"]), st["L"], cfg.seeds_for("self_averaging"), method,
            plan=plan, threads=threads, cap=cfg.dense_cap,
        )
        rep.merge(sub)
    st = cfg.studies.get("crossing")
    if st is not None:
        sub = sds.crossing_study(
            model, _function(cfg, st["function"]), st["L"], cfg.seeds_for("crossing"), float(st["alpha"]),
            method, plan=plan, threads=threads, cap=cfg.dense_cap,
        )
        rep.merge(sub)
    return rep


def run_decay(cfg, threads) -> sds.StudyReport:
    rep = sds.StudyReport("decay")
    st = cfg.studies.get("alpha_decay")
    if st is not None:
        L = st["L"][0] if isinstance(st["L"], list) else st["L"]
        sub = sds.alpha_decay_study(
            cfg.model(), _function(cfg, st["function"]), float(L), cfg.seeds_for("alpha_decay"),
            n=int(st["n"]), max_j=int(st["max_j"]), bound_factor=float(st["bound_factor"]),
            threads=threads, cap=cfg.dense_cap,
        )
        rep.merge(sub)
    return rep


def run_lemmas(cfg, threads) -> sds.StudyReport:
    rep = sds.StudyReport("lemmas")
    st = cfg.studies.get("lemmas")
    if st is not None:
        f = _function(cfg, st["function"]) if cfg.data["functions"] else None
        sub = sds.lemma_checks(
            cfg.model(), int(st["R"]), cfg.seed_at(int(st["seed_index"])),
            times=[float(t) for t in st["times"]], separations=st["separations"],
            exponent_floor=float(st["exponent_floor"]), f=f, ball_radii=[float(r) for r in st["ball_radii"]],
            cap=cfg.dense_cap,
        )
        rep.merge(sub)
    return rep


def run_crosscheck(cfg, threads) -> sds.StudyReport:
    rep = sds.StudyReport("crosscheck")
    st = cfg.studies.get("crosscheck")
    if st is not None:
        L = st["L"][0] if isinstance(st["L"], list) else st["L"]
        plan = cfg.kpm_plan(degree=int(st["degree"]), probes=int(st["probes"]))
        sub = sds.crosscheck_study(
            cfg.model(), [cfg.function(n) for n in st["functions"]], float(L), cfg.seed_at(int(st["seed_index"])),
            plan, probe_seed=cfg.seed, rel_tol=float(st["rel_tol"]), n_sigma=float(st["n_sigma"]),
            cap=cfg.dense_cap,
        )
        rep.merge(sub)
    return rep


RUNNERS = {
    "spectrum": run_spectrum,
    "sds": run_sds,
    "converge": run_converge,
    "decay": run_decay,
    "lemmas": run_lemmas,
    "crosscheck": run_crosscheck,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="surfdos", description="Surface density of states experiments.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="experiment config (YAML)")
    p.add_argument("--out", help="output directory (default: config 'output' or ./out/<name>)")
    p.add_argument("--threads", type=int, help="worker threads (default: config value or logical cores)")
    p.add_argument("--seed-override", type=int, help="replace the config master seed")
    p.add_argument("--plot", choices=("on", "off"), default="off")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed_override is not None:
            if not 0 <= args.seed_override < 2**64:
                raise ConfigError("--seed-override must be an unsigned 64-bit integer")
            cfg = cfg.with_seed(args.seed_override)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    echo = cfg.dump()
    if args.subcommand == "validate":
        sys.stdout.write(echo)
        return EXIT_OK
    threads = args.threads if args.threads is not None else (cfg.threads or os.cpu_count() or 1)
    if threads < 1:
        print("--threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out or cfg.output or Path("out") / cfg.name)
    start = time.perf_counter()
    try:
        report = RUNNERS[args.subcommand](cfg, threads)
    except (ConfigError, ValueError, MemoryError) as exc:
        print(f"{args.subcommand}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    wall = time.perf_counter() - start
    try:
        files = emit_outputs(report, out, args.subcommand, echo, wall, plot=args.plot == "on")
    except OSError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    for name, ok in report.checks.items():
        status = "n/a " if ok is None else ("PASS" if ok else "FAIL")
        print(f"{status} {name}")
    for note in report.notes:
        log.info(note)
    log.info("wrote %s", ", ".join(files.values()))
    return EXIT_OK if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
