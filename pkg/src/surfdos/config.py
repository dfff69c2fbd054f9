"""Experiment configuration files (YAML) and their validation.

A config describes one model, a catalogue of named spectral functions and
any number of study sections.  :func:`load_config` checks every
cross-field constraint before anything is computed; :meth:`ExperimentConfig.dump`
emits the canonical form that is echoed into output manifests.
"""
from __future__ import annotations

import copy
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .disorder import BackgroundSpec, RandomFieldSpec
from .lattice import BOUNDARY_CONDITIONS, DEFAULT_DENSE_CAP, SubspaceFamily
from .model import SurfaceModel
from .spectral import KPMPlan, SpectralFunction

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "realization_seeds"]


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configs."""


_LATTICE_DEFAULTS = {
    "d": None,
    "h": 1.0,
    "bc": "dirichlet",
    "metric": None,
    "buffer": 4.0,
    "margin": 0.0,
    "energy_shift": 0.0,
    "dense_cap": DEFAULT_DENSE_CAP,
}
_FIELD_DEFAULTS = {
    "n": None,
    "amplitude": 1.0,
    "distribution": "uniform",
    "envelope": "exp",
    "kappa": 1.0,
    "gamma": 4.0,
    "coupling": 1.0,
}
_BACKGROUND_DEFAULTS = {"kind": "none", "amplitude": 0.0, "period": 2.0}
_KPM_DEFAULTS = {"degree": 256, "probes": 16, "damping": "jackson", "probe_kind": "rademacher"}

_STUDY_DEFAULTS = {
    "spectrum": {"L": None, "seed_index": 0, "bins": 64},
    "sds": {"L": None, "seeds": 1, "function": None, "subsystems": True},
    "positivity": {"L": None, "seeds": 1, "function": None, "min_gap": 0.5, "tol": 1e-8},
    "self_averaging": {"L": None, "seeds": 8, "function": None},
    "crossing": {"L": None, "seeds": 1, "function": None, "alpha": 0.2},
    "alpha_decay": {"L": None, "seeds": 16, "function": None, "n": 1, "max_j": 6, "bound_factor": 4.0},
    "lemmas": {
        "R": None,
        "seed_index": 0,
        "times": [0.25, 0.5, 1.0],
        "separations": list(range(1, 11)),
        "exponent_floor": 4.0,
        "function": None,
        "ball_radii": [],
    },
    "crosscheck": {
        "L": None,
        "seed_index": 0,
        "functions": None,
        "degree": 2000,
        "probes": 64,
        "rel_tol": 0.02,
        "n_sigma": 3.0,
    },
}
_OPTIONAL = {"function", "metric"}


def _section(raw, defaults: dict, where: str) -> dict:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(raw).__name__}")
    extra = sorted(set(raw) - set(defaults))
    if extra:
        raise ConfigError(f"{where}: unknown keys {extra}")
    out = copy.deepcopy(defaults)
    out.update(copy.deepcopy(raw))
    missing = [k for k, v in out.items() if v is None and k not in _OPTIONAL]
    if missing:
        raise ConfigError(f"{where}: missing required keys {missing}")
    return out


def _ladder(value, where: str) -> list[float]:
    vals = value if isinstance(value, list) else [value]
    try:
        vals = [float(v) for v in vals]
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: L must be a number or a list of numbers") from None
    if not vals or any(v <= 0 for v in vals):
        raise ConfigError(f"{where}: L values must be positive")
    return vals


def realization_seeds(master: int, spec) -> list[int]:
    """Realization seeds for a study.

    An integer count derives that many 64-bit seeds from the master seed;
    an explicit list is used as given.
    """
    if isinstance(spec, list):
        return [int(s) for s in spec]
    count = int(spec)
    if count < 1:
        return []
    words = np.random.SeedSequence(int(master)).generate_state(count, dtype=np.uint64)
    return [int(w) for w in words]


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, normalized experiment description."""

    data: dict

    # access ----------------------------------------------------------------
    @property
    def name(self) -> str:
        return self.data["name"]

    @property
    def seed(self) -> int:
        return self.data["seed"]

    @property
    def threads(self) -> int | None:
        return self.data["threads"]

    @property
    def method(self) -> str:
        return self.data["method"]

    @property
    def output(self) -> str | None:
        return self.data["output"]

    @property
    def dense_cap(self) -> int:
        return self.data["lattice"]["dense_cap"]

    @property
    def studies(self) -> dict:
        return self.data["studies"]

    def with_seed(self, seed: int) -> "ExperimentConfig":
        data = copy.deepcopy(self.data)
        data["seed"] = int(seed)
        return ExperimentConfig(data)

    def model(self) -> SurfaceModel:
        lat = self.data["lattice"]
        metric = tuple(lat["metric"]) if lat["metric"] is not None else None
        return SurfaceModel(
            d=lat["d"],
            family=SubspaceFamily(lat["d"], [tuple(s) for s in self.data["subspaces"]]),
            fields=tuple(RandomFieldSpec(**f) for f in self.data["fields"]),
            background=BackgroundSpec(**self.data["background"]),
            h=lat["h"],
            bc=lat["bc"],
            metric=metric,
            buffer=lat["buffer"],
            margin=lat["margin"],
            energy_shift=lat["energy_shift"],
        )

    def function(self, name: str) -> SpectralFunction:
        return SpectralFunction.from_dict(self.data["functions"][name])

    def kpm_plan(self, **over) -> KPMPlan:
        kw = dict(self.data["kpm"])
        kw.update(over)
        return KPMPlan(**kw)

    def seeds_for(self, study: str) -> list[int]:
        return realization_seeds(self.seed, self.studies[study]["seeds"])

    def seed_at(self, index: int) -> int:
        return realization_seeds(self.seed, index + 1)[index]

    # serialization -----------------------------------------------------------
    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=False)


def _normalize(raw) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping at the top level")
    top = {
        "name": "experiment",
        "seed": 0,
        "threads": None,
        "method": "dense",
        "output": None,
        "lattice": None,
        "subspaces": None,
        "background": {},
        "fields": [],
        "functions": {},
        "kpm": {},
        "studies": {},
    }
    extra = sorted(set(raw) - set(top))
    if extra:
        raise ConfigError(f"unknown top-level keys {extra}")
    data = {k: copy.deepcopy(raw.get(k, v)) for k, v in top.items()}
    for key in ("lattice", "subspaces"):
        if data[key] is None:
            raise ConfigError(f"missing required section {key!r}")
    data["name"] = str(data["name"])
    try:
        data["seed"] = int(data["seed"])
    except (TypeError, ValueError):
        raise ConfigError("seed must be an integer") from None
    if not 0 <= data["seed"] < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if data["threads"] is not None and int(data["threads"]) < 1:
        raise ConfigError("threads must be at least 1")
    if data["method"] not in ("dense", "kpm"):
        raise ConfigError(f"method must be dense or kpm, got {data['method']!r}")
    lat = _section(data["lattice"], _LATTICE_DEFAULTS, "lattice")
    lat["d"] = int(lat["d"])
    for k in ("h", "buffer", "margin", "energy_shift"):
        lat[k] = float(lat[k])
    lat["dense_cap"] = int(lat["dense_cap"])
    if lat["metric"] is not None:
        lat["metric"] = [float(g) for g in lat["metric"]]
    data["lattice"] = lat
    if not isinstance(data["subspaces"], list):
        raise ConfigError("subspaces must be a list of coordinate lists")
    data["subspaces"] = [sorted(int(j) for j in s) for s in data["subspaces"]]
    data["background"] = _section(data["background"], _BACKGROUND_DEFAULTS, "background")
    if not isinstance(data["fields"], list):
        raise ConfigError("fields must be a list")
    data["fields"] = [_section(f, _FIELD_DEFAULTS, f"fields[{i}]") for i, f in enumerate(data["fields"])]
    if not isinstance(data["functions"], dict):
        raise ConfigError("functions must map names to function specs")
    data["kpm"] = _section(data["kpm"], _KPM_DEFAULTS, "kpm")
    studies = data["studies"] or {}
    if not isinstance(studies, dict):
        raise ConfigError("studies must be a mapping")
    unknown = sorted(set(studies) - set(_STUDY_DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown studies {unknown}")
    data["studies"] = {k: _section(v, _STUDY_DEFAULTS[k], f"studies.{k}") for k, v in studies.items()}
    return data


def _validate(cfg: ExperimentConfig) -> None:
    data = cfg.data
    lat = data["lattice"]
    if lat["bc"] not in BOUNDARY_CONDITIONS:
        raise ConfigError(f"lattice.bc must be one of {BOUNDARY_CONDITIONS}")
    if lat["d"] < 1 or lat["h"] <= 0:
        raise ConfigError("lattice needs d >= 1 and h > 0")
    if lat["metric"] is not None and (len(lat["metric"]) != lat["d"] or min(lat["metric"]) <= 0):
        raise ConfigError("lattice.metric needs d positive entries")
    if lat["buffer"] < 0 or lat["margin"] < 0:
        raise ConfigError("lattice.buffer and lattice.margin must be non-negative")
    try:
        model = cfg.model()
        funcs = {k: cfg.function(k) for k in data["functions"]}
        cfg.kpm_plan()
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    family = model.family
    cap = lat["dense_cap"]

    def need_function(name, where):
        if name is None:
            if not funcs:
                raise ConfigError(f"{where}: no function named and the catalogue is empty")
            return
        if name not in funcs:
            raise ConfigError(f"{where}: unknown function {name!r}")

    def need_dense(R, where):
        n_sites = (2 * R + 1) ** lat["d"]
        if n_sites > cap:
            raise ConfigError(f"{where}: box of {n_sites} sites exceeds the dense cap {cap}")

    for name, st in data["studies"].items():
        where = f"studies.{name}"
        if "function" in st:
            need_function(st["function"], where)
        if "seeds" in st:
            seeds = st["seeds"]
            count = len(seeds) if isinstance(seeds, list) else int(seeds)
            if count < 1:
                raise ConfigError(f"{where}: needs at least one seed")
            if name == "self_averaging" and count < 8:
                raise ConfigError(f"{where}: self-averaging needs at least 8 seeds, got {count}")
        if name == "lemmas":
            R = int(st["R"])
            seps = [int(s) for s in st["separations"]]
            if not seps or min(seps) < 1 or max(seps) * lat["h"] > R * lat["h"]:
                raise ConfigError(f"{where}: separations must lie in 1..R")
            if any(not 0 < float(t) <= 1 for t in st["times"]):
                raise ConfigError(f"{where}: heat times must lie in (0, 1]")
            if any(float(r) > R * lat["h"] for r in st["ball_radii"]):
                raise ConfigError(f"{where}: ball radii exceed the box")
            need_dense(R, where)
            continue
        ladder = _ladder(st["L"], where)
        alpha = st.get("alpha")
        if alpha is not None and not 0 < alpha < 1 / lat["d"] ** 2:
            warnings.warn(f"{where}: alpha={alpha} outside (0, 1/d^2); results are flagged", stacklevel=2)
        if name in ("self_averaging", "crossing") and len(ladder) < 2:
            raise ConfigError(f"{where}: needs an L-ladder of at least two sizes")
        if name == "alpha_decay":
            n = int(st["n"])
            if not 1 <= n <= family.n_subspaces:
                raise ConfigError(f"{where}: subspace {n} does not exist")
            if len(ladder) != 1:
                raise ConfigError(f"{where}: takes a single L")
            if int(st["max_j"]) + 0.5 > ladder[0]:
                raise ConfigError(f"{where}: max_j does not fit inside A_L")
        if name == "crosscheck":
            names = st["functions"]
            if not isinstance(names, list) or not names:
                raise ConfigError(f"{where}: functions must be a non-empty list of names")
            for fn in names:
                need_function(fn, where)
            try:
                KPMPlan(degree=int(st["degree"]), probes=int(st["probes"]))
            except ValueError as exc:
                raise ConfigError(f"{where}: {exc}") from None
        dense = name in ("crosscheck", "alpha_decay", "positivity", "spectrum") or data["method"] == "dense"
        if dense:
            R = max(model.radius_for(L, alpha) for L in ladder)
            need_dense(R, where)


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"not valid YAML: {exc}") from None
    cfg = ExperimentConfig(_normalize(raw))
    _validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)
