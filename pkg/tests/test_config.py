from importlib import resources

import numpy as np
import pytest
import yaml

from surfdos.config import ConfigError, load_config, parse_config, realization_seeds

BASE = """
name: t
seed: 5
lattice: {d: 2}
subspaces: [[1]]
fields: [{n: 1, amplitude: 2.0}]
functions:
  bump: {kind: gaussian_bump, center: 4.0, width: 0.8}
studies:
  sds: {L: [4, 6], seeds: 2, function: bump}
"""


def with_changes(**top):
    raw = yaml.safe_load(BASE)
    raw.update(top)
    return yaml.safe_dump(raw)


def bundled():
    root = resources.files("surfdos") / "configs"
    return sorted(p for p in root.iterdir() if p.name.endswith(".yaml"))


def test_defaults_filled():
    cfg = parse_config(BASE)
    assert cfg.data["lattice"]["h"] == 1.0 and cfg.data["lattice"]["bc"] == "dirichlet"
    assert cfg.data["fields"][0]["kappa"] == 1.0
    assert cfg.studies["sds"]["subsystems"] is True
    assert cfg.method == "dense" and cfg.threads is None


def test_round_trip_is_stable():
    cfg = parse_config(BASE)
    again = parse_config(cfg.dump())
    assert again.data == cfg.data and again.dump() == cfg.dump()


@pytest.mark.parametrize("path", bundled(), ids=lambda p: p.name)
def test_bundled_configs_load_and_round_trip(path):
    cfg = load_config(path)
    assert parse_config(cfg.dump()).data == cfg.data


def test_model_and_functions():
    cfg = parse_config(BASE)
    model = cfg.model()
    assert model.d == 2 and model.family.n_subspaces == 1
    f = cfg.function("bump")
    assert f(np.array([4.0]))[0] == pytest.approx(1.0)
    assert cfg.kpm_plan(probes=3).probes == 3


def test_seed_derivation():
    seeds = realization_seeds(5, 3)
    assert seeds == realization_seeds(5, 3)
    assert seeds[:2] == realization_seeds(5, 2)
    assert seeds != realization_seeds(6, 3)
    assert all(0 <= s < 2**64 for s in seeds)
    assert realization_seeds(5, [9, 9, 1]) == [9, 9, 1]
    cfg = parse_config(BASE)
    assert cfg.seeds_for("sds") == seeds[:2] and cfg.seed_at(1) == seeds[1]
    assert cfg.with_seed(6).seeds_for("sds") != cfg.seeds_for("sds")
    assert cfg.seed == 5


@pytest.mark.parametrize(
    "text",
    [
        "just a string",
        "{not yaml",
        BASE + "extra_key: 1\n",
        with_changes(lattice={"d": 2, "colour": "red"}),
        with_changes(lattice={"h": 1.0}),
        with_changes(lattice={"d": 2, "bc": "neumann"}),
        with_changes(fields=[{"n": 1, "mass": 2}]),
        with_changes(fields=[{"n": 2}]),
        with_changes(method="magic"),
        with_changes(seed=-1),
        with_changes(studies={"unknown": {}}),
        with_changes(studies={"sds": {"L": [4], "function": "nope"}}),
        with_changes(studies={"sds": {"L": [-4], "function": "bump"}}),
        with_changes(studies={"self_averaging": {"L": [4, 8], "seeds": 7}}),
        with_changes(studies={"crossing": {"L": [4]}}),
        with_changes(studies={"alpha_decay": {"L": [4, 8]}}),
        with_changes(studies={"alpha_decay": {"L": 4, "max_j": 6}}),
        with_changes(studies={"crosscheck": {"L": 4, "functions": []}}),
        with_changes(studies={"lemmas": {"R": 5, "separations": [6]}}),
        with_changes(studies={"lemmas": {"R": 5, "times": [2.0]}}),
        with_changes(studies={"sds": {"L": 200}}),
    ],
)
def test_invalid_configs_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_alpha_outside_window_warns():
    text = with_changes(
        subspaces=[[1], [2]],
        fields=[{"n": 1}, {"n": 2}],
        studies={"crossing": {"L": [4, 6], "alpha": 0.4}},
    )
    with pytest.warns(UserWarning):
        parse_config(text)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/cfg.yaml")
