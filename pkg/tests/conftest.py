"""Shared fixtures: example configs and the expensive solved artifacts.

Session scope keeps each solve to one run; the discretization ladder
(N up to 80) dominates the suite's runtime and also feeds the simulator
calibration tests through its retained finite outcomes.
"""

import json
import time
from importlib import resources

import pytest

import disclosure_eq as d


def config_dict(name: str) -> dict:
    ref = resources.files("disclosure_eq") / "configs" / f"{name}.json"
    return json.loads(ref.read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def dye_cfg():
    return config_dict("dye_micro")


@pytest.fixture(scope="session")
def ex1a_cfg():
    return config_dict("example1a")


@pytest.fixture(scope="session")
def ex1b_cfg():
    return config_dict("example1b")


@pytest.fixture(scope="session")
def ex2_cfg():
    return config_dict("example2")


@pytest.fixture(scope="session")
def ex2mod_cfg():
    return config_dict("example2_modified")


@pytest.fixture(scope="session")
def dye_solved(dye_cfg):
    game = d.validate_game(dye_cfg)
    return game, d.solve_truth_leaning(game)


@pytest.fixture(scope="session")
def ex1a_limit(ex1a_cfg):
    game = d.LimitGame.from_config(ex1a_cfg)
    return game, d.solve_binary(game)


@pytest.fixture(scope="session")
def ex1b_limit(ex1b_cfg):
    game = d.LimitGame.from_config(ex1b_cfg)
    return game, d.solve_binary(game)


@pytest.fixture(scope="session")
def ex2_limit(ex2_cfg):
    game = d.LimitGame.from_config(ex2_cfg)
    return game, d.solve_limit(game)


@pytest.fixture(scope="session")
def ex2mod_limit(ex2mod_cfg):
    game = d.LimitGame.from_config(ex2mod_cfg)
    return game, d.solve_limit(game)


@pytest.fixture(scope="session")
def ex1a_ladder(ex1a_cfg):
    """Full discretization ladder N = 10..80 with retained finite outcomes.

    Returns (report, wall_seconds); the N=40 outcome doubles as the
    simulator calibration instance.
    """
    t0 = time.perf_counter()
    report = d.convergence_curve(ex1a_cfg, keep_outcomes=True)
    return report, time.perf_counter() - t0
