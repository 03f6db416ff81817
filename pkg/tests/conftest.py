import sys

import pytest

from fenetherm.config import parse_config
from fenetherm.driver import Simulation

SMALL = {
    "potential.b": 6,
    "qgrid.n_r": 10,
    "qgrid.n_a": 8,
    "xgrid.n_x": 12,
    "time.dt": 1e-3,
    "time.t_end": 0.01,
    "time.output_every": 5,
}


def config_text(**overrides):
    """Scenario text from SMALL plus overrides given as key__sub=value."""
    vals = dict(SMALL)
    vals.update({k.replace("__", "."): v for k, v in overrides.items()})
    return "".join(f"{k} = {v}\n" for k, v in vals.items())


def make_config(**overrides):
    return parse_config(config_text(**overrides))


def make_sim(**overrides):
    return Simulation(make_config(**overrides))


@pytest.fixture
def small_sim():
    return make_sim


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
